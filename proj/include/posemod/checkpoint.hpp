#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "posemod/tensor.hpp"

namespace posemod {

inline constexpr const char* kCheckpointVersion = "posemod-checkpoint/1";

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Flat archive: magic, version string, free-form metadata string (JSON by convention),
// then named arrays with shape headers and little-endian float64 payloads.
struct Checkpoint {
  std::string version = kCheckpointVersion;
  std::string metadata;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const;
  void add(std::string name, Shape shape, std::vector<double> values);
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Snapshot every parameter in `store`.
Checkpoint snapshot(const ParameterStore& store, std::string metadata = {});
// Copies values for every parameter in `store`; throws SchemaError on a missing entry or shape
// mismatch.
void restore(ParameterStore& store, const Checkpoint& ckpt);

}  // namespace posemod
