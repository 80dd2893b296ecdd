#pragma once

#include <string>
#include <vector>

#include "posemod/gradcheck.hpp"

namespace posemod {

struct SuiteEntry {
  std::string module;
  std::string check;
  GradCheckResult result;
};

// tensor, skeleton, pose_encoder, window, backbone, renderer, pipeline
const std::vector<std::string>& gradcheck_modules();

// Finite-difference checks at step 1e-5 for one module, or all of them when `module` is empty.
// Throws InvalidArgument for an unknown module name.
std::vector<SuiteEntry> run_gradcheck_suite(const std::string& module = {}, std::uint64_t seed = 1);

// Largest error per module, in suite order.
std::vector<std::pair<std::string, double>> worst_per_module(const std::vector<SuiteEntry>& entries);

}  // namespace posemod
