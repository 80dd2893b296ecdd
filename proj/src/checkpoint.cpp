#include "posemod/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace posemod {
namespace {

constexpr char kMagic[8] = {'P', 'M', 'C', 'K', 'P', 'T', '\0', '\1'};

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

template <typename U>
void put_le(std::vector<std::uint8_t>& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_string(std::vector<std::uint8_t>& out, const std::string& s) {
  put_le<std::uint64_t>(out, s.size());
  out.insert(out.end(), s.begin(), s.end());
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}

  template <typename U>
  U get_le() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string get_string() {
    const auto n = get_le<std::uint64_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  void expect_magic() {
    need(sizeof(kMagic));
    if (std::memcmp(bytes_.data(), kMagic, sizeof(kMagic)) != 0)
      throw SchemaError("not a posemod checkpoint (bad magic)");
    pos_ += sizeof(kMagic);
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) const {
    if (n > bytes_.size() - pos_) throw SchemaError("truncated checkpoint");
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return &a;
  return nullptr;
}

void Checkpoint::add(std::string name, Shape shape, std::vector<double> values) {
  if (values.size() != shape.size()) throw ShapeError("checkpoint entry size mismatch: " + name);
  arrays.push_back({std::move(name), shape, std::move(values)});
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_string(out, ckpt.version);
  put_string(out, ckpt.metadata);
  put_le<std::uint64_t>(out, ckpt.arrays.size());
  for (const auto& a : ckpt.arrays) {
    put_string(out, a.name);
    put_le<std::uint64_t>(out, a.shape.rows);
    put_le<std::uint64_t>(out, a.shape.cols);
    for (double v : a.values) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  r.expect_magic();
  Checkpoint ckpt;
  ckpt.version = r.get_string();
  if (ckpt.version != kCheckpointVersion)
    throw SchemaError("unsupported checkpoint version '" + ckpt.version + "'");
  ckpt.metadata = r.get_string();
  const auto count = r.get_le<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.get_string();
    a.shape.rows = r.get_le<std::uint64_t>();
    a.shape.cols = r.get_le<std::uint64_t>();
    a.values.resize(a.shape.size());
    for (auto& v : a.values) v = std::bit_cast<double>(r.get_le<std::uint64_t>());
    ckpt.arrays.push_back(std::move(a));
  }
  if (!r.done()) throw SchemaError("trailing bytes after checkpoint payload");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

Checkpoint snapshot(const ParameterStore& store, std::string metadata) {
  Checkpoint ckpt;
  ckpt.metadata = std::move(metadata);
  for (const auto& p : store.all()) {
    auto d = p.data();
    ckpt.add(p.name(), p.shape(), std::vector<double>(d.begin(), d.end()));
  }
  return ckpt;
}

void restore(ParameterStore& store, const Checkpoint& ckpt) {
  for (auto p : store.all()) {
    const NamedArray* a = ckpt.find(p.name());
    if (!a) throw SchemaError("checkpoint is missing parameter '" + p.name() + "'");
    if (a->shape != p.shape())
      throw SchemaError("checkpoint shape mismatch for '" + p.name() + "': " +
                        to_string(a->shape) + " vs " + to_string(p.shape()));
    auto dst = p.mutable_data();
    std::copy(a->values.begin(), a->values.end(), dst.begin());
  }
}

}  // namespace posemod
