// Weight file layout, all integers little-endian:
//
//   "CVXW"  u32 version  u32 num_classes  u32 tensor_count
//   per tensor: u16 name_len, name bytes, u8 ndim, u32 dims[ndim],
//               float32 data[prod(dims)] row-major
//
// Only the stock classifier round-trips: load rebuilds it from num_classes
// and requires every stored tensor to match its name and shape.

#include <bit>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "cervix/errors.hpp"
#include "cervix/fileio.hpp"
#include "cervix/model.hpp"

namespace cervix {

namespace {

constexpr char kMagic[4] = {'C', 'V', 'X', 'W'};

static_assert(std::numeric_limits<float>::is_iec559);

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename T>
  void le(T v) {
    using U = std::make_unsigned_t<T>;
    auto u = static_cast<U>(v);
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(u >> (8 * i)));
  }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> bytes(std::size_t n, std::string_view field) {
    if (in_.size() - pos_ < n) {
      throw FormatError(fmt::format("weight file truncated while reading {} at offset {}", field, pos_));
    }
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T le(std::string_view field) {
    auto b = bytes(sizeof(T), field);
    std::make_unsigned_t<T> u = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<decltype(u)>(b[i]) << (8 * i);
    return static_cast<T>(u);
  }
  float f32(std::string_view field) { return std::bit_cast<float>(le<std::uint32_t>(field)); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::size_t weight_header_bytes(const Model& model) {
  std::size_t n = sizeof(kMagic) + 3 * sizeof(std::uint32_t);
  for (const auto& [name, t] : model.params()) {
    n += sizeof(std::uint16_t) + name.size() + sizeof(std::uint8_t) + t.rank() * sizeof(std::uint32_t);
  }
  return n;
}

std::vector<std::uint8_t> encode_weights(const Model& model) {
  Writer w;
  w.bytes(kMagic, sizeof(kMagic));
  w.le<std::uint32_t>(kWeightFormatVersion);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.num_classes()));
  w.le<std::uint32_t>(static_cast<std::uint32_t>(model.params().size()));
  for (const auto& [name, t] : model.params()) {
    w.le<std::uint16_t>(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.le<std::uint8_t>(static_cast<std::uint8_t>(t.rank()));
    for (std::size_t d : t.shape()) w.le<std::uint32_t>(static_cast<std::uint32_t>(d));
    for (double v : t.data()) w.f32(static_cast<float>(v));
  }
  return w.take();
}

Model decode_weights(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(sizeof(kMagic), "magic");
  if (std::memcmp(magic.data(), kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("weight file has bad magic (expected \"CVXW\")");
  }
  const auto version = r.le<std::uint32_t>("version");
  if (version != kWeightFormatVersion) {
    throw FormatError(fmt::format("unsupported weight file version {} (expected {})", version, kWeightFormatVersion));
  }
  const auto num_classes = r.le<std::uint32_t>("num_classes");
  if (num_classes < 2) throw FormatError(fmt::format("num_classes {} is invalid", num_classes));
  const auto tensor_count = r.le<std::uint32_t>("tensor_count");

  Model model = build_cervixpert(num_classes, 0);
  const ParamStore& expected = model.params();
  if (tensor_count != expected.size()) {
    throw FormatError(fmt::format("tensor_count {} does not match the {}-tensor architecture", tensor_count,
                                  expected.size()));
  }

  ParamStore loaded;
  for (const auto& [want_name, want] : expected) {
    const auto name_len = r.le<std::uint16_t>("tensor name length");
    auto name_bytes = r.bytes(name_len, "tensor name");
    std::string name(name_bytes.begin(), name_bytes.end());
    if (name != want_name) {
      throw FormatError(fmt::format("tensor name '{}' where '{}' is expected", name, want_name));
    }
    const auto ndim = r.le<std::uint8_t>("ndim");
    Shape shape(ndim);
    for (auto& d : shape) d = r.le<std::uint32_t>("dims");
    if (shape != want.shape()) {
      throw FormatError(fmt::format("tensor '{}' dims {} where {} are expected", name, shape_str(shape),
                                    shape_str(want.shape())));
    }
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = r.f32("tensor data");
    loaded.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (r.remaining() != 0) throw FormatError(fmt::format("{} trailing bytes after tensor data", r.remaining()));

  model.mutable_params() = std::move(loaded);
  return model;
}

void save_weights(const Model& model, const std::filesystem::path& path) {
  write_file_atomic(path, encode_weights(model));
}

Model load_weights(const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes;
  try {
    bytes = read_file_bytes(path);
  } catch (const std::runtime_error& e) {
    throw FormatError(e.what());
  }
  return decode_weights(bytes);
}

}  // namespace cervix
