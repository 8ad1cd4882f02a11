#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cervix/ops.hpp"
#include "cervix/tensor.hpp"

namespace cervix {

enum class LayerKind { conv, maxpool, flatten, dense };
enum class Activation { none, relu, softmax };

std::string_view to_string(LayerKind kind);
std::string_view to_string(Activation act);

struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  std::size_t units_or_filters = 0;  // filters for conv, units for dense, 0 otherwise
  std::optional<Window2> kernel;     // conv kernel or pool window
  std::optional<Stride2> stride;
  Activation activation = Activation::none;
  std::string name;  // also the parameter prefix for conv/dense layers

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Ordered name -> Tensor map. Iteration order is insertion order, which
/// fixes the serialization order and the RNG draw order at initialization.
class ParamStore {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void add(std::string name, Tensor value);
  Tensor& get(std::string_view name);
  const Tensor& get(std::string_view name) const;
  const Tensor* find(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  // Zero-filled store with the same keys and shapes.
  ParamStore zeros_like() const;
  // Throws ValidationError unless keys and shapes match `other` in order.
  void require_mirrors(const ParamStore& other, std::string_view what) const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<Entry> entries_;
};

using Gradients = ParamStore;

/// Shape of the conv/pool/dense stack. The stock classifier uses the
/// defaults; tests shrink the input and widths to keep gradient checks cheap.
struct ArchSpec {
  std::size_t input_height = 100;
  std::size_t input_width = 100;
  std::size_t input_channels = 3;
  std::vector<std::size_t> conv_filters{64, 128, 256};
  std::size_t hidden_units = 128;
  std::size_t num_classes = 3;

  static ArchSpec cervixpert(std::size_t num_classes) {
    ArchSpec a;
    a.num_classes = num_classes;
    return a;
  }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

class Model {
 public:
  // Validates the architecture (class count, every spatial stage >= 1) and draws
  // Glorot-uniform weights from a generator seeded with `seed`. Biases are 0.
  static Model build(const ArchSpec& arch, std::uint64_t seed);

  // Copies get a fresh identity so caches from one never validate on the other.
  Model(const Model& other);
  Model& operator=(const Model& other);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ArchSpec& arch() const { return arch_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t num_classes() const { return arch_.num_classes; }
  Shape input_shape(std::size_t batch) const {
    return {batch, arch_.input_height, arch_.input_width, arch_.input_channels};
  }

  const ParamStore& params() const { return params_; }
  // Any mutable access invalidates outstanding forward caches.
  ParamStore& mutable_params() {
    ++revision_;
    return params_;
  }

  std::uint64_t id() const { return id_; }
  std::uint64_t revision() const { return revision_; }

 private:
  Model(ArchSpec arch, std::vector<LayerSpec> layers, ParamStore params);
  static std::uint64_t fresh_id();

  ArchSpec arch_;
  std::vector<LayerSpec> layers_;
  ParamStore params_;
  std::uint64_t id_ = 0;
  std::uint64_t revision_ = 0;
};

// The 9-layer classifier: three conv(3x3, stride 2, relu) + maxpool(2x2)
// stages with 64/128/256 filters, flatten, dense(128, relu), dense(classes).
Model build_cervixpert(std::size_t num_classes, std::uint64_t seed);

std::size_t param_count(const Model& model);

struct ForwardCache {
  struct Layer {
    std::optional<Tensor> input;  // conv/dense inputs
    std::optional<PoolSwitches> switches;
    std::vector<std::uint8_t> relu_mask;
    Shape input_shape;
    Shape output_shape;
  };
  std::vector<Layer> layers;
  std::uint64_t model_id = 0;
  std::uint64_t model_revision = 0;
};

struct ForwardResult {
  Tensor logits;  // pre-softmax, (batch, num_classes)
  ForwardCache cache;
};

ForwardResult forward(const Model& model, const Tensor& batch);
// Logits only; keeps no activations alive.
Tensor infer(const Model& model, const Tensor& batch);

// Gradient of sum(d_logits * logits) with respect to every parameter.
// The cache must come from the latest forward on this model's current state.
Gradients backward(const Model& model, const ForwardCache& cache, const Tensor& d_logits);

struct Prediction {
  int label = 0;
  std::vector<double> probabilities;
};

std::vector<Prediction> predict(const Model& model, const Tensor& images);
// Lowest index wins ties.
int argmax(std::span<const double> values);

// Little-endian "CVXW" v1 file: weights only, stored as float32.
inline constexpr std::uint32_t kWeightFormatVersion = 1;

void save_weights(const Model& model, const std::filesystem::path& path);
Model load_weights(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_weights(const Model& model);
Model decode_weights(std::span<const std::uint8_t> bytes);
std::size_t weight_header_bytes(const Model& model);

// Rounds every parameter to the nearest float32, as a save/load would.
void round_to_float32(Model& model);

}  // namespace cervix
