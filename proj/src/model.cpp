#include "cervix/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "cervix/errors.hpp"

namespace cervix {

namespace {

std::atomic<std::uint64_t> next_model_id{1};

constexpr Window2 kConvKernel{3, 3};
constexpr Stride2 kConvStride{2, 2};
constexpr Window2 kPoolWindow{2, 2};
constexpr Stride2 kPoolStride{2, 2};

std::string kernels_key(const std::string& layer) { return layer + "/kernels"; }
std::string weights_key(const std::string& layer) { return layer + "/weights"; }
std::string bias_key(const std::string& layer) { return layer + "/bias"; }

}  // namespace

std::string_view to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv: return "conv";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::flatten: return "flatten";
    case LayerKind::dense: return "dense";
  }
  return "?";
}

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::none: return "none";
    case Activation::relu: return "relu";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::add(std::string name, Tensor value) {
  if (find(name) != nullptr) throw ValidationError(fmt::format("duplicate parameter '{}'", name));
  entries_.emplace_back(std::move(name), std::move(value));
}

const Tensor* ParamStore::find(std::string_view name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.first == name; });
  return it == entries_.end() ? nullptr : &it->second;
}

const Tensor& ParamStore::get(std::string_view name) const {
  const Tensor* t = find(name);
  if (t == nullptr) throw ValidationError(fmt::format("no parameter named '{}'", name));
  return *t;
}

Tensor& ParamStore::get(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).get(name));
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

ParamStore ParamStore::zeros_like() const {
  ParamStore z;
  for (const auto& [name, t] : entries_) z.add(name, Tensor(t.shape()));
  return z;
}

void ParamStore::require_mirrors(const ParamStore& other, std::string_view what) const {
  if (entries_.size() != other.entries_.size()) {
    throw ValidationError(
        fmt::format("{}: {} tensors where {} are expected", what, entries_.size(), other.entries_.size()));
  }
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [name, t] = entries_[i];
    const auto& [want_name, want] = other.entries_[i];
    if (name != want_name || t.shape() != want.shape()) {
      throw ValidationError(fmt::format("{}: entry {} is '{}' {}, expected '{}' {}", what, i, name,
                                        shape_str(t.shape()), want_name, shape_str(want.shape())));
    }
  }
}

// ---------------------------------------------------------------------------
// Construction

std::uint64_t Model::fresh_id() { return next_model_id++; }

Model::Model(ArchSpec arch, std::vector<LayerSpec> layers, ParamStore params)
    : arch_(std::move(arch)), layers_(std::move(layers)), params_(std::move(params)), id_(fresh_id()) {}

Model::Model(const Model& other)
    : arch_(other.arch_), layers_(other.layers_), params_(other.params_), id_(fresh_id()) {}

Model& Model::operator=(const Model& other) {
  if (this != &other) {
    arch_ = other.arch_;
    layers_ = other.layers_;
    params_ = other.params_;
    id_ = fresh_id();
    revision_ = 0;
  }
  return *this;
}

Model Model::build(const ArchSpec& arch, std::uint64_t seed) {
  if (arch.num_classes < 2) {
    throw ValidationError(fmt::format("num_classes must be >= 2, got {}", arch.num_classes));
  }
  if (arch.input_height == 0 || arch.input_width == 0 || arch.input_channels == 0 || arch.hidden_units == 0 ||
      arch.conv_filters.empty() ||
      std::any_of(arch.conv_filters.begin(), arch.conv_filters.end(), [](std::size_t f) { return f == 0; })) {
    throw ValidationError("architecture dimensions must be positive");
  }

  std::vector<LayerSpec> layers;
  ParamStore params;
  std::mt19937_64 rng(seed);
  auto glorot = [&rng](Tensor& t, double fan_in, double fan_out) {
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (double& v : t.data()) v = dist(rng);
  };

  std::size_t h = arch.input_height, w = arch.input_width, c = arch.input_channels;
  for (std::size_t stage = 0; stage < arch.conv_filters.size(); ++stage) {
    const std::size_t filters = arch.conv_filters[stage];
    const std::string conv = fmt::format("conv{}", stage + 1);
    h = valid_out_dim(h, kConvKernel.rows, kConvStride.rows);
    w = valid_out_dim(w, kConvKernel.cols, kConvStride.cols);
    if (h == 0 || w == 0) throw ValidationError(fmt::format("input too small for {}", conv));
    layers.push_back({LayerKind::conv, filters, kConvKernel, kConvStride, Activation::relu, conv});

    Tensor kernels({kConvKernel.rows, kConvKernel.cols, c, filters});
    const double taps = static_cast<double>(kConvKernel.rows * kConvKernel.cols);
    glorot(kernels, taps * static_cast<double>(c), taps * static_cast<double>(filters));
    params.add(kernels_key(conv), std::move(kernels));
    params.add(bias_key(conv), Tensor({filters}));

    const std::string pool = fmt::format("pool{}", stage + 1);
    h = valid_out_dim(h, kPoolWindow.rows, kPoolStride.rows);
    w = valid_out_dim(w, kPoolWindow.cols, kPoolStride.cols);
    if (h == 0 || w == 0) throw ValidationError(fmt::format("input too small for {}", pool));
    layers.push_back({LayerKind::maxpool, 0, kPoolWindow, kPoolStride, Activation::none, pool});
    c = filters;
  }
  layers.push_back({LayerKind::flatten, 0, std::nullopt, std::nullopt, Activation::none, "flatten"});

  const std::size_t flat = h * w * c;
  auto add_dense = [&](const std::string& name, std::size_t in, std::size_t out, Activation act) {
    layers.push_back({LayerKind::dense, out, std::nullopt, std::nullopt, act, name});
    Tensor weights({in, out});
    glorot(weights, static_cast<double>(in), static_cast<double>(out));
    params.add(weights_key(name), std::move(weights));
    params.add(bias_key(name), Tensor({out}));
  };
  add_dense("dense1", flat, arch.hidden_units, Activation::relu);
  add_dense("out", arch.hidden_units, arch.num_classes, Activation::softmax);

  return Model(arch, std::move(layers), std::move(params));
}

Model build_cervixpert(std::size_t num_classes, std::uint64_t seed) {
  return Model::build(ArchSpec::cervixpert(num_classes), seed);
}

std::size_t param_count(const Model& model) { return model.params().element_count(); }

// ---------------------------------------------------------------------------
// Forward / backward

namespace {

ForwardResult run_forward(const Model& model, const Tensor& batch, bool keep_cache) {
  if (batch.rank() != 4 || batch.dim(1) != model.arch().input_height || batch.dim(2) != model.arch().input_width ||
      batch.dim(3) != model.arch().input_channels) {
    throw ShapeError(fmt::format("model input must be {}, got {}", shape_str(model.input_shape(batch.dim(0))),
                                 shape_str(batch.shape())));
  }
  const ParamStore& params = model.params();
  ForwardCache cache;
  cache.model_id = model.id();
  cache.model_revision = model.revision();
  cache.layers.reserve(model.layers().size());

  Tensor x = batch;
  for (const LayerSpec& layer : model.layers()) {
    ForwardCache::Layer entry;
    entry.input_shape = x.shape();
    switch (layer.kind) {
      case LayerKind::conv: {
        Tensor y = conv2d(x, params.get(kernels_key(layer.name)), params.get(bias_key(layer.name)), *layer.stride);
        if (keep_cache) entry.input = std::move(x);
        ReluResult r = relu(y);
        x = std::move(r.output);
        if (keep_cache) entry.relu_mask = std::move(r.mask);
        break;
      }
      case LayerKind::maxpool: {
        PoolResult r = maxpool2d(x, *layer.kernel, *layer.stride);
        x = std::move(r.output);
        if (keep_cache) entry.switches = std::move(r.switches);
        break;
      }
      case LayerKind::flatten: {
        const std::size_t n = x.dim(0);
        x = std::move(x).reshaped({n, x.size() / n});
        break;
      }
      case LayerKind::dense: {
        Tensor y = dense(x, params.get(weights_key(layer.name)), params.get(bias_key(layer.name)));
        if (keep_cache) entry.input = std::move(x);
        if (layer.activation == Activation::relu) {
          ReluResult r = relu(y);
          x = std::move(r.output);
          if (keep_cache) entry.relu_mask = std::move(r.mask);
        } else {
          // Softmax is fused into the loss and applied explicitly by predict.
          x = std::move(y);
        }
        break;
      }
    }
    entry.output_shape = x.shape();
    cache.layers.push_back(std::move(entry));
  }
  return {std::move(x), std::move(cache)};
}

}  // namespace

ForwardResult forward(const Model& model, const Tensor& batch) { return run_forward(model, batch, true); }

Tensor infer(const Model& model, const Tensor& batch) { return run_forward(model, batch, false).logits; }

Gradients backward(const Model& model, const ForwardCache& cache, const Tensor& d_logits) {
  if (cache.model_id != model.id() || cache.model_revision != model.revision()) {
    throw ValidationError("forward cache is stale: parameters changed or cache belongs to another model");
  }
  if (cache.layers.size() != model.layers().size()) {
    throw ValidationError(fmt::format("forward cache has {} layers, model has {}", cache.layers.size(),
                                      model.layers().size()));
  }
  if (d_logits.shape() != cache.layers.back().output_shape) {
    throw ShapeError(fmt::format("d_logits shape {} does not match logits {}", shape_str(d_logits.shape()),
                                 shape_str(cache.layers.back().output_shape)));
  }

  const ParamStore& params = model.params();
  Gradients grads = params.zeros_like();
  Tensor up = d_logits;
  for (std::size_t i = model.layers().size(); i-- > 0;) {
    const LayerSpec& layer = model.layers()[i];
    const ForwardCache::Layer& entry = cache.layers[i];
    const bool first = (i == 0);
    switch (layer.kind) {
      case LayerKind::conv: {
        if (!entry.input || entry.relu_mask.size() != up.size()) {
          throw ValidationError(fmt::format("forward cache for {} is incomplete", layer.name));
        }
        Tensor d_pre = relu_grad(entry.relu_mask, up);
        const std::string kk = kernels_key(layer.name), bk = bias_key(layer.name);
        ConvGrads g = conv2d_grad(*entry.input, params.get(kk), params.get(bk), *layer.stride, d_pre, !first);
        grads.get(kk) = std::move(g.d_kernels);
        grads.get(bk) = std::move(g.d_bias);
        up = std::move(g.d_input);
        break;
      }
      case LayerKind::maxpool: {
        if (!entry.switches) throw ValidationError(fmt::format("forward cache for {} is incomplete", layer.name));
        up = maxpool2d_grad(*entry.switches, up);
        break;
      }
      case LayerKind::flatten:
        up = std::move(up).reshaped(entry.input_shape);
        break;
      case LayerKind::dense: {
        if (!entry.input) throw ValidationError(fmt::format("forward cache for {} is incomplete", layer.name));
        Tensor d_pre = layer.activation == Activation::relu ? relu_grad(entry.relu_mask, up) : std::move(up);
        const std::string wk = weights_key(layer.name), bk = bias_key(layer.name);
        DenseGrads g = dense_grad(*entry.input, params.get(wk), d_pre);
        grads.get(wk) = std::move(g.d_weights);
        grads.get(bk) = std::move(g.d_bias);
        up = std::move(g.d_input);
        break;
      }
    }
  }
  return grads;
}

int argmax(std::span<const double> values) {
  return static_cast<int>(std::max_element(values.begin(), values.end()) - values.begin());
}

std::vector<Prediction> predict(const Model& model, const Tensor& images) {
  const Tensor probs = softmax(infer(model, images));
  const std::size_t nc = probs.dim(1);
  std::vector<Prediction> out(probs.dim(0));
  for (std::size_t n = 0; n < out.size(); ++n) {
    std::span<const double> row = probs.data().subspan(n * nc, nc);
    out[n].probabilities.assign(row.begin(), row.end());
    out[n].label = argmax(row);
  }
  return out;
}

void round_to_float32(Model& model) {
  for (auto& [name, t] : model.mutable_params()) {
    for (double& v : t.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace cervix
