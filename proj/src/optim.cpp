#include "cervix/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "cervix/errors.hpp"

namespace cervix {

AdamState::AdamState(const ParamStore& params, AdamConfig hp_) : m(params.zeros_like()), v(params.zeros_like()), hp(hp_) {}

void adam_step(ParamStore& params, const Gradients& grads, AdamState& state) {
  grads.require_mirrors(params, "adam gradients");
  state.m.require_mirrors(params, "adam first moments");
  state.v.require_mirrors(params, "adam second moments");

  ++state.t;
  const auto& hp = state.hp;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);

  auto p = params.begin();
  auto g = grads.begin();
  auto m = state.m.begin();
  auto v = state.v.begin();
  for (; p != params.end(); ++p, ++g, ++m, ++v) {
    double* pd = p->second.raw();
    const double* gd = g->second.raw();
    double* md = m->second.raw();
    double* vd = v->second.raw();
    const std::size_t n = p->second.size();
    for (std::size_t i = 0; i < n; ++i) {
      md[i] = hp.beta1 * md[i] + (1.0 - hp.beta1) * gd[i];
      vd[i] = hp.beta2 * vd[i] + (1.0 - hp.beta2) * gd[i] * gd[i];
      pd[i] -= hp.lr * (md[i] / c1) / (std::sqrt(vd[i] / c2) + hp.eps);
    }
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ValidationError("epochs must be >= 1");
  if (batch_size < 1) throw ValidationError("batch size must be >= 1");
  if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ValidationError(fmt::format("bad learning rate {}", adam.lr));
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ValidationError("Adam betas must lie in [0, 1)");
  }
  if (!(adam.eps > 0.0)) throw ValidationError("Adam epsilon must be > 0");
}

ExampleSet ExampleSet::from(const Dataset& dataset) {
  ExampleSet set;
  set.images.reserve(dataset.samples.size());
  set.labels.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) {
    if (!s.image) throw ValidationError(fmt::format("sample '{}' has no decoded pixels", s.source_id));
    set.images.push_back(s.image);
    set.labels.push_back(s.label);
  }
  return set;
}

Tensor gather_batch(const ExampleSet& set, std::span<const std::size_t> indices, const Model& model) {
  if (indices.empty()) throw ValidationError("cannot gather an empty batch");
  const auto& arch = model.arch();
  if (arch.input_channels != Image::channels) {
    throw ShapeError(fmt::format("model expects {} channels, images have {}", arch.input_channels, Image::channels));
  }
  Tensor batch(model.input_shape(indices.size()));
  const std::size_t per = arch.input_height * arch.input_width * arch.input_channels;
  for (std::size_t b = 0; b < indices.size(); ++b) {
    preprocess_into(*set.images.at(indices[b]), arch.input_height, arch.input_width,
                    batch.data().subspan(b * per, per));
  }
  return batch;
}

namespace {

void check_labels(const ExampleSet& set, std::size_t num_classes, const char* what) {
  if (set.images.size() != set.labels.size()) {
    throw ValidationError(fmt::format("{}: {} images for {} labels", what, set.images.size(), set.labels.size()));
  }
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    if (set.labels[i] < 0 || static_cast<std::size_t>(set.labels[i]) >= num_classes) {
      throw ValidationError(fmt::format("{}: sample {} has label {} outside [0, {})", what, i, set.labels[i],
                                        num_classes));
    }
  }
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  const std::size_t nc = logits.dim(1);
  std::size_t correct = 0;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (argmax(logits.data().subspan(n * nc, nc)) == labels[n]) ++correct;
  }
  return correct;
}

}  // namespace

EpochStats train_epoch(Model& model, AdamState& state, const ExampleSet& train, const TrainConfig& config, Rng& rng) {
  config.validate();
  if (train.size() == 0) throw ValidationError("training set is empty");
  check_labels(train, model.num_classes(), "training set");

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<int> labels;
  for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
    const std::size_t end = std::min(order.size(), start + config.batch_size);
    std::span<const std::size_t> idx(order.data() + start, end - start);
    labels.clear();
    for (std::size_t i : idx) labels.push_back(train.labels[i]);

    ForwardResult fwd = forward(model, gather_batch(train, idx, model));
    LossResult loss = softmax_xent(fwd.logits, labels);
    Gradients grads = backward(model, fwd.cache, loss.d_logits);
    adam_step(model.mutable_params(), grads, state);

    loss_sum += loss.loss * static_cast<double>(idx.size());
    correct += count_correct(fwd.logits, labels);
    ++stats.batches;
  }
  stats.loss = loss_sum / static_cast<double>(train.size());
  stats.accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
  return stats;
}

EvalResult evaluate(const Model& model, const ExampleSet& set, std::size_t batch_size) {
  if (set.size() == 0) throw ValidationError("evaluation set is empty");
  if (batch_size == 0) throw ValidationError("batch size must be >= 1");
  check_labels(set, model.num_classes(), "evaluation set");

  EvalResult r;
  r.predictions.reserve(set.size());
  double loss_sum = 0.0;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  std::vector<int> labels;
  for (std::size_t start = 0; start < set.size(); start += batch_size) {
    const std::size_t end = std::min(set.size(), start + batch_size);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    labels.assign(set.labels.begin() + static_cast<std::ptrdiff_t>(start),
                  set.labels.begin() + static_cast<std::ptrdiff_t>(end));

    const Tensor logits = infer(model, gather_batch(set, idx, model));
    loss_sum += softmax_xent(logits, labels).loss * static_cast<double>(idx.size());
    const std::size_t nc = logits.dim(1);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      const int pred = argmax(logits.data().subspan(n * nc, nc));
      r.predictions.push_back(pred);
      if (pred == labels[n]) ++correct;
    }
  }
  r.loss = loss_sum / static_cast<double>(set.size());
  r.accuracy = static_cast<double>(correct) / static_cast<double>(set.size());
  return r;
}

History fit(Model& model, const ExampleSet& train, const ExampleSet& val, const TrainConfig& config,
            const EpochObserver& observer) {
  config.validate();
  if (train.size() == 0) throw ValidationError("training set is empty");
  if (val.size() == 0) throw ValidationError("validation set is empty");
  check_labels(train, model.num_classes(), "training set");
  check_labels(val, model.num_classes(), "validation set");

  AdamState state(model.params(), config.adam);
  Rng rng(config.seed);
  History history;
  history.reserve(config.epochs);
  for (std::size_t e = 1; e <= config.epochs; ++e) {
    const EpochStats tr = train_epoch(model, state, train, config, rng);
    const EvalResult va = evaluate(model, val, config.batch_size);
    history.push_back({e, tr.loss, tr.accuracy, va.loss, va.accuracy});
    if (observer) observer(history.back());
  }
  return history;
}

}  // namespace cervix
