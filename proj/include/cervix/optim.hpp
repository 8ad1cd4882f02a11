#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "cervix/dataio.hpp"
#include "cervix/model.hpp"

namespace cervix {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

struct AdamState {
  AdamState(const ParamStore& params, AdamConfig hp = {});

  ParamStore m;  // first moments
  ParamStore v;  // second moments, elementwise >= 0
  std::uint64_t t = 0;
  AdamConfig hp;
};

// One bias-corrected Adam update of every parameter.
void adam_step(ParamStore& params, const Gradients& grads, AdamState& state);

struct TrainConfig {
  std::size_t epochs = 25;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  bool shuffle = true;
  AdamConfig adam;

  void validate() const;
};

// Labeled images feeding the model; pixels are resized and scaled to the
// model input per batch.
struct ExampleSet {
  std::vector<std::shared_ptr<const Image>> images;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  static ExampleSet from(const Dataset& dataset);
};

Tensor gather_batch(const ExampleSet& set, std::span<const std::size_t> indices, const Model& model);

struct EpochStats {
  double loss = 0.0;      // mean per-sample loss
  double accuracy = 0.0;  // on the pre-update logits of each batch
  std::size_t batches = 0;
};

EpochStats train_epoch(Model& model, AdamState& state, const ExampleSet& train, const TrainConfig& config, Rng& rng);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<int> predictions;
};

EvalResult evaluate(const Model& model, const ExampleSet& set, std::size_t batch_size = 32);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

using History = std::vector<EpochRecord>;
using EpochObserver = std::function<void(const EpochRecord&)>;

// Runs config.epochs epochs with validation after each. No early stopping;
// the model ends in its last-epoch state.
History fit(Model& model, const ExampleSet& train, const ExampleSet& val, const TrainConfig& config,
            const EpochObserver& observer = {});

}  // namespace cervix
