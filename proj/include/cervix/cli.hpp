#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cervix/augment.hpp"
#include "cervix/dataio.hpp"
#include "cervix/metrics.hpp"
#include "cervix/optim.hpp"

namespace cervix {

enum class EvalSubset { train, val, test, all };
std::string_view to_string(EvalSubset subset);

// Flags merged with the optional config file, after defaults are applied.
struct RunConfig {
  std::filesystem::path data;
  std::filesystem::path out;
  std::filesystem::path weights;
  std::vector<std::filesystem::path> inputs;  // predict
  std::size_t classes = 5;
  SplitLevel split_level = SplitLevel::source;
  std::uint64_t seed = 42;
  std::size_t folds = 5;
  std::size_t target_per_class = 5000;
  EvalSubset subset = EvalSubset::val;
  ReportFormat format = ReportFormat::text;
  TrainConfig train;
  AugmentConfig augment;

  LabelMode mode() const { return classes == 3 ? LabelMode::three_class : LabelMode::five_class; }
  // Weight initialization and batch shuffling draw from separate streams of `seed`.
  std::uint64_t init_seed() const { return mix_seed(seed, 1); }
  std::uint64_t shuffle_seed() const { return mix_seed(seed, 2); }
  SplitSpec split_spec() const { return {{0.70, 0.20, 0.10}, seed, split_level}; }
};

// key = value lines covering every setting the command uses, seeds included.
std::string echo_config(const RunConfig& config, std::string_view command);

struct ResourceReport {
  double wall_time_train_seconds = 0.0;
  double wall_time_test_seconds = 0.0;
  std::size_t param_count = 0;
  std::size_t param_bytes_serialized = 0;  // 4 bytes per parameter
  std::optional<std::size_t> peak_resident_bytes;
};

// Times the two phases on a monotonic clock; either may be empty.
ResourceReport measure_resources(const Model& model, const std::function<void()>& train_phase,
                                 const std::function<void()>& test_phase);
std::string render_resources(const ResourceReport& report, ReportFormat format);
std::optional<std::size_t> peak_resident_bytes();

// Loads data/ and relabels it for `config.classes`.
Dataset load_for_mode(const RunConfig& config, std::ostream& log);

struct FoldResult {
  std::vector<std::size_t> held_out;
  History history;
  MetricsReport report;
};

struct CrossvalResult {
  std::vector<FoldResult> folds;
  std::vector<double> accuracies;
  double mean_accuracy = 0.0;
  double stddev_accuracy = 0.0;  // sample standard deviation
};

// Trains on k-1 folds and evaluates on the held-out one, for every fold.
// Fold i initializes from mix_seed(init_seed(), i) and shuffles from
// mix_seed(shuffle_seed(), i); reports use the float32-rounded weights.
CrossvalResult run_crossval(const Dataset& dataset, const RunConfig& config,
                            const EpochObserver& observer = {});

std::string render_history(const History& history);

// Exit codes: 0 success, 1 runtime failure, 2 usage error.
int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err);
int dispatch(int argc, char** argv);

}  // namespace cervix
