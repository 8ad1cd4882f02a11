#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

#include "cervix/errors.hpp"
#include "cervix/fileio.hpp"
#include "cervix/image.hpp"
#include "internal.hpp"

namespace cervix {

namespace fs = std::filesystem;

namespace {

constexpr const char* kWeightsName = "weights.cvxw";
constexpr const char* kHistoryName = "history.tsv";

std::vector<std::string> class_names_for(std::size_t num_classes) {
  if (num_classes == kCoarseClassNames.size()) return {kCoarseClassNames.begin(), kCoarseClassNames.end()};
  if (num_classes == kFineClassNames.size()) return {kFineClassNames.begin(), kFineClassNames.end()};
  std::vector<std::string> names;
  for (std::size_t c = 0; c < num_classes; ++c) names.push_back(fmt::format("class{}", c));
  return names;
}

EpochObserver progress_to(std::ostream& err, std::string prefix = {}) {
  return [&err, prefix = std::move(prefix)](const EpochRecord& r) {
    err << fmt::format("{}epoch {:>3}  train_loss {:.4f}  train_acc {:.4f}  val_loss {:.4f}  val_acc {:.4f}\n",
                       prefix, r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy);
  };
}

MetricsReport report_for(const Model& model, const Dataset& ds, std::size_t batch) {
  const EvalResult r = evaluate(model, ExampleSet::from(ds), batch);
  std::vector<int> labels;
  labels.reserve(ds.samples.size());
  for (const auto& s : ds.samples) labels.push_back(s.label);
  return make_report(confusion(r.predictions, labels, ds.num_classes()), ds.class_names);
}

void write_text(const fs::path& path, const std::string& text) { write_file_atomic(path, text); }

double sample_stddev(std::span<const double> xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

std::string render_crossval(const CrossvalResult& cv, ReportFormat format) {
  if (format == ReportFormat::structured) {
    nlohmann::json j;
    j["fold_accuracies"] = cv.accuracies;
    j["mean_accuracy"] = cv.mean_accuracy;
    j["stddev_accuracy"] = cv.stddev_accuracy;
    j["fold_sizes"] = nlohmann::json::array();
    for (const auto& f : cv.folds) j["fold_sizes"].push_back(f.held_out.size());
    return j.dump(2) + "\n";
  }
  std::string s = "fold  held_out  accuracy\n";
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    s += fmt::format("{:>4}  {:>8}  {:.4f}\n", i + 1, cv.folds[i].held_out.size(), cv.accuracies[i]);
  }
  s += fmt::format("mean            {:.4f}\nstd             {:.4f}\n", cv.mean_accuracy, cv.stddev_accuracy);
  return s;
}

std::vector<std::size_t> subset_indices(const Split& split, EvalSubset subset, std::size_t total) {
  switch (subset) {
    case EvalSubset::train: return split.train;
    case EvalSubset::val: return split.val;
    case EvalSubset::test: return split.test;
    case EvalSubset::all: break;
  }
  std::vector<std::size_t> all(total);
  std::iota(all.begin(), all.end(), 0);
  return all;
}

}  // namespace

Dataset load_for_mode(const RunConfig& config, std::ostream& log) {
  LoadReport report;
  Dataset ds = load_dataset(config.data, &report);
  log << fmt::format("loaded {} images from {} ({} classes)", report.loaded, config.data.string(),
                     ds.num_classes());
  if (report.skipped > 0) log << fmt::format(", skipped {} unreadable", report.skipped);
  log << '\n';
  for (const auto& p : report.skipped_paths) log << "  skipped " << p.string() << '\n';

  if (config.classes == 5) {
    if (ds.num_classes() != kFineClassNames.size()) {
      throw LoadError(fmt::format("five-class mode needs 5 class directories, {} has {}", config.data.string(),
                                  ds.num_classes()));
    }
    return ds;
  }
  if (config.classes != 3) throw ValidationError(fmt::format("--classes must be 3 or 5, got {}", config.classes));
  if (ds.num_classes() == kCoarseClassNames.size()) {
    ds.mode = LabelMode::three_class;
    return ds;
  }
  if (ds.num_classes() != kFineClassNames.size()) {
    throw LoadError(fmt::format("three-class mode needs 3 or 5 class directories, {} has {}", config.data.string(),
                                ds.num_classes()));
  }
  return to_three_class(ds);
}

CrossvalResult run_crossval(const Dataset& dataset, const RunConfig& config, const EpochObserver& observer) {
  if (config.folds < 2) throw ValidationError(fmt::format("--folds must be >= 2, got {}", config.folds));
  config.train.validate();
  const auto folds = kfold(dataset, config.folds, config.seed, config.split_level);

  CrossvalResult cv;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    std::vector<std::size_t> train_idx;
    for (std::size_t j = 0; j < folds.size(); ++j) {
      if (j != i) train_idx.insert(train_idx.end(), folds[j].begin(), folds[j].end());
    }
    std::sort(train_idx.begin(), train_idx.end());
    const Dataset train = subset(dataset, train_idx);
    const Dataset held = subset(dataset, folds[i]);

    TrainConfig tc = config.train;
    tc.seed = mix_seed(config.shuffle_seed(), i);
    Model model = build_cervixpert(dataset.num_classes(), mix_seed(config.init_seed(), i));
    FoldResult fold;
    fold.held_out = folds[i];
    fold.history = fit(model, ExampleSet::from(train), ExampleSet::from(held), tc, observer);
    round_to_float32(model);
    fold.report = report_for(model, held, tc.batch_size);
    cv.accuracies.push_back(fold.report.accuracy);
    cv.folds.push_back(std::move(fold));
  }
  cv.mean_accuracy = std::accumulate(cv.accuracies.begin(), cv.accuracies.end(), 0.0) /
                     static_cast<double>(cv.accuracies.size());
  cv.stddev_accuracy = sample_stddev(cv.accuracies, cv.mean_accuracy);
  return cv;
}

namespace cli {

int cmd_inspect(const RunConfig& config, std::ostream& out, std::ostream& err) {
  log_config(config, "inspect", err);
  const Model model = build_cervixpert(config.classes, config.init_seed());
  const std::size_t count = param_count(model);
  const std::size_t header = weight_header_bytes(model);
  const std::size_t payload = 4 * count;

  struct Row {
    const LayerSpec* layer;
    Shape output;
    std::size_t params;
  };
  std::vector<Row> rows;
  const ForwardResult fwd = forward(model, Tensor(model.input_shape(1)));
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& layer = model.layers()[i];
    std::size_t n = 0;
    for (const auto& [name, t] : model.params()) {
      if (name.starts_with(layer.name + "/")) n += t.size();
    }
    const Shape& os = fwd.cache.layers[i].output_shape;
    rows.push_back({&layer, Shape(os.begin() + 1, os.end()), n});
  }

  if (config.format == ReportFormat::structured) {
    nlohmann::json j;
    j["num_classes"] = model.num_classes();
    j["param_count"] = count;
    j["payload_bytes"] = payload;
    j["header_bytes"] = header;
    j["file_bytes"] = header + payload;
    j["layers"] = nlohmann::json::array();
    for (const auto& r : rows) {
      j["layers"].push_back({{"name", r.layer->name},
                             {"kind", to_string(r.layer->kind)},
                             {"output_shape", r.output},
                             {"params", r.params}});
    }
    out << j.dump(2) << '\n';
    return 0;
  }

  out << fmt::format("{:<8} {:<8} {:<14} {:>10}\n", "layer", "kind", "output", "params");
  for (const auto& r : rows) {
    out << fmt::format("{:<8} {:<8} {:<14} {:>10}\n", r.layer->name, to_string(r.layer->kind), shape_str(r.output),
                       r.params);
  }
  out << fmt::format("parameters      {}\n", count);
  out << fmt::format("payload bytes   {} ({:.2f} MB)\n", payload, payload / (1024.0 * 1024.0));
  out << fmt::format("header bytes    {}\n", header);
  out << fmt::format("file bytes      {}\n", header + payload);
  return 0;
}

int cmd_augment(const RunConfig& config, std::ostream& out, std::ostream& err) {
  const fs::path dst = prepare_out_dir(config.out);
  RunLock lock(dst);
  log_config(config, "augment", err);

  LoadReport report;
  const Dataset ds = load_dataset(config.data, &report);
  err << fmt::format("loaded {} images ({} skipped)\n", report.loaded, report.skipped);
  const ExpandResult expanded = expand_dataset(ds, config.target_per_class, config.augment, config.seed);

  std::string manifest = "generated_path\tsource_path\toperator\tseed\n";
  for (const auto& name : ds.class_names) fs::create_directories(dst / name);
  for (const auto& s : ds.samples) {
    const fs::path rel = fs::relative(s.path, config.data);
    fs::copy_file(s.path, dst / rel, fs::copy_options::overwrite_existing);
    if (s.source_id != rel.generic_string()) {
      manifest += fmt::format("{}\t{}\tinherited\t-\n", rel.generic_string(), s.source_id);
    }
  }
  for (const auto& g : expanded.generated) {
    const LabeledSample& src = ds.samples[g.source_index];
    const LabeledSample& made = expanded.dataset.samples[g.sample_index];
    const std::string rel = fmt::format("{}/{}_aug{:06}_{}.png", ds.class_names[made.label],
                                        src.path.stem().string(), g.sample_index, to_string(g.op));
    write_image(dst / rel, *made.image);
    manifest += fmt::format("{}\t{}\t{}\t{}\n", rel, src.source_id, to_string(g.op), g.seed);
  }
  write_text(dst / kManifestName, manifest);

  const auto counts = expanded.dataset.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    out << fmt::format("{:<26} {:>6}\n", expanded.dataset.class_names[c], counts[c]);
  }
  out << fmt::format("{:<26} {:>6}\n", "total", expanded.dataset.samples.size());
  out << fmt::format("generated {} images into {}\n", expanded.generated.size(), dst.string());
  return 0;
}

int cmd_train(const RunConfig& config, std::ostream& out, std::ostream& err) {
  const fs::path dst = prepare_out_dir(config.out);
  RunLock lock(dst);
  log_config(config, "train", err);

  const Dataset ds = load_for_mode(config, err);
  const Split split = stratified_split(ds, config.split_spec());
  const Dataset train = subset(ds, split.train);
  const Dataset val = subset(ds, split.val);
  const Dataset test = subset(ds, split.test);
  err << fmt::format("split ({}): train {}  val {}  test {}\n", to_string(config.split_level),
                     train.samples.size(), val.samples.size(), test.samples.size());

  Model model = build_cervixpert(ds.num_classes(), config.init_seed());
  History history;
  MetricsReport val_report, test_report;
  const ResourceReport resources = measure_resources(
      model,
      [&] {
        history = fit(model, ExampleSet::from(train), ExampleSet::from(val), config.train, progress_to(err));
        round_to_float32(model);
      },
      [&] { test_report = report_for(model, test, config.train.batch_size); });
  val_report = report_for(model, val, config.train.batch_size);

  save_weights(model, dst / kWeightsName);
  write_text(dst / kHistoryName, render_history(history));
  const std::string ext = report_ext(config.format);
  write_text(dst / ("report_val" + ext), render_report(val_report, config.format));
  write_text(dst / ("report_test" + ext), render_report(test_report, config.format));
  write_text(dst / ("resources" + ext), render_resources(resources, config.format));

  out << "validation\n" << render_report(val_report, config.format);
  out << "test\n" << render_report(test_report, config.format);
  out << render_resources(resources, config.format);
  return 0;
}

int cmd_evaluate(const RunConfig& requested, std::ostream& out, std::ostream& err) {
  std::optional<RunLock> lock;
  if (!requested.out.empty()) lock.emplace(prepare_out_dir(requested.out));

  const Model model = load_weights(requested.weights);
  RunConfig config = requested;
  if (config.classes == 0) config.classes = model.num_classes();  // not given on the command line
  log_config(config, "evaluate", err);
  if (model.num_classes() != config.classes) {
    throw ValidationError(fmt::format("{} holds a {}-class model but --classes is {}", config.weights.string(),
                                      model.num_classes(), config.classes));
  }
  const Dataset ds = load_for_mode(config, err);
  const Split split = config.subset == EvalSubset::all ? Split{} : stratified_split(ds, config.split_spec());
  const Dataset part = subset(ds, subset_indices(split, config.subset, ds.samples.size()));

  MetricsReport report;
  const ResourceReport resources =
      measure_resources(model, {}, [&] { report = report_for(model, part, config.train.batch_size); });
  const std::string rendered = render_report(report, config.format);
  out << rendered;
  err << fmt::format("evaluated {} {} images in {:.3f} s\n", part.samples.size(), to_string(config.subset),
                     resources.wall_time_test_seconds);
  if (!config.out.empty()) {
    const std::string ext = report_ext(config.format);
    write_text(config.out / fmt::format("report_{}{}", to_string(config.subset), ext), rendered);
    write_text(config.out / ("resources_evaluate" + ext), render_resources(resources, config.format));
  }
  return 0;
}

int cmd_crossval(const RunConfig& config, std::ostream& out, std::ostream& err) {
  const fs::path dst = prepare_out_dir(config.out);
  RunLock lock(dst);
  log_config(config, "crossval", err);

  const Dataset ds = load_for_mode(config, err);
  std::size_t fold_no = 0;
  auto progress = progress_to(err);
  const CrossvalResult cv = run_crossval(ds, config, [&](const EpochRecord& r) {
    if (r.epoch == 1) ++fold_no;
    err << fmt::format("fold {} ", fold_no);
    progress(r);
  });

  const std::string ext = report_ext(config.format);
  for (std::size_t i = 0; i < cv.folds.size(); ++i) {
    write_text(dst / fmt::format("fold{}_history.tsv", i + 1), render_history(cv.folds[i].history));
    write_text(dst / fmt::format("fold{}_report{}", i + 1, ext), render_report(cv.folds[i].report, config.format));
  }
  const std::string summary = render_crossval(cv, config.format);
  write_text(dst / ("crossval" + ext), summary);
  out << summary;
  return 0;
}

int cmd_predict(const RunConfig& config, std::ostream& out, std::ostream& err) {
  log_config(config, "predict", err);
  const Model model = load_weights(config.weights);
  const auto names = class_names_for(model.num_classes());

  nlohmann::json rows = nlohmann::json::array();
  for (const auto& path : config.inputs) {
    const auto img = read_image(path);
    if (!img || img->empty()) throw LoadError(fmt::format("cannot decode image {}", path.string()));
    Tensor batch(model.input_shape(1));
    preprocess_into(*img, model.arch().input_height, model.arch().input_width, batch.data());
    const Prediction p = predict(model, batch).front();
    if (config.format == ReportFormat::structured) {
      rows.push_back({{"path", path.string()},
                      {"label", names[static_cast<std::size_t>(p.label)]},
                      {"probabilities", p.probabilities}});
    } else {
      out << fmt::format("{}\t{}", path.string(), names[static_cast<std::size_t>(p.label)]);
      for (double q : p.probabilities) out << fmt::format("\t{:.6f}", q);
      out << '\n';
    }
  }
  if (config.format == ReportFormat::structured) out << rows.dump(2) << '\n';
  return 0;
}

int cmd_bench(const RunConfig& config, std::ostream& out, std::ostream& err) {
  std::optional<RunLock> lock;
  if (!config.out.empty()) lock.emplace(prepare_out_dir(config.out));
  log_config(config, "bench", err);

  Dataset train, test;
  if (!config.data.empty()) {
    const Dataset ds = load_for_mode(config, err);
    const Split split = stratified_split(ds, config.split_spec());
    train = subset(ds, split.train);
    test = subset(ds, split.test);
  } else {
    // Synthetic stand-in: one batch of noise images per class.
    Rng rng(config.seed);
    std::uniform_int_distribution<int> px(0, 255);
    train.class_names = class_names_for(config.classes);
    train.mode = config.mode();
    for (std::size_t c = 0; c < config.classes; ++c) {
      for (std::size_t i = 0; i < config.train.batch_size; ++i) {
        Image img = Image::solid(kInputSize, kInputSize, 0, 0, 0);
        for (auto& v : img.data) v = static_cast<std::uint8_t>(px(rng));
        train.samples.push_back({std::make_shared<const Image>(std::move(img)), {}, static_cast<int>(c),
                                 fmt::format("synthetic/{}/{}", c, i)});
      }
    }
    test = train;
  }

  Model model = build_cervixpert(train.num_classes(), config.init_seed());
  const ExampleSet train_set = ExampleSet::from(train);
  const ExampleSet test_set = ExampleSet::from(test);
  const ResourceReport resources = measure_resources(
      model,
      [&] {
        AdamState state(model.params(), config.train.adam);
        Rng rng(config.train.seed);
        for (std::size_t e = 1; e <= config.train.epochs; ++e) {
          const EpochStats s = train_epoch(model, state, train_set, config.train, rng);
          err << fmt::format("epoch {:>3}  loss {:.4f}  acc {:.4f}\n", e, s.loss, s.accuracy);
        }
      },
      [&] { evaluate(model, test_set, config.train.batch_size); });

  const std::string rendered = render_resources(resources, config.format);
  if (config.format == ReportFormat::text) {
    out << fmt::format("train images {}  test images {}  epochs {}\n", train_set.size(), test_set.size(),
                       config.train.epochs);
  }
  out << rendered;
  if (!config.out.empty()) write_text(config.out / ("resources_bench" + report_ext(config.format)), rendered);
  return 0;
}

}  // namespace cli
}  // namespace cervix
