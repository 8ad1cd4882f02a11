#include <iostream>
#include <map>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "internal.hpp"

namespace cervix {

namespace {

using Command = int (*)(const RunConfig&, std::ostream&, std::ostream&);

const std::map<std::string, SplitLevel> kSplitLevels{{"source", SplitLevel::source}, {"sample", SplitLevel::sample}};
const std::map<std::string, ReportFormat> kFormats{{"text", ReportFormat::text},
                                                   {"structured", ReportFormat::structured}};
const std::map<std::string, EvalSubset> kSubsets{
    {"train", EvalSubset::train}, {"val", EvalSubset::val}, {"test", EvalSubset::test}, {"all", EvalSubset::all}};
const std::map<std::string, std::size_t> kModes{{"five_class", 5}, {"three_class", 3}};

struct Parser {
  CLI::App app{"Cervical cell image classifier: augmentation, training, evaluation and cross-validation.",
               "cervixpert"};
  RunConfig cfg;
  std::string subset{to_string(cfg.subset)};
  std::string level{to_string(cfg.split_level)};
  std::map<const CLI::App*, Command> commands;
  CLI::Option* eval_classes = nullptr;
  CLI::Option* eval_mode = nullptr;
  CLI::Option* bench_epochs = nullptr;

  Parser() {
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file of option values, one [section] per subcommand");
    app.set_help_all_flag("--help-all", "Print help for every subcommand");

    auto* augment = add("augment", "Expand a dataset directory with augmented images", cli::cmd_augment);
    data(augment, true);
    out(augment, true);
    seed(augment);
    augment->add_option("--target", cfg.target_per_class, "Images per class after expansion")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    augment->add_option("--rotation", cfg.augment.rotation_degrees, "Maximum rotation in degrees")
        ->capture_default_str();
    augment->add_option("--zoom", cfg.augment.zoom_factor, "Zoom factor (>= 1)")->capture_default_str();
    augment->add_option("--elastic-alpha", cfg.augment.elastic_alpha, "Elastic displacement scale in pixels")
        ->capture_default_str();
    augment->add_option("--elastic-sigma", cfg.augment.elastic_sigma, "Elastic smoothing std in pixels")
        ->capture_default_str();
    augment->add_option("--clahe-clip", cfg.augment.clahe_clip, "CLAHE clip limit (>= 1)")->capture_default_str();
    augment->add_option_function<std::size_t>(
                "--clahe-grid", [this](std::size_t n) { cfg.augment.clahe_grid = {n, n}; },
                "CLAHE tiles per side (default 8)")
        ->check(CLI::PositiveNumber);

    auto* train = add("train", "Train on the train split and report on val and test", cli::cmd_train);
    data(train, true);
    out(train, true);
    classes(train);
    training(train);
    seed(train);
    split_level(train);
    format(train);

    auto* evaluate = add("evaluate", "Score saved weights on one split of a dataset", cli::cmd_evaluate);
    data(evaluate, true);
    weights(evaluate);
    std::tie(eval_classes, eval_mode) = classes(evaluate);
    evaluate->add_option("--batch", cfg.train.batch_size, "Evaluation batch size")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    seed(evaluate);
    split_level(evaluate);
    evaluate->add_option("--subset", subset, "Split to score")
        ->check(CLI::IsMember(kSubsets))
        ->capture_default_str();
    format(evaluate);
    out(evaluate, false);

    auto* crossval = add("crossval", "k-fold cross-validation", cli::cmd_crossval);
    data(crossval, true);
    out(crossval, true);
    classes(crossval);
    crossval->add_option("--folds", cfg.folds, "Number of folds")->capture_default_str()->check(CLI::Range(2, 1000));
    training(crossval);
    seed(crossval);
    split_level(crossval);
    format(crossval);

    auto* predict = add("predict", "Classify individual image files", cli::cmd_predict);
    weights(predict);
    predict->add_option("inputs", cfg.inputs, "Image files")->required()->check(CLI::ExistingFile);
    format(predict);

    auto* inspect = add("inspect", "Print the layer table and parameter budget", cli::cmd_inspect);
    classes(inspect);
    seed(inspect);
    format(inspect);

    auto* bench = add("bench", "Time training and testing", cli::cmd_bench);
    data(bench, false);
    out(bench, false);
    classes(bench);
    bench_epochs = training(bench);
    seed(bench);
    split_level(bench);
    format(bench);
  }

  CLI::App* add(const std::string& name, const std::string& about, Command fn) {
    CLI::App* sub = app.add_subcommand(name, about);
    sub->configurable();
    commands[sub] = fn;
    return sub;
  }

  void data(CLI::App* sub, bool required) {
    auto* o = sub->add_option("--data", cfg.data, "Dataset root, one subdirectory per class")
                  ->check(CLI::ExistingDirectory);
    if (required) o->required();
  }
  void out(CLI::App* sub, bool required) {
    auto* o = sub->add_option("--out", cfg.out, "Output directory");
    if (required) o->required();
  }
  void weights(CLI::App* sub) {
    sub->add_option("--weights", cfg.weights, "Weight file")->required()->check(CLI::ExistingFile);
  }
  void seed(CLI::App* sub) { sub->add_option("--seed", cfg.seed, "Random seed")->capture_default_str(); }
  void format(CLI::App* sub) {
    sub->add_option("--format", cfg.format, "Report format")
        ->transform(CLI::CheckedTransformer(kFormats))
        ->default_str("text");
  }
  void split_level(CLI::App* sub) {
    sub->add_option("--split-level", level, "Keep each source image's family in one partition, or not")
        ->check(CLI::IsMember(kSplitLevels))
        ->capture_default_str();
  }
  std::pair<CLI::Option*, CLI::Option*> classes(CLI::App* sub) {
    auto* c = sub->add_option("--classes", cfg.classes, "Label granularity")
                  ->check(CLI::IsMember({3, 5}))
                  ->capture_default_str();
    auto* m = sub->add_option("--mode", cfg.classes, "Label granularity by name")
                  ->transform(CLI::CheckedTransformer(kModes))
                  ->excludes(c);
    return {c, m};
  }
  CLI::Option* training(CLI::App* sub) {
    auto* epochs = sub->add_option("--epochs", cfg.train.epochs, "Training epochs")
                       ->capture_default_str()
                       ->check(CLI::PositiveNumber);
    sub->add_option("--batch", cfg.train.batch_size, "Batch size")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--lr", cfg.train.adam.lr, "Adam learning rate")
        ->capture_default_str()
        ->check(CLI::NonNegativeNumber);
    return epochs;
  }

  const CLI::App* deepest_parsed() const {
    for (const auto& [sub, fn] : commands) {
      if (sub->parsed()) return sub;
    }
    return &app;
  }
};

}  // namespace

int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  Parser p;
  std::vector<const char*> argv{"cervixpert"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    p.app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << p.deepest_parsed()->help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << p.app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << p.deepest_parsed()->help();
    return 2;
  }

  const CLI::App* sub = p.deepest_parsed();
  RunConfig cfg = p.cfg;
  cfg.subset = kSubsets.at(p.subset);
  cfg.split_level = kSplitLevels.at(p.level);
  cfg.train.seed = cfg.shuffle_seed();
  if (sub->get_name() == "bench" && p.bench_epochs->count() == 0) cfg.train.epochs = 1;
  if (sub->get_name() == "evaluate" && p.eval_classes->count() == 0 && p.eval_mode->count() == 0) cfg.classes = 0;

  try {
    return p.commands.at(sub)(cfg, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

int dispatch(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace cervix
