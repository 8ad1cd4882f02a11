#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "cervix/cli.hpp"
#include "cervix/fileio.hpp"
#include "cervix/image.hpp"
#include "support.hpp"

using namespace cervix;
using testing_support::TempDir;

namespace {

struct CliRun {
  int code = 0;
  std::string out, err;
};

CliRun run(std::vector<std::string> args) {
  std::ostringstream out, err;
  CliRun r;
  r.code = dispatch(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  const auto bytes = read_file_bytes(p);
  return {bytes.begin(), bytes.end()};
}

// Five class directories of small tinted images, `n` per class.
void write_dataset(const std::filesystem::path& root, std::size_t n) {
  Rng rng(11);
  std::uniform_int_distribution<int> jitter(0, 40);
  for (std::size_t c = 0; c < kFineClassNames.size(); ++c) {
    const auto dir = root / kFineClassNames[c];
    std::filesystem::create_directories(dir);
    for (std::size_t i = 0; i < n; ++i) {
      Image img(24, 20);
      for (std::size_t p = 0; p < img.data.size(); ++p) {
        img.data[p] = static_cast<std::uint8_t>((p % 3 == c % 3 ? 150 : 30) + 10 * c + jitter(rng));
      }
      write_image(dir / fmt::format("cell{:03}.png", i), img);
    }
  }
}

}  // namespace

TEST(Cli, InspectReportsParameterBudget) {
  const CliRun r3 = run({"inspect", "--classes", "3"});
  ASSERT_EQ(r3.code, 0) << r3.err;
  EXPECT_NE(r3.out.find("parameters      404099"), std::string::npos) << r3.out;
  EXPECT_NE(r3.out.find("payload bytes   1616396 (1.54 MB)"), std::string::npos) << r3.out;
  EXPECT_NE(r3.err.find("# seed = 42"), std::string::npos);

  const CliRun r5 = run({"inspect", "--mode", "five_class", "--format", "structured"});
  ASSERT_EQ(r5.code, 0) << r5.err;
  const auto j = nlohmann::json::parse(r5.out);
  EXPECT_EQ(j.at("param_count").get<std::size_t>(), 404357u);
  EXPECT_EQ(j.at("layers").size(), 9u);
}

TEST(Cli, UsageErrorsExitTwo) {
  const CliRun unknown = run({"frobnicate"});
  EXPECT_EQ(unknown.code, 2);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos) << unknown.err;
  EXPECT_EQ(run({}).code, 2);

  const CliRun missing = run({"train", "--out", "/tmp/x"});
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.err.find("--data"), std::string::npos) << missing.err;

  EXPECT_EQ(run({"inspect", "--classes", "4"}).code, 2);
  EXPECT_EQ(run({"inspect", "--bogus-flag"}).code, 2);
  EXPECT_EQ(run({"inspect", "--classes", "3", "--mode", "five_class"}).code, 2);
  EXPECT_EQ(run({"evaluate", "--data", "/definitely/not/here", "--weights", "w"}).code, 2);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST(Cli, TrainThenEvaluateReproducesValidationReport) {
  TempDir dir("cli_train");
  write_dataset(dir.path() / "data", 10);
  const std::string data = (dir.path() / "data").string(), out = (dir.path() / "run").string();
  const CliRun train = run({"train", "--data", data, "--out", out, "--epochs", "2", "--batch", "8", "--seed", "5"});
  ASSERT_EQ(train.code, 0) << train.err;

  const auto history = slurp(dir.path() / "run" / "history.tsv");
  EXPECT_EQ(history.substr(0, history.find('\n')), "epoch\ttrain_loss\ttrain_acc\tval_loss\tval_acc");
  EXPECT_EQ(std::count(history.begin(), history.end(), '\n'), 3);
  EXPECT_FALSE(std::filesystem::exists(dir.path() / "run" / ".cervixpert.lock"));

  const CliRun eval = run({"evaluate", "--data", data, "--weights", out + "/weights.cvxw", "--seed", "5"});
  ASSERT_EQ(eval.code, 0) << eval.err;
  EXPECT_EQ(eval.out, slurp(dir.path() / "run" / "report_val.txt"));

  const CliRun test = run({"evaluate", "--data", data, "--weights", out + "/weights.cvxw", "--seed", "5", "--subset",
                        "test", "--format", "text"});
  EXPECT_EQ(test.out, slurp(dir.path() / "run" / "report_test.txt"));

  // Same flags, fresh directory: identical artifacts.
  const std::string out2 = (dir.path() / "run2").string();
  ASSERT_EQ(run({"train", "--data", data, "--out", out2, "--epochs", "2", "--batch", "8", "--seed", "5"}).code, 0);
  EXPECT_EQ(read_file_bytes(out + "/weights.cvxw"), read_file_bytes(out2 + "/weights.cvxw"));
  EXPECT_EQ(slurp(out + "/history.tsv"), slurp(out2 + "/history.tsv"));
  EXPECT_EQ(slurp(out + "/report_val.txt"), slurp(out2 + "/report_val.txt"));

  const CliRun mismatch =
      run({"evaluate", "--data", data, "--weights", out + "/weights.cvxw", "--classes", "3"});
  EXPECT_EQ(mismatch.code, 1);

  const CliRun pred = run({"predict", "--weights", out + "/weights.cvxw", data + "/parabasal/cell000.png"});
  ASSERT_EQ(pred.code, 0) << pred.err;
  EXPECT_EQ(pred.out.rfind(data + "/parabasal/cell000.png\t", 0), 0u) << pred.out;
}

TEST(Cli, LockedOutputDirectoryIsARuntimeFailure) {
  TempDir dir("cli_lock");
  write_dataset(dir.path() / "data", 3);
  std::filesystem::create_directories(dir.path() / "run");
  std::ofstream(dir.path() / "run" / ".cervixpert.lock") << "1\n";
  const CliRun r = run({"train", "--data", (dir.path() / "data").string(), "--out", (dir.path() / "run").string()});
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("in use"), std::string::npos) << r.err;
}

TEST(Cli, AugmentWritesManifestAndExpandedTree) {
  TempDir dir("cli_augment");
  write_dataset(dir.path() / "data", 4);
  const std::string out = (dir.path() / "aug").string();
  const CliRun r = run({"augment", "--data", (dir.path() / "data").string(), "--out", out, "--target", "7"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Dataset ds = load_dataset(out);
  EXPECT_EQ(ds.class_counts(), std::vector<std::size_t>(5, 7));
  std::set<std::string> sources;
  for (const auto& s : ds.samples) sources.insert(s.source_id);
  EXPECT_EQ(sources.size(), 20u);  // every generated image maps back to one of the 20 originals
  const auto manifest = slurp(dir.path() / "aug" / "manifest.tsv");
  EXPECT_EQ(manifest.substr(0, manifest.find('\n')), "generated_path\tsource_path\toperator\tseed");
  EXPECT_EQ(std::count(manifest.begin(), manifest.end(), '\n'), 1 + 15);
}

TEST(Cli, ConfigFileSuppliesOptions) {
  TempDir dir("cli_config");
  std::ofstream(dir.path() / "run.toml") << "[inspect]\nclasses = 3\nformat = \"structured\"\n";
  const CliRun r = run({"--config", (dir.path() / "run.toml").string(), "inspect"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("param_count").get<std::size_t>(), 404099u);
}

TEST(Crossval, FiveFoldsMatchKfold) {
  Dataset ds;
  ds.class_names = {"a", "b", "c"};
  for (int c = 0; c < 3; ++c) {
    for (int i = 0; i < 10; ++i) {
      const auto v = static_cast<std::uint8_t>(40 + 80 * c + i);
      ds.samples.push_back({std::make_shared<const Image>(Image::solid(8, 8, v, v, v)), {}, c, fmt::format("{}/{}", c, i)});
    }
  }
  ds.mode = LabelMode::three_class;
  RunConfig cfg;
  cfg.classes = 3;
  cfg.train.epochs = 1;
  cfg.train.batch_size = 8;
  cfg.split_level = SplitLevel::sample;
  const CrossvalResult cv = run_crossval(ds, cfg);
  ASSERT_EQ(cv.accuracies.size(), 5u);
  const auto folds = kfold(ds, 5, cfg.seed, SplitLevel::sample);
  double sum = 0.0;
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(cv.folds[i].held_out, folds[i]);
    EXPECT_EQ(cv.folds[i].history.size(), 1u);
    EXPECT_EQ(cv.folds[i].report.matrix.total(), folds[i].size());
    EXPECT_EQ(cv.accuracies[i], cv.folds[i].report.accuracy);
    sum += cv.accuracies[i];
  }
  EXPECT_DOUBLE_EQ(cv.mean_accuracy, sum / 5.0);
  double ss = 0.0;
  for (double a : cv.accuracies) ss += (a - cv.mean_accuracy) * (a - cv.mean_accuracy);
  EXPECT_NEAR(cv.stddev_accuracy, std::sqrt(ss / 4.0), 1e-15);
  cfg.folds = 1;
  EXPECT_THROW(run_crossval(ds, cfg), std::invalid_argument);
}

TEST(Resources, ByteAccountingAndRendering) {
  const Model m = build_cervixpert(3, 0);
  const ResourceReport r = measure_resources(m, [] {}, {});
  EXPECT_EQ(r.param_count, 404099u);
  EXPECT_EQ(r.param_bytes_serialized, 1616396u);
  EXPECT_EQ(r.param_bytes_serialized, 4 * r.param_count);
  EXPECT_GE(r.wall_time_train_seconds, 0.0);
  EXPECT_TRUE(std::isfinite(r.wall_time_train_seconds));
  EXPECT_EQ(r.wall_time_test_seconds, 0.0);

  ResourceReport fixed = r;
  fixed.peak_resident_bytes.reset();
  EXPECT_EQ(render_resources(fixed, ReportFormat::text), render_resources(fixed, ReportFormat::text));
  EXPECT_NE(render_resources(fixed, ReportFormat::text).find("unavailable"), std::string::npos);
  const auto j = nlohmann::json::parse(render_resources(fixed, ReportFormat::structured));
  EXPECT_TRUE(j.at("peak_resident_bytes").is_null());
  EXPECT_EQ(j.at("param_bytes_serialized").get<std::size_t>(), 1616396u);
}
