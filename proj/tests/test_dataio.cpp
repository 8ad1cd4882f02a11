#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>

#include <fmt/format.h>

#include "cervix/augment.hpp"
#include "cervix/dataio.hpp"
#include "cervix/errors.hpp"
#include "cervix/image.hpp"
#include "support.hpp"

using namespace cervix;
using testing_support::TempDir;

namespace {

Dataset per_class(std::size_t n, std::size_t classes = 5) {
  Dataset ds;
  auto shared = std::make_shared<const Image>(Image::solid(2, 2, 0, 0, 0));
  for (std::size_t c = 0; c < classes; ++c) {
    ds.class_names.push_back(std::string(kFineClassNames[c % 5]) + (c >= 5 ? std::to_string(c) : ""));
    for (std::size_t i = 0; i < n; ++i) {
      ds.samples.push_back({shared, {}, static_cast<int>(c), fmt::format("{}/{}", c, i)});
    }
  }
  return ds;
}

// Every source contributes `family` samples, as after augmentation.
Dataset families(std::size_t sources, std::size_t family) {
  Dataset ds;
  auto shared = std::make_shared<const Image>(Image::solid(2, 2, 0, 0, 0));
  ds.class_names = {"a", "b"};
  for (int c = 0; c < 2; ++c)
    for (std::size_t s = 0; s < sources; ++s)
      for (std::size_t k = 0; k < family + s % 3; ++k) ds.samples.push_back({shared, {}, c, fmt::format("{}/{}", c, s)});
  return ds;
}

std::map<std::string, int> owner_of(const Dataset& ds, const std::vector<std::vector<std::size_t>>& parts) {
  std::map<std::string, int> owner;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    for (std::size_t i : parts[p]) {
      auto [it, fresh] = owner.emplace(ds.samples[i].source_id, static_cast<int>(p));
      if (!fresh && it->second != static_cast<int>(p)) return {};
    }
  }
  return owner;
}

std::vector<std::size_t> class_tally(const Dataset& ds, const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> n(ds.num_classes());
  for (std::size_t i : idx) ++n[static_cast<std::size_t>(ds.samples[i].label)];
  return n;
}

}  // namespace

TEST(LoadDataset, ReadsClassDirectoriesAndSkipsBrokenFiles) {
  TempDir dir("load");
  const std::vector<std::string> names = {"b_class", "a_class"};
  for (std::size_t c = 0; c < names.size(); ++c) {
    std::filesystem::create_directories(dir.path() / names[c]);
    for (int i = 0; i < 10; ++i) {
      const auto file = dir.path() / names[c] / fmt::format("img{:02}.png", i);
      if (c == 0 && i == 4) {
        std::ofstream(file) << "not an image";
      } else {
        write_image(file, Image::solid(5 + i, 6, static_cast<std::uint8_t>(10 * i), 0, 0));
      }
    }
  }
  std::ofstream(dir.path() / "a_class" / "notes.txt") << "ignored";

  LoadReport report;
  const Dataset ds = load_dataset(dir.path(), &report);
  EXPECT_EQ(ds.class_names, (std::vector<std::string>{"a_class", "b_class"}));
  EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{10, 9}));
  EXPECT_EQ(report.loaded, 19u);
  EXPECT_EQ(report.skipped, 1u);
  ASSERT_EQ(report.skipped_paths.size(), 1u);
  EXPECT_EQ(report.skipped_paths[0].filename(), "img04.png");
  EXPECT_EQ(ds.samples[0].source_id, "a_class/img00.png");
  EXPECT_EQ(ds.samples[3].image->height, 8u);
  EXPECT_EQ(ds.samples[3].image->at(0, 0, 0), 30);
}

TEST(LoadDataset, Table1CountsGive966Samples) {
  TempDir dir("table1");
  const std::size_t counts[5] = {223, 238, 271, 108, 126};
  const auto tiny = Image::solid(2, 2, 1, 2, 3);
  for (std::size_t c = 0; c < 5; ++c) {
    std::filesystem::create_directories(dir.path() / kFineClassNames[c]);
    for (std::size_t i = 0; i < counts[c]; ++i) write_image(dir.path() / kFineClassNames[c] / fmt::format("{}.bmp", i), tiny);
  }
  const Dataset ds = load_dataset(dir.path());
  EXPECT_EQ(ds.samples.size(), 966u);
  EXPECT_EQ(ds.num_classes(), 5u);
  EXPECT_EQ(ds.class_counts(), (std::vector<std::size_t>{223, 238, 271, 108, 126}));
}

TEST(LoadDataset, EmptyOrMissingRootIsFatal) {
  TempDir dir("empty");
  EXPECT_THROW(load_dataset(dir.path()), LoadError);
  EXPECT_THROW(load_dataset(dir.path() / "nope"), LoadError);
}

TEST(LoadDataset, ManifestRestoresSourceIds) {
  TempDir dir("manifest");
  std::filesystem::create_directories(dir.path() / "x");
  write_image(dir.path() / "x" / "orig.png", Image::solid(3, 3, 1, 1, 1));
  write_image(dir.path() / "x" / "orig_aug1.png", Image::solid(3, 3, 2, 2, 2));
  std::ofstream(dir.path() / kManifestName) << "generated_path\tsource_path\toperator\tseed\n"
                                            << "x/orig_aug1.png\tx/orig.png\tvflip\t5\n";
  const Dataset ds = load_dataset(dir.path());
  ASSERT_EQ(ds.samples.size(), 2u);
  EXPECT_EQ(ds.samples[0].source_id, "x/orig.png");
  EXPECT_EQ(ds.samples[1].source_id, "x/orig.png");
}

TEST(Preprocess, ExactScalingAtNativeSize) {
  Image img(100, 100);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<std::uint8_t>(i * 7 % 256);
  const Tensor t = preprocess(img);
  ASSERT_EQ(t.shape(), (Shape{100, 100, 3}));
  for (std::size_t i = 0; i < img.data.size(); ++i) ASSERT_EQ(t[i], img.data[i] / 255.0);
}

TEST(Preprocess, ResizesAndMapsWhiteToOne) {
  EXPECT_EQ(preprocess(Image(200, 200)).shape(), (Shape{100, 100, 3}));
  for (auto [h, w] : {std::pair{37, 61}, std::pair{250, 100}, std::pair{1, 1}}) {
    const Tensor t = preprocess(Image::solid(h, w, 255, 255, 255));
    for (double v : t.data()) ASSERT_EQ(v, 1.0);
  }
}

TEST(Labels, CoarseGrouping) {
  EXPECT_EQ(kCoarseClassNames[static_cast<std::size_t>(coarse_label(0))], "abnormal");  // dyskeratotic
  EXPECT_EQ(kCoarseClassNames[static_cast<std::size_t>(coarse_label(1))], "abnormal");  // koilocytotic
  EXPECT_EQ(kCoarseClassNames[static_cast<std::size_t>(coarse_label(2))], "benign");    // metaplastic
  EXPECT_EQ(kCoarseClassNames[static_cast<std::size_t>(coarse_label(3))], "normal");    // parabasal
  EXPECT_EQ(kCoarseClassNames[static_cast<std::size_t>(coarse_label(4))], "normal");    // superficial/intermediate
  const Dataset three = to_three_class(per_class(3));
  EXPECT_EQ(three.class_counts(), (std::vector<std::size_t>{6, 3, 6}));
  EXPECT_EQ(three.mode, LabelMode::three_class);
  EXPECT_THROW(to_three_class(three), ValidationError);
}

TEST(LargestRemainder, SumsAndRounding) {
  const std::array<double, 3> r{0.7, 0.2, 0.1};
  EXPECT_EQ(largest_remainder(5000, r), (std::vector<std::size_t>{3500, 1000, 500}));
  EXPECT_EQ(largest_remainder(10, r), (std::vector<std::size_t>{7, 2, 1}));
  EXPECT_EQ(largest_remainder(3, r), (std::vector<std::size_t>{2, 1, 0}));
  for (std::size_t n = 0; n < 300; ++n) {
    const auto parts = largest_remainder(n, r);
    EXPECT_EQ(parts[0] + parts[1] + parts[2], n);
  }
}

TEST(StratifiedSplit, FiveThousandPerClass) {
  const Dataset ds = per_class(5000);
  const Split s = stratified_split(ds, {{0.7, 0.2, 0.1}, 42, SplitLevel::sample});
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_EQ(class_tally(ds, s.train)[c], 3500u);
    EXPECT_EQ(class_tally(ds, s.val)[c], 1000u);
    EXPECT_EQ(class_tally(ds, s.test)[c], 500u);
  }
  std::vector<int> seen(ds.samples.size());
  for (const auto* part : {&s.train, &s.val, &s.test}) {
    EXPECT_TRUE(std::is_sorted(part->begin(), part->end()));
    for (std::size_t i : *part) ++seen[i];
  }
  for (int v : seen) ASSERT_EQ(v, 1);

  const Split again = stratified_split(ds, {{0.7, 0.2, 0.1}, 42, SplitLevel::sample});
  EXPECT_EQ(again.train, s.train);
  EXPECT_EQ(again.val, s.val);
  EXPECT_EQ(again.test, s.test);
  const Split other = stratified_split(ds, {{0.7, 0.2, 0.1}, 43, SplitLevel::sample});
  EXPECT_NE(other.train, s.train);
}

TEST(StratifiedSplit, SourceLevelNeverSplitsAFamily) {
  const Dataset ds = families(40, 4);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Split s = stratified_split(ds, {{0.7, 0.2, 0.1}, seed, SplitLevel::source});
    const auto owner = owner_of(ds, {s.train, s.val, s.test});
    ASSERT_EQ(owner.size(), 80u) << "a source id spans two partitions (seed " << seed << ")";
    std::size_t total = s.train.size() + s.val.size() + s.test.size();
    EXPECT_EQ(total, ds.samples.size());
  }
}

TEST(StratifiedSplit, SourceLevelOnAugmentedSet) {
  Dataset base = per_class(12, 3);
  for (std::size_t i = 0; i < base.samples.size(); ++i) {
    Image img(16, 16);
    for (auto& v : img.data) v = static_cast<std::uint8_t>(i);
    base.samples[i].image = std::make_shared<const Image>(std::move(img));
  }
  const Dataset ds = expand_dataset(base, 40, AugmentConfig{}, 9).dataset;
  const Split s = stratified_split(ds, {{0.7, 0.2, 0.1}, 1, SplitLevel::source});
  EXPECT_EQ(owner_of(ds, {s.train, s.val, s.test}).size(), 36u);
}

TEST(StratifiedSplit, TooFewUnitsNamesTheClass) {
  Dataset ds = per_class(10, 2);
  ds.samples.resize(12);  // class 1 keeps two samples
  try {
    stratified_split(ds, {{0.7, 0.2, 0.1}, 0, SplitLevel::sample});
    FAIL() << "expected a validation error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find(ds.class_names[1]), std::string::npos);
  }
}

TEST(Kfold, FiveFoldsOfOneThousandPerClass) {
  const Dataset ds = per_class(5000);
  const auto folds = kfold(ds, 5, 42);
  ASSERT_EQ(folds.size(), 5u);
  std::vector<int> seen(ds.samples.size());
  for (const auto& f : folds) {
    EXPECT_EQ(f.size(), 5000u);
    EXPECT_EQ(class_tally(ds, f), (std::vector<std::size_t>(5, 1000)));
    for (std::size_t i : f) ++seen[i];
  }
  for (int v : seen) ASSERT_EQ(v, 1);
  EXPECT_EQ(kfold(ds, 5, 42), folds);
  EXPECT_NE(kfold(ds, 5, 41), folds);
}

TEST(Kfold, ValidationAndSourceLevel) {
  const Dataset ds = per_class(10);
  EXPECT_THROW(kfold(ds, 1, 0), ValidationError);
  EXPECT_THROW(kfold(ds, 11, 0), ValidationError);

  const Dataset fam = families(25, 3);
  const auto folds = kfold(fam, 5, 7, SplitLevel::source);
  EXPECT_EQ(owner_of(fam, folds).size(), 50u);
  std::size_t total = 0;
  for (const auto& f : folds) total += f.size();
  EXPECT_EQ(total, fam.samples.size());
}

TEST(MixSeed, DistinctStreams) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 50; ++a)
    for (std::uint64_t b = 0; b < 50; ++b) seen.insert(mix_seed(42, a, b));
  EXPECT_EQ(seen.size(), 2500u);
  EXPECT_EQ(mix_seed(1, 2, 3), mix_seed(1, 2, 3));
}
