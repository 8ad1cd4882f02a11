#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cervix/image.hpp"
#include "cervix/tensor.hpp"

namespace cervix {

using Rng = std::mt19937_64;

inline constexpr std::size_t kInputSize = 100;

// Fine cell classes in lexicographic order, and their coarse grouping.
inline constexpr std::array<std::string_view, 5> kFineClassNames = {
    "dyskeratotic", "koilocytotic", "metaplastic", "parabasal", "superficial_intermediate"};
inline constexpr std::array<std::string_view, 3> kCoarseClassNames = {"abnormal", "benign", "normal"};

enum class LabelMode { five_class, three_class };
std::string_view to_string(LabelMode mode);

struct LabeledSample {
  std::shared_ptr<const Image> image;  // decoded pixels; always present after load
  std::filesystem::path path;          // empty for in-memory samples
  int label = 0;                       // index into Dataset::class_names
  std::string source_id;               // originating un-augmented image
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::vector<std::string> class_names;
  LabelMode mode = LabelMode::five_class;

  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;
  // Throws ValidationError on duplicate names, bad labels, empty source ids.
  void validate() const;
};

struct LoadReport {
  std::size_t loaded = 0;
  std::size_t skipped = 0;
  std::vector<std::filesystem::path> skipped_paths;
};

inline constexpr std::string_view kManifestName = "manifest.tsv";

// One subdirectory per class under `root`, classes indexed by sorted
// directory name, files read in sorted order. Files with an image extension
// that fail to decode are skipped and counted. If root/manifest.tsv exists,
// generated files inherit the source_id of the image they were made from.
Dataset load_dataset(const std::filesystem::path& root, LoadReport* report = nullptr);

// Bilinear resize to (out_h, out_w, 3), scaled into [0, 1].
Tensor preprocess(const Image& img, std::size_t out_h = kInputSize, std::size_t out_w = kInputSize);
// Writes the preprocessed pixels into `out` (out_h * out_w * 3 doubles).
void preprocess_into(const Image& img, std::size_t out_h, std::size_t out_w, std::span<double> out);

int coarse_label(int fine_label);
// Relabels a five-class dataset to {abnormal, benign, normal}.
Dataset to_three_class(const Dataset& five_class);

enum class SplitLevel { source, sample };
std::string_view to_string(SplitLevel level);

struct SplitSpec {
  std::array<double, 3> ratios{0.70, 0.20, 0.10};
  std::uint64_t seed = 0;
  SplitLevel level = SplitLevel::source;
};

struct Split {
  std::vector<std::size_t> train, val, test;  // sample indices, ascending
};

// Largest-remainder apportionment of n units over `ratios`; ties go to the
// earlier partition.
std::vector<std::size_t> largest_remainder(std::size_t n, std::span<const double> ratios);

Split stratified_split(const Dataset& dataset, const SplitSpec& spec);

// Class-stratified k folds; each holds ascending sample indices.
std::vector<std::vector<std::size_t>> kfold(const Dataset& dataset, std::size_t k, std::uint64_t seed,
                                            SplitLevel level = SplitLevel::sample);

Dataset subset(const Dataset& dataset, std::span<const std::size_t> indices);

// Seed mixing for independent, reproducible sub-streams.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace cervix
