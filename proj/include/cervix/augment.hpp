#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "cervix/dataio.hpp"
#include "cervix/image.hpp"

namespace cervix {

struct ClaheGrid {
  std::size_t rows = 8;
  std::size_t cols = 8;
};

struct AugmentConfig {
  double rotation_degrees = 45.0;
  bool vflip = true;
  double zoom_factor = 1.2;
  double elastic_alpha = 15.0;  // displacement scale, pixels
  double elastic_sigma = 8.0;   // Gaussian smoothing std, pixels
  double clahe_clip = 2.0;
  ClaheGrid clahe_grid;

  void validate() const;
};

struct DisplacementField {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> vx, vy;  // row-major, pixels
};

Image rotate(const Image& img, double degrees);
Image vflip(const Image& img);
Image zoom(const Image& img, double factor);

// Uniform(-1, 1) noise per pixel and axis, Gaussian-smoothed with std sigma,
// scaled by alpha. Draws vx first, then vy, row-major.
DisplacementField elastic_field(std::size_t height, std::size_t width, double alpha, double sigma, Rng& rng);
// out(x, y) = img(x + vx, y + vy), bilinear with reflective borders.
Image displace(const Image& img, const DisplacementField& field);
Image elastic(const Image& img, double alpha, double sigma, Rng& rng);

// Clipped equalization map for one tile: histogram frequencies are clipped
// at clip/256, the excess is spread over all bins, and T(i) is the
// cumulative frequency through bin i, in [0, 1].
std::array<double, 256> clahe_map(std::span<const std::uint32_t, 256> histogram, double clip);
Image clahe(const Image& img, double clip, ClaheGrid grid);

enum class AugmentOp { rotate, vflip, zoom, elastic, clahe };
inline constexpr std::array<AugmentOp, 5> kAllAugmentOps = {AugmentOp::rotate, AugmentOp::vflip, AugmentOp::zoom,
                                                            AugmentOp::elastic, AugmentOp::clahe};
std::string_view to_string(AugmentOp op);
std::optional<AugmentOp> parse_augment_op(std::string_view name);

// Applies one operator with the configured parameters. Only elastic
// consumes randomness; it draws from a generator seeded with `op_seed`.
Image apply_augment(AugmentOp op, const Image& img, const AugmentConfig& cfg, std::uint64_t op_seed);

struct GeneratedRecord {
  std::size_t sample_index = 0;  // position in the expanded dataset
  std::size_t source_index = 0;  // position of the source in the input dataset
  AugmentOp op = AugmentOp::rotate;
  std::uint64_t seed = 0;  // op_seed passed to apply_augment
};

struct ExpandResult {
  Dataset dataset;  // originals first, in input order, then generated images
  std::vector<GeneratedRecord> generated;
};

// Tops every class up to `target_per_class` with single-operator augments of
// uniformly drawn same-class originals. Classes already at or above the
// target pass through. Fully determined by `seed`.
ExpandResult expand_dataset(const Dataset& dataset, std::size_t target_per_class, const AugmentConfig& cfg,
                            std::uint64_t seed);

}  // namespace cervix
