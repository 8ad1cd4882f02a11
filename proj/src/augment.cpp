#include "cervix/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cervix/errors.hpp"

namespace cervix {

void AugmentConfig::validate() const {
  if (!(zoom_factor >= 1.0)) throw ValidationError(fmt::format("zoom factor must be >= 1, got {}", zoom_factor));
  if (!(elastic_sigma > 0.0)) throw ValidationError(fmt::format("elastic sigma must be > 0, got {}", elastic_sigma));
  if (!std::isfinite(elastic_alpha)) throw ValidationError("elastic alpha must be finite");
  if (!(clahe_clip >= 1.0)) throw ValidationError(fmt::format("CLAHE clip must be >= 1, got {}", clahe_clip));
  if (clahe_grid.rows == 0 || clahe_grid.cols == 0) throw ValidationError("CLAHE grid dimensions must be >= 1");
  if (!std::isfinite(rotation_degrees)) throw ValidationError("rotation angle must be finite");
}

// ---------------------------------------------------------------------------
// Geometric operators

Image rotate(const Image& img, double degrees) {
  // Quarter turns get exact trigonometry so lattice points map onto lattice points.
  double c = 0.0, s = 0.0;
  const double turns = degrees / 90.0;
  if (turns == std::floor(turns)) {
    constexpr double kCos[4] = {1, 0, -1, 0};
    constexpr double kSin[4] = {0, 1, 0, -1};
    const auto q = static_cast<std::size_t>(((static_cast<long long>(turns) % 4) + 4) % 4);
    c = kCos[q];
    s = kSin[q];
  } else {
    const double rad = degrees * std::numbers::pi / 180.0;
    c = std::cos(rad);
    s = std::sin(rad);
  }

  Image out(img.height, img.width);
  const double cy = (static_cast<double>(img.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.width) - 1.0) / 2.0;
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      // Inverse map: the output pixel samples the input rotated back by `degrees`.
      const double dy = static_cast<double>(y) - cy;
      const double dx = static_cast<double>(x) - cx;
      const double sx = cx + c * dx - s * dy;
      const double sy = cy + s * dx + c * dy;
      for (std::size_t ch = 0; ch < Image::channels; ++ch) out.at(y, x, ch) = to_u8(sample_bilinear(img, sy, sx, ch));
    }
  }
  return out;
}

Image vflip(const Image& img) {
  Image out(img.height, img.width);
  const std::size_t row = img.width * Image::channels;
  for (std::size_t y = 0; y < img.height; ++y) {
    std::copy_n(img.data.begin() + static_cast<std::ptrdiff_t>((img.height - 1 - y) * row), row,
                out.data.begin() + static_cast<std::ptrdiff_t>(y * row));
  }
  return out;
}

Image zoom(const Image& img, double factor) {
  if (!(factor >= 1.0)) throw ValidationError(fmt::format("zoom factor must be >= 1, got {}", factor));
  if (img.empty()) return img;
  PixelRect crop;
  crop.height = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(img.height) / factor)));
  crop.width = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(static_cast<double>(img.width) / factor)));
  crop.top = (img.height - crop.height) / 2;
  crop.left = (img.width - crop.width) / 2;
  const std::vector<double> px = resize_bilinear(img, crop, img.height, img.width);
  Image out(img.height, img.width);
  std::transform(px.begin(), px.end(), out.data.begin(), to_u8);
  return out;
}

// ---------------------------------------------------------------------------
// Elastic deformation

namespace {

std::vector<double> gaussian_kernel(double sigma) {
  const auto radius = static_cast<std::ptrdiff_t>(std::max(1.0, std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (double& v : k) v /= total;
  return k;
}

// Separable Gaussian blur of a single-channel field with mirrored borders.
void blur(std::vector<double>& field, std::size_t h, std::size_t w, const std::vector<double>& k) {
  const auto radius = static_cast<std::ptrdiff_t>(k.size() / 2);
  const std::size_t taps = k.size();
  std::vector<double> tmp(field.size());
  std::vector<double> padded(w + taps - 1);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t j = 0; j < padded.size(); ++j) {
      padded[j] = field[y * w + reflect_index(static_cast<std::ptrdiff_t>(j) - radius, w)];
    }
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::size_t t = 0; t < taps; ++t) acc += k[t] * padded[x + t];
      tmp[y * w + x] = acc;
    }
  }
  // Column pass row by row: each output row accumulates whole source rows.
  for (std::size_t y = 0; y < h; ++y) {
    double* out = field.data() + y * w;
    std::fill_n(out, w, 0.0);
    for (std::size_t t = 0; t < taps; ++t) {
      const double* src = tmp.data() + reflect_index(static_cast<std::ptrdiff_t>(y + t) - radius, h) * w;
      const double kt = k[t];
      for (std::size_t x = 0; x < w; ++x) out[x] += kt * src[x];
    }
  }
}

}  // namespace

DisplacementField elastic_field(std::size_t height, std::size_t width, double alpha, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw ValidationError(fmt::format("elastic sigma must be > 0, got {}", sigma));
  DisplacementField f{height, width, std::vector<double>(height * width), std::vector<double>(height * width)};
  std::uniform_real_distribution<double> noise(-1.0, 1.0);
  for (double& v : f.vx) v = noise(rng);
  for (double& v : f.vy) v = noise(rng);
  const auto k = gaussian_kernel(sigma);
  blur(f.vx, height, width, k);
  blur(f.vy, height, width, k);
  for (double& v : f.vx) v *= alpha;
  for (double& v : f.vy) v *= alpha;
  return f;
}

Image displace(const Image& img, const DisplacementField& field) {
  if (field.height != img.height || field.width != img.width) {
    throw ShapeError(fmt::format("displacement field {}x{} does not match image {}x{}", field.height, field.width,
                                 img.height, img.width));
  }
  Image out(img.height, img.width);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const std::size_t i = y * img.width + x;
      const double sy = static_cast<double>(y) + field.vy[i];
      const double sx = static_cast<double>(x) + field.vx[i];
      for (std::size_t c = 0; c < Image::channels; ++c) out.at(y, x, c) = to_u8(sample_bilinear(img, sy, sx, c));
    }
  }
  return out;
}

Image elastic(const Image& img, double alpha, double sigma, Rng& rng) {
  if (!(sigma > 0.0)) throw ValidationError(fmt::format("elastic sigma must be > 0, got {}", sigma));
  if (img.empty()) return img;
  return displace(img, elastic_field(img.height, img.width, alpha, sigma, rng));
}

// ---------------------------------------------------------------------------
// CLAHE

std::array<double, 256> clahe_map(std::span<const std::uint32_t, 256> histogram, double clip) {
  double total = 0.0;
  for (std::uint32_t n : histogram) total += n;
  std::array<double, 256> freq{};
  if (total == 0.0) return freq;

  // Working in frequencies makes the map independent of tile pixel count.
  const double limit = clip / 256.0;
  double excess = 0.0;
  for (std::size_t i = 0; i < 256; ++i) {
    const double f = histogram[i] / total;
    freq[i] = std::min(f, limit);
    excess += f - freq[i];
  }
  const double spread = excess / 256.0;
  double cdf = 0.0;
  for (std::size_t i = 0; i < 256; ++i) {
    cdf += freq[i] + spread;
    freq[i] = std::min(cdf, 1.0);
  }
  return freq;
}

Image clahe(const Image& img, double clip, ClaheGrid grid) {
  if (!(clip >= 1.0)) throw ValidationError(fmt::format("CLAHE clip must be >= 1, got {}", clip));
  if (grid.rows == 0 || grid.cols == 0) throw ValidationError("CLAHE grid dimensions must be >= 1");
  if (grid.rows > img.height || grid.cols > img.width) {
    throw ValidationError(fmt::format("CLAHE grid {}x{} larger than image {}x{}", grid.rows, grid.cols, img.height,
                                      img.width));
  }

  auto bounds = [](std::size_t n, std::size_t parts) {
    std::vector<std::size_t> b(parts + 1);
    for (std::size_t i = 0; i <= parts; ++i) b[i] = i * n / parts;
    return b;
  };
  const auto rb = bounds(img.height, grid.rows);
  const auto cb = bounds(img.width, grid.cols);
  auto centres = [](const std::vector<std::size_t>& b) {
    std::vector<double> c(b.size() - 1);
    for (std::size_t i = 0; i + 1 < b.size(); ++i) c[i] = (static_cast<double>(b[i]) + static_cast<double>(b[i + 1]) - 1) / 2;
    return c;
  };
  const auto rc = centres(rb);
  const auto cc = centres(cb);

  // Neighbouring tile pair and blend weight along one axis.
  struct Blend {
    std::size_t lo, hi;
    double w;
  };
  auto blends = [](std::size_t n, const std::vector<double>& c) {
    std::vector<Blend> out(n);
    for (std::size_t p = 0; p < n; ++p) {
      const double v = static_cast<double>(p);
      if (v <= c.front()) {
        out[p] = {0, 0, 0.0};
      } else if (v >= c.back()) {
        out[p] = {c.size() - 1, c.size() - 1, 0.0};
      } else {
        std::size_t j = 0;
        while (c[j + 1] <= v) ++j;
        out[p] = {j, j + 1, (v - c[j]) / (c[j + 1] - c[j])};
      }
    }
    return out;
  };
  const auto by = blends(img.height, rc);
  const auto bx = blends(img.width, cc);

  Image out(img.height, img.width);
  std::vector<std::array<double, 256>> maps(grid.rows * grid.cols);
  for (std::size_t ch = 0; ch < Image::channels; ++ch) {
    for (std::size_t ty = 0; ty < grid.rows; ++ty) {
      for (std::size_t tx = 0; tx < grid.cols; ++tx) {
        std::array<std::uint32_t, 256> hist{};
        for (std::size_t y = rb[ty]; y < rb[ty + 1]; ++y) {
          for (std::size_t x = cb[tx]; x < cb[tx + 1]; ++x) ++hist[img.at(y, x, ch)];
        }
        maps[ty * grid.cols + tx] = clahe_map(hist, clip);
      }
    }
    for (std::size_t y = 0; y < img.height; ++y) {
      const Blend& wy = by[y];
      for (std::size_t x = 0; x < img.width; ++x) {
        const Blend& wx = bx[x];
        const std::uint8_t v = img.at(y, x, ch);
        const double m00 = maps[wy.lo * grid.cols + wx.lo][v], m01 = maps[wy.lo * grid.cols + wx.hi][v];
        const double m10 = maps[wy.hi * grid.cols + wx.lo][v], m11 = maps[wy.hi * grid.cols + wx.hi][v];
        const double top = m00 + wx.w * (m01 - m00);
        const double bottom = m10 + wx.w * (m11 - m10);
        out.at(y, x, ch) = to_u8(255.0 * (top + wy.w * (bottom - top)));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset expansion

std::string_view to_string(AugmentOp op) {
  switch (op) {
    case AugmentOp::rotate: return "rotate";
    case AugmentOp::vflip: return "vflip";
    case AugmentOp::zoom: return "zoom";
    case AugmentOp::elastic: return "elastic";
    case AugmentOp::clahe: return "clahe";
  }
  return "?";
}

std::optional<AugmentOp> parse_augment_op(std::string_view name) {
  for (AugmentOp op : kAllAugmentOps) {
    if (to_string(op) == name) return op;
  }
  return std::nullopt;
}

Image apply_augment(AugmentOp op, const Image& img, const AugmentConfig& cfg, std::uint64_t op_seed) {
  switch (op) {
    case AugmentOp::rotate: return rotate(img, cfg.rotation_degrees);
    case AugmentOp::vflip: return vflip(img);
    case AugmentOp::zoom: return zoom(img, cfg.zoom_factor);
    case AugmentOp::elastic: {
      Rng rng(op_seed);
      return elastic(img, cfg.elastic_alpha, cfg.elastic_sigma, rng);
    }
    case AugmentOp::clahe: return clahe(img, cfg.clahe_clip, cfg.clahe_grid);
  }
  throw ValidationError("unknown augmentation operator");
}

ExpandResult expand_dataset(const Dataset& dataset, std::size_t target_per_class, const AugmentConfig& cfg,
                            std::uint64_t seed) {
  if (target_per_class == 0) throw ValidationError("target_per_class must be >= 1");
  cfg.validate();
  dataset.validate();

  std::vector<AugmentOp> ops;
  for (AugmentOp op : kAllAugmentOps) {
    if (op != AugmentOp::vflip || cfg.vflip) ops.push_back(op);
  }

  std::vector<std::vector<std::size_t>> members(dataset.num_classes());
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    members[static_cast<std::size_t>(dataset.samples[i].label)].push_back(i);
  }
  for (std::size_t c = 0; c < members.size(); ++c) {
    if (members[c].empty()) {
      throw ValidationError(fmt::format("class '{}' has no images to augment", dataset.class_names[c]));
    }
    for (std::size_t i : members[c]) {
      if (!dataset.samples[i].image) {
        throw ValidationError(fmt::format("sample {} of class '{}' has no pixels", i, dataset.class_names[c]));
      }
    }
  }

  ExpandResult result{dataset, {}};
  for (std::size_t c = 0; c < members.size(); ++c) {
    const auto& pool = members[c];
    if (pool.size() >= target_per_class) continue;
    const std::size_t needed = target_per_class - pool.size();
    for (std::size_t i = 0; i < needed; ++i) {
      const std::uint64_t image_seed = mix_seed(seed, c, i);
      Rng pick(image_seed);
      const AugmentOp op = ops[std::uniform_int_distribution<std::size_t>(0, ops.size() - 1)(pick)];
      const std::size_t src = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(pick)];
      const std::uint64_t op_seed = mix_seed(image_seed, 1);

      const LabeledSample& source = dataset.samples[src];
      LabeledSample generated;
      generated.image = std::make_shared<const Image>(apply_augment(op, *source.image, cfg, op_seed));
      generated.label = source.label;
      generated.source_id = source.source_id;
      result.generated.push_back({result.dataset.samples.size(), src, op, op_seed});
      result.dataset.samples.push_back(std::move(generated));
    }
  }
  return result;
}

}  // namespace cervix
