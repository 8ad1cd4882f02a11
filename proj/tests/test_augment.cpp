#include <gtest/gtest.h>

#include <set>

#include "cervix/augment.hpp"
#include "cervix/errors.hpp"

using namespace cervix;

namespace {

Image noise_image(std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> px(0, 255);
  Image img(h, w);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(px(rng));
  return img;
}

// Pixel (y, x, c) = 10 * y + x + 100 * c.
Image ramp4() {
  Image img(4, 4);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = static_cast<std::uint8_t>(10 * y + x + 100 * c);
  return img;
}

bool spatially_uniform(const Image& img) {
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        if (img.at(y, x, c) != img.at(0, 0, c)) return false;
      }
  return true;
}

Dataset synthetic_dataset(const std::vector<std::size_t>& counts, std::size_t side) {
  Dataset ds;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    ds.class_names.push_back("class" + std::to_string(c));
    for (std::size_t i = 0; i < counts[c]; ++i) {
      LabeledSample s;
      s.image = std::make_shared<const Image>(noise_image(side, side, c * 1000 + i));
      s.label = static_cast<int>(c);
      s.source_id = ds.class_names.back() + "/" + std::to_string(i);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

}  // namespace

TEST(Rotate, ZeroDegreesIsIdentity) {
  const Image img = noise_image(9, 7, 1);
  EXPECT_EQ(rotate(img, 0.0), img);
  EXPECT_EQ(rotate(img, 360.0), img);
}

TEST(Rotate, HalfTurnReversesBothAxes) {
  Image img(2, 2);
  const std::uint8_t v[4] = {10, 20, 30, 40};
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.at(i / 2, i % 2, c) = v[i];
  const Image r = rotate(img, 180.0);
  EXPECT_EQ(r.at(0, 0, 0), 40);
  EXPECT_EQ(r.at(0, 1, 0), 30);
  EXPECT_EQ(r.at(1, 0, 0), 20);
  EXPECT_EQ(r.at(1, 1, 0), 10);
  const Image odd = noise_image(5, 5, 2);
  EXPECT_EQ(rotate(rotate(odd, 90.0), 270.0), odd);
}

TEST(Rotate, FortyFiveKeepsSizeAndConstantColor) {
  const Image img = noise_image(30, 20, 3);
  const Image r = rotate(img, 45.0);
  EXPECT_EQ(r.height, 30u);
  EXPECT_EQ(r.width, 20u);
  const Image solid = Image::solid(11, 13, 7, 80, 200);
  EXPECT_EQ(rotate(solid, 45.0), solid);
}

TEST(Vflip, SwapsRowsAndIsAnInvolution) {
  Image col(2, 1);
  col.at(0, 0, 0) = 1;
  col.at(1, 0, 0) = 2;
  const Image f = vflip(col);
  EXPECT_EQ(f.at(0, 0, 0), 2);
  EXPECT_EQ(f.at(1, 0, 0), 1);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Image img = noise_image(1 + s % 7, 1 + s % 5, s);
    EXPECT_EQ(vflip(vflip(img)), img);
  }
  const Image row = noise_image(1, 9, 4);
  EXPECT_EQ(vflip(row), row);
}

TEST(Zoom, UnitFactorIsIdentity) {
  const Image img = noise_image(13, 17, 5);
  EXPECT_EQ(zoom(img, 1.0), img);
  EXPECT_THROW(zoom(img, 0.5), ValidationError);
}

TEST(Zoom, FactorTwoOnFourByFourByHand) {
  // Central 2x2 crop (rows/cols 1..2), resized 2 -> 4 with half-pixel centres:
  // source coordinates -0.25, 0.25, 0.75, 1.25 clamp to 0, 0.25, 0.75, 1.
  const double pos[4] = {1.0, 1.25, 1.75, 2.0};
  const Image z = zoom(ramp4(), 2.0);
  ASSERT_EQ(z.height, 4u);
  ASSERT_EQ(z.width, 4u);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double want = 10 * pos[y] + pos[x] + 100 * c;
        EXPECT_EQ(z.at(y, x, c), static_cast<std::uint8_t>(std::lround(want))) << y << "," << x << "," << c;
      }
}

TEST(Zoom, OutputSizeAlwaysMatchesInput) {
  for (double f : {1.1, 1.2, 1.7, 3.0, 50.0}) {
    const Image z = zoom(noise_image(10, 7, 6), f);
    EXPECT_EQ(z.height, 10u);
    EXPECT_EQ(z.width, 7u);
  }
}

TEST(Elastic, ZeroAlphaIsIdentityAndConstantStaysConstant) {
  const Image img = noise_image(20, 16, 7);
  Rng rng(1);
  EXPECT_EQ(elastic(img, 0.0, 8.0, rng), img);
  const Image solid = Image::solid(20, 16, 9, 99, 199);
  for (double alpha : {1.0, 15.0, 60.0}) {
    Rng r(2);
    EXPECT_EQ(elastic(solid, alpha, 4.0, r), solid);
  }
}

TEST(Elastic, SeededAndDisplacing) {
  const Image img = noise_image(24, 24, 8);
  Rng a(42), b(42), c(43);
  const Image ea = elastic(img, 15.0, 4.0, a);
  EXPECT_EQ(ea, elastic(img, 15.0, 4.0, b));
  EXPECT_FALSE(ea == elastic(img, 15.0, 4.0, c));
  EXPECT_FALSE(ea == img);
}

TEST(Elastic, FieldIsSmoothedNoiseScaledByAlpha) {
  Rng a(3), b(3);
  const DisplacementField f1 = elastic_field(12, 10, 1.0, 2.0, a);
  const DisplacementField f5 = elastic_field(12, 10, 5.0, 2.0, b);
  ASSERT_EQ(f1.vx.size(), 120u);
  for (std::size_t i = 0; i < f1.vx.size(); ++i) {
    EXPECT_LE(std::abs(f1.vx[i]), 1.0);
    EXPECT_NEAR(f5.vx[i], 5.0 * f1.vx[i], 1e-12);
    EXPECT_NEAR(f5.vy[i], 5.0 * f1.vy[i], 1e-12);
  }
  DisplacementField zero{4, 4, std::vector<double>(16), std::vector<double>(16)};
  const Image img = noise_image(4, 4, 9);
  EXPECT_EQ(displace(img, zero), img);
}

TEST(Elastic, IntegerShiftMovesPixels) {
  const Image img = noise_image(6, 6, 10);
  DisplacementField f{6, 6, std::vector<double>(36, 1.0), std::vector<double>(36, 0.0)};
  const Image out = displace(img, f);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x + 1 < 6; ++x) EXPECT_EQ(out.at(y, x, 0), img.at(y, x + 1, 0));
}

TEST(Clahe, TwoLevelImageWithoutClippingIsPlainEqualization) {
  std::array<std::uint32_t, 256> hist{};
  hist[0] = 50;
  hist[255] = 50;
  const auto map = clahe_map(hist, 1e9);
  EXPECT_DOUBLE_EQ(map[0], 0.5);
  EXPECT_DOUBLE_EQ(map[255], 1.0);
  EXPECT_DOUBLE_EQ(map[128], 0.5);

  Image img(10, 10);
  for (std::size_t y = 0; y < 10; ++y)
    for (std::size_t x = 0; x < 10; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = x < 5 ? 0 : 255;
  const Image eq = clahe(img, 1e9, {1, 1});
  EXPECT_EQ(eq.at(0, 0, 0), 128);  // 0.5 of full scale, rounded
  EXPECT_EQ(eq.at(0, 9, 0), 255);
}

TEST(Clahe, MapIsMonotoneAndBounded) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::array<std::uint32_t, 256> hist{};
    for (int i = 0; i < 400; ++i) ++hist[rng() % 256];
    const auto map = clahe_map(hist, 1.0 + trial * 0.5);
    for (std::size_t i = 0; i < 256; ++i) {
      EXPECT_GE(map[i], 0.0);
      EXPECT_LE(map[i], 1.0 + 1e-12);
      if (i > 0) EXPECT_GE(map[i], map[i - 1]);
    }
    EXPECT_NEAR(map[255], 1.0, 1e-12);
  }
}

TEST(Clahe, UniformImagesStayUniform) {
  for (int v : {0, 1, 77, 128, 254, 255}) {
    const auto u8 = static_cast<std::uint8_t>(v);
    const Image img = Image::solid(37, 23, u8, static_cast<std::uint8_t>(255 - v), 100);
    for (ClaheGrid g : {ClaheGrid{1, 1}, ClaheGrid{8, 8}, ClaheGrid{3, 5}}) {
      EXPECT_TRUE(spatially_uniform(clahe(img, 2.0, g))) << v << " " << g.rows << "x" << g.cols;
    }
  }
}

TEST(Clahe, RejectsBadParameters) {
  const Image img = noise_image(16, 16, 1);
  EXPECT_THROW(clahe(img, 0.5, {8, 8}), ValidationError);
  EXPECT_THROW(clahe(img, 2.0, {0, 8}), ValidationError);
  EXPECT_THROW(clahe(img, 2.0, {17, 1}), ValidationError);
  EXPECT_NO_THROW(clahe(img, 2.0, {8, 8}));
}

TEST(AugmentOps, NamesRoundTrip) {
  for (AugmentOp op : kAllAugmentOps) EXPECT_EQ(parse_augment_op(to_string(op)), op);
  EXPECT_FALSE(parse_augment_op("shear").has_value());
}

TEST(ExpandDataset, TopsEveryClassUpToTarget) {
  const Dataset ds = synthetic_dataset({23, 8, 5}, 12);
  const ExpandResult r = expand_dataset(ds, 30, AugmentConfig{}, 7);
  EXPECT_EQ(r.dataset.class_counts(), (std::vector<std::size_t>{30, 30, 30}));
  ASSERT_EQ(r.generated.size(), 90u - 36u);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    EXPECT_EQ(r.dataset.samples[i].image, ds.samples[i].image);
    EXPECT_EQ(r.dataset.samples[i].source_id, ds.samples[i].source_id);
  }
  std::set<AugmentOp> used;
  for (const auto& g : r.generated) {
    const auto& made = r.dataset.samples[g.sample_index];
    const auto& src = ds.samples[g.source_index];
    EXPECT_EQ(made.label, src.label);
    EXPECT_EQ(made.source_id, src.source_id);
    EXPECT_EQ(*made.image, apply_augment(g.op, *src.image, AugmentConfig{}, g.seed));
    used.insert(g.op);
  }
  EXPECT_EQ(used.size(), 5u);
}

TEST(ExpandDataset, DeterministicAndNoOpAtTarget) {
  const Dataset ds = synthetic_dataset({4, 6}, 10);
  const ExpandResult a = expand_dataset(ds, 12, AugmentConfig{}, 3);
  const ExpandResult b = expand_dataset(ds, 12, AugmentConfig{}, 3);
  ASSERT_EQ(a.dataset.samples.size(), b.dataset.samples.size());
  for (std::size_t i = 0; i < a.dataset.samples.size(); ++i) {
    EXPECT_EQ(*a.dataset.samples[i].image, *b.dataset.samples[i].image);
  }
  const ExpandResult same = expand_dataset(ds, 6, AugmentConfig{}, 3);
  EXPECT_EQ(same.dataset.class_counts(), (std::vector<std::size_t>{6, 6}));
  EXPECT_EQ(same.generated.size(), 2u);
  const ExpandResult none = expand_dataset(ds, 4, AugmentConfig{}, 3);
  EXPECT_TRUE(none.generated.empty());
  EXPECT_EQ(none.dataset.samples.size(), ds.samples.size());
}

TEST(ExpandDataset, VflipDisabledIsNeverChosen) {
  AugmentConfig cfg;
  cfg.vflip = false;
  const ExpandResult r = expand_dataset(synthetic_dataset({2}, 8), 60, cfg, 1);
  for (const auto& g : r.generated) EXPECT_NE(g.op, AugmentOp::vflip);
}

TEST(ExpandDataset, EmptyClassIsAnError) {
  Dataset ds = synthetic_dataset({3}, 8);
  ds.class_names.push_back("empty");
  EXPECT_THROW(expand_dataset(ds, 5, AugmentConfig{}, 0), ValidationError);
}

TEST(AugmentConfig, Invariants) {
  AugmentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.zoom_factor = 0.9;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.elastic_sigma = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.clahe_clip = 0.5;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.clahe_grid = {0, 1};
  EXPECT_THROW(cfg.validate(), ValidationError);
}
