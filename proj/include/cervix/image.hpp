#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace cervix {

/// 8-bit RGB image, rows top to bottom, channels interleaved.
struct Image {
  static constexpr std::size_t channels = 3;

  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), data(h * w * channels, fill) {}

  static Image solid(std::size_t h, std::size_t w, std::uint8_t r, std::uint8_t g, std::uint8_t b);

  std::size_t index(std::size_t y, std::size_t x, std::size_t c) const { return (y * width + x) * channels + c; }
  std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) { return data[index(y, x, c)]; }
  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const { return data[index(y, x, c)]; }
  bool empty() const { return height == 0 || width == 0; }

  friend bool operator==(const Image&, const Image&) = default;
};

struct PixelRect {
  std::size_t top = 0;
  std::size_t left = 0;
  std::size_t height = 0;
  std::size_t width = 0;
};

// Mirror a pixel-centre coordinate into [0, n-1] (period 2(n-1), no edge repeat).
double reflect_coord(double x, std::size_t n);
std::size_t reflect_index(std::ptrdiff_t i, std::size_t n);

// Bilinear sample of channel c at continuous (y, x), reflecting out-of-range
// coordinates. Integer coordinates return the stored value exactly.
double sample_bilinear(const Image& img, double y, double x, std::size_t c);

// Half-pixel-centre bilinear resize of `crop` to out_h x out_w. Values stay
// in [0, 255], HWC order. Equal sizes reproduce the crop exactly.
std::vector<double> resize_bilinear(const Image& img, const PixelRect& crop, std::size_t out_h, std::size_t out_w);

// Round half away from zero, clamped to [0, 255].
std::uint8_t to_u8(double v);

// Decodes PNG/JPEG/BMP/TIFF. Grayscale sources are replicated to RGB and
// alpha is dropped. Returns nullopt if the file cannot be decoded.
std::optional<Image> read_image(const std::filesystem::path& path);
// Encodes by extension (use .png for lossless), written atomically.
void write_image(const std::filesystem::path& path, const Image& img);

}  // namespace cervix
