#include "cervix/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "cervix/errors.hpp"
#include "cervix/fileio.hpp"

namespace cervix {

Image Image::solid(std::size_t h, std::size_t w, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  Image img(h, w);
  for (std::size_t i = 0; i < h * w; ++i) {
    img.data[3 * i] = r;
    img.data[3 * i + 1] = g;
    img.data[3 * i + 2] = b;
  }
  return img;
}

double reflect_coord(double x, std::size_t n) {
  if (n <= 1) return 0.0;
  const double last = static_cast<double>(n - 1);
  if (x >= 0.0 && x <= last) return x;
  const double period = 2.0 * last;
  double r = std::fmod(std::fabs(x), period);
  if (r > last) r = period - r;
  return r;
}

std::size_t reflect_index(std::ptrdiff_t i, std::size_t n) {
  if (n <= 1) return 0;
  const auto last = static_cast<std::ptrdiff_t>(n - 1);
  if (i >= 0 && i <= last) return static_cast<std::size_t>(i);
  const std::ptrdiff_t period = 2 * last;
  std::ptrdiff_t r = (i < 0 ? -i : i) % period;
  if (r > last) r = period - r;
  return static_cast<std::size_t>(r);
}

double sample_bilinear(const Image& img, double y, double x, std::size_t c) {
  y = reflect_coord(y, img.height);
  x = reflect_coord(x, img.width);
  const auto y0 = static_cast<std::size_t>(y);
  const auto x0 = static_cast<std::size_t>(x);
  const std::size_t y1 = std::min(y0 + 1, img.height - 1);
  const std::size_t x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - static_cast<double>(y0);
  const double fx = x - static_cast<double>(x0);
  const double p00 = img.at(y0, x0, c), p01 = img.at(y0, x1, c);
  const double p10 = img.at(y1, x0, c), p11 = img.at(y1, x1, c);
  const double top = p00 + fx * (p01 - p00);
  const double bottom = p10 + fx * (p11 - p10);
  return top + fy * (bottom - top);
}

std::vector<double> resize_bilinear(const Image& img, const PixelRect& crop, std::size_t out_h, std::size_t out_w) {
  if (crop.height == 0 || crop.width == 0 || crop.top + crop.height > img.height ||
      crop.left + crop.width > img.width || out_h == 0 || out_w == 0) {
    throw ValidationError(fmt::format("resize: crop {}x{}+{}+{} invalid for {}x{} image -> {}x{}", crop.height,
                                      crop.width, crop.top, crop.left, img.height, img.width, out_h, out_w));
  }
  struct Tap {
    std::size_t lo, hi;
    double frac;
  };
  auto taps = [](std::size_t out, std::size_t in, std::size_t offset) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    const double last = static_cast<double>(in - 1);
    for (std::size_t d = 0; d < out; ++d) {
      const double s = std::clamp((static_cast<double>(d) + 0.5) * scale - 0.5, 0.0, last);
      const auto lo = static_cast<std::size_t>(s);
      t[d] = {offset + lo, offset + std::min(lo + 1, in - 1), s - static_cast<double>(lo)};
    }
    return t;
  };
  const auto rows = taps(out_h, crop.height, crop.top);
  const auto cols = taps(out_w, crop.width, crop.left);

  std::vector<double> out(out_h * out_w * Image::channels);
  for (std::size_t y = 0; y < out_h; ++y) {
    const Tap& ty = rows[y];
    for (std::size_t x = 0; x < out_w; ++x) {
      const Tap& tx = cols[x];
      for (std::size_t c = 0; c < Image::channels; ++c) {
        const double p00 = img.at(ty.lo, tx.lo, c), p01 = img.at(ty.lo, tx.hi, c);
        const double p10 = img.at(ty.hi, tx.lo, c), p11 = img.at(ty.hi, tx.hi, c);
        const double top = p00 + tx.frac * (p01 - p00);
        const double bottom = p10 + tx.frac * (p11 - p10);
        out[(y * out_w + x) * Image::channels + c] = top + ty.frac * (bottom - top);
      }
    }
  }
  return out;
}

std::uint8_t to_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::round(v), 0.0, 255.0));
}

std::optional<Image> read_image(const std::filesystem::path& path) {
  cv::Mat m;
  try {
    m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  } catch (const cv::Exception&) {
    return std::nullopt;
  }
  if (m.empty() || m.dims != 2) return std::nullopt;
  if (m.depth() != CV_8U) {
    // 16-bit sources are scaled to 8 bits.
    cv::Mat converted;
    m.convertTo(converted, CV_8U, m.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
    m = converted;
  }
  const int ch = m.channels();
  if (ch != 1 && ch != 3 && ch != 4) return std::nullopt;

  Image img(static_cast<std::size_t>(m.rows), static_cast<std::size_t>(m.cols));
  for (int y = 0; y < m.rows; ++y) {
    const std::uint8_t* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      const std::uint8_t* px = row + x * ch;
      std::uint8_t* dst = &img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), 0);
      if (ch == 1) {
        dst[0] = dst[1] = dst[2] = px[0];
      } else {  // OpenCV stores BGR(A)
        dst[0] = px[2];
        dst[1] = px[1];
        dst[2] = px[0];
      }
    }
  }
  return img;
}

void write_image(const std::filesystem::path& path, const Image& img) {
  if (img.empty()) throw ValidationError("cannot write an empty image");
  cv::Mat m(static_cast<int>(img.height), static_cast<int>(img.width), CV_8UC3);
  for (std::size_t y = 0; y < img.height; ++y) {
    std::uint8_t* row = m.ptr<std::uint8_t>(static_cast<int>(y));
    for (std::size_t x = 0; x < img.width; ++x) {
      row[3 * x] = img.at(y, x, 2);
      row[3 * x + 1] = img.at(y, x, 1);
      row[3 * x + 2] = img.at(y, x, 0);
    }
  }
  std::vector<std::uint8_t> encoded;
  const std::string ext = path.extension().string().empty() ? ".png" : path.extension().string();
  if (!cv::imencode(ext, m, encoded)) {
    throw std::runtime_error(fmt::format("cannot encode {} as {}", path.string(), ext));
  }
  write_file_atomic(path, encoded);
}

}  // namespace cervix
