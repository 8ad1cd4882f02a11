#include "cervix/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "cervix/errors.hpp"

namespace cervix {

namespace {

struct Nhwc {
  std::size_t n, h, w, c;
};

Nhwc as_nhwc(const Shape& s, const char* what) {
  if (s.size() != 4) {
    throw ShapeError(fmt::format("{}: expected NHWC rank-4 tensor, got {}", what, shape_str(s)));
  }
  return {s[0], s[1], s[2], s[3]};
}

void require_same(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw ShapeError(fmt::format("{}: expected shape {}, got {}", what, shape_str(want), shape_str(got)));
  }
}

}  // namespace

Shape conv2d_output_shape(const Shape& input, const Tensor& kernels, const Tensor& bias, Stride2 stride) {
  const auto in = as_nhwc(input, "conv2d input");
  const Shape& ks = kernels.shape();
  if (ks.size() != 4) {
    throw ShapeError(fmt::format("conv2d kernels must be (kh,kw,cin,cout), got {}", shape_str(ks)));
  }
  if (bias.shape() != Shape{ks[3]}) {
    throw ShapeError(fmt::format("conv2d bias {} does not match {} output channels", shape_str(bias.shape()), ks[3]));
  }
  if (stride.rows == 0 || stride.cols == 0) {
    throw ShapeError("conv2d stride must be positive");
  }
  if (in.c != ks[2]) {
    throw ShapeError(fmt::format("conv2d channel mismatch: input has {}, kernels expect {}", in.c, ks[2]));
  }
  const std::size_t oh = valid_out_dim(in.h, ks[0], stride.rows);
  const std::size_t ow = valid_out_dim(in.w, ks[1], stride.cols);
  if (oh == 0 || ow == 0) {
    throw ShapeError(fmt::format("conv2d window {}x{} larger than input {}x{}", ks[0], ks[1], in.h, in.w));
  }
  return {in.n, oh, ow, ks[3]};
}

Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Stride2 stride) {
  const Shape out_shape = conv2d_output_shape(input.shape(), kernels, bias, stride);
  const auto in = as_nhwc(input.shape(), "conv2d input");
  const std::size_t kh = kernels.dim(0), kw = kernels.dim(1);
  const std::size_t oh = out_shape[1], ow = out_shape[2], nf = out_shape[3];
  const std::size_t sh = stride.rows, sw = stride.cols;

  Tensor out(out_shape);
  const double* x = input.raw();
  const double* k = kernels.raw();
  const double* b = bias.raw();
  double* y = out.raw();

  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double* o = y + ((n * oh + oy) * ow + ox) * nf;
        std::copy(b, b + nf, o);
        for (std::size_t dy = 0; dy < kh; ++dy) {
          for (std::size_t dx = 0; dx < kw; ++dx) {
            const double* px = x + ((n * in.h + oy * sh + dy) * in.w + ox * sw + dx) * in.c;
            const double* kt = k + (dy * kw + dx) * in.c * nf;
            for (std::size_t c = 0; c < in.c; ++c) {
              const double v = px[c];
              const double* kr = kt + c * nf;
              for (std::size_t f = 0; f < nf; ++f) o[f] += v * kr[f];
            }
          }
        }
      }
    }
  }
  return out;
}

ConvGrads conv2d_grad(const Tensor& input, const Tensor& kernels, const Tensor& bias, Stride2 stride,
                      const Tensor& upstream, bool want_input_grad) {
  const Shape out_shape = conv2d_output_shape(input.shape(), kernels, bias, stride);
  require_same(upstream.shape(), out_shape, "conv2d_grad upstream");
  const auto in = as_nhwc(input.shape(), "conv2d input");
  const std::size_t kh = kernels.dim(0), kw = kernels.dim(1);
  const std::size_t oh = out_shape[1], ow = out_shape[2], nf = out_shape[3];
  const std::size_t sh = stride.rows, sw = stride.cols;

  ConvGrads g{Tensor(input.shape()), Tensor(kernels.shape()), Tensor(bias.shape())};
  const double* x = input.raw();
  const double* k = kernels.raw();
  const double* u = upstream.raw();
  double* dx_ = g.d_input.raw();
  double* dk = g.d_kernels.raw();
  double* db = g.d_bias.raw();

  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const double* up = u + ((n * oh + oy) * ow + ox) * nf;
        for (std::size_t f = 0; f < nf; ++f) db[f] += up[f];
        for (std::size_t dy = 0; dy < kh; ++dy) {
          for (std::size_t dx = 0; dx < kw; ++dx) {
            const std::size_t at = ((n * in.h + oy * sh + dy) * in.w + ox * sw + dx) * in.c;
            const double* px = x + at;
            const std::size_t tap = (dy * kw + dx) * in.c * nf;
            for (std::size_t c = 0; c < in.c; ++c) {
              const double v = px[c];
              double* dkr = dk + tap + c * nf;
              for (std::size_t f = 0; f < nf; ++f) dkr[f] += v * up[f];
            }
            if (want_input_grad) {
              for (std::size_t c = 0; c < in.c; ++c) {
                const double* kr = k + tap + c * nf;
                double acc = 0.0;
#pragma omp simd reduction(+ : acc)
                for (std::size_t f = 0; f < nf; ++f) acc += kr[f] * up[f];
                dx_[at + c] += acc;
              }
            }
          }
        }
      }
    }
  }
  return g;
}

PoolResult maxpool2d(const Tensor& input, Window2 window, Stride2 stride) {
  const auto in = as_nhwc(input.shape(), "maxpool2d input");
  if (window.rows == 0 || window.cols == 0 || stride.rows == 0 || stride.cols == 0) {
    throw ShapeError("maxpool2d window and stride must be positive");
  }
  const std::size_t oh = valid_out_dim(in.h, window.rows, stride.rows);
  const std::size_t ow = valid_out_dim(in.w, window.cols, stride.cols);
  if (oh == 0 || ow == 0) {
    throw ShapeError(fmt::format("maxpool2d window {}x{} larger than input {}x{}", window.rows, window.cols,
                                 in.h, in.w));
  }
  PoolResult r{Tensor({in.n, oh, ow, in.c}), {}};
  r.switches.input_shape = input.shape();
  r.switches.output_shape = r.output.shape();
  r.switches.indices.resize(r.output.size());

  const double* x = input.raw();
  double* y = r.output.raw();
  std::size_t* sw = r.switches.indices.data();
  for (std::size_t n = 0; n < in.n; ++n) {
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        const std::size_t o = ((n * oh + oy) * ow + ox) * in.c;
        for (std::size_t c = 0; c < in.c; ++c) {
          std::size_t best = ((n * in.h + oy * stride.rows) * in.w + ox * stride.cols) * in.c + c;
          // Row-major scan with strict '>' keeps the first maximum on ties.
          for (std::size_t dy = 0; dy < window.rows; ++dy) {
            for (std::size_t dx = 0; dx < window.cols; ++dx) {
              const std::size_t i =
                  ((n * in.h + oy * stride.rows + dy) * in.w + ox * stride.cols + dx) * in.c + c;
              if (x[i] > x[best]) best = i;
            }
          }
          y[o + c] = x[best];
          sw[o + c] = best;
        }
      }
    }
  }
  return r;
}

Tensor maxpool2d_grad(const PoolSwitches& switches, const Tensor& upstream) {
  require_same(upstream.shape(), switches.output_shape, "maxpool2d_grad upstream");
  if (switches.indices.size() != upstream.size()) {
    throw ShapeError("maxpool2d_grad: switch count does not match upstream");
  }
  Tensor d(switches.input_shape);
  for (std::size_t i = 0; i < upstream.size(); ++i) d[switches.indices[i]] += upstream[i];
  return d;
}

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || bias.rank() != 1) {
    throw ShapeError(fmt::format("dense expects (batch,in),(in,out),(out); got {},{},{}", shape_str(input.shape()),
                                 shape_str(weights.shape()), shape_str(bias.shape())));
  }
  const std::size_t batch = input.dim(0), nin = input.dim(1), nout = weights.dim(1);
  if (weights.dim(0) != nin || bias.dim(0) != nout) {
    throw ShapeError(fmt::format("dense dimension mismatch: input {}, weights {}, bias {}", shape_str(input.shape()),
                                 shape_str(weights.shape()), shape_str(bias.shape())));
  }
  Tensor out({batch, nout});
  const double* x = input.raw();
  const double* w = weights.raw();
  double* y = out.raw();
  for (std::size_t n = 0; n < batch; ++n) {
    double* o = y + n * nout;
    std::copy(bias.raw(), bias.raw() + nout, o);
    for (std::size_t i = 0; i < nin; ++i) {
      const double v = x[n * nin + i];
      const double* wr = w + i * nout;
      for (std::size_t j = 0; j < nout; ++j) o[j] += v * wr[j];
    }
  }
  return out;
}

DenseGrads dense_grad(const Tensor& input, const Tensor& weights, const Tensor& upstream) {
  if (input.rank() != 2 || weights.rank() != 2 || upstream.rank() != 2) {
    throw ShapeError("dense_grad expects rank-2 input, weights and upstream");
  }
  const std::size_t batch = input.dim(0), nin = input.dim(1), nout = weights.dim(1);
  if (weights.dim(0) != nin) {
    throw ShapeError(fmt::format("dense_grad: input width {} vs weights {}", nin, shape_str(weights.shape())));
  }
  require_same(upstream.shape(), Shape{batch, nout}, "dense_grad upstream");

  DenseGrads g{Tensor(input.shape()), Tensor(weights.shape()), Tensor({nout})};
  const double* x = input.raw();
  const double* w = weights.raw();
  const double* u = upstream.raw();
  for (std::size_t n = 0; n < batch; ++n) {
    const double* up = u + n * nout;
    for (std::size_t j = 0; j < nout; ++j) g.d_bias[j] += up[j];
    for (std::size_t i = 0; i < nin; ++i) {
      const double v = x[n * nin + i];
      double* dwr = g.d_weights.raw() + i * nout;
      const double* wr = w + i * nout;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t j = 0; j < nout; ++j) {
        dwr[j] += v * up[j];
        acc += wr[j] * up[j];
      }
      g.d_input[n * nin + i] = acc;
    }
  }
  return g;
}

ReluResult relu(const Tensor& input) {
  ReluResult r{Tensor(input.shape()), std::vector<std::uint8_t>(input.size())};
  for (std::size_t i = 0; i < input.size(); ++i) {
    const bool on = input[i] > 0.0;
    r.mask[i] = on;
    r.output[i] = on ? input[i] : 0.0;
  }
  return r;
}

Tensor relu_grad(std::span<const std::uint8_t> mask, const Tensor& upstream) {
  if (mask.size() != upstream.size()) {
    throw ShapeError(fmt::format("relu_grad: mask of {} for upstream of {}", mask.size(), upstream.size()));
  }
  Tensor d(upstream.shape());
  for (std::size_t i = 0; i < upstream.size(); ++i) d[i] = mask[i] ? upstream[i] : 0.0;
  return d;
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() != 2) {
    throw ShapeError(fmt::format("softmax expects (batch, classes), got {}", shape_str(logits.shape())));
  }
  const std::size_t batch = logits.dim(0), nc = logits.dim(1);
  Tensor p(logits.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    const double* z = logits.raw() + n * nc;
    double* q = p.raw() + n * nc;
    const double zmax = *std::max_element(z, z + nc);
    double total = 0.0;
    for (std::size_t c = 0; c < nc; ++c) total += q[c] = std::exp(z[c] - zmax);
    for (std::size_t c = 0; c < nc; ++c) q[c] /= total;
  }
  return p;
}

LossResult softmax_xent(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) {
    throw ShapeError(fmt::format("softmax_xent expects (batch, classes), got {}", shape_str(logits.shape())));
  }
  const std::size_t batch = logits.dim(0), nc = logits.dim(1);
  if (labels.size() != batch) {
    throw ValidationError(fmt::format("softmax_xent: {} labels for batch of {}", labels.size(), batch));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= nc) {
      throw ValidationError(fmt::format("label {} outside [0, {})", y, nc));
    }
  }

  LossResult r{0.0, Tensor(logits.shape())};
  const double inv_batch = 1.0 / static_cast<double>(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* z = logits.raw() + n * nc;
    double* d = r.d_logits.raw() + n * nc;
    const double zmax = *std::max_element(z, z + nc);
    double total = 0.0;
    for (std::size_t c = 0; c < nc; ++c) total += std::exp(z[c] - zmax);
    const double log_total = std::log(total);
    const auto y = static_cast<std::size_t>(labels[n]);
    // -log p_y = log Σ exp(z - zmax) - (z_y - zmax); never negative
    r.loss += std::max(0.0, log_total - (z[y] - zmax));
    for (std::size_t c = 0; c < nc; ++c) {
      const double prob = std::exp(z[c] - zmax - log_total);
      d[c] = (prob - (c == y ? 1.0 : 0.0)) * inv_batch;
    }
  }
  r.loss *= inv_batch;
  return r;
}

}  // namespace cervix
