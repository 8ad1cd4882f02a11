#pragma once

// The differentiable kernels used by the classifier. Layout is NHWC,
// padding is always "valid", and every kernel is a pure function: whatever
// the backward pass needs (pool switches, relu masks) is returned to the
// caller rather than stored.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cervix/tensor.hpp"

namespace cervix {

struct Window2 {
  std::size_t rows = 2;
  std::size_t cols = 2;
  friend bool operator==(const Window2&, const Window2&) = default;
};

using Stride2 = Window2;

// floor((in - k) / s) + 1, or 0 when the window does not fit.
constexpr std::size_t valid_out_dim(std::size_t in, std::size_t k, std::size_t s) {
  return in < k ? 0 : (in - k) / s + 1;
}

struct ConvParams {
  Tensor kernels;  // (kh, kw, in_channels, out_channels)
  Tensor bias;     // (out_channels)
  Stride2 stride{2, 2};
};

struct ConvGrads {
  Tensor d_input;
  Tensor d_kernels;
  Tensor d_bias;
};

Shape conv2d_output_shape(const Shape& input, const Tensor& kernels, const Tensor& bias, Stride2 stride);
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, Stride2 stride);
// With want_input_grad = false, d_input is returned zero-filled; the model
// uses this for the first layer whose input is the image itself.
ConvGrads conv2d_grad(const Tensor& input, const Tensor& kernels, const Tensor& bias, Stride2 stride,
                      const Tensor& upstream, bool want_input_grad = true);

inline Shape conv2d_output_shape(const Shape& input, const ConvParams& p) {
  return conv2d_output_shape(input, p.kernels, p.bias, p.stride);
}
inline Tensor conv2d(const Tensor& input, const ConvParams& p) {
  return conv2d(input, p.kernels, p.bias, p.stride);
}
inline ConvGrads conv2d_grad(const Tensor& input, const ConvParams& p, const Tensor& upstream,
                             bool want_input_grad = true) {
  return conv2d_grad(input, p.kernels, p.bias, p.stride, upstream, want_input_grad);
}

struct PoolSwitches {
  std::vector<std::size_t> indices;  // flat input offset of each output's maximum
  Shape input_shape;
  Shape output_shape;
};

struct PoolResult {
  Tensor output;
  PoolSwitches switches;
};

PoolResult maxpool2d(const Tensor& input, Window2 window = {2, 2}, Stride2 stride = {2, 2});
Tensor maxpool2d_grad(const PoolSwitches& switches, const Tensor& upstream);

struct DenseGrads {
  Tensor d_input;
  Tensor d_weights;
  Tensor d_bias;
};

Tensor dense(const Tensor& input, const Tensor& weights, const Tensor& bias);
DenseGrads dense_grad(const Tensor& input, const Tensor& weights, const Tensor& upstream);

struct ReluResult {
  Tensor output;
  std::vector<std::uint8_t> mask;  // 1 where input > 0
};

ReluResult relu(const Tensor& input);
Tensor relu_grad(std::span<const std::uint8_t> mask, const Tensor& upstream);

struct LossResult {
  double loss = 0.0;
  Tensor d_logits;
};

// Row-wise softmax of a (batch, classes) tensor, max-subtracted.
Tensor softmax(const Tensor& logits);

// Mean sparse categorical cross-entropy over the batch, fused with its
// gradient (p - onehot) / batch.
LossResult softmax_xent(const Tensor& logits, std::span<const int> labels);

}  // namespace cervix
