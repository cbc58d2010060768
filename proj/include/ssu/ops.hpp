#ifndef SSU_OPS_HPP_
#define SSU_OPS_HPP_

#include "ssu/tensor.hpp"

namespace ssu::ops {

enum class PoolMode { kMax, kAvg };

// Elementwise. mul() also accepts a [N,1,H,W] map against [N,C,H,W]
// features (broadcast over channels, either argument).
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor affine(const Tensor& x, real scale, real shift);
Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor exp(const Tensor& x);
// Elementwise max; ties route value and gradient to the first argument.
Tensor maximum(const Tensor& a, const Tensor& b);

// Shape/structure.
Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor channel_mean(const Tensor& x);  // [N,C,H,W] -> [N,1,H,W]
Tensor channel_max(const Tensor& x);   // ties -> lowest channel

// Reductions to a scalar.
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Cross-correlation with zero padding. H' = (H + 2*padding - kh)/stride + 1.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);

// Windowed max/avg over spatial dims, no padding. window == H == W gives the
// global variant.
Tensor pool2d(const Tensor& x, PoolMode mode, int window, int stride);

// Corner-aligned bilinear interpolation.
Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w);

// Inverted dropout: survivors scaled by 1/(1-rate). stochastic=false is the
// identity. The mask consumes size() draws from rng in element order.
Tensor dropout(const Tensor& x, real rate, bool stochastic, Rng& rng);

// Depthwise convolution with a unit-sum discrete Gaussian, reflective
// padding. ksize must be odd.
Tensor gaussian_blur(const Tensor& x, int ksize, real sigma);

// Mean binary cross-entropy on probabilities; inputs clamped to
// [1e-7, 1-1e-7]. target is treated as a constant.
Tensor bce_loss(const Tensor& prob, const Tensor& target);

}  // namespace ssu::ops

#endif  // SSU_OPS_HPP_
