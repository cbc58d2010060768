#ifndef SSU_GSUA_HPP_
#define SSU_GSUA_HPP_

#include "ssu/tensor.hpp"
#include "ssu/uncertainty.hpp"

namespace ssu {

// Gated soft uncertainty-aware attention. The pooled uncertainty descriptors
// go through a 1x1 conv, a relu gate and a sigmoid, are softened with a
// unit-sum Gaussian and resized to the feature resolution, then modulate the
// features residually: out = x * a + x.
struct GsuaParams {
  Tensor conv_weight;  // [1,2,1,1]: (avg, max) descriptor channels -> 1
  Tensor conv_bias;    // [1]
  int gaussian_ksize = 5;
  real gaussian_sigma = real(1);
};

// x: [N,c,h,w] features; u at the input resolution [N,1,H,W] per map.
// Attention values lie in [0.5, 1).
Tensor gsua_forward(const Tensor& x, const UncertaintyMaps& u,
                    const GsuaParams& params, Tensor* attention_out = nullptr);

}  // namespace ssu

#endif  // SSU_GSUA_HPP_
