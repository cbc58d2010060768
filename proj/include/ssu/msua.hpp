#ifndef SSU_MSUA_HPP_
#define SSU_MSUA_HPP_

#include "ssu/tensor.hpp"

namespace ssu {

// Confidence-weighted transform applied to each scale: t(y) = y*sigmoid(y) + y.
Tensor msua_transform(const Tensor& logits);

// Multi-scale fusion: per-pixel max of the transformed logits. All inputs
// must share one shape (side outputs upsampled beforehand). Ties route the
// value and gradient to the lowest scale index.
Tensor msua_fuse(const Tensor& y1, const Tensor& y2_up, const Tensor& y3_up);

}  // namespace ssu

#endif  // SSU_MSUA_HPP_
