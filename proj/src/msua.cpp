#include "ssu/msua.hpp"

#include "ssu/ops.hpp"

namespace ssu {

Tensor msua_transform(const Tensor& logits) {
  return ops::add(ops::mul(logits, ops::sigmoid(logits)), logits);
}

Tensor msua_fuse(const Tensor& y1, const Tensor& y2_up, const Tensor& y3_up) {
  if (y1.shape() != y2_up.shape() || y1.shape() != y3_up.shape()) {
    throw UsageError("msua_fuse: scale tensors must share one shape, got " +
                     shape_str(y1.shape()) + ", " + shape_str(y2_up.shape()) +
                     ", " + shape_str(y3_up.shape()));
  }
  // maximum() resolves ties toward its first argument, so chaining in scale
  // order implements lowest-scale-wins.
  return ops::maximum(ops::maximum(msua_transform(y1), msua_transform(y2_up)),
                      msua_transform(y3_up));
}

}  // namespace ssu
