#ifndef SSU_METRICS_HPP_
#define SSU_METRICS_HPP_

#include "ssu/tensor.hpp"

namespace ssu {

// 1 where prob >= threshold. threshold must lie in (0,1).
Tensor binarize(const Tensor& prob, real threshold = real(0.5));

// Overlap metrics on binary masks. Empty-set conventions: two empty masks
// have dice 1; an empty class contributes IoU/recall 1.
double dice(const Tensor& pred, const Tensor& gt);
double miou(const Tensor& pred, const Tensor& gt);
double macc(const Tensor& pred, const Tensor& gt);

struct MetricReport {
  double dice = 0;
  double miou = 0;
  double macc = 0;
  int n_images = 0;
  double threshold = 0.5;
};

}  // namespace ssu

#endif  // SSU_METRICS_HPP_
