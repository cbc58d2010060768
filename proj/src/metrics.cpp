#include "ssu/metrics.hpp"

#include <cstdint>

namespace ssu {

Tensor binarize(const Tensor& prob, real threshold) {
  if (!(threshold > real(0) && threshold < real(1))) {
    throw UsageError("binarize: threshold must be in (0,1)");
  }
  std::vector<real> out(static_cast<size_t>(prob.size()));
  const real* p = prob.data();
  for (std::int64_t i = 0; i < prob.size(); ++i) {
    out[static_cast<size_t>(i)] = p[i] >= threshold ? real(1) : real(0);
  }
  return Tensor::from_data(prob.shape(), std::move(out));
}

namespace {

struct Counts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

Counts count(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw UsageError("metrics: mask shape mismatch " + shape_str(pred.shape()) +
                     " vs " + shape_str(gt.shape()));
  }
  Counts c;
  const real* p = pred.data();
  const real* g = gt.data();
  for (std::int64_t i = 0; i < pred.size(); ++i) {
    if (p[i] != real(0) && p[i] != real(1)) {
      throw UsageError("metrics: prediction mask is not binary");
    }
    if (g[i] != real(0) && g[i] != real(1)) {
      throw UsageError("metrics: ground-truth mask is not binary");
    }
    bool pp = p[i] == real(1), gg = g[i] == real(1);
    if (pp && gg) ++c.tp;
    else if (pp) ++c.fp;
    else if (gg) ++c.fn;
    else ++c.tn;
  }
  return c;
}

}  // namespace

double dice(const Tensor& pred, const Tensor& gt) {
  Counts c = count(pred, gt);
  std::int64_t denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;  // both masks empty
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

double miou(const Tensor& pred, const Tensor& gt) {
  Counts c = count(pred, gt);
  std::int64_t fg_union = c.tp + c.fp + c.fn;
  std::int64_t bg_union = c.tn + c.fp + c.fn;
  double fg = fg_union == 0 ? 1.0
                            : static_cast<double>(c.tp) / static_cast<double>(fg_union);
  double bg = bg_union == 0 ? 1.0
                            : static_cast<double>(c.tn) / static_cast<double>(bg_union);
  return 0.5 * (fg + bg);
}

double macc(const Tensor& pred, const Tensor& gt) {
  Counts c = count(pred, gt);
  std::int64_t fg_total = c.tp + c.fn;
  std::int64_t bg_total = c.tn + c.fp;
  double fg = fg_total == 0 ? 1.0
                            : static_cast<double>(c.tp) / static_cast<double>(fg_total);
  double bg = bg_total == 0 ? 1.0
                            : static_cast<double>(c.tn) / static_cast<double>(bg_total);
  return 0.5 * (fg + bg);
}

}  // namespace ssu
