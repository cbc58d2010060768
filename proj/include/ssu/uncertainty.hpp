#ifndef SSU_UNCERTAINTY_HPP_
#define SSU_UNCERTAINTY_HPP_

#include <vector>

#include "ssu/tensor.hpp"

namespace ssu {

struct ModelParams;

// Per-pixel epistemic/aleatoric maps at input resolution, both nonnegative.
struct UncertaintyMaps {
  Tensor u_e;  // [N,1,H,W]
  Tensor u_a;  // [N,1,H,W]

  bool defined() const { return u_e.defined() && u_a.defined(); }
  // [N,2,H,W], channel order (aleatoric, epistemic).
  Tensor packed() const;
};

// Outputs of N stochastic passes of the stage-1 net: probability maps
// (sigmoid of the full-resolution logit) and variance maps (exp of the
// log-variance head).
struct McSamples {
  std::vector<Tensor> probs;
  std::vector<Tensor> vars;
};

enum class UncertaintyMode {
  kGtCentered,    // training: squared error against the ground-truth mask
  kMeanCentered,  // inference: variance around the sample mean
};

// Runs n stochastic forward passes; pass i consumes rng substream i.
McSamples mc_sample(const ModelParams& params, const Tensor& image, int n,
                    const Rng& rng);

// u_e = (1/N) sum (p_i - y)^2 with y the reference mask (gt-centered) or the
// sample mean (mean-centered); u_a = (1/N) sum v_i. Accumulated in double via
// the variance decomposition so gt-centered >= mean-centered holds exactly.
UncertaintyMaps spatial_uncertainty(const McSamples& samples,
                                    const Tensor& reference,
                                    UncertaintyMode mode);

// Elementwise sigmoid confidence of a logit map.
Tensor scale_uncertainty(const Tensor& logits);

// Mean and population variance of final-prediction probability maps.
std::pair<Tensor, Tensor> predictive_summary(const std::vector<Tensor>& final_probs);

}  // namespace ssu

#endif  // SSU_UNCERTAINTY_HPP_
