#ifndef SSU_PIPELINE_HPP_
#define SSU_PIPELINE_HPP_

#include <vector>

#include "ssu/backbone.hpp"
#include "ssu/tensor.hpp"
#include "ssu/uncertainty.hpp"

namespace ssu {

// Full two-model MC inference on one image.
struct PredictResult {
  Tensor mean_prob;         // final prediction: mean of n_passes sigmoid(yF)
  Tensor ue_pred;           // predictive epistemic map (population variance)
  UncertaintyMaps s1_maps;  // stage-1 mean-centered maps fed to GSUA
};

PredictResult predict_image(const ModelParams& stage1, const ModelParams& stage2,
                            const Tensor& image, int n_passes, const Rng& rng);

}  // namespace ssu

#endif  // SSU_PIPELINE_HPP_
