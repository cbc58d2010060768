#include "ssu/pipeline.hpp"

#include "ssu/ops.hpp"

namespace ssu {

PredictResult predict_image(const ModelParams& stage1, const ModelParams& stage2,
                            const Tensor& image, int n_passes, const Rng& rng) {
  if (n_passes < 1) throw UsageError("predict: n_passes must be >= 1");
  NoGradGuard no_grad;

  McSamples s1 = mc_sample(stage1, image, n_passes, rng.split("s1"));
  UncertaintyMaps maps =
      spatial_uncertainty(s1, Tensor(), UncertaintyMode::kMeanCentered);

  std::vector<Tensor> finals;
  finals.reserve(static_cast<size_t>(n_passes));
  Rng s2_rng = rng.split("s2");
  for (int i = 0; i < n_passes; ++i) {
    Rng pass_rng = s2_rng.split(static_cast<std::uint64_t>(i));
    PredictionBundle bundle =
        forward(stage2, image, &maps, /*stochastic=*/true, pass_rng);
    finals.push_back(ops::sigmoid(bundle.yF));
  }
  auto [mean, var] = predictive_summary(finals);

  PredictResult result;
  result.mean_prob = mean;
  result.ue_pred = var;
  result.s1_maps = maps;
  return result;
}

}  // namespace ssu
