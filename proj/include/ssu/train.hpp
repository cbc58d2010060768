#ifndef SSU_TRAIN_HPP_
#define SSU_TRAIN_HPP_

#include <iosfwd>
#include <vector>

#include "ssu/backbone.hpp"
#include "ssu/data.hpp"
#include "ssu/tensor.hpp"
#include "ssu/uncertainty.hpp"

namespace ssu {

struct TrainConfig {
  real lr = real(2e-4);
  real momentum = real(0.9);
  real weight_decay = real(1e-8);
  real rms_decay = real(0.99);
  real epsilon = real(1e-8);
  int epochs = 100;
  int batch_size = 1;
  real alpha1 = real(1);
  real alpha2 = real(1);
  real alpha3 = real(1);
  real alphaF = real(1);
  bool augment = false;  // off for uncertainty models
  int n_mc_train = 16;   // MC passes for stage-1 uncertainty map generation
  int t_samples = 8;     // noise draws of the attenuated stage-1 loss

  void validate() const;
};

// Per-parameter RMSprop accumulators, parallel to ModelParams::params.
struct OptState {
  explicit OptState(const ModelParams& model);
  std::vector<std::vector<real>> sq_avg;
  std::vector<std::vector<real>> momentum;
};

// Mean binary cross-entropy on probabilities (clamped to [1e-7, 1-1e-7]).
Tensor bce(const Tensor& prob, const Tensor& target);

struct LossReport {
  Tensor total;
  real l_s1, l_s2, l_s3, l_f;
};

// Four-branch deep-supervision objective. Side outputs are upsampled to the
// target resolution and passed through a sigmoid (the fused logit included)
// before their BCE terms.
LossReport total_loss(const PredictionBundle& bundle, const Tensor& target,
                      const TrainConfig& cfg);

// MC-attenuated BCE: mean over t_samples of
// bce(sigmoid(logits + eps * exp(0.5 * log_var)), target).
Tensor heteroscedastic_loss(const Tensor& logits, const Tensor& log_var,
                            const Tensor& target, int t_samples, Rng& rng);

// s <- rho*s + (1-rho)*g'^2; m <- mu*m + g'/sqrt(s+eps); w <- w - lr*m,
// with g' = g + weight_decay*w. Parameters without a gradient buffer are
// skipped.
void rmsprop_step(ModelParams& model, OptState& state, const TrainConfig& cfg);

// Random shift within +-30% of each extent and rescale in [0.7, 1.3].
struct AffineDraw {
  double shift_x = 0, shift_y = 0;  // pixels
  double scale = 1;
};
AffineDraw draw_affine(int height, int width, Rng& rng);
Tensor warp_bilinear(const Tensor& chw, const AffineDraw& d);  // zero padding
Tensor warp_nearest(const Tensor& chw, const AffineDraw& d);
Sample augment(const Sample& sample, Rng& rng);

struct Stage1Result {
  ModelParams model;
  std::vector<UncertaintyMaps> maps;  // one per dataset sample, gt-centered
};

// Trains the Bayesian approximate net with the heteroscedastic objective,
// then caches gt-centered uncertainty maps for every training image.
Stage1Result train_stage1(const std::vector<Sample>& dataset, const TrainConfig& cfg,
                          ArchConfig arch, std::uint64_t seed,
                          std::ostream* log_csv = nullptr);

// Trains the SSU net with the four-branch objective. maps must cover the
// dataset when the architecture enables GSUA.
ModelParams train_stage2(const std::vector<Sample>& dataset,
                         const std::vector<UncertaintyMaps>& maps,
                         const TrainConfig& cfg, ArchConfig arch,
                         std::uint64_t seed, std::ostream* log_csv = nullptr);

void write_log_header(std::ostream& os);

}  // namespace ssu

#endif  // SSU_TRAIN_HPP_
