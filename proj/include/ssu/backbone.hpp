#ifndef SSU_BACKBONE_HPP_
#define SSU_BACKBONE_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ssu/gsua.hpp"
#include "ssu/tensor.hpp"
#include "ssu/uncertainty.hpp"

namespace ssu {

enum class Stage { kBayesian, kSsu };

std::string stage_name(Stage stage);
Stage stage_from_name(const std::string& name);

struct ArchConfig {
  int in_channels = 1;
  int base_width = 16;
  int depth = 3;
  real dropout_rate = real(0.5);
  bool with_gsua = false;
  bool with_msua = false;
  bool with_aleatoric_head = false;
  int gsua_ksize = 5;
  real gsua_sigma = real(1);

  void validate() const;
  // Input extents must be divisible by 2^depth.
  int required_divisor() const { return 1 << depth; }
};

// Named parameter store for one network. Declaration order is the canonical
// checkpoint order.
struct ModelParams {
  ArchConfig arch;
  Stage stage = Stage::kSsu;
  std::vector<std::pair<std::string, Tensor>> params;

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const;
  std::int64_t param_count() const;
};

// Side-output logits at scales 1, 1/2, 1/4 plus the fused full-resolution
// output. v is the log-variance head, defined only when the architecture
// carries an aleatoric head.
struct PredictionBundle {
  Tensor y1, y2, y3;
  Tensor yF;
  Tensor v;
};

// Optional introspection of a forward pass.
struct ForwardTrace {
  std::vector<Tensor> encoder_outputs;  // post-GSUA, one per encoder block
  std::vector<Tensor> attention_maps;   // one per GSUA site when enabled
};

// Deterministic Kaiming-style init; each layer draws from a substream keyed
// by its name, so shared layers are identical across arch variants.
ModelParams build_model(const ArchConfig& arch, Stage stage, std::uint64_t seed);

PredictionBundle forward(const ModelParams& model, const Tensor& image,
                         const UncertaintyMaps* u_maps, bool stochastic,
                         Rng& rng, ForwardTrace* trace = nullptr);

// Flat binary checkpoint: magic "SSUNETCKPT1", key=value config block,
// then per-tensor text headers with little-endian float32 payloads.
void save_checkpoint(const ModelParams& model, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace ssu

#endif  // SSU_BACKBONE_HPP_
