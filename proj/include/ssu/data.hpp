#ifndef SSU_DATA_HPP_
#define SSU_DATA_HPP_

#include <string>
#include <vector>

#include "ssu/tensor.hpp"

namespace ssu {

// One image/mask pair. image is [1,H,W] in [0,1]; mask is [1,H,W] strictly
// binary.
struct Sample {
  Tensor image;
  Tensor mask;
  std::string id;
  std::string provenance;
};

enum class SynthKind { kVessel, kCell };

SynthKind synth_kind_from_name(const std::string& name);
std::string synth_kind_name(SynthKind kind);

// Elongated-structure generator settings. Vessel images are dark smooth
// curves (optionally branching) on a light background; cell images are dark
// lattice boundaries around random seed points. Both are corrupted with a
// multiplicative illumination ramp, Gaussian blur and additive noise.
struct SynthSpec {
  SynthKind kind = SynthKind::kVessel;
  int height = 64;
  int width = 64;
  int min_structures = 2;   // curves (vessel) or seed points (cell)
  int max_structures = 4;
  real width_min = real(1.5);  // structure thickness in pixels
  real width_max = real(3.5);
  real noise_sigma = real(0.04);
  real illumination = real(0.35);
  real blur_sigma = real(0.7);

  static SynthSpec defaults(SynthKind kind, int size);
  void validate() const;
};

Sample gen_synthetic(const SynthSpec& spec, std::uint64_t seed);

// Loads root/<split>/images/*.png with matching root/<split>/masks/*.png in
// lexicographic stem order. Masks binarize at 0.5. A nonzero divisor
// enforces extent divisibility (2^depth of the target arch).
std::vector<Sample> load_dataset(const std::string& root, const std::string& split,
                                 int divisor = 0);

}  // namespace ssu

#endif  // SSU_DATA_HPP_
