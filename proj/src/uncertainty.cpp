#include "ssu/uncertainty.hpp"

#include "ssu/backbone.hpp"
#include "ssu/ops.hpp"

namespace ssu {

McSamples mc_sample(const ModelParams& params, const Tensor& image, int n,
                    const Rng& rng) {
  if (n < 1) throw UsageError("mc_sample: n must be >= 1");
  NoGradGuard no_grad;
  McSamples out;
  out.probs.reserve(static_cast<size_t>(n));
  out.vars.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng pass_rng = rng.split(static_cast<std::uint64_t>(i));
    PredictionBundle bundle =
        forward(params, image, nullptr, /*stochastic=*/true, pass_rng);
    out.probs.push_back(ops::sigmoid(bundle.y1));
    if (bundle.v.defined()) {
      out.vars.push_back(ops::exp(bundle.v));
    } else {
      out.vars.push_back(Tensor::zeros(bundle.y1.shape()));
    }
  }
  return out;
}

UncertaintyMaps spatial_uncertainty(const McSamples& samples,
                                    const Tensor& reference,
                                    UncertaintyMode mode) {
  size_t n = samples.probs.size();
  if (n == 0) throw UsageError("spatial_uncertainty: no samples");
  const Shape& shape = samples.probs[0].shape();
  for (const Tensor& t : samples.probs) {
    if (t.shape() != shape) throw UsageError("spatial_uncertainty: ragged samples");
  }
  if (samples.vars.size() != n) {
    throw UsageError("spatial_uncertainty: probs/vars length mismatch");
  }
  if (mode == UncertaintyMode::kGtCentered) {
    if (!reference.defined() || reference.shape() != shape) {
      throw UsageError("spatial_uncertainty: gt-centered mode needs a reference "
                       "mask of the sample shape");
    }
  }

  std::int64_t numel_per = samples.probs[0].size();
  std::vector<real> ue(static_cast<size_t>(numel_per));
  std::vector<real> ua(static_cast<size_t>(numel_per));
  double inv_n = 1.0 / static_cast<double>(n);
  for (std::int64_t i = 0; i < numel_per; ++i) {
    double mean = 0.0;
    for (const Tensor& p : samples.probs) mean += static_cast<double>(p.data()[i]);
    mean *= inv_n;
    double var = 0.0;
    for (const Tensor& p : samples.probs) {
      double d = static_cast<double>(p.data()[i]) - mean;
      var += d * d;
    }
    var *= inv_n;
    // Variance decomposition: the gt-centered value is the mean-centered one
    // plus a nonnegative square, so the ordering is exact in floating point.
    double e = var;
    if (mode == UncertaintyMode::kGtCentered) {
      double d = mean - static_cast<double>(reference.data()[i]);
      e = var + d * d;
    }
    ue[static_cast<size_t>(i)] = static_cast<real>(e);
    double va = 0.0;
    for (const Tensor& v : samples.vars) va += static_cast<double>(v.data()[i]);
    ua[static_cast<size_t>(i)] = static_cast<real>(va * inv_n);
  }

  UncertaintyMaps maps;
  maps.u_e = Tensor::from_data(shape, std::move(ue));
  maps.u_a = Tensor::from_data(shape, std::move(ua));
  return maps;
}

Tensor scale_uncertainty(const Tensor& logits) { return ops::sigmoid(logits); }

std::pair<Tensor, Tensor> predictive_summary(const std::vector<Tensor>& final_probs) {
  if (final_probs.empty()) throw UsageError("predictive_summary: empty sample list");
  const Shape& shape = final_probs[0].shape();
  for (const Tensor& t : final_probs) {
    if (t.shape() != shape) throw UsageError("predictive_summary: ragged samples");
  }
  std::int64_t numel_per = final_probs[0].size();
  std::vector<real> mean(static_cast<size_t>(numel_per));
  std::vector<real> var(static_cast<size_t>(numel_per));
  double inv_n = 1.0 / static_cast<double>(final_probs.size());
  for (std::int64_t i = 0; i < numel_per; ++i) {
    double m = 0.0;
    for (const Tensor& t : final_probs) m += static_cast<double>(t.data()[i]);
    m *= inv_n;
    double v = 0.0;
    for (const Tensor& t : final_probs) {
      double d = static_cast<double>(t.data()[i]) - m;
      v += d * d;
    }
    mean[static_cast<size_t>(i)] = static_cast<real>(m);
    var[static_cast<size_t>(i)] = static_cast<real>(v * inv_n);
  }
  return {Tensor::from_data(shape, std::move(mean)),
          Tensor::from_data(shape, std::move(var))};
}

}  // namespace ssu
