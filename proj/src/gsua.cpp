#include "ssu/gsua.hpp"

#include "ssu/ops.hpp"

namespace ssu {

Tensor UncertaintyMaps::packed() const {
  return ops::concat_channels(u_a, u_e);
}

Tensor gsua_forward(const Tensor& x, const UncertaintyMaps& u,
                    const GsuaParams& params, Tensor* attention_out) {
  if (x.ndim() != 4) throw ConfigError("gsua: features must be 4-d");
  if (!u.defined()) throw ConfigError("gsua: undefined uncertainty maps");
  if (u.u_e.ndim() != 4 || u.u_a.ndim() != 4 || u.u_e.dim(1) != 1 ||
      u.u_a.dim(1) != 1 || u.u_e.shape() != u.u_a.shape()) {
    throw ConfigError("gsua: uncertainty maps must be [N,1,H,W] pairs");
  }
  if (u.u_e.dim(0) != x.dim(0)) {
    throw ConfigError("gsua: batch mismatch between features and maps");
  }
  if (params.conv_weight.shape() != Shape{1, 2, 1, 1}) {
    throw ConfigError("gsua: conv kernel must be [1,2,1,1]");
  }

  Tensor packed = u.packed();  // [N,2,H,W]
  Tensor pooled = ops::concat_channels(ops::channel_mean(packed),
                                       ops::channel_max(packed));
  Tensor gate = ops::relu(
      ops::conv2d(pooled, params.conv_weight, params.conv_bias, 1, 0));
  Tensor attention = ops::gaussian_blur(ops::sigmoid(gate), params.gaussian_ksize,
                                        params.gaussian_sigma);
  attention = ops::upsample_bilinear(attention, x.dim(2), x.dim(3));
  if (attention_out) *attention_out = attention;
  return ops::add(ops::mul(x, attention), x);
}

}  // namespace ssu
