#include "ssu/ops.hpp"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

namespace ssu::ops {

namespace {

using detail::Node;

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw UsageError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void check_4d(const Tensor& x, const char* op) {
  if (x.ndim() != 4) {
    throw UsageError(std::string(op) + ": expected a 4-d tensor, got " +
                     shape_str(x.shape()));
  }
}

inline int reflect_index(int i, int n) {
  // Symmetric reflection; valid while |overhang| <= n.
  if (i < 0) i = -i - 1;
  if (i >= n) i = 2 * n - i - 1;
  return i;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<real> out(a.data(), a.data() + a.size());
  const real* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    if (an->requires_grad) {
      for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  bool bcast_a = false, bcast_b = false;
  if (a.shape() != b.shape()) {
    bool ok = a.ndim() == 4 && b.ndim() == 4 && a.dim(0) == b.dim(0) &&
              a.dim(2) == b.dim(2) && a.dim(3) == b.dim(3) &&
              (a.dim(1) == 1 || b.dim(1) == 1);
    if (!ok) {
      throw UsageError("mul: shapes " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()) + " are not compatible");
    }
    bcast_a = a.dim(1) == 1;
    bcast_b = !bcast_a;
  }
  const Tensor& big = bcast_a ? b : a;
  Shape out_shape = big.shape();
  std::vector<real> out(static_cast<size_t>(numel(out_shape)));

  const real* pa = a.data();
  const real* pb = b.data();
  if (!bcast_a && !bcast_b) {
    for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] * pb[i];
  } else {
    int N = big.dim(0), C = big.dim(1), H = big.dim(2), W = big.dim(3);
    std::int64_t plane = static_cast<std::int64_t>(H) * W;
    for (int in = 0; in < N; ++in) {
      for (int c = 0; c < C; ++c) {
        std::int64_t off_big = (static_cast<std::int64_t>(in) * C + c) * plane;
        std::int64_t off_small = static_cast<std::int64_t>(in) * plane;
        const real* pbig = (bcast_a ? pb : pa) + off_big;
        const real* psmall = (bcast_a ? pa : pb) + off_small;
        for (std::int64_t i = 0; i < plane; ++i) {
          out[static_cast<size_t>(off_big + i)] = pbig[i] * psmall[i];
        }
      }
    }
  }

  auto an = a.node();
  auto bn = b.node();
  return detail::make_op(
      out_shape, std::move(out), {a, b}, [an, bn, bcast_a, bcast_b](Node& self) {
        auto accumulate = [&](const std::shared_ptr<Node>& dst,
                              const std::shared_ptr<Node>& other,
                              bool dst_is_small) {
          if (!dst->requires_grad) return;
          if (!dst_is_small) {
            // dst has the full shape; other may be broadcast.
            if (other->shape == self.shape) {
              for (size_t i = 0; i < self.grad.size(); ++i) {
                dst->grad[i] += self.grad[i] * other->value[i];
              }
            } else {
              int N = self.shape[0], C = self.shape[1], H = self.shape[2],
                  W = self.shape[3];
              std::int64_t plane = static_cast<std::int64_t>(H) * W;
              for (int in = 0; in < N; ++in) {
                for (int c = 0; c < C; ++c) {
                  std::int64_t off = (static_cast<std::int64_t>(in) * C + c) * plane;
                  std::int64_t soff = static_cast<std::int64_t>(in) * plane;
                  for (std::int64_t i = 0; i < plane; ++i) {
                    dst->grad[static_cast<size_t>(off + i)] +=
                        self.grad[static_cast<size_t>(off + i)] *
                        other->value[static_cast<size_t>(soff + i)];
                  }
                }
              }
            }
          } else {
            // dst is [N,1,H,W]; sum the product over channels.
            int N = self.shape[0], C = self.shape[1], H = self.shape[2],
                W = self.shape[3];
            std::int64_t plane = static_cast<std::int64_t>(H) * W;
            for (int in = 0; in < N; ++in) {
              std::int64_t soff = static_cast<std::int64_t>(in) * plane;
              for (int c = 0; c < C; ++c) {
                std::int64_t off = (static_cast<std::int64_t>(in) * C + c) * plane;
                for (std::int64_t i = 0; i < plane; ++i) {
                  dst->grad[static_cast<size_t>(soff + i)] +=
                      self.grad[static_cast<size_t>(off + i)] *
                      other->value[static_cast<size_t>(off + i)];
                }
              }
            }
          }
        };
        accumulate(an, bn, bcast_a);
        accumulate(bn, an, bcast_b);
      });
}

Tensor affine(const Tensor& x, real scale, real shift) {
  std::vector<real> out(static_cast<size_t>(x.size()));
  const real* px = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = scale * px[i] + shift;
  auto xn = x.node();
  return detail::make_op(x.shape(), std::move(out), {x}, [xn, scale](Node& self) {
    if (!xn->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] += scale * self.grad[i];
    }
  });
}

Tensor relu(const Tensor& x) {
  std::vector<real> out(static_cast<size_t>(x.size()));
  const real* px = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = px[i] > real(0) ? px[i] : real(0);
  auto xn = x.node();
  return detail::make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (xn->value[i] > real(0)) xn->grad[i] += self.grad[i];
    }
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<real> out(static_cast<size_t>(x.size()));
  const real* px = x.data();
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<real>(1.0 / (1.0 + std::exp(-static_cast<double>(px[i]))));
  }
  auto xn = x.node();
  return detail::make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      real y = self.value[i];
      xn->grad[i] += self.grad[i] * y * (real(1) - y);
    }
  });
}

Tensor exp(const Tensor& x) {
  std::vector<real> out(static_cast<size_t>(x.size()));
  const real* px = x.data();
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<real>(std::exp(static_cast<double>(px[i])));
  }
  auto xn = x.node();
  return detail::make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) {
      xn->grad[i] += self.grad[i] * self.value[i];
    }
  });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "maximum");
  std::vector<real> out(static_cast<size_t>(a.size()));
  const real* pa = a.data();
  const real* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = pa[i] >= pb[i] ? pa[i] : pb[i];
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op(a.shape(), std::move(out), {a, b}, [an, bn](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      if (an->value[i] >= bn->value[i]) {
        if (an->requires_grad) an->grad[i] += self.grad[i];
      } else if (bn->requires_grad) {
        bn->grad[i] += self.grad[i];
      }
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size()) {
    throw UsageError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  }
  std::vector<real> out(x.data(), x.data() + x.size());
  auto xn = x.node();
  return detail::make_op(std::move(shape), std::move(out), {x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  check_4d(a, "concat_channels");
  check_4d(b, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw UsageError("concat_channels: non-channel extents differ: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  int N = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Shape out_shape{N, Ca + Cb, H, W};
  std::vector<real> out(static_cast<size_t>(numel(out_shape)));
  const real* pa = a.data();
  const real* pb = b.data();
  for (int n = 0; n < N; ++n) {
    real* dst = out.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane;
    std::copy_n(pa + static_cast<std::int64_t>(n) * Ca * plane, Ca * plane, dst);
    std::copy_n(pb + static_cast<std::int64_t>(n) * Cb * plane, Cb * plane,
                dst + Ca * plane);
  }
  auto an = a.node();
  auto bn = b.node();
  return detail::make_op(
      out_shape, std::move(out), {a, b}, [an, bn, N, Ca, Cb, plane](Node& self) {
        for (int n = 0; n < N; ++n) {
          const real* g =
              self.grad.data() + static_cast<std::int64_t>(n) * (Ca + Cb) * plane;
          if (an->requires_grad) {
            real* ga = an->grad.data() + static_cast<std::int64_t>(n) * Ca * plane;
            for (std::int64_t i = 0; i < Ca * plane; ++i) ga[i] += g[i];
          }
          if (bn->requires_grad) {
            real* gb = bn->grad.data() + static_cast<std::int64_t>(n) * Cb * plane;
            for (std::int64_t i = 0; i < Cb * plane; ++i) gb[i] += g[Ca * plane + i];
          }
        }
      });
}

Tensor channel_mean(const Tensor& x) {
  check_4d(x, "channel_mean");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Shape out_shape{N, 1, H, W};
  std::vector<real> out(static_cast<size_t>(N * plane), real(0));
  const real* px = x.data();
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const real* src = px + (static_cast<std::int64_t>(n) * C + c) * plane;
      real* dst = out.data() + static_cast<std::int64_t>(n) * plane;
      for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  }
  real inv = real(1) / static_cast<real>(C);
  for (real& v : out) v *= inv;
  auto xn = x.node();
  return detail::make_op(out_shape, std::move(out), {x},
                         [xn, N, C, plane, inv](Node& self) {
                           if (!xn->requires_grad) return;
                           for (int n = 0; n < N; ++n) {
                             const real* g =
                                 self.grad.data() + static_cast<std::int64_t>(n) * plane;
                             for (int c = 0; c < C; ++c) {
                               real* gx = xn->grad.data() +
                                          (static_cast<std::int64_t>(n) * C + c) * plane;
                               for (std::int64_t i = 0; i < plane; ++i) {
                                 gx[i] += g[i] * inv;
                               }
                             }
                           }
                         });
}

Tensor channel_max(const Tensor& x) {
  check_4d(x, "channel_max");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::int64_t plane = static_cast<std::int64_t>(H) * W;
  Shape out_shape{N, 1, H, W};
  std::vector<real> out(static_cast<size_t>(N * plane));
  std::vector<int> arg(static_cast<size_t>(N * plane), 0);
  const real* px = x.data();
  for (int n = 0; n < N; ++n) {
    std::int64_t base = static_cast<std::int64_t>(n) * C * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      real best = px[base + i];
      int bc = 0;
      for (int c = 1; c < C; ++c) {
        real v = px[base + c * plane + i];
        if (v > best) {
          best = v;
          bc = c;
        }
      }
      out[static_cast<size_t>(n * plane + i)] = best;
      arg[static_cast<size_t>(n * plane + i)] = bc;
    }
  }
  auto xn = x.node();
  return detail::make_op(out_shape, std::move(out), {x},
                         [xn, N, C, plane, arg = std::move(arg)](Node& self) {
                           if (!xn->requires_grad) return;
                           for (int n = 0; n < N; ++n) {
                             std::int64_t base = static_cast<std::int64_t>(n) * C * plane;
                             for (std::int64_t i = 0; i < plane; ++i) {
                               int c = arg[static_cast<size_t>(n * plane + i)];
                               xn->grad[static_cast<size_t>(base + c * plane + i)] +=
                                   self.grad[static_cast<size_t>(n * plane + i)];
                             }
                           }
                         });
}

Tensor sum_all(const Tensor& x) {
  double acc = 0.0;
  const real* px = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(px[i]);
  auto xn = x.node();
  return detail::make_op({1}, {static_cast<real>(acc)}, {x}, [xn](Node& self) {
    if (!xn->requires_grad) return;
    real g = self.grad[0];
    for (size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += g;
  });
}

Tensor mean_all(const Tensor& x) {
  double acc = 0.0;
  const real* px = x.data();
  for (std::int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(px[i]);
  double inv = 1.0 / static_cast<double>(x.size());
  auto xn = x.node();
  return detail::make_op({1}, {static_cast<real>(acc * inv)}, {x},
                         [xn, inv](Node& self) {
                           if (!xn->requires_grad) return;
                           real g = self.grad[0] * static_cast<real>(inv);
                           for (size_t i = 0; i < xn->grad.size(); ++i) {
                             xn->grad[i] += g;
                           }
                         });
}

namespace {

struct ConvDims {
  int N, Cin, H, W, Cout, KH, KW, OH, OW, stride, pad;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                   int stride, int padding) {
  if (input.ndim() != 4 || kernel.ndim() != 4) {
    throw ConfigError("conv2d: input and kernel must be 4-d");
  }
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  ConvDims d;
  d.N = input.dim(0);
  d.Cin = input.dim(1);
  d.H = input.dim(2);
  d.W = input.dim(3);
  d.Cout = kernel.dim(0);
  d.KH = kernel.dim(2);
  d.KW = kernel.dim(3);
  d.stride = stride;
  d.pad = padding;
  if (kernel.dim(1) != d.Cin) {
    throw ConfigError("conv2d: kernel expects " + std::to_string(kernel.dim(1)) +
                      " input channels, input has " + std::to_string(d.Cin));
  }
  if (bias.defined() && bias.size() != d.Cout) {
    throw ConfigError("conv2d: bias length must equal output channels");
  }
  d.OH = (d.H + 2 * padding - d.KH) / stride + 1;
  d.OW = (d.W + 2 * padding - d.KW) / stride + 1;
  if (d.H + 2 * padding < d.KH || d.W + 2 * padding < d.KW || d.OH <= 0 ||
      d.OW <= 0) {
    throw ConfigError("conv2d: non-positive output extents");
  }
  return d;
}

// Valid output column range for a fixed kernel column: 0 <= ow*s + kw - p < W.
inline std::pair<int, int> ow_range(int kw, int pad, int stride, int W, int OW) {
  int lo = 0;
  if (kw - pad < 0) lo = (pad - kw + stride - 1) / stride;
  int hi = OW - 1;
  int max_num = W - 1 - kw + pad;
  if (max_num < 0) return {1, 0};
  hi = std::min(hi, max_num / stride);
  return {lo, hi};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
  ConvDims d = conv_dims(input, kernel, bias, stride, padding);
  Shape out_shape{d.N, d.Cout, d.OH, d.OW};
  std::vector<real> out(static_cast<size_t>(numel(out_shape)), real(0));

  const real* in = input.data();
  const real* K = kernel.data();
  const real* B = bias.defined() ? bias.data() : nullptr;
  std::int64_t in_plane = static_cast<std::int64_t>(d.H) * d.W;
  std::int64_t out_plane = static_cast<std::int64_t>(d.OH) * d.OW;

  for (int n = 0; n < d.N; ++n) {
    for (int co = 0; co < d.Cout; ++co) {
      real* op = out.data() + (static_cast<std::int64_t>(n) * d.Cout + co) * out_plane;
      if (B) {
        for (std::int64_t i = 0; i < out_plane; ++i) op[i] = B[co];
      }
      for (int ci = 0; ci < d.Cin; ++ci) {
        const real* ip = in + (static_cast<std::int64_t>(n) * d.Cin + ci) * in_plane;
        const real* kp = K + ((static_cast<std::int64_t>(co) * d.Cin + ci) * d.KH) * d.KW;
        for (int kh = 0; kh < d.KH; ++kh) {
          for (int kw = 0; kw < d.KW; ++kw) {
            real wv = kp[kh * d.KW + kw];
            auto [lo, hi] = ow_range(kw, d.pad, d.stride, d.W, d.OW);
            if (hi < lo) continue;
            for (int oh = 0; oh < d.OH; ++oh) {
              int ih = oh * d.stride + kh - d.pad;
              if (ih < 0 || ih >= d.H) continue;
              const real* irow = ip + static_cast<std::int64_t>(ih) * d.W;
              real* orow = op + static_cast<std::int64_t>(oh) * d.OW;
              if (d.stride == 1) {
                const real* src = irow + lo + kw - d.pad;
                real* dst = orow + lo;
                int len = hi - lo + 1;
                for (int i = 0; i < len; ++i) dst[i] += wv * src[i];
              } else {
                int iw = lo * d.stride + kw - d.pad;
                for (int ow = lo; ow <= hi; ++ow, iw += d.stride) {
                  orow[ow] += wv * irow[iw];
                }
              }
            }
          }
        }
      }
    }
  }

  auto in_n = input.node();
  auto k_n = kernel.node();
  auto b_n = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor> parents{input, kernel};
  if (bias.defined()) parents.push_back(bias);
  return detail::make_op(
      out_shape, std::move(out), std::move(parents),
      [in_n, k_n, b_n, d, in_plane, out_plane](Node& self) {
        const real* g = self.grad.data();
        if (b_n && b_n->requires_grad) {
          for (int n = 0; n < d.N; ++n) {
            for (int co = 0; co < d.Cout; ++co) {
              const real* gp =
                  g + (static_cast<std::int64_t>(n) * d.Cout + co) * out_plane;
              real acc = 0;
              for (std::int64_t i = 0; i < out_plane; ++i) acc += gp[i];
              b_n->grad[static_cast<size_t>(co)] += acc;
            }
          }
        }
        if (k_n->requires_grad) {
          for (int n = 0; n < d.N; ++n) {
            for (int co = 0; co < d.Cout; ++co) {
              const real* gp =
                  g + (static_cast<std::int64_t>(n) * d.Cout + co) * out_plane;
              for (int ci = 0; ci < d.Cin; ++ci) {
                const real* ip =
                    in_n->value.data() +
                    (static_cast<std::int64_t>(n) * d.Cin + ci) * in_plane;
                real* kg = k_n->grad.data() +
                           ((static_cast<std::int64_t>(co) * d.Cin + ci) * d.KH) * d.KW;
                for (int kh = 0; kh < d.KH; ++kh) {
                  for (int kw = 0; kw < d.KW; ++kw) {
                    auto [lo, hi] = ow_range(kw, d.pad, d.stride, d.W, d.OW);
                    if (hi < lo) continue;
                    real acc = 0;
                    for (int oh = 0; oh < d.OH; ++oh) {
                      int ih = oh * d.stride + kh - d.pad;
                      if (ih < 0 || ih >= d.H) continue;
                      const real* irow = ip + static_cast<std::int64_t>(ih) * d.W;
                      const real* grow = gp + static_cast<std::int64_t>(oh) * d.OW;
                      if (d.stride == 1) {
                        const real* src = irow + lo + kw - d.pad;
                        const real* g2 = grow + lo;
                        int len = hi - lo + 1;
                        for (int i = 0; i < len; ++i) acc += g2[i] * src[i];
                      } else {
                        int iw = lo * d.stride + kw - d.pad;
                        for (int ow = lo; ow <= hi; ++ow, iw += d.stride) {
                          acc += grow[ow] * irow[iw];
                        }
                      }
                    }
                    kg[kh * d.KW + kw] += acc;
                  }
                }
              }
            }
          }
        }
        if (in_n->requires_grad) {
          for (int n = 0; n < d.N; ++n) {
            for (int co = 0; co < d.Cout; ++co) {
              const real* gp =
                  g + (static_cast<std::int64_t>(n) * d.Cout + co) * out_plane;
              for (int ci = 0; ci < d.Cin; ++ci) {
                real* ig = in_n->grad.data() +
                           (static_cast<std::int64_t>(n) * d.Cin + ci) * in_plane;
                const real* kp =
                    k_n->value.data() +
                    ((static_cast<std::int64_t>(co) * d.Cin + ci) * d.KH) * d.KW;
                for (int kh = 0; kh < d.KH; ++kh) {
                  for (int kw = 0; kw < d.KW; ++kw) {
                    real wv = kp[kh * d.KW + kw];
                    auto [lo, hi] = ow_range(kw, d.pad, d.stride, d.W, d.OW);
                    if (hi < lo) continue;
                    for (int oh = 0; oh < d.OH; ++oh) {
                      int ih = oh * d.stride + kh - d.pad;
                      if (ih < 0 || ih >= d.H) continue;
                      real* irow = ig + static_cast<std::int64_t>(ih) * d.W;
                      const real* grow = gp + static_cast<std::int64_t>(oh) * d.OW;
                      if (d.stride == 1) {
                        real* dst = irow + lo + kw - d.pad;
                        const real* g2 = grow + lo;
                        int len = hi - lo + 1;
                        for (int i = 0; i < len; ++i) dst[i] += wv * g2[i];
                      } else {
                        int iw = lo * d.stride + kw - d.pad;
                        for (int ow = lo; ow <= hi; ++ow, iw += d.stride) {
                          irow[iw] += wv * grow[ow];
                        }
                      }
                    }
                  }
                }
              }
            }
          }
        }
      });
}

Tensor pool2d(const Tensor& x, PoolMode mode, int window, int stride) {
  check_4d(x, "pool2d");
  if (window < 1) throw ConfigError("pool2d: window must be >= 1");
  if (stride < 1) throw ConfigError("pool2d: stride must be >= 1");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (window > H || window > W) {
    throw ConfigError("pool2d: window " + std::to_string(window) +
                      " exceeds input extent " + std::to_string(std::min(H, W)));
  }
  int OH = (H - window) / stride + 1;
  int OW = (W - window) / stride + 1;
  Shape out_shape{N, C, OH, OW};
  std::int64_t planes = static_cast<std::int64_t>(N) * C;
  std::int64_t in_plane = static_cast<std::int64_t>(H) * W;
  std::int64_t out_plane = static_cast<std::int64_t>(OH) * OW;
  std::vector<real> out(static_cast<size_t>(planes * out_plane));
  std::vector<std::int32_t> arg;
  if (mode == PoolMode::kMax) arg.resize(out.size());

  const real* px = x.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const real* ip = px + p * in_plane;
    real* op = out.data() + p * out_plane;
    for (int oh = 0; oh < OH; ++oh) {
      for (int ow = 0; ow < OW; ++ow) {
        int h0 = oh * stride, w0 = ow * stride;
        if (mode == PoolMode::kMax) {
          real best = ip[static_cast<std::int64_t>(h0) * W + w0];
          std::int32_t bi = h0 * W + w0;
          for (int dh = 0; dh < window; ++dh) {
            const real* row = ip + static_cast<std::int64_t>(h0 + dh) * W;
            for (int dw = 0; dw < window; ++dw) {
              if (row[w0 + dw] > best) {
                best = row[w0 + dw];
                bi = (h0 + dh) * W + w0 + dw;
              }
            }
          }
          op[oh * OW + ow] = best;
          arg[static_cast<size_t>(p * out_plane + oh * OW + ow)] = bi;
        } else {
          double acc = 0.0;
          for (int dh = 0; dh < window; ++dh) {
            const real* row = ip + static_cast<std::int64_t>(h0 + dh) * W;
            for (int dw = 0; dw < window; ++dw) acc += row[w0 + dw];
          }
          op[oh * OW + ow] = static_cast<real>(acc / (window * window));
        }
      }
    }
  }

  auto xn = x.node();
  real inv = real(1) / static_cast<real>(window * window);
  return detail::make_op(
      out_shape, std::move(out), {x},
      [xn, mode, planes, in_plane, out_plane, window, stride, W, OW, inv,
       arg = std::move(arg)](Node& self) {
        if (!xn->requires_grad) return;
        for (std::int64_t p = 0; p < planes; ++p) {
          real* gi = xn->grad.data() + p * in_plane;
          const real* go = self.grad.data() + p * out_plane;
          if (mode == PoolMode::kMax) {
            for (std::int64_t i = 0; i < out_plane; ++i) {
              gi[arg[static_cast<size_t>(p * out_plane + i)]] += go[i];
            }
          } else {
            int OH = static_cast<int>(out_plane / OW);
            for (int oh = 0; oh < OH; ++oh) {
              for (int ow = 0; ow < OW; ++ow) {
                real g = go[oh * OW + ow] * inv;
                int h0 = oh * stride, w0 = ow * stride;
                for (int dh = 0; dh < window; ++dh) {
                  real* row = gi + static_cast<std::int64_t>(h0 + dh) * W;
                  for (int dw = 0; dw < window; ++dw) row[w0 + dw] += g;
                }
              }
            }
          }
        }
      });
}

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  check_4d(x, "upsample_bilinear");
  if (out_h < 1 || out_w < 1) {
    throw ConfigError("upsample_bilinear: output extents must be >= 1");
  }
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Shape out_shape{N, C, out_h, out_w};

  // Corner-aligned source coordinates, precomputed per output row/col.
  auto make_axis = [](int in_n, int out_n) {
    std::vector<int> i0(out_n), i1(out_n);
    std::vector<real> w1(out_n);
    double scale = out_n > 1 ? static_cast<double>(in_n - 1) / (out_n - 1) : 0.0;
    for (int o = 0; o < out_n; ++o) {
      double src = o * scale;
      int lo = static_cast<int>(src);
      if (lo > in_n - 1) lo = in_n - 1;
      int hi = std::min(lo + 1, in_n - 1);
      i0[o] = lo;
      i1[o] = hi;
      w1[o] = static_cast<real>(src - lo);
    }
    return std::tuple(i0, i1, w1);
  };
  auto [h0, h1, wh] = make_axis(H, out_h);
  auto [w0, w1c, ww] = make_axis(W, out_w);

  std::int64_t planes = static_cast<std::int64_t>(N) * C;
  std::int64_t in_plane = static_cast<std::int64_t>(H) * W;
  std::int64_t out_plane = static_cast<std::int64_t>(out_h) * out_w;
  std::vector<real> out(static_cast<size_t>(planes * out_plane));
  const real* px = x.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const real* ip = px + p * in_plane;
    real* op = out.data() + p * out_plane;
    for (int oh = 0; oh < out_h; ++oh) {
      const real* r0 = ip + static_cast<std::int64_t>(h0[oh]) * W;
      const real* r1 = ip + static_cast<std::int64_t>(h1[oh]) * W;
      real fy = wh[oh];
      for (int ow = 0; ow < out_w; ++ow) {
        real fx = ww[ow];
        real top = r0[w0[ow]] * (real(1) - fx) + r0[w1c[ow]] * fx;
        real bot = r1[w0[ow]] * (real(1) - fx) + r1[w1c[ow]] * fx;
        op[oh * out_w + ow] = top * (real(1) - fy) + bot * fy;
      }
    }
  }

  auto xn = x.node();
  return detail::make_op(
      out_shape, std::move(out), {x},
      [xn, planes, in_plane, out_plane, out_h, out_w, W, h0 = h0, h1 = h1,
       wh = wh, w0 = w0, w1c = w1c, ww = ww](Node& self) {
        if (!xn->requires_grad) return;
        for (std::int64_t p = 0; p < planes; ++p) {
          real* gi = xn->grad.data() + p * in_plane;
          const real* go = self.grad.data() + p * out_plane;
          for (int oh = 0; oh < out_h; ++oh) {
            real fy = wh[oh];
            real* r0 = gi + static_cast<std::int64_t>(h0[oh]) * W;
            real* r1 = gi + static_cast<std::int64_t>(h1[oh]) * W;
            for (int ow = 0; ow < out_w; ++ow) {
              real fx = ww[ow];
              real g = go[oh * out_w + ow];
              r0[w0[ow]] += g * (real(1) - fx) * (real(1) - fy);
              r0[w1c[ow]] += g * fx * (real(1) - fy);
              r1[w0[ow]] += g * (real(1) - fx) * fy;
              r1[w1c[ow]] += g * fx * fy;
            }
          }
        }
      });
}

Tensor dropout(const Tensor& x, real rate, bool stochastic, Rng& rng) {
  if (!(rate >= real(0) && rate < real(1))) {
    throw ConfigError("dropout: rate must be in [0, 1)");
  }
  if (!stochastic || rate == real(0)) {
    std::vector<real> out(x.data(), x.data() + x.size());
    auto xn = x.node();
    return detail::make_op(x.shape(), std::move(out), {x}, [xn](Node& self) {
      if (!xn->requires_grad) return;
      for (size_t i = 0; i < self.grad.size(); ++i) xn->grad[i] += self.grad[i];
    });
  }
  real keep_scale = real(1) / (real(1) - rate);
  std::vector<real> mask(static_cast<size_t>(x.size()));
  for (real& m : mask) {
    m = rng.uniform() >= static_cast<double>(rate) ? keep_scale : real(0);
  }
  std::vector<real> out(static_cast<size_t>(x.size()));
  const real* px = x.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = px[i] * mask[i];
  auto xn = x.node();
  return detail::make_op(x.shape(), std::move(out), {x},
                         [xn, mask = std::move(mask)](Node& self) {
                           if (!xn->requires_grad) return;
                           for (size_t i = 0; i < self.grad.size(); ++i) {
                             xn->grad[i] += self.grad[i] * mask[i];
                           }
                         });
}

Tensor gaussian_blur(const Tensor& x, int ksize, real sigma) {
  check_4d(x, "gaussian_blur");
  if (ksize < 1 || ksize % 2 == 0) {
    throw ConfigError("gaussian_blur: ksize must be odd and positive");
  }
  if (!(sigma > real(0))) throw ConfigError("gaussian_blur: sigma must be > 0");
  int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int r = ksize / 2;

  std::vector<real> kern(static_cast<size_t>(ksize) * ksize);
  {
    double sum = 0.0;
    for (int dy = -r; dy <= r; ++dy) {
      for (int dx = -r; dx <= r; ++dx) {
        double v = std::exp(-(dy * dy + dx * dx) /
                            (2.0 * static_cast<double>(sigma) * sigma));
        kern[static_cast<size_t>((dy + r) * ksize + dx + r)] = static_cast<real>(v);
        sum += v;
      }
    }
    for (real& v : kern) v = static_cast<real>(static_cast<double>(v) / sum);
  }

  std::int64_t planes = static_cast<std::int64_t>(N) * C;
  std::int64_t plane = static_cast<std::int64_t>(H) * W;
  std::vector<real> out(static_cast<size_t>(planes * plane), real(0));
  const real* px = x.data();
  for (std::int64_t p = 0; p < planes; ++p) {
    const real* ip = px + p * plane;
    real* op = out.data() + p * plane;
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        double acc = 0.0;
        for (int dy = -r; dy <= r; ++dy) {
          int sh = reflect_index(h + dy, H);
          for (int dx = -r; dx <= r; ++dx) {
            int sw = reflect_index(w + dx, W);
            acc += static_cast<double>(kern[static_cast<size_t>((dy + r) * ksize +
                                                                dx + r)]) *
                   ip[static_cast<std::int64_t>(sh) * W + sw];
          }
        }
        op[static_cast<std::int64_t>(h) * W + w] = static_cast<real>(acc);
      }
    }
  }

  auto xn = x.node();
  return detail::make_op(
      Shape{N, C, H, W}, std::move(out), {x},
      [xn, planes, plane, H, W, r, ksize, kern = std::move(kern)](Node& self) {
        if (!xn->requires_grad) return;
        for (std::int64_t p = 0; p < planes; ++p) {
          real* gi = xn->grad.data() + p * plane;
          const real* go = self.grad.data() + p * plane;
          for (int h = 0; h < H; ++h) {
            for (int w = 0; w < W; ++w) {
              real g = go[static_cast<std::int64_t>(h) * W + w];
              for (int dy = -r; dy <= r; ++dy) {
                int sh = reflect_index(h + dy, H);
                for (int dx = -r; dx <= r; ++dx) {
                  int sw = reflect_index(w + dx, W);
                  gi[static_cast<std::int64_t>(sh) * W + sw] +=
                      g * kern[static_cast<size_t>((dy + r) * ksize + dx + r)];
                }
              }
            }
          }
        }
      });
}

Tensor bce_loss(const Tensor& prob, const Tensor& target) {
  check_same_shape(prob, target, "bce_loss");
  constexpr double kEps = 1e-7;
  const real* pp = prob.data();
  const real* pt = target.data();
  std::int64_t n = prob.size();
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double p = std::clamp(static_cast<double>(pp[i]), kEps, 1.0 - kEps);
    double y = static_cast<double>(pt[i]);
    acc += -(y * std::log(p) + (1.0 - y) * std::log(1.0 - p));
  }
  acc /= static_cast<double>(n);

  auto pn = prob.node();
  auto tn = target.node();
  return detail::make_op({1}, {static_cast<real>(acc)}, {prob, target},
                         [pn, tn, n](Node& self) {
                           if (!pn->requires_grad) return;
                           constexpr double eps = 1e-7;
                           double g = static_cast<double>(self.grad[0]) /
                                      static_cast<double>(n);
                           for (std::int64_t i = 0; i < n; ++i) {
                             double p = std::clamp(
                                 static_cast<double>(pn->value[static_cast<size_t>(i)]),
                                 eps, 1.0 - eps);
                             double y = static_cast<double>(
                                 tn->value[static_cast<size_t>(i)]);
                             pn->grad[static_cast<size_t>(i)] += static_cast<real>(
                                 g * (p - y) / (p * (1.0 - p)));
                           }
                         });
}

}  // namespace ssu::ops
