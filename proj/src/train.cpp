#include "ssu/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "ssu/ops.hpp"

namespace ssu {

void TrainConfig::validate() const {
  if (!(lr > real(0))) throw ConfigError("train: lr must be > 0");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (alpha1 < real(0) || alpha2 < real(0) || alpha3 < real(0) ||
      alphaF < real(0)) {
    throw ConfigError("train: loss weights must be nonnegative");
  }
  if (!(rms_decay >= real(0) && rms_decay < real(1))) {
    throw ConfigError("train: rms_decay must be in [0, 1)");
  }
  if (momentum < real(0) || weight_decay < real(0) || !(epsilon > real(0))) {
    throw ConfigError("train: invalid optimizer constants");
  }
  if (n_mc_train < 1) throw ConfigError("train: n_mc_train must be >= 1");
  if (t_samples < 1) throw ConfigError("train: t_samples must be >= 1");
}

OptState::OptState(const ModelParams& model) {
  sq_avg.reserve(model.params.size());
  momentum.reserve(model.params.size());
  for (const auto& [name, t] : model.params) {
    sq_avg.emplace_back(static_cast<size_t>(t.size()), real(0));
    momentum.emplace_back(static_cast<size_t>(t.size()), real(0));
  }
}

Tensor bce(const Tensor& prob, const Tensor& target) {
  return ops::bce_loss(prob, target);
}

LossReport total_loss(const PredictionBundle& bundle, const Tensor& target,
                      const TrainConfig& cfg) {
  cfg.validate();
  int H = target.dim(2), W = target.dim(3);
  Tensor l1 = bce(ops::sigmoid(bundle.y1), target);
  Tensor l2 = bce(ops::sigmoid(ops::upsample_bilinear(bundle.y2, H, W)), target);
  Tensor l3 = bce(ops::sigmoid(ops::upsample_bilinear(bundle.y3, H, W)), target);
  Tensor lf = bce(ops::sigmoid(bundle.yF), target);
  Tensor total = ops::add(ops::add(ops::affine(l1, cfg.alpha1, 0),
                                   ops::affine(l2, cfg.alpha2, 0)),
                          ops::add(ops::affine(l3, cfg.alpha3, 0),
                                   ops::affine(lf, cfg.alphaF, 0)));
  return {total, l1.item(), l2.item(), l3.item(), lf.item()};
}

Tensor heteroscedastic_loss(const Tensor& logits, const Tensor& log_var,
                            const Tensor& target, int t_samples, Rng& rng) {
  if (t_samples < 1) throw UsageError("heteroscedastic_loss: t_samples >= 1");
  if (logits.shape() != log_var.shape()) {
    throw UsageError("heteroscedastic_loss: logits/log_var shape mismatch");
  }
  Tensor noise_scale = ops::exp(ops::affine(log_var, real(0.5), 0));
  Tensor acc;
  for (int t = 0; t < t_samples; ++t) {
    std::vector<real> eps(static_cast<size_t>(logits.size()));
    for (real& e : eps) e = static_cast<real>(rng.normal());
    Tensor noise = Tensor::from_data(logits.shape(), std::move(eps));
    Tensor perturbed = ops::add(logits, ops::mul(noise, noise_scale));
    Tensor l = bce(ops::sigmoid(perturbed), target);
    acc = t == 0 ? l : ops::add(acc, l);
  }
  return ops::affine(acc, real(1) / static_cast<real>(t_samples), 0);
}

void rmsprop_step(ModelParams& model, OptState& state, const TrainConfig& cfg) {
  for (size_t k = 0; k < model.params.size(); ++k) {
    Tensor& t = model.params[k].second;
    if (!t.has_grad()) continue;
    real* w = t.data();
    const real* g = t.grad_data();
    real* s = state.sq_avg[k].data();
    real* m = state.momentum[k].data();
    for (std::int64_t i = 0; i < t.size(); ++i) {
      real gp = g[i] + cfg.weight_decay * w[i];
      s[i] = cfg.rms_decay * s[i] + (real(1) - cfg.rms_decay) * gp * gp;
      m[i] = cfg.momentum * m[i] +
             gp / static_cast<real>(std::sqrt(static_cast<double>(s[i]) +
                                              static_cast<double>(cfg.epsilon)));
      w[i] -= cfg.lr * m[i];
    }
  }
}

AffineDraw draw_affine(int height, int width, Rng& rng) {
  AffineDraw d;
  d.shift_x = rng.uniform(-0.3, 0.3) * width;
  d.shift_y = rng.uniform(-0.3, 0.3) * height;
  d.scale = rng.uniform(0.7, 1.3);
  return d;
}

namespace {

// Inverse of dst = scale*(src - center) + center + shift.
inline void src_coords(const AffineDraw& d, double cx, double cy, int x, int y,
                       double* sx, double* sy) {
  *sx = (x - cx - d.shift_x) / d.scale + cx;
  *sy = (y - cy - d.shift_y) / d.scale + cy;
}

}  // namespace

Tensor warp_bilinear(const Tensor& chw, const AffineDraw& d) {
  if (chw.ndim() != 3) throw UsageError("warp expects [C,H,W]");
  int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  double cx = 0.5 * (W - 1), cy = 0.5 * (H - 1);
  std::vector<real> out(static_cast<size_t>(chw.size()), real(0));
  const real* p = chw.data();
  for (int c = 0; c < C; ++c) {
    const real* plane = p + static_cast<std::int64_t>(c) * H * W;
    real* dst = out.data() + static_cast<std::int64_t>(c) * H * W;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double sx, sy;
        src_coords(d, cx, cy, x, y, &sx, &sy);
        int x0 = static_cast<int>(std::floor(sx));
        int y0 = static_cast<int>(std::floor(sy));
        double fx = sx - x0, fy = sy - y0;
        double acc = 0.0;
        for (int dy = 0; dy <= 1; ++dy) {
          for (int dx = 0; dx <= 1; ++dx) {
            int xx = x0 + dx, yy = y0 + dy;
            if (xx < 0 || xx >= W || yy < 0 || yy >= H) continue;  // zero pad
            double wgt = (dx ? fx : 1.0 - fx) * (dy ? fy : 1.0 - fy);
            acc += wgt * static_cast<double>(plane[static_cast<std::int64_t>(yy) * W + xx]);
          }
        }
        dst[static_cast<std::int64_t>(y) * W + x] = static_cast<real>(acc);
      }
    }
  }
  return Tensor::from_data(chw.shape(), std::move(out));
}

Tensor warp_nearest(const Tensor& chw, const AffineDraw& d) {
  if (chw.ndim() != 3) throw UsageError("warp expects [C,H,W]");
  int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);
  double cx = 0.5 * (W - 1), cy = 0.5 * (H - 1);
  std::vector<real> out(static_cast<size_t>(chw.size()), real(0));
  const real* p = chw.data();
  for (int c = 0; c < C; ++c) {
    const real* plane = p + static_cast<std::int64_t>(c) * H * W;
    real* dst = out.data() + static_cast<std::int64_t>(c) * H * W;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double sx, sy;
        src_coords(d, cx, cy, x, y, &sx, &sy);
        int xx = static_cast<int>(std::lround(sx));
        int yy = static_cast<int>(std::lround(sy));
        if (xx < 0 || xx >= W || yy < 0 || yy >= H) continue;
        dst[static_cast<std::int64_t>(y) * W + x] =
            plane[static_cast<std::int64_t>(yy) * W + xx];
      }
    }
  }
  return Tensor::from_data(chw.shape(), std::move(out));
}

Sample augment(const Sample& sample, Rng& rng) {
  AffineDraw d = draw_affine(sample.image.dim(1), sample.image.dim(2), rng);
  Sample out;
  out.image = warp_bilinear(sample.image, d);
  out.mask = warp_nearest(sample.mask, d);
  out.id = sample.id;
  out.provenance = sample.provenance;
  return out;
}

void write_log_header(std::ostream& os) {
  os << "epoch,iter,L_s1,L_s2,L_s3,L_F,L_total,lr\n";
}

namespace {

void write_log_row(std::ostream* os, int epoch, int iter, double l1, double l2,
                   double l3, double lf, double total, double lr) {
  if (!os) return;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", epoch,
                iter, l1, l2, l3, lf, total, lr);
  *os << buf;
}

std::vector<int> epoch_order(size_t n, Rng& rng) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<size_t>(rng.uniform_int(
                                static_cast<int>(i)))]);
  }
  return order;
}

Tensor batch_of_one(const Tensor& chw) {
  Shape s = chw.shape();
  return Tensor::from_data({1, s[0], s[1], s[2]},
                           std::vector<real>(chw.data(), chw.data() + chw.size()));
}

void zero_grads(ModelParams& model) {
  for (auto& [name, t] : model.params) {
    if (t.has_grad()) t.zero_grad();
  }
}

}  // namespace

Stage1Result train_stage1(const std::vector<Sample>& dataset, const TrainConfig& cfg,
                          ArchConfig arch, std::uint64_t seed,
                          std::ostream* log_csv) {
  if (dataset.empty()) throw UsageError("train_stage1: empty dataset");
  cfg.validate();
  arch.with_gsua = false;
  arch.with_msua = false;
  arch.with_aleatoric_head = true;

  Rng master(seed);
  ModelParams model = build_model(arch, Stage::kBayesian, master.split("model1").seed());
  OptState state(model);
  Rng train_rng = master.split("train1");
  if (log_csv) write_log_header(*log_csv);

  int iter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = epoch_order(dataset.size(), train_rng);
    for (int idx : order) {
      Sample s = dataset[static_cast<size_t>(idx)];
      if (cfg.augment) s = augment(s, train_rng);
      Tensor image = batch_of_one(s.image);
      Tensor target = batch_of_one(s.mask);
      PredictionBundle bundle =
          forward(model, image, nullptr, /*stochastic=*/true, train_rng);
      Tensor loss = heteroscedastic_loss(bundle.y1, bundle.v, target,
                                         cfg.t_samples, train_rng);
      double lv = static_cast<double>(loss.item());
      zero_grads(model);
      loss.backward();
      rmsprop_step(model, state, cfg);
      write_log_row(log_csv, epoch, iter, lv, 0, 0, 0, lv,
                    static_cast<double>(cfg.lr));
      ++iter;
    }
  }

  Stage1Result result{std::move(model), {}};
  result.maps.reserve(dataset.size());
  Rng map_rng = master.split("maps1");
  for (size_t i = 0; i < dataset.size(); ++i) {
    Tensor image = batch_of_one(dataset[i].image);
    Tensor target = batch_of_one(dataset[i].mask);
    McSamples samples =
        mc_sample(result.model, image, cfg.n_mc_train, map_rng.split(i));
    result.maps.push_back(
        spatial_uncertainty(samples, target, UncertaintyMode::kGtCentered));
  }
  return result;
}

ModelParams train_stage2(const std::vector<Sample>& dataset,
                         const std::vector<UncertaintyMaps>& maps,
                         const TrainConfig& cfg, ArchConfig arch,
                         std::uint64_t seed, std::ostream* log_csv) {
  if (dataset.empty()) throw UsageError("train_stage2: empty dataset");
  cfg.validate();
  if (arch.with_gsua && maps.size() != dataset.size()) {
    throw UsageError("train_stage2: GSUA needs one uncertainty map per image (" +
                     std::to_string(maps.size()) + " maps, " +
                     std::to_string(dataset.size()) + " images)");
  }

  Rng master(seed);
  ModelParams model = build_model(arch, Stage::kSsu, master.split("model2").seed());
  OptState state(model);
  Rng train_rng = master.split("train2");
  if (log_csv) write_log_header(*log_csv);

  int iter = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int> order = epoch_order(dataset.size(), train_rng);
    for (int idx : order) {
      const Sample& s0 = dataset[static_cast<size_t>(idx)];
      Tensor image_chw = s0.image;
      Tensor mask_chw = s0.mask;
      UncertaintyMaps umaps;
      if (arch.with_gsua) umaps = maps[static_cast<size_t>(idx)];
      if (cfg.augment) {
        AffineDraw d = draw_affine(image_chw.dim(1), image_chw.dim(2), train_rng);
        image_chw = warp_bilinear(image_chw, d);
        mask_chw = warp_nearest(mask_chw, d);
        if (arch.with_gsua) {
          // Keep the cached maps aligned with the warped image.
          auto warp_map = [&d](const Tensor& nchw) {
            Shape s = nchw.shape();
            Tensor chw = ops::reshape(nchw.detach(), {s[1], s[2], s[3]});
            return ops::reshape(warp_bilinear(chw, d), s);
          };
          NoGradGuard no_grad;
          umaps.u_e = warp_map(umaps.u_e);
          umaps.u_a = warp_map(umaps.u_a);
        }
      }
      Tensor image = batch_of_one(image_chw);
      Tensor target = batch_of_one(mask_chw);
      PredictionBundle bundle = forward(model, image,
                                        arch.with_gsua ? &umaps : nullptr,
                                        /*stochastic=*/true, train_rng);
      LossReport report = total_loss(bundle, target, cfg);
      double lv = static_cast<double>(report.total.item());
      zero_grads(model);
      report.total.backward();
      rmsprop_step(model, state, cfg);
      write_log_row(log_csv, epoch, iter, report.l_s1, report.l_s2, report.l_s3,
                    report.l_f, lv, static_cast<double>(cfg.lr));
      ++iter;
    }
  }
  return model;
}

}  // namespace ssu
