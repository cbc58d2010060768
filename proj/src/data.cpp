#include "ssu/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "ssu/image_io.hpp"
#include "ssu/ops.hpp"

namespace fs = std::filesystem;

namespace ssu {

SynthKind synth_kind_from_name(const std::string& name) {
  if (name == "vessel") return SynthKind::kVessel;
  if (name == "cell") return SynthKind::kCell;
  throw UsageError("unknown synthetic kind '" + name + "' (valid: vessel, cell)");
}

std::string synth_kind_name(SynthKind kind) {
  return kind == SynthKind::kVessel ? "vessel" : "cell";
}

SynthSpec SynthSpec::defaults(SynthKind kind, int size) {
  SynthSpec spec;
  spec.kind = kind;
  spec.height = spec.width = size;
  if (kind == SynthKind::kVessel) {
    spec.min_structures = 2;
    spec.max_structures = 4;
    spec.width_min = real(1.5);
    spec.width_max = real(3.5);
  } else {
    // Seed points of the cell lattice; counts scale with area.
    int base = std::max(6, size * size / 280);
    spec.min_structures = base;
    spec.max_structures = base * 2;
    spec.width_min = real(1.0);
    spec.width_max = real(2.0);
  }
  return spec;
}

void SynthSpec::validate() const {
  if (height < 8 || width < 8) throw ConfigError("synth: size must be >= 8");
  if (min_structures < 1 || max_structures < min_structures) {
    throw ConfigError("synth: empty structure count range");
  }
  if (!(width_min > real(0)) || width_max < width_min) {
    throw ConfigError("synth: empty width range");
  }
  if (noise_sigma < real(0) || illumination < real(0) || blur_sigma < real(0)) {
    throw ConfigError("synth: corruption magnitudes must be nonnegative");
  }
}

namespace {

struct Vec2 {
  double x, y;
};

Vec2 bezier3(const Vec2& p0, const Vec2& p1, const Vec2& p2, const Vec2& p3,
             double t) {
  double u = 1.0 - t;
  double b0 = u * u * u, b1 = 3 * u * u * t, b2 = 3 * u * t * t, b3 = t * t * t;
  return {b0 * p0.x + b1 * p1.x + b2 * p2.x + b3 * p3.x,
          b0 * p0.y + b1 * p1.y + b2 * p2.y + b3 * p3.y};
}

Vec2 bezier2(const Vec2& p0, const Vec2& p1, const Vec2& p2, double t) {
  double u = 1.0 - t;
  return {u * u * p0.x + 2 * u * t * p1.x + t * t * p2.x,
          u * u * p0.y + 2 * u * t * p1.y + t * t * p2.y};
}

void stamp_disk(std::vector<real>& mask, int H, int W, const Vec2& c, double radius) {
  int x0 = std::max(0, static_cast<int>(std::floor(c.x - radius)));
  int x1 = std::min(W - 1, static_cast<int>(std::ceil(c.x + radius)));
  int y0 = std::max(0, static_cast<int>(std::floor(c.y - radius)));
  int y1 = std::min(H - 1, static_cast<int>(std::ceil(c.y + radius)));
  double r2 = radius * radius;
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      double dx = x - c.x, dy = y - c.y;
      if (dx * dx + dy * dy <= r2) {
        mask[static_cast<size_t>(y) * W + x] = real(1);
      }
    }
  }
}

// Point on a random border side. side: 0 left, 1 right, 2 top, 3 bottom.
Vec2 border_point(int side, int H, int W, Rng& rng) {
  switch (side) {
    case 0: return {0.0, rng.uniform(0.0, H - 1.0)};
    case 1: return {W - 1.0, rng.uniform(0.0, H - 1.0)};
    case 2: return {rng.uniform(0.0, W - 1.0), 0.0};
    default: return {rng.uniform(0.0, W - 1.0), H - 1.0};
  }
}

void draw_vessels(std::vector<real>& mask, const SynthSpec& spec, Rng& rng) {
  int H = spec.height, W = spec.width;
  int n = spec.min_structures +
          rng.uniform_int(spec.max_structures - spec.min_structures + 1);
  int steps = 3 * std::max(H, W);
  for (int k = 0; k < n; ++k) {
    int side0 = rng.uniform_int(4);
    int side1 = (side0 + 1 + rng.uniform_int(3)) % 4;  // distinct side
    Vec2 p0 = border_point(side0, H, W, rng);
    Vec2 p3 = border_point(side1, H, W, rng);
    Vec2 p1 = {rng.uniform(0.15 * W, 0.85 * W), rng.uniform(0.15 * H, 0.85 * H)};
    Vec2 p2 = {rng.uniform(0.15 * W, 0.85 * W), rng.uniform(0.15 * H, 0.85 * H)};
    double w0 = rng.uniform(spec.width_min, spec.width_max);
    double w1 = rng.uniform(spec.width_min, spec.width_max);
    bool branch = rng.uniform() < 0.4;
    double tb = rng.uniform(0.3, 0.7);
    Vec2 branch_root{0, 0};
    double branch_width = 0.0;
    for (int i = 0; i <= steps; ++i) {
      double t = static_cast<double>(i) / steps;
      Vec2 p = bezier3(p0, p1, p2, p3, t);
      double w = w0 + (w1 - w0) * t;
      stamp_disk(mask, H, W, p, 0.5 * w);
      if (branch && t <= tb) {
        branch_root = p;
        branch_width = w;
      }
    }
    if (branch) {
      Vec2 q2 = border_point(rng.uniform_int(4), H, W, rng);
      Vec2 q1 = {rng.uniform(0.1 * W, 0.9 * W), rng.uniform(0.1 * H, 0.9 * H)};
      double bw = std::max(static_cast<double>(spec.width_min), 0.8 * branch_width);
      for (int i = 0; i <= steps; ++i) {
        double t = static_cast<double>(i) / steps;
        Vec2 p = bezier2(branch_root, q1, q2, t);
        stamp_disk(mask, H, W, p, 0.5 * bw * (1.0 - 0.3 * t));
      }
    }
  }
}

void draw_cells(std::vector<real>& mask, const SynthSpec& spec, Rng& rng) {
  int H = spec.height, W = spec.width;
  int n = spec.min_structures +
          rng.uniform_int(spec.max_structures - spec.min_structures + 1);
  double min_dist = 0.55 * std::sqrt(static_cast<double>(H) * W / n);
  std::vector<Vec2> seeds;
  for (int k = 0; k < n; ++k) {
    Vec2 p{0, 0};
    for (int attempt = 0; attempt < 24; ++attempt) {
      p = {rng.uniform(0.0, W - 1.0), rng.uniform(0.0, H - 1.0)};
      bool ok = true;
      for (const Vec2& s : seeds) {
        double dx = p.x - s.x, dy = p.y - s.y;
        if (dx * dx + dy * dy < min_dist * min_dist) {
          ok = false;
          break;
        }
      }
      if (ok) break;
    }
    seeds.push_back(p);
  }
  double wall = rng.uniform(spec.width_min, spec.width_max);
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double d1 = 1e18, d2 = 1e18;
      for (const Vec2& s : seeds) {
        double dx = x - s.x, dy = y - s.y;
        double d = std::sqrt(dx * dx + dy * dy);
        if (d < d1) {
          d2 = d1;
          d1 = d;
        } else if (d < d2) {
          d2 = d;
        }
      }
      // Band around the Voronoi bisectors; d2-d1 is ~2x the edge distance.
      if (d2 - d1 <= wall) mask[static_cast<size_t>(y) * W + x] = real(1);
    }
  }
}

}  // namespace

Sample gen_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  int H = spec.height, W = spec.width;
  Rng rng = Rng(seed).split("synth");

  std::vector<real> mask(static_cast<size_t>(H) * W, real(0));
  if (spec.kind == SynthKind::kVessel) {
    draw_vessels(mask, spec, rng);
  } else {
    draw_cells(mask, spec, rng);
  }

  // Two-level rendering: dark structures on a light background.
  constexpr double kFg = 0.25, kBg = 0.75;
  std::vector<real> img(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    img[i] = static_cast<real>(mask[i] > real(0.5) ? kFg : kBg);
  }

  if (spec.illumination > real(0)) {
    double theta = rng.uniform(0.0, 2.0 * M_PI);
    double cx = 0.5 * (W - 1), cy = 0.5 * (H - 1);
    double half_diag = 0.5 * std::sqrt(static_cast<double>(W - 1) * (W - 1) +
                                       static_cast<double>(H - 1) * (H - 1));
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double r = ((x - cx) * std::cos(theta) + (y - cy) * std::sin(theta)) /
                   half_diag;
        img[static_cast<size_t>(y) * W + x] = static_cast<real>(
            img[static_cast<size_t>(y) * W + x] *
            (1.0 + static_cast<double>(spec.illumination) * r));
      }
    }
  }

  if (spec.blur_sigma > real(0)) {
    NoGradGuard no_grad;
    int k = 2 * static_cast<int>(std::ceil(2.0 * spec.blur_sigma)) + 1;
    Tensor t = Tensor::from_data({1, 1, H, W}, img);
    t = ops::gaussian_blur(t, k, spec.blur_sigma);
    img.assign(t.data(), t.data() + t.size());
  }

  if (spec.noise_sigma > real(0)) {
    for (real& v : img) {
      v += static_cast<real>(static_cast<double>(spec.noise_sigma) * rng.normal());
    }
  }
  for (real& v : img) v = std::clamp(v, real(0), real(1));

  Sample sample;
  sample.image = Tensor::from_data({1, H, W}, std::move(img));
  sample.mask = Tensor::from_data({1, H, W}, std::move(mask));
  sample.id = synth_kind_name(spec.kind) + "_" + std::to_string(seed);
  sample.provenance =
      "synthetic:" + synth_kind_name(spec.kind) + ":" + std::to_string(seed);
  return sample;
}

std::vector<Sample> load_dataset(const std::string& root, const std::string& split,
                                 int divisor) {
  fs::path images_dir = fs::path(root) / split / "images";
  fs::path masks_dir = fs::path(root) / split / "masks";
  std::vector<Sample> out;
  if (!fs::exists(images_dir)) return out;

  std::vector<std::string> stems;
  for (const auto& entry : fs::directory_iterator(images_dir)) {
    if (entry.path().extension() == ".png") {
      stems.push_back(entry.path().stem().string());
    }
  }
  std::sort(stems.begin(), stems.end());

  for (const std::string& stem : stems) {
    fs::path img_path = images_dir / (stem + ".png");
    fs::path mask_path = masks_dir / (stem + ".png");
    if (!fs::exists(mask_path)) {
      throw IngestionError("image '" + stem + "' has no matching mask in " +
                           masks_dir.string());
    }
    Sample s;
    s.image = read_image_gray(img_path.string());
    Tensor raw_mask = read_image_gray(mask_path.string());
    if (raw_mask.shape() != s.image.shape()) {
      throw IngestionError("image/mask extents differ for stem '" + stem + "'");
    }
    if (divisor > 0 &&
        (s.image.dim(1) % divisor != 0 || s.image.dim(2) % divisor != 0)) {
      throw ConfigError("sample '" + stem + "' extents " +
                        std::to_string(s.image.dim(1)) + "x" +
                        std::to_string(s.image.dim(2)) +
                        " are not divisible by " + std::to_string(divisor));
    }
    std::vector<real> bin(static_cast<size_t>(raw_mask.size()));
    const real* p = raw_mask.data();
    for (std::int64_t i = 0; i < raw_mask.size(); ++i) {
      bin[static_cast<size_t>(i)] = p[i] >= real(0.5) ? real(1) : real(0);
    }
    s.mask = Tensor::from_data(raw_mask.shape(), std::move(bin));
    s.id = stem;
    s.provenance = "file:" + img_path.string();
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace ssu
