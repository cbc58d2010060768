#include "ssu/backbone.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ssu/msua.hpp"
#include "ssu/ops.hpp"

namespace ssu {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

std::string stage_name(Stage stage) {
  return stage == Stage::kBayesian ? "bayesian" : "ssu";
}

Stage stage_from_name(const std::string& name) {
  if (name == "bayesian") return Stage::kBayesian;
  if (name == "ssu") return Stage::kSsu;
  throw IntegrityError("unknown stage name '" + name + "'");
}

void ArchConfig::validate() const {
  if (in_channels < 1) throw ConfigError("arch: in_channels must be >= 1");
  if (base_width < 1) throw ConfigError("arch: base_width must be >= 1");
  if (depth < 2) throw ConfigError("arch: depth must be >= 2");
  if (!(dropout_rate >= real(0) && dropout_rate < real(1))) {
    throw ConfigError("arch: dropout_rate must be in [0, 1)");
  }
  if (gsua_ksize < 1 || gsua_ksize % 2 == 0) {
    throw ConfigError("arch: gsua_ksize must be odd");
  }
  if (!(gsua_sigma > real(0))) throw ConfigError("arch: gsua_sigma must be > 0");
}

Tensor& ModelParams::at(const std::string& name) {
  for (auto& [n, t] : params) {
    if (n == name) return t;
  }
  throw UsageError("model has no parameter '" + name + "'");
}

const Tensor& ModelParams::at(const std::string& name) const {
  return const_cast<ModelParams*>(this)->at(name);
}

bool ModelParams::has(const std::string& name) const {
  for (const auto& [n, t] : params) {
    if (n == name) return true;
  }
  return false;
}

std::int64_t ModelParams::param_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

namespace {

struct LayerSpec {
  std::string name;
  Shape shape;
};

int enc_out_channels(const ArchConfig& a, int i) {
  return a.base_width << (i - 1);
}

// Declaration order of every parameter tensor; drives init, checkpointing
// and structural validation.
std::vector<LayerSpec> layer_specs(const ArchConfig& a) {
  std::vector<LayerSpec> specs;
  auto conv = [&specs](const std::string& name, int cout, int cin, int k) {
    specs.push_back({name + ".weight", {cout, cin, k, k}});
    specs.push_back({name + ".bias", {cout}});
  };
  for (int i = 1; i <= a.depth; ++i) {
    int cin = i == 1 ? a.in_channels : enc_out_channels(a, i - 1);
    int cout = enc_out_channels(a, i);
    conv("enc" + std::to_string(i) + ".conv1", cout, cin, 3);
    conv("enc" + std::to_string(i) + ".conv2", cout, cout, 3);
  }
  int bottleneck_out = a.base_width << a.depth;
  conv("bottleneck.conv1", bottleneck_out, enc_out_channels(a, a.depth), 3);
  conv("bottleneck.conv2", bottleneck_out, bottleneck_out, 3);
  for (int i = a.depth; i >= 1; --i) {
    int above = i == a.depth ? bottleneck_out : enc_out_channels(a, i + 1);
    int cout = enc_out_channels(a, i);
    conv("dec" + std::to_string(i) + ".conv1", cout, above + cout, 3);
    conv("dec" + std::to_string(i) + ".conv2", cout, cout, 3);
  }
  // Side heads live on the stages whose outputs sit at scales 1, 1/2, 1/4;
  // for depth 2 the 1/4-scale head attaches to the bottleneck, which has the
  // same channel count as a third decoder stage would.
  for (int s = 1; s <= 3; ++s) {
    int cin = s <= a.depth ? enc_out_channels(a, s)
                           : a.base_width << std::min(s - 1, a.depth);
    conv("head" + std::to_string(s), 1, cin, 1);
  }
  if (a.with_aleatoric_head) conv("aleatoric", 1, enc_out_channels(a, 1), 1);
  if (a.with_gsua) {
    for (int i = 1; i <= a.depth; ++i) {
      conv("gsua" + std::to_string(i), 1, 2, 1);
    }
  }
  return specs;
}

Tensor init_layer(const LayerSpec& spec, const Rng& master) {
  Tensor t = Tensor::zeros(spec.shape, true);
  if (spec.shape.size() == 4) {
    // Kaiming fan-in uniform; biases stay zero.
    std::int64_t fan_in = static_cast<std::int64_t>(spec.shape[1]) *
                          spec.shape[2] * spec.shape[3];
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Rng rng = master.split(spec.name);
    real* p = t.data();
    for (std::int64_t i = 0; i < t.size(); ++i) {
      p[i] = static_cast<real>(rng.uniform(-bound, bound));
    }
  }
  return t;
}

std::string fmt_real(real v) {
  char buf[64];
#ifdef SSU_REAL64
  std::snprintf(buf, sizeof buf, "%.17g", static_cast<double>(v));
#else
  std::snprintf(buf, sizeof buf, "%.9g", static_cast<double>(v));
#endif
  return buf;
}

}  // namespace

ModelParams build_model(const ArchConfig& arch, Stage stage, std::uint64_t seed) {
  arch.validate();
  ModelParams model;
  model.arch = arch;
  model.stage = stage;
  Rng master(seed);
  for (const LayerSpec& spec : layer_specs(arch)) {
    model.params.emplace_back(spec.name, init_layer(spec, master));
  }
  return model;
}

namespace {

Tensor conv_block(const ModelParams& m, const std::string& name, const Tensor& x,
                  bool stochastic, Rng& rng) {
  Tensor h = ops::relu(
      ops::conv2d(x, m.at(name + ".conv1.weight"), m.at(name + ".conv1.bias"), 1, 1));
  h = ops::relu(
      ops::conv2d(h, m.at(name + ".conv2.weight"), m.at(name + ".conv2.bias"), 1, 1));
  return ops::dropout(h, m.arch.dropout_rate, stochastic, rng);
}

Tensor head(const ModelParams& m, const std::string& name, const Tensor& x) {
  return ops::conv2d(x, m.at(name + ".weight"), m.at(name + ".bias"), 1, 0);
}

}  // namespace

PredictionBundle forward(const ModelParams& model, const Tensor& image,
                         const UncertaintyMaps* u_maps, bool stochastic,
                         Rng& rng, ForwardTrace* trace) {
  const ArchConfig& a = model.arch;
  if (image.ndim() != 4 || image.dim(1) != a.in_channels) {
    throw UsageError("forward: image must be [N," + std::to_string(a.in_channels) +
                     ",H,W], got " + shape_str(image.shape()));
  }
  int H = image.dim(2), W = image.dim(3);
  int div = a.required_divisor();
  if (H % div != 0 || W % div != 0) {
    throw ConfigError("forward: input extents must be divisible by " +
                      std::to_string(div));
  }
  bool needs_maps = a.with_gsua && model.stage == Stage::kSsu;
  if (needs_maps && (!u_maps || !u_maps->defined())) {
    throw UsageError("forward: GSUA model requires uncertainty maps");
  }

  Tensor x = image;
  std::vector<Tensor> skips;
  for (int i = 1; i <= a.depth; ++i) {
    x = conv_block(model, "enc" + std::to_string(i), x, stochastic, rng);
    if (needs_maps) {
      GsuaParams gp;
      gp.conv_weight = model.at("gsua" + std::to_string(i) + ".weight");
      gp.conv_bias = model.at("gsua" + std::to_string(i) + ".bias");
      gp.gaussian_ksize = a.gsua_ksize;
      gp.gaussian_sigma = a.gsua_sigma;
      Tensor attention;
      x = gsua_forward(x, *u_maps, gp, trace ? &attention : nullptr);
      if (trace) trace->attention_maps.push_back(attention);
    }
    if (trace) trace->encoder_outputs.push_back(x);
    skips.push_back(x);
    x = ops::pool2d(x, ops::PoolMode::kMax, 2, 2);
  }
  x = conv_block(model, "bottleneck", x, stochastic, rng);
  Tensor bottleneck_out = x;

  std::vector<Tensor> dec_out(static_cast<size_t>(a.depth) + 1);
  for (int i = a.depth; i >= 1; --i) {
    const Tensor& skip = skips[static_cast<size_t>(i - 1)];
    x = ops::upsample_bilinear(x, skip.dim(2), skip.dim(3));
    x = ops::concat_channels(x, skip);
    x = conv_block(model, "dec" + std::to_string(i), x, stochastic, rng);
    dec_out[static_cast<size_t>(i)] = x;
  }

  PredictionBundle bundle;
  bundle.y1 = head(model, "head1", dec_out[1]);
  bundle.y2 = head(model, "head2", dec_out[2]);
  bundle.y3 = head(model, "head3", a.depth >= 3 ? dec_out[3] : bottleneck_out);
  if (a.with_msua) {
    bundle.yF = msua_fuse(bundle.y1, ops::upsample_bilinear(bundle.y2, H, W),
                          ops::upsample_bilinear(bundle.y3, H, W));
  } else {
    bundle.yF = bundle.y1;
  }
  if (a.with_aleatoric_head) bundle.v = head(model, "aleatoric", dec_out[1]);
  return bundle;
}

void save_checkpoint(const ModelParams& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  const ArchConfig& a = model.arch;
  out << "SSUNETCKPT1\n";
  out << "stage=" << stage_name(model.stage) << "\n";
  out << "in_channels=" << a.in_channels << "\n";
  out << "base_width=" << a.base_width << "\n";
  out << "depth=" << a.depth << "\n";
  out << "dropout_rate=" << fmt_real(a.dropout_rate) << "\n";
  out << "with_gsua=" << (a.with_gsua ? 1 : 0) << "\n";
  out << "with_msua=" << (a.with_msua ? 1 : 0) << "\n";
  out << "with_aleatoric_head=" << (a.with_aleatoric_head ? 1 : 0) << "\n";
  out << "gsua_ksize=" << a.gsua_ksize << "\n";
  out << "gsua_sigma=" << fmt_real(a.gsua_sigma) << "\n";
  out << "---\n";
  for (const auto& [name, t] : model.params) {
    out << "tensor " << name << " " << t.ndim();
    for (int i = 0; i < t.ndim(); ++i) out << " " << t.dim(i);
    out << "\n";
    const real* p = t.data();
    std::vector<float> buf(static_cast<size_t>(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i) {
      buf[static_cast<size_t>(i)] = static_cast<float>(p[i]);
    }
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw IoError("write failure on '" + path + "'");
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "SSUNETCKPT1") {
    throw IntegrityError("'" + path + "' is not an SSUNETCKPT1 checkpoint");
  }
  ArchConfig arch;
  Stage stage = Stage::kSsu;
  while (std::getline(in, line)) {
    if (line == "---") break;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IntegrityError("malformed checkpoint config line '" + line + "'");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    if (key == "stage") {
      stage = stage_from_name(value);
    } else if (key == "in_channels") {
      arch.in_channels = std::stoi(value);
    } else if (key == "base_width") {
      arch.base_width = std::stoi(value);
    } else if (key == "depth") {
      arch.depth = std::stoi(value);
    } else if (key == "dropout_rate") {
      arch.dropout_rate = static_cast<real>(std::stod(value));
    } else if (key == "with_gsua") {
      arch.with_gsua = value == "1";
    } else if (key == "with_msua") {
      arch.with_msua = value == "1";
    } else if (key == "with_aleatoric_head") {
      arch.with_aleatoric_head = value == "1";
    } else if (key == "gsua_ksize") {
      arch.gsua_ksize = std::stoi(value);
    } else if (key == "gsua_sigma") {
      arch.gsua_sigma = static_cast<real>(std::stod(value));
    } else {
      throw IntegrityError("unknown checkpoint config key '" + key + "'");
    }
  }
  try {
    arch.validate();
  } catch (const ConfigError& e) {
    throw IntegrityError(std::string("checkpoint arch invalid: ") + e.what());
  }

  ModelParams model;
  model.arch = arch;
  model.stage = stage;
  for (const LayerSpec& spec : layer_specs(arch)) {
    if (!std::getline(in, line)) {
      throw IntegrityError("checkpoint truncated before tensor '" + spec.name + "'");
    }
    std::istringstream hs(line);
    std::string tag, name;
    int ndim = 0;
    hs >> tag >> name >> ndim;
    if (tag != "tensor" || name != spec.name ||
        ndim != static_cast<int>(spec.shape.size())) {
      throw IntegrityError("checkpoint layout mismatch: expected tensor '" +
                           spec.name + "', got '" + line + "'");
    }
    Shape shape(static_cast<size_t>(ndim));
    for (int i = 0; i < ndim; ++i) hs >> shape[static_cast<size_t>(i)];
    if (shape != spec.shape) {
      throw IntegrityError("checkpoint shape mismatch for '" + spec.name +
                           "': expected " + shape_str(spec.shape) + ", got " +
                           shape_str(shape));
    }
    std::vector<float> buf(static_cast<size_t>(numel(shape)));
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw IntegrityError("checkpoint payload truncated at '" + spec.name + "'");
    std::vector<real> data(buf.size());
    for (size_t i = 0; i < buf.size(); ++i) data[i] = static_cast<real>(buf[i]);
    model.params.emplace_back(spec.name,
                              Tensor::from_data(spec.shape, std::move(data), true));
  }
  if (std::getline(in, line) && !line.empty()) {
    throw IntegrityError("trailing data after last tensor in '" + path + "'");
  }
  return model;
}

}  // namespace ssu
