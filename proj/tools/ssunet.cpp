// Command-line front end: synth | train | predict | eval.
#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <map>
#include <string>
#include <vector>

#include "ssu/backbone.hpp"
#include "ssu/config.hpp"
#include "ssu/data.hpp"
#include "ssu/image_io.hpp"
#include "ssu/metrics.hpp"
#include "ssu/ops.hpp"
#include "ssu/pipeline.hpp"
#include "ssu/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string pad_index(int i, int width = 4) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%0*d", width, i);
  return buf;
}

// ---------------------------------------------------------------- synth ---

struct SynthArgs {
  std::string out_dir;
  std::string kind = "vessel";
  int count = 16;
  int size = 64;
  std::uint64_t seed = 0;
  std::string split = "0.5,0.25,0.25";
  double noise_sigma = -1, illumination = -1, blur_sigma = -1;
  double width_min = -1, width_max = -1;
  int min_structures = -1, max_structures = -1;
};

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> fr;
  std::string tok;
  std::istringstream in(text);
  while (std::getline(in, tok, ',')) {
    try {
      fr.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ssu::UsageError("invalid split fraction '" + tok + "'");
    }
  }
  if (fr.size() != 3) {
    throw ssu::UsageError("--split needs three comma-separated fractions");
  }
  double sum = fr[0] + fr[1] + fr[2];
  if (fr[0] < 0 || fr[1] < 0 || fr[2] < 0 || std::abs(sum - 1.0) > 1e-6) {
    throw ssu::UsageError("split fractions must be nonnegative and sum to 1");
  }
  return fr;
}

int run_synth(const SynthArgs& args) {
  if (args.count < 1) throw ssu::UsageError("--count must be >= 1");
  ssu::SynthKind kind = ssu::synth_kind_from_name(args.kind);
  ssu::SynthSpec spec = ssu::SynthSpec::defaults(kind, args.size);
  if (args.noise_sigma >= 0) spec.noise_sigma = static_cast<ssu::real>(args.noise_sigma);
  if (args.illumination >= 0) spec.illumination = static_cast<ssu::real>(args.illumination);
  if (args.blur_sigma >= 0) spec.blur_sigma = static_cast<ssu::real>(args.blur_sigma);
  if (args.width_min > 0) spec.width_min = static_cast<ssu::real>(args.width_min);
  if (args.width_max > 0) spec.width_max = static_cast<ssu::real>(args.width_max);
  if (args.min_structures > 0) spec.min_structures = args.min_structures;
  if (args.max_structures > 0) spec.max_structures = args.max_structures;
  spec.validate();

  std::vector<double> fr = parse_fractions(args.split);
  int n_train = static_cast<int>(std::floor(fr[0] * args.count));
  int n_val = static_cast<int>(std::floor(fr[1] * args.count));

  ssu::Rng master(args.seed);
  std::error_code ec;
  for (int i = 0; i < args.count; ++i) {
    ssu::Sample s =
        ssu::gen_synthetic(spec, master.split(static_cast<std::uint64_t>(i)).seed());
    std::string split_name = i < n_train ? "train" : (i < n_train + n_val ? "val" : "test");
    fs::path base = fs::path(args.out_dir) / split_name;
    fs::create_directories(base / "images", ec);
    fs::create_directories(base / "masks", ec);
    if (ec) throw ssu::IoError("cannot create output directories under " + args.out_dir);
    std::string stem = args.kind + "_" + pad_index(i);
    ssu::write_image_gray(s.image, (base / "images" / (stem + ".png")).string());
    ssu::write_image_gray(s.mask, (base / "masks" / (stem + ".png")).string());
  }
  std::cout << "wrote " << args.count << " " << args.kind << " samples to "
            << args.out_dir << " (train/val/test = " << n_train << "/" << n_val
            << "/" << args.count - n_train - n_val << ")\n";
  return 0;
}

// ---------------------------------------------------------------- train ---

struct Settings {
  ssu::ArchConfig arch;
  ssu::TrainConfig train;
  int n_passes = 16;
  double threshold = 0.5;

  Settings() {
    // The full SSU-Net is the default; --no-gsua/--no-msua carve out the
    // ablation variants.
    arch.with_gsua = true;
    arch.with_msua = true;
  }
};

void apply_config_file(Settings& s, const ssu::KeyValueConfig& cfg) {
  auto arch_key = [&](const char* key, auto setter) {
    if (cfg.has("arch", key)) setter();
  };
  arch_key("in_channels", [&] { s.arch.in_channels = cfg.get_int("arch", "in_channels"); });
  arch_key("base_width", [&] { s.arch.base_width = cfg.get_int("arch", "base_width"); });
  arch_key("depth", [&] { s.arch.depth = cfg.get_int("arch", "depth"); });
  arch_key("dropout_rate", [&] {
    s.arch.dropout_rate = static_cast<ssu::real>(cfg.get_double("arch", "dropout_rate"));
  });
  arch_key("gsua", [&] { s.arch.with_gsua = cfg.get_bool("arch", "gsua"); });
  arch_key("msua", [&] { s.arch.with_msua = cfg.get_bool("arch", "msua"); });
  arch_key("gsua_ksize", [&] { s.arch.gsua_ksize = cfg.get_int("arch", "gsua_ksize"); });
  arch_key("gsua_sigma", [&] {
    s.arch.gsua_sigma = static_cast<ssu::real>(cfg.get_double("arch", "gsua_sigma"));
  });
  static const std::vector<std::string> arch_keys{
      "in_channels", "base_width", "depth", "dropout_rate",
      "gsua", "msua", "gsua_ksize", "gsua_sigma"};
  static const std::vector<std::string> train_keys{
      "lr", "momentum", "weight_decay", "rms_decay", "epsilon", "epochs",
      "batch_size", "alpha1", "alpha2", "alpha3", "alphaF", "augment",
      "n_mc_train", "t_samples"};
  static const std::vector<std::string> infer_keys{"n_passes", "threshold"};
  for (const auto& [section, kv] : cfg.sections()) {
    const std::vector<std::string>* known = nullptr;
    if (section == "arch") known = &arch_keys;
    else if (section == "train") known = &train_keys;
    else if (section == "infer") known = &infer_keys;
    else throw ssu::UsageError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : kv) {
      if (std::find(known->begin(), known->end(), key) == known->end()) {
        std::string valid;
        for (const auto& k : *known) valid += (valid.empty() ? "" : ", ") + k;
        throw ssu::UsageError("config: unknown key '" + key + "' in [" + section +
                              "] (valid: " + valid + ")");
      }
    }
  }
  auto train_key = [&](const char* key, auto setter) {
    if (cfg.has("train", key)) setter();
  };
  train_key("lr", [&] { s.train.lr = static_cast<ssu::real>(cfg.get_double("train", "lr")); });
  train_key("momentum", [&] {
    s.train.momentum = static_cast<ssu::real>(cfg.get_double("train", "momentum"));
  });
  train_key("weight_decay", [&] {
    s.train.weight_decay = static_cast<ssu::real>(cfg.get_double("train", "weight_decay"));
  });
  train_key("rms_decay", [&] {
    s.train.rms_decay = static_cast<ssu::real>(cfg.get_double("train", "rms_decay"));
  });
  train_key("epsilon", [&] {
    s.train.epsilon = static_cast<ssu::real>(cfg.get_double("train", "epsilon"));
  });
  train_key("epochs", [&] { s.train.epochs = cfg.get_int("train", "epochs"); });
  train_key("batch_size", [&] { s.train.batch_size = cfg.get_int("train", "batch_size"); });
  train_key("alpha1", [&] { s.train.alpha1 = static_cast<ssu::real>(cfg.get_double("train", "alpha1")); });
  train_key("alpha2", [&] { s.train.alpha2 = static_cast<ssu::real>(cfg.get_double("train", "alpha2")); });
  train_key("alpha3", [&] { s.train.alpha3 = static_cast<ssu::real>(cfg.get_double("train", "alpha3")); });
  train_key("alphaF", [&] { s.train.alphaF = static_cast<ssu::real>(cfg.get_double("train", "alphaF")); });
  train_key("augment", [&] { s.train.augment = cfg.get_bool("train", "augment"); });
  train_key("n_mc_train", [&] { s.train.n_mc_train = cfg.get_int("train", "n_mc_train"); });
  train_key("t_samples", [&] { s.train.t_samples = cfg.get_int("train", "t_samples"); });
  if (cfg.has("infer", "n_passes")) s.n_passes = cfg.get_int("infer", "n_passes");
  if (cfg.has("infer", "threshold")) s.threshold = cfg.get_double("infer", "threshold");
}

ssu::KeyValueConfig settings_to_config(const Settings& s) {
  ssu::KeyValueConfig cfg;
  cfg.set("arch", "in_channels", std::to_string(s.arch.in_channels));
  cfg.set("arch", "base_width", std::to_string(s.arch.base_width));
  cfg.set("arch", "depth", std::to_string(s.arch.depth));
  cfg.set("arch", "dropout_rate", fmt_g(s.arch.dropout_rate));
  cfg.set("arch", "gsua", s.arch.with_gsua ? "true" : "false");
  cfg.set("arch", "msua", s.arch.with_msua ? "true" : "false");
  cfg.set("arch", "gsua_ksize", std::to_string(s.arch.gsua_ksize));
  cfg.set("arch", "gsua_sigma", fmt_g(s.arch.gsua_sigma));
  cfg.set("train", "lr", fmt_g(s.train.lr));
  cfg.set("train", "momentum", fmt_g(s.train.momentum));
  cfg.set("train", "weight_decay", fmt_g(s.train.weight_decay));
  cfg.set("train", "rms_decay", fmt_g(s.train.rms_decay));
  cfg.set("train", "epsilon", fmt_g(s.train.epsilon));
  cfg.set("train", "epochs", std::to_string(s.train.epochs));
  cfg.set("train", "batch_size", std::to_string(s.train.batch_size));
  cfg.set("train", "alpha1", fmt_g(s.train.alpha1));
  cfg.set("train", "alpha2", fmt_g(s.train.alpha2));
  cfg.set("train", "alpha3", fmt_g(s.train.alpha3));
  cfg.set("train", "alphaF", fmt_g(s.train.alphaF));
  cfg.set("train", "augment", s.train.augment ? "true" : "false");
  cfg.set("train", "n_mc_train", std::to_string(s.train.n_mc_train));
  cfg.set("train", "t_samples", std::to_string(s.train.t_samples));
  cfg.set("infer", "n_passes", std::to_string(s.n_passes));
  cfg.set("infer", "threshold", fmt_g(s.threshold));
  return cfg;
}

struct TrainArgs {
  std::string data_dir, out_dir, config_file, stage1_dir;
  std::string stage = "both";
  std::uint64_t seed = 0;
};

void save_maps(const std::vector<ssu::Sample>& dataset,
               const std::vector<ssu::UncertaintyMaps>& maps, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ssu::IoError("cannot create " + dir.string());
  for (size_t i = 0; i < dataset.size(); ++i) {
    ssu::Tensor ue = ssu::ops::reshape(maps[i].u_e.detach(),
                                       {1, maps[i].u_e.dim(2), maps[i].u_e.dim(3)});
    ssu::Tensor ua = ssu::ops::reshape(maps[i].u_a.detach(),
                                       {1, maps[i].u_a.dim(2), maps[i].u_a.dim(3)});
    ssu::write_raw_plane(ue, (dir / (dataset[i].id + "_ue.raw")).string());
    ssu::write_raw_plane(ua, (dir / (dataset[i].id + "_ua.raw")).string());
  }
}

std::vector<ssu::UncertaintyMaps> load_maps(const std::vector<ssu::Sample>& dataset,
                                            const fs::path& dir) {
  std::vector<ssu::UncertaintyMaps> maps;
  maps.reserve(dataset.size());
  for (const ssu::Sample& s : dataset) {
    fs::path ue = dir / (s.id + "_ue.raw");
    fs::path ua = dir / (s.id + "_ua.raw");
    if (!fs::exists(ue) || !fs::exists(ua)) {
      throw ssu::UsageError("missing stage-1 uncertainty maps for image '" + s.id +
                            "' under " + dir.string() +
                            " (run stage 1 first or use --stage both)");
    }
    ssu::Tensor te = ssu::read_raw_plane(ue.string());
    ssu::Tensor ta = ssu::read_raw_plane(ua.string());
    ssu::UncertaintyMaps m;
    m.u_e = ssu::ops::reshape(te, {1, 1, te.dim(1), te.dim(2)});
    m.u_a = ssu::ops::reshape(ta, {1, 1, ta.dim(1), ta.dim(2)});
    maps.push_back(std::move(m));
  }
  return maps;
}

int run_train(const TrainArgs& args, const Settings& settings) {
  if (args.stage != "1" && args.stage != "2" && args.stage != "both") {
    throw ssu::UsageError("--stage must be 1, 2 or both");
  }
  Settings s = settings;
  s.arch.validate();
  s.train.validate();

  std::vector<ssu::Sample> dataset =
      ssu::load_dataset(args.data_dir, "train", s.arch.required_divisor());
  if (dataset.empty()) {
    throw ssu::UsageError("no training samples under " + args.data_dir + "/train");
  }

  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec) throw ssu::IoError("cannot create " + args.out_dir);
  {
    std::ofstream echo(fs::path(args.out_dir) / "config_used.cfg");
    if (!echo) throw ssu::IoError("cannot write config echo");
    ssu::KeyValueConfig cfg = settings_to_config(s);
    cfg.set("run", "stage", args.stage);
    cfg.set("run", "seed", std::to_string(args.seed));
    echo << cfg.serialize();
  }

  fs::path out(args.out_dir);
  if (args.stage == "1" || args.stage == "both") {
    std::ofstream log(out / "stage1_log.csv");
    ssu::Stage1Result r1 = ssu::train_stage1(dataset, s.train, s.arch, args.seed, &log);
    ssu::save_checkpoint(r1.model, (out / "stage1.ckpt").string());
    save_maps(dataset, r1.maps, out / "maps");
    std::cout << "stage1: " << r1.model.param_count() << " parameters, checkpoint "
              << (out / "stage1.ckpt").string() << "\n";
    if (args.stage == "both") {
      std::ofstream log2(out / "stage2_log.csv");
      ssu::ModelParams m2 =
          ssu::train_stage2(dataset, r1.maps, s.train, s.arch, args.seed, &log2);
      ssu::save_checkpoint(m2, (out / "stage2.ckpt").string());
      std::cout << "stage2: " << m2.param_count() << " parameters, checkpoint "
                << (out / "stage2.ckpt").string() << "\n";
    }
    return 0;
  }

  // stage == "2"
  std::vector<ssu::UncertaintyMaps> maps;
  if (s.arch.with_gsua) {
    fs::path maps_dir =
        (args.stage1_dir.empty() ? out : fs::path(args.stage1_dir)) / "maps";
    maps = load_maps(dataset, maps_dir);
  }
  std::ofstream log2(out / "stage2_log.csv");
  ssu::ModelParams m2 = ssu::train_stage2(dataset, maps, s.train, s.arch, args.seed, &log2);
  ssu::save_checkpoint(m2, (out / "stage2.ckpt").string());
  std::cout << "stage2: " << m2.param_count() << " parameters, checkpoint "
            << (out / "stage2.ckpt").string() << "\n";
  return 0;
}

// -------------------------------------------------------------- predict ---

struct PredictArgs {
  std::string checkpoint_s1, checkpoint_s2, input, out_dir;
  int n_passes = 16;
  double threshold = 0.5;
  std::uint64_t seed = 0;
};

struct PredictItem {
  std::string stem;
  ssu::Tensor image;  // [1,H,W]
  ssu::Tensor mask;   // optional GT
};

std::vector<PredictItem> collect_inputs(const std::string& input) {
  std::vector<PredictItem> items;
  fs::path p(input);
  if (fs::is_regular_file(p)) {
    items.push_back({p.stem().string(), ssu::read_image_gray(p.string()), {}});
    return items;
  }
  if (!fs::is_directory(p)) {
    throw ssu::IngestionError("input path '" + input + "' does not exist");
  }
  fs::path images = fs::exists(p / "images") ? p / "images" : p;
  fs::path masks = p / "masks";
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(images)) {
    if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) throw ssu::IngestionError("no .png images under " + images.string());
  for (const std::string& stem : stems) {
    PredictItem item;
    item.stem = stem;
    item.image = ssu::read_image_gray((images / (stem + ".png")).string());
    fs::path mask_path = masks / (stem + ".png");
    if (fs::exists(mask_path)) {
      ssu::Tensor raw = ssu::read_image_gray(mask_path.string());
      item.mask = ssu::binarize(raw, ssu::real(0.5));
    }
    items.push_back(std::move(item));
  }
  return items;
}

ssu::Tensor make_overlay(const ssu::Tensor& image, const ssu::Tensor& pred,
                         const ssu::Tensor& gt) {
  int H = image.dim(1), W = image.dim(2);
  std::vector<ssu::real> rgb(static_cast<size_t>(3) * H * W);
  const ssu::real* img = image.data();
  const ssu::real* p = pred.data();
  const ssu::real* g = gt.data();
  std::int64_t plane = static_cast<std::int64_t>(H) * W;
  for (std::int64_t i = 0; i < plane; ++i) {
    ssu::real r = img[i], gr = img[i], b = img[i];
    bool pp = p[i] == ssu::real(1), gg = g[i] == ssu::real(1);
    if (gg && pp) {  // overlap: yellow
      r = 1; gr = 1; b = 0;
    } else if (gg) {  // ground truth only: red
      r = 1; gr = 0; b = 0;
    } else if (pp) {  // prediction only: green
      r = 0; gr = 1; b = 0;
    }
    rgb[static_cast<size_t>(i)] = r;
    rgb[static_cast<size_t>(plane + i)] = gr;
    rgb[static_cast<size_t>(2 * plane + i)] = b;
  }
  return ssu::Tensor::from_data({3, H, W}, std::move(rgb));
}

int run_predict(const PredictArgs& args) {
  if (args.n_passes < 1) throw ssu::UsageError("--n_passes must be >= 1");
  if (!(args.threshold > 0 && args.threshold < 1)) {
    throw ssu::UsageError("--threshold must be in (0,1)");
  }
  ssu::ModelParams m1 = ssu::load_checkpoint(args.checkpoint_s1);
  ssu::ModelParams m2 = ssu::load_checkpoint(args.checkpoint_s2);
  if (m1.stage != ssu::Stage::kBayesian) {
    throw ssu::IntegrityError("'" + args.checkpoint_s1 + "' is not a stage-1 checkpoint");
  }
  if (m2.stage != ssu::Stage::kSsu) {
    throw ssu::IntegrityError("'" + args.checkpoint_s2 + "' is not a stage-2 checkpoint");
  }

  std::vector<PredictItem> items = collect_inputs(args.input);
  std::error_code ec;
  fs::create_directories(args.out_dir, ec);
  if (ec) throw ssu::IoError("cannot create " + args.out_dir);
  fs::path out(args.out_dir);
  ssu::Rng master(args.seed);

  for (const PredictItem& item : items) {
    int H = item.image.dim(1), W = item.image.dim(2);
    ssu::Tensor batch = ssu::ops::reshape(item.image.detach(), {1, 1, H, W});
    ssu::PredictResult r =
        ssu::predict_image(m1, m2, batch, args.n_passes, master.split(item.stem));

    auto plane = [H, W](const ssu::Tensor& nchw) {
      return ssu::ops::reshape(nchw.detach(), {1, H, W});
    };
    ssu::Tensor mean = plane(r.mean_prob);
    ssu::Tensor ue_pred = plane(r.ue_pred);
    ssu::Tensor ue_s1 = plane(r.s1_maps.u_e);
    ssu::Tensor ua_s1 = plane(r.s1_maps.u_a);
    ssu::Tensor pred_mask = ssu::binarize(mean, static_cast<ssu::real>(args.threshold));

    ssu::write_image_gray(mean, (out / (item.stem + "_mean.png")).string());
    ssu::write_raw_plane(mean, (out / (item.stem + "_mean.raw")).string());
    ssu::write_image_gray(pred_mask, (out / (item.stem + "_mask.png")).string());
    ssu::write_map_rescaled(ue_pred, (out / (item.stem + "_ue_pred.png")).string());
    ssu::write_raw_plane(ue_pred, (out / (item.stem + "_ue_pred.raw")).string());
    ssu::write_map_rescaled(ue_s1, (out / (item.stem + "_ue_s1.png")).string());
    ssu::write_raw_plane(ue_s1, (out / (item.stem + "_ue_s1.raw")).string());
    ssu::write_map_rescaled(ua_s1, (out / (item.stem + "_ua_s1.png")).string());
    ssu::write_raw_plane(ua_s1, (out / (item.stem + "_ua_s1.raw")).string());
    if (item.mask.defined()) {
      ssu::write_image_rgb(make_overlay(item.image, pred_mask, item.mask),
                           (out / (item.stem + "_overlay.png")).string());
    }
  }
  std::cout << "predicted " << items.size() << " image(s) into " << args.out_dir
            << "\n";
  return 0;
}

// ----------------------------------------------------------------- eval ---

struct EvalArgs {
  std::string pred_dir, gt_dir, out_file;
  double threshold = 0.5;
};

int run_eval(const EvalArgs& args) {
  if (!(args.threshold > 0 && args.threshold < 1)) {
    throw ssu::UsageError("--threshold must be in (0,1)");
  }
  fs::path pred(args.pred_dir);
  if (!fs::is_directory(pred)) {
    throw ssu::IngestionError("prediction directory '" + args.pred_dir + "' not found");
  }
  fs::path gt(args.gt_dir);
  if (fs::exists(gt / "masks")) gt = gt / "masks";
  if (!fs::is_directory(gt)) {
    throw ssu::IngestionError("ground-truth directory '" + args.gt_dir + "' not found");
  }

  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(pred)) {
    std::string name = e.path().filename().string();
    const std::string suffix = "_mask.png";
    if (name.size() > suffix.size() &&
        name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0) {
      stems.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(stems.begin(), stems.end());
  if (stems.empty()) {
    throw ssu::UsageError("no *_mask.png predictions in " + args.pred_dir);
  }

  double sum_dice = 0, sum_miou = 0, sum_macc = 0;
  for (const std::string& stem : stems) {
    fs::path gt_path = gt / (stem + ".png");
    if (!fs::exists(gt_path)) {
      throw ssu::IngestionError("no ground-truth mask for stem '" + stem + "' in " +
                                gt.string());
    }
    ssu::Tensor p = ssu::binarize(
        ssu::read_image_gray((pred / (stem + "_mask.png")).string()),
        static_cast<ssu::real>(args.threshold));
    ssu::Tensor g = ssu::binarize(ssu::read_image_gray(gt_path.string()),
                                  ssu::real(0.5));
    double d = ssu::dice(p, g), mi = ssu::miou(p, g), ma = ssu::macc(p, g);
    sum_dice += d;
    sum_miou += mi;
    sum_macc += ma;
    std::cout << stem << " dice=" << fmt_g(d) << " miou=" << fmt_g(mi)
              << " macc=" << fmt_g(ma) << "\n";
  }
  int n = static_cast<int>(stems.size());
  json report = {{"dice", sum_dice / n},
                 {"miou", sum_miou / n},
                 {"macc", sum_macc / n},
                 {"n_images", n},
                 {"threshold", args.threshold}};
  std::cout << report.dump() << "\n";
  std::string out_file = args.out_file.empty()
                             ? (pred / "metrics.json").string()
                             : args.out_file;
  std::ofstream out(out_file);
  if (!out) throw ssu::IoError("cannot write metric report '" + out_file + "'");
  out << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SSU-Net: spatial- and scale-uncertainty-aware segmentation"};
  app.require_subcommand(1);

  SynthArgs synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic dataset");
  synth_cmd->add_option("--out", synth.out_dir, "output dataset root")->required();
  synth_cmd->add_option("--kind", synth.kind, "vessel | cell")
      ->default_str("vessel");
  synth_cmd->add_option("--count", synth.count, "number of samples")->default_val(16);
  synth_cmd->add_option("--size", synth.size, "square image extent")->default_val(64);
  synth_cmd->add_option("--seed", synth.seed, "master seed")->default_val(0);
  synth_cmd->add_option("--split", synth.split, "train,val,test fractions")
      ->default_str("0.5,0.25,0.25");
  synth_cmd->add_option("--noise_sigma", synth.noise_sigma, "additive noise sigma");
  synth_cmd->add_option("--illumination", synth.illumination, "illumination ramp amplitude");
  synth_cmd->add_option("--blur_sigma", synth.blur_sigma, "render blur sigma");
  synth_cmd->add_option("--width_min", synth.width_min, "min structure width (px)");
  synth_cmd->add_option("--width_max", synth.width_max, "max structure width (px)");
  synth_cmd->add_option("--min_structures", synth.min_structures, "min structure count");
  synth_cmd->add_option("--max_structures", synth.max_structures, "max structure count");

  TrainArgs train;
  Settings settings;
  struct Overrides {
    int in_channels, base_width, depth, epochs, batch_size, n_mc_train, t_samples,
        gsua_ksize, n_passes;
    double dropout_rate, gsua_sigma, lr, momentum, weight_decay, rms_decay,
        epsilon, alpha1, alpha2, alpha3, alphaF, threshold;
    bool gsua = true, msua = true, augment = false;
  } ov;
  CLI::App* train_cmd = app.add_subcommand("train", "train stage-1/stage-2 models");
  train_cmd->add_option("--data", train.data_dir, "dataset root (train split used)")
      ->required();
  train_cmd->add_option("--out", train.out_dir, "output directory")->required();
  train_cmd->add_option("--config", train.config_file, "key=value config file");
  train_cmd->add_option("--stage", train.stage, "1 | 2 | both")->default_str("both");
  train_cmd->add_option("--seed", train.seed, "master seed")->default_val(0);
  train_cmd->add_option("--stage1_dir", train.stage1_dir,
                        "directory with stage-1 maps (for --stage 2)");
  auto* o_in = train_cmd->add_option("--in_channels", ov.in_channels);
  auto* o_bw = train_cmd->add_option("--base_width", ov.base_width);
  auto* o_depth = train_cmd->add_option("--depth", ov.depth);
  auto* o_do = train_cmd->add_option("--dropout_rate", ov.dropout_rate);
  auto* o_gsua = train_cmd->add_flag("--gsua,!--no-gsua", ov.gsua,
                                     "enable/disable the GSUA module");
  auto* o_msua = train_cmd->add_flag("--msua,!--no-msua", ov.msua,
                                     "enable/disable MSUA fusion");
  auto* o_gk = train_cmd->add_option("--gsua_ksize", ov.gsua_ksize);
  auto* o_gs = train_cmd->add_option("--gsua_sigma", ov.gsua_sigma);
  auto* o_lr = train_cmd->add_option("--lr", ov.lr);
  auto* o_mom = train_cmd->add_option("--momentum", ov.momentum);
  auto* o_wd = train_cmd->add_option("--weight_decay", ov.weight_decay);
  auto* o_rd = train_cmd->add_option("--rms_decay", ov.rms_decay);
  auto* o_eps = train_cmd->add_option("--epsilon", ov.epsilon);
  auto* o_ep = train_cmd->add_option("--epochs", ov.epochs);
  auto* o_bs = train_cmd->add_option("--batch_size", ov.batch_size);
  auto* o_a1 = train_cmd->add_option("--alpha1", ov.alpha1);
  auto* o_a2 = train_cmd->add_option("--alpha2", ov.alpha2);
  auto* o_a3 = train_cmd->add_option("--alpha3", ov.alpha3);
  auto* o_aF = train_cmd->add_option("--alphaF", ov.alphaF);
  auto* o_aug = train_cmd->add_flag("--augment,!--no-augment", ov.augment,
                                    "random shift/rescale augmentation");
  auto* o_mc = train_cmd->add_option("--n_mc_train", ov.n_mc_train);
  auto* o_ts = train_cmd->add_option("--t_samples", ov.t_samples);

  PredictArgs predict;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "MC inference with uncertainty maps");
  predict_cmd->add_option("--checkpoint_s1", predict.checkpoint_s1, "stage-1 checkpoint")
      ->required();
  predict_cmd->add_option("--checkpoint_s2", predict.checkpoint_s2, "stage-2 checkpoint")
      ->required();
  predict_cmd->add_option("--input", predict.input, "png file or dataset split dir")
      ->required();
  predict_cmd->add_option("--out", predict.out_dir, "output directory")->required();
  predict_cmd->add_option("--n_passes", predict.n_passes, "MC forward passes")
      ->default_val(16);
  predict_cmd->add_option("--threshold", predict.threshold, "binarization threshold")
      ->default_val(0.5);
  predict_cmd->add_option("--seed", predict.seed, "master seed")->default_val(0);

  EvalArgs eval;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate predictions against masks");
  eval_cmd->add_option("--pred", eval.pred_dir, "directory with *_mask.png")->required();
  eval_cmd->add_option("--gt", eval.gt_dir, "mask directory or dataset split dir")
      ->required();
  eval_cmd->add_option("--threshold", eval.threshold, "binarization threshold")
      ->default_val(0.5);
  eval_cmd->add_option("--out", eval.out_file, "report path (default <pred>/metrics.json)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*synth_cmd) return run_synth(synth);
    if (*train_cmd) {
      if (!train.config_file.empty()) {
        apply_config_file(settings, ssu::KeyValueConfig::parse_file(train.config_file));
      }
      if (o_in->count()) settings.arch.in_channels = ov.in_channels;
      if (o_bw->count()) settings.arch.base_width = ov.base_width;
      if (o_depth->count()) settings.arch.depth = ov.depth;
      if (o_do->count()) settings.arch.dropout_rate = static_cast<ssu::real>(ov.dropout_rate);
      if (o_gsua->count()) settings.arch.with_gsua = ov.gsua;
      if (o_msua->count()) settings.arch.with_msua = ov.msua;
      if (o_gk->count()) settings.arch.gsua_ksize = ov.gsua_ksize;
      if (o_gs->count()) settings.arch.gsua_sigma = static_cast<ssu::real>(ov.gsua_sigma);
      if (o_lr->count()) settings.train.lr = static_cast<ssu::real>(ov.lr);
      if (o_mom->count()) settings.train.momentum = static_cast<ssu::real>(ov.momentum);
      if (o_wd->count()) settings.train.weight_decay = static_cast<ssu::real>(ov.weight_decay);
      if (o_rd->count()) settings.train.rms_decay = static_cast<ssu::real>(ov.rms_decay);
      if (o_eps->count()) settings.train.epsilon = static_cast<ssu::real>(ov.epsilon);
      if (o_ep->count()) settings.train.epochs = ov.epochs;
      if (o_bs->count()) settings.train.batch_size = ov.batch_size;
      if (o_a1->count()) settings.train.alpha1 = static_cast<ssu::real>(ov.alpha1);
      if (o_a2->count()) settings.train.alpha2 = static_cast<ssu::real>(ov.alpha2);
      if (o_a3->count()) settings.train.alpha3 = static_cast<ssu::real>(ov.alpha3);
      if (o_aF->count()) settings.train.alphaF = static_cast<ssu::real>(ov.alphaF);
      if (o_aug->count()) settings.train.augment = ov.augment;
      if (o_mc->count()) settings.train.n_mc_train = ov.n_mc_train;
      if (o_ts->count()) settings.train.t_samples = ov.t_samples;
      return run_train(train, settings);
    }
    if (*predict_cmd) return run_predict(predict);
    if (*eval_cmd) return run_eval(eval);
  } catch (const ssu::ConfigError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const ssu::UsageError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return 2;
  } catch (const ssu::IngestionError& e) {
    std::cerr << "error: ingestion: " << e.what() << "\n";
    return 3;
  } catch (const ssu::IntegrityError& e) {
    std::cerr << "error: integrity: " << e.what() << "\n";
    return 4;
  } catch (const ssu::IoError& e) {
    std::cerr << "error: io: " << e.what() << "\n";
    return 5;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
