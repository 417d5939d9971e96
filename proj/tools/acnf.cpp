// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end: data preparation, the four pretraining phases,
// end-to-end training, compression/decompression, and RD benchmarking.

#include <algorithm>
#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "acnf/codec.hpp"
#include "acnf/container.hpp"
#include "acnf/data.hpp"
#include "acnf/error.hpp"
#include "acnf/eval.hpp"
#include "acnf/hashutil.hpp"
#include "acnf/image_io.hpp"
#include "acnf/networks.hpp"
#include "acnf/synth.hpp"
#include "acnf/training.hpp"

namespace fs = std::filesystem;
using namespace acnf;

namespace {

constexpr int kExitConfig = 2, kExitWeights = 3, kExitCodec = 4, kExitData = 5;

std::string weights_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("ACNF_WEIGHTS_DIR")) return env;
  return ".";
}

// Reconstructibility header: codec identity, config hash, seed, and the
// manifest hash of every weight set a command touches.
void run_header(const std::string& command, const std::string& config_path,
                std::optional<uint64_t> seed, const std::vector<std::string>& weight_dirs) {
  JpegCodec codec;
  std::cerr << "[acnf] command: " << command << "\n";
  std::cerr << "[acnf] codec: " << codec.identity() << "\n";
  if (!config_path.empty())
    std::cerr << "[acnf] config_sha256: " << sha256_file_hex(config_path) << "\n";
  if (seed) std::cerr << "[acnf] seed: " << *seed << "\n";
  for (const auto& dir : weight_dirs) {
    std::string manifest = (fs::path(dir) / "manifest.json").string();
    std::string digest = "(unavailable)";
    try {
      digest = sha256_file_hex(manifest);
    } catch (const std::exception&) {
    }
    std::cerr << "[acnf] weights " << dir << " manifest_sha256: " << digest << "\n";
  }
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config file: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const std::exception& e) {
    throw ConfigError("bad config JSON in " + path + ": " + e.what());
  }
  return TrainConfig::from_json(j);
}

double parse_scale_flag(const std::string& s, int qf) {
  if (s == "auto") return select_scale(qf);
  try {
    double v = std::stod(s);
    if (valid_scale(v)) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("--scale must be auto, 0.5, 0.75 or 1.0");
}

std::vector<int> parse_qf_list(const std::string& s) {
  std::vector<int> qfs;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    try {
      qfs.push_back(std::stoi(tok));
    } catch (const std::exception&) {
      throw ConfigError("bad quality factor '" + tok + "'");
    }
    if (qfs.back() < 1 || qfs.back() > 100) throw ConfigError("qf out of range: " + tok);
  }
  if (qfs.empty()) throw ConfigError("--qfs list is empty");
  return qfs;
}

Tensor to_channels(Tensor img, int channels) {
  if (img.c == channels) return img;
  if (channels == 1) return rgb_to_luma(img);
  Tensor rgb(1, img.h, img.w, 3);
  for (size_t i = 0; i < img.v.size(); ++i)
    rgb.v[3 * i] = rgb.v[3 * i + 1] = rgb.v[3 * i + 2] = img.v[i];
  return rgb;
}

std::vector<Tensor> load_image_dir(const std::string& dir, int channels) {
  if (!fs::is_directory(dir)) throw DataError("not a directory: " + dir);
  std::vector<std::string> files;
  for (const auto& ent : fs::directory_iterator(dir))
    if (ent.is_regular_file()) files.push_back(ent.path().string());
  std::sort(files.begin(), files.end());
  std::vector<Tensor> images;
  for (const auto& f : files) {
    try {
      images.push_back(to_channels(load_image(f), channels));
    } catch (const DataError&) {
      std::cerr << "warning: skipping non-image file " << f << "\n";
    }
  }
  if (images.empty()) throw DataError("no decodable images in " + dir);
  return images;
}

// Loads the cache from cache_dir when present (verifying a sample), otherwise
// builds it from the training split and saves it when cache_dir is nonempty.
CodecCache get_cache(PatchLoader& data, const TrainConfig& cfg, CacheTransform t,
                     const std::string& cache_dir, const CodecBackend& codec) {
  if (!cache_dir.empty() && fs::exists(fs::path(cache_dir) / "index.json")) {
    CodecCache cache = CodecCache::load(cache_dir);
    if (cache.qf != cfg.qf || cache.transform != t ||
        (t == CacheTransform::kBicubicDown && cache.scale != cfg.scale))
      throw ConfigError("cache " + cache_dir + " does not match config (qf/scale/transform)");
    Rng rng(cfg.seed);
    verify_codec_cache(data, cache, codec, 0.01, rng);
    std::cerr << "[acnf] cache: loaded " << cache.entries.size() << " entries from " << cache_dir
              << "\n";
    return cache;
  }
  CodecCache cache = build_codec_cache(data, data.store().train, codec, cfg.qf, cfg.scale, t);
  if (!cache_dir.empty()) {
    cache.save(cache_dir);
    std::cerr << "[acnf] cache: built and saved " << cache.entries.size() << " entries to "
              << cache_dir << "\n";
  }
  return cache;
}

void save_weights_to(Network& net, const std::string& root, const std::string& kind_lower) {
  std::string dir =
      (fs::path(root) / weights_dir_name(kind_lower, net.spec.qf_tag, net.spec.scale)).string();
  net.save(dir);
  std::cerr << "[acnf] saved " << dir << " (" << net.param_count() << " parameters)\n";
}

int cmd_prepare_data(const std::string& images, const std::string& out, int patch_size,
                     double val_fraction, uint64_t seed, int channels) {
  run_header("prepare-data", "", seed, {});
  PatchStore store = ingest_dataset(images, patch_size, val_fraction, seed, channels);
  store.save_manifest(out);
  std::cout << "images: " << store.images.size() << "\ntrain patches: " << store.train.size()
            << "\nval patches: " << store.val.size() << "\nmanifest: " << out << "\n";
  return 0;
}

int cmd_make_corpus(const std::string& out, int count, int height, int width, int channels,
                    uint64_t first_index) {
  std::error_code ec;
  fs::create_directories(out, ec);
  for (int i = 0; i < count; ++i) {
    uint64_t idx = first_index + static_cast<uint64_t>(i);
    Tensor img = synthetic_image(idx, height, width, channels);
    char name[64];
    std::snprintf(name, sizeof name, "synth_%04llu.png", static_cast<unsigned long long>(idx));
    save_png((fs::path(out) / name).string(), img);
  }
  std::cout << "wrote " << count << " images to " << out << "\n";
  return 0;
}

struct PretrainArgs {
  std::string config, data, out, run_dir, cache_dir;
  int steps = -1;
};

int cmd_pretrain(const std::string& which, const PretrainArgs& a) {
  TrainConfig cfg = load_config(a.config);
  run_header("pretrain-" + which, a.config, cfg.seed, {});
  PatchLoader data(PatchStore::load_manifest(a.data));
  JpegCodec codec;
  Network net = [&] {
    if (which == "crnet")
      return pretrain_crnet(data, cfg, a.steps >= 0 ? a.steps : cfg.steps_pretrain_crnet,
                            a.run_dir);
    if (which == "acn") {
      CodecCache cache = get_cache(data, cfg, CacheTransform::kNone, a.cache_dir, codec);
      return pretrain_acn(data, cache, cfg, a.steps >= 0 ? a.steps : cfg.steps_pretrain_acn,
                          a.run_dir);
    }
    if (which == "benet") {
      CodecCache cache = get_cache(data, cfg, CacheTransform::kNone, a.cache_dir, codec);
      return pretrain_benet(data, cache, cfg, a.steps >= 0 ? a.steps : cfg.steps_pretrain_benet,
                            a.run_dir);
    }
    CodecCache cache = get_cache(data, cfg, CacheTransform::kBicubicDown, a.cache_dir, codec);
    return pretrain_ppnet(data, cache, cfg, a.steps >= 0 ? a.steps : cfg.steps_pretrain_ppnet,
                          a.run_dir);
  }();
  save_weights_to(net, a.out, which);
  return 0;
}

struct TrainArgs {
  std::string config, data, out;
  std::string init_crnet, init_ppnet, init_acn, init_benet;
  int steps = -1;
  bool resume = false;
  bool lambda_grid = false;
  int grid_steps = 100;
};

Network load_or_pretrain(const std::string& init_dir, const std::string& kind,
                         const std::function<Network()>& pretrain) {
  if (init_dir.empty()) return pretrain();
  Network net = Network::load(init_dir);
  if (net.spec.kind != kind)
    throw WeightsError("--init-" + kind + ": directory holds a " + net.spec.kind);
  std::cerr << "[acnf] loaded " << kind << " init from " << init_dir << "\n";
  return net;
}

int cmd_train(const TrainArgs& a) {
  TrainConfig cfg = load_config(a.config);
  std::vector<std::string> init_dirs;
  for (const auto& d : {a.init_crnet, a.init_ppnet, a.init_acn, a.init_benet})
    if (!d.empty()) init_dirs.push_back(d);
  run_header("train", a.config, cfg.seed, init_dirs);
  PatchLoader data(PatchStore::load_manifest(a.data));
  JpegCodec codec;
  std::error_code ec;
  fs::create_directories(a.out, ec);
  {
    std::ofstream f(fs::path(a.out) / "config.json");
    f << cfg.to_json().dump(2) << "\n";
  }
  int steps = a.steps >= 0 ? a.steps : cfg.steps_finetune;

  if (a.resume) {
    std::string ckpt = (fs::path(a.out) / "ckpt").string();
    TrainState state = TrainState::load(ckpt);
    std::cerr << "[acnf] resumed from " << ckpt << " at step " << state.step << "\n";
    train_end_to_end(state, data, codec, steps, a.out);
    save_weights_to(state.crnet, a.out, "crnet");
    save_weights_to(state.ppnet, a.out, "ppnet");
    save_weights_to(state.acn, a.out, "acn");
    save_weights_to(state.benet, a.out, "benet");
    return 0;
  }

  Network acn = load_or_pretrain(a.init_acn, "ACN", [&] {
    CodecCache cache = get_cache(data, cfg, CacheTransform::kNone,
                                 (fs::path(a.out) / "cache_none").string(), codec);
    return pretrain_acn(data, cache, cfg, cfg.steps_pretrain_acn,
                        (fs::path(a.out) / "pretrain_acn").string());
  });
  Network benet = load_or_pretrain(a.init_benet, "BENet", [&] {
    CodecCache cache = get_cache(data, cfg, CacheTransform::kNone,
                                 (fs::path(a.out) / "cache_none").string(), codec);
    return pretrain_benet(data, cache, cfg, cfg.steps_pretrain_benet,
                          (fs::path(a.out) / "pretrain_benet").string());
  });
  Network crnet = load_or_pretrain(a.init_crnet, "CRNet", [&] {
    return pretrain_crnet(data, cfg, cfg.steps_pretrain_crnet,
                          (fs::path(a.out) / "pretrain_crnet").string());
  });
  Network ppnet = load_or_pretrain(a.init_ppnet, "PPNet", [&] {
    CodecCache cache = get_cache(data, cfg, CacheTransform::kBicubicDown,
                                 (fs::path(a.out) / "cache_down").string(), codec);
    return pretrain_ppnet(data, cache, cfg, cfg.steps_pretrain_ppnet,
                          (fs::path(a.out) / "pretrain_ppnet").string());
  });

  if (a.lambda_grid) {
    // Coarse lambda_bit calibration: x0.1, x1, x10 short arms from the same
    // init; reports mean tail rate/distortion per arm, no weights written.
    nlohmann::ordered_json report;
    double base = cfg.lambda_bit_effective();
    for (double mult : {0.1, 1.0, 10.0}) {
      TrainConfig arm_cfg = cfg;
      arm_cfg.lambda_bit = base * mult;
      arm_cfg.checkpoint_every = 0;
      TrainState state(arm_cfg, crnet, ppnet, acn, benet);
      auto stats = train_end_to_end(state, data, codec, a.grid_steps, "");
      size_t tail = std::min<size_t>(20, stats.size());
      double rec = 0, bpp = 0;
      for (size_t i = stats.size() - tail; i < stats.size(); ++i) {
        rec += stats[i].loss.rec;
        bpp += stats[i].real_bpp;
      }
      char key[32];
      std::snprintf(key, sizeof key, "x%.1f", mult);
      report[key] = {{"lambda_bit", arm_cfg.lambda_bit},
                     {"mean_tail_rec", rec / tail},
                     {"mean_tail_real_bpp", bpp / tail}};
      std::cerr << "[acnf] lambda grid " << key << ": rec " << rec / tail << " real_bpp "
                << bpp / tail << "\n";
    }
    std::ofstream f(fs::path(a.out) / "lambda_grid.json");
    f << report.dump(2) << "\n";
    std::cout << "lambda grid report: " << (fs::path(a.out) / "lambda_grid.json").string() << "\n";
    return 0;
  }

  TrainState state(cfg, std::move(crnet), std::move(ppnet), std::move(acn), std::move(benet));
  train_end_to_end(state, data, codec, steps, a.out);
  save_weights_to(state.crnet, a.out, "crnet");
  save_weights_to(state.ppnet, a.out, "ppnet");
  save_weights_to(state.acn, a.out, "acn");
  save_weights_to(state.benet, a.out, "benet");
  return 0;
}

int cmd_compress(const std::string& in, const std::string& out, int qf,
                 const std::string& scale_flag, const std::string& weights_flag) {
  double scale = parse_scale_flag(scale_flag, qf);
  std::string root = weights_root(weights_flag);
  std::string crdir = (fs::path(root) / weights_dir_name("crnet", qf, scale)).string();
  std::string ppdir = (fs::path(root) / weights_dir_name("ppnet", qf, scale)).string();
  run_header("compress", "", std::nullopt, {crdir, ppdir});
  Network crnet = Network::load(crdir);
  Network ppnet = Network::load(ppdir);
  JpegCodec codec;
  Tensor img = to_channels(load_image(in), crnet.spec.channels);
  if (img.w > 65535 || img.h > 65535) throw DataError("image too large for container metadata");
  auto model_id = model_id_from_manifest((fs::path(ppdir) / "manifest.json").string());
  CompressResult res = compress_eval(img, crnet, ppnet, qf, scale, codec, model_id);
  std::ofstream f(out, std::ios::binary);
  if (!f) throw DataError("cannot write " + out);
  f.write(reinterpret_cast<const char*>(res.container.data()),
          static_cast<std::streamsize>(res.container.size()));
  if (!f) throw DataError("short write to " + out);
  std::printf("bpp %.6f  psnr %.4f dB  ssim %.6f  bytes %zu\n", res.point.bpp, res.point.psnr_db,
              res.point.ssim, res.container.size());
  return 0;
}

int cmd_decompress(const std::string& in, const std::string& out,
                   const std::string& weights_flag) {
  std::ifstream f(in, std::ios::binary);
  if (!f) throw DataError("cannot read " + in);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
  auto [artifact, meta] = unpack(bytes);
  JpegCodec codec;
  if (!meta) {
    run_header("decompress", "", std::nullopt, {});
    std::cerr << "warning: no restoration metadata found; stock JPEG decode\n";
    save_png(out, codec.decode_bytes(artifact.payload));
    return 0;
  }
  double scale = scale_from_code(meta->scale_code);
  std::string root = weights_root(weights_flag);
  std::string ppdir = (fs::path(root) / weights_dir_name("ppnet", meta->qf, scale)).string();
  std::optional<Network> ppnet;
  try {
    ppnet.emplace(Network::load(ppdir));
  } catch (const WeightsError& e) {
    run_header("decompress", "", std::nullopt, {});
    std::cerr << "warning: restoration weights unavailable (" << e.what()
              << "); stock JPEG decode\n";
    save_png(out, codec.decode_bytes(artifact.payload));
    return 0;
  }
  run_header("decompress", "", std::nullopt, {ppdir});
  if (model_id_from_manifest((fs::path(ppdir) / "manifest.json").string()) != meta->model_id)
    std::cerr << "warning: weights " << ppdir
              << " differ from the model that produced this file\n";
  Tensor decoded = codec.decode_bytes(artifact.payload);
  Tensor recon = ppnet->infer(decoded, meta->orig_height, meta->orig_width);
  for (float& v : recon.v) v = std::clamp(v, 0.0f, 1.0f);
  save_png(out, recon);
  std::printf("restored %dx%d (scale %.2f, qf %d)\n", meta->orig_width, meta->orig_height, scale,
              meta->qf);
  return 0;
}

int cmd_eval(const std::string& images_dir, const std::string& methods_flag,
             const std::string& qfs_flag, const std::string& scale_flag,
             const std::string& weights_flag, const std::string& out, int channels) {
  std::vector<int> qfs = parse_qf_list(qfs_flag);
  std::vector<std::string> methods;
  {
    std::stringstream ss(methods_flag);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (tok != "jpeg" && tok != "bicubic" && tok != "acn")
        throw ConfigError("unknown method '" + tok + "'");
      methods.push_back(tok);
    }
    if (methods.empty()) throw ConfigError("--methods list is empty");
  }
  std::string root = weights_root(weights_flag);
  std::vector<std::string> weight_dirs;
  struct NetPair {
    Network crnet, ppnet;
    std::array<uint8_t, 8> model_id;
  };
  std::map<int, NetPair> nets;
  if (std::find(methods.begin(), methods.end(), "acn") != methods.end())
    for (int qf : qfs) {
      double s = parse_scale_flag(scale_flag, qf);
      std::string crdir = (fs::path(root) / weights_dir_name("crnet", qf, s)).string();
      std::string ppdir = (fs::path(root) / weights_dir_name("ppnet", qf, s)).string();
      nets.emplace(qf, NetPair{Network::load(crdir), Network::load(ppdir),
                               model_id_from_manifest((fs::path(ppdir) / "manifest.json").string())});
      weight_dirs.push_back(crdir);
      weight_dirs.push_back(ppdir);
    }
  run_header("eval", "", std::nullopt, weight_dirs);
  std::vector<Tensor> images = load_image_dir(images_dir, channels);
  JpegCodec codec;

  std::vector<RDCurve> curves;
  for (const auto& m : methods) {
    if (m == "jpeg") {
      curves.push_back(rd_sweep("jpeg", images, qfs, [&](const Tensor& img, int qf) {
        return jpeg_rd_point(img, qf, codec);
      }));
    } else if (m == "bicubic") {
      curves.push_back(rd_sweep("bicubic", images, qfs, [&](const Tensor& img, int qf) {
        return bicubic_rd_point(img, qf, parse_scale_flag(scale_flag, qf), codec);
      }));
    } else {
      curves.push_back(rd_sweep("acn", images, qfs, [&](const Tensor& img, int qf) {
        auto& np = nets.at(qf);
        return compress_eval(img, np.crnet, np.ppnet, qf, np.crnet.spec.scale, codec, np.model_id)
            .point;
      }));
    }
  }
  emit_report(curves, out);
  std::cout << "report written to " << out << "\n";
  return 0;
}

int cmd_bdrate(const std::string& csv, const std::string& reference, const std::string& test) {
  run_header("bdrate", "", std::nullopt, {});
  std::vector<RDCurve> curves = read_points_csv(csv);
  auto find = [&](const std::string& name) -> RDCurve {
    for (auto& c : curves)
      if (c.method == name) return make_curve(c.method, c.points);
    throw ConfigError("method '" + name + "' not present in " + csv);
  };
  double v = bd_rate(find(reference), find(test));
  std::printf("BD-rate (%s vs %s): %.4f%%\n", test.c_str(), reference.c_str(), v);
  return 0;
}

int cmd_plot(const std::string& csv, const std::string& out) {
  run_header("plot", "", std::nullopt, {});
  std::vector<RDCurve> curves = read_points_csv(csv);
  for (auto& c : curves) c = make_curve(c.method, c.points);
  write_rd_svg(out, curves);
  std::cout << "plot written to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acnf: standard-compatible learned image compression"};
  app.require_subcommand(1);
  std::function<int()> action;

  {
    auto* c = app.add_subcommand("prepare-data", "Scan an image folder into a patch manifest");
    auto images = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("patches.json");
    auto ps = std::make_shared<int>(128);
    auto vf = std::make_shared<double>(0.05);
    auto seed = std::make_shared<uint64_t>(1);
    auto ch = std::make_shared<int>(1);
    c->add_option("--images", *images, "Source image directory")->required();
    c->add_option("--out", *out, "Output manifest path");
    c->add_option("--patch-size", *ps, "Patch size (multiple of 8)");
    c->add_option("--val-fraction", *vf, "Validation image fraction");
    c->add_option("--seed", *seed, "Split/extraction seed");
    c->add_option("--channels", *ch, "1 = luma, 3 = RGB");
    c->callback([=, &action] { action = [=] { return cmd_prepare_data(*images, *out, *ps, *vf, *seed, *ch); }; });
  }
  {
    auto* c = app.add_subcommand("make-corpus", "Generate a deterministic synthetic image corpus");
    auto out = std::make_shared<std::string>();
    auto count = std::make_shared<int>(24);
    auto height = std::make_shared<int>(192);
    auto width = std::make_shared<int>(192);
    auto ch = std::make_shared<int>(1);
    auto first = std::make_shared<uint64_t>(0);
    c->add_option("--out", *out, "Output directory")->required();
    c->add_option("--count", *count, "Number of images");
    c->add_option("--height", *height, "Image height");
    c->add_option("--width", *width, "Image width");
    c->add_option("--channels", *ch, "1 or 3");
    c->add_option("--first-index", *first, "Index of the first image (corpus offset)");
    c->callback([=, &action] { action = [=] { return cmd_make_corpus(*out, *count, *height, *width, *ch, *first); }; });
  }
  for (const std::string which : {"acn", "benet", "crnet", "ppnet"}) {
    auto* c = app.add_subcommand("pretrain-" + which, "Pretrain the " + which + " network");
    auto a = std::make_shared<PretrainArgs>();
    c->add_option("--config", a->config, "Train config JSON")->required();
    c->add_option("--data", a->data, "Patch manifest from prepare-data")->required();
    c->add_option("--out", a->out, "Weights root to save into")->required();
    c->add_option("--steps", a->steps, "Override step count");
    c->add_option("--run-dir", a->run_dir, "Directory for the loss log");
    if (which != "crnet") c->add_option("--cache", a->cache_dir, "Codec cache directory");
    c->callback([=, &action] { action = [=] { return cmd_pretrain(which, *a); }; });
  }
  {
    auto* c = app.add_subcommand("train", "End-to-end training (pretrains anything not given)");
    auto a = std::make_shared<TrainArgs>();
    c->add_option("--config", a->config, "Train config JSON")->required();
    c->add_option("--data", a->data, "Patch manifest from prepare-data")->required();
    c->add_option("--out", a->out, "Run directory (logs, checkpoints, final weights)")->required();
    c->add_option("--init-crnet", a->init_crnet, "Pretrained CRNet weights dir");
    c->add_option("--init-ppnet", a->init_ppnet, "Pretrained PPNet weights dir");
    c->add_option("--init-acn", a->init_acn, "Pretrained ACN weights dir");
    c->add_option("--init-benet", a->init_benet, "Pretrained BENet weights dir");
    c->add_option("--steps", a->steps, "Override fine-tune step count");
    c->add_flag("--resume", a->resume, "Resume from <out>/ckpt");
    c->add_flag("--lambda-grid", a->lambda_grid, "Run the x0.1/x1/x10 lambda_bit grid and stop");
    c->add_option("--grid-steps", a->grid_steps, "Steps per lambda grid arm");
    c->callback([=, &action] { action = [=] { return cmd_train(*a); }; });
  }
  {
    auto* c = app.add_subcommand("compress", "Compress an image to a .acnf.jpg container");
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto qf = std::make_shared<int>(0);
    auto scale = std::make_shared<std::string>("auto");
    auto weights = std::make_shared<std::string>();
    c->add_option("--in", *in, "Input image")->required();
    c->add_option("--out", *out, "Output .acnf.jpg path")->required();
    c->add_option("--qf", *qf, "JPEG quality factor")->required();
    c->add_option("--scale", *scale, "auto, 0.5, 0.75 or 1.0");
    c->add_option("--weights", *weights, "Weights root (default $ACNF_WEIGHTS_DIR)");
    c->callback([=, &action] { action = [=] { return cmd_compress(*in, *out, *qf, *scale, *weights); }; });
  }
  {
    auto* c = app.add_subcommand("decompress", "Decode a .acnf.jpg (stock decode fallback)");
    auto in = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto weights = std::make_shared<std::string>();
    c->add_option("--in", *in, "Input .acnf.jpg or plain JPEG")->required();
    c->add_option("--out", *out, "Output PNG path")->required();
    c->add_option("--weights", *weights, "Weights root (default $ACNF_WEIGHTS_DIR)");
    c->callback([=, &action] { action = [=] { return cmd_decompress(*in, *out, *weights); }; });
  }
  {
    auto* c = app.add_subcommand("eval", "Rate-distortion sweep over methods and quality factors");
    auto images = std::make_shared<std::string>();
    auto methods = std::make_shared<std::string>("jpeg,bicubic,acn");
    auto qfs = std::make_shared<std::string>("10,20,40,80");
    auto scale = std::make_shared<std::string>("auto");
    auto weights = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("report");
    auto ch = std::make_shared<int>(1);
    c->add_option("--images", *images, "Evaluation image directory")->required();
    c->add_option("--methods", *methods, "Comma list of jpeg,bicubic,acn");
    c->add_option("--qfs", *qfs, "Comma list of quality factors");
    c->add_option("--scale", *scale, "auto, 0.5, 0.75 or 1.0 (bicubic/acn)");
    c->add_option("--weights", *weights, "Weights root (default $ACNF_WEIGHTS_DIR)");
    c->add_option("--out", *out, "Report output directory");
    c->add_option("--channels", *ch, "1 = luma, 3 = RGB");
    c->callback([=, &action] {
      action = [=] { return cmd_eval(*images, *methods, *qfs, *scale, *weights, *out, *ch); };
    });
  }
  {
    auto* c = app.add_subcommand("bdrate", "BD-rate between two methods in a points.csv");
    auto csv = std::make_shared<std::string>();
    auto ref = std::make_shared<std::string>();
    auto test = std::make_shared<std::string>();
    c->add_option("--csv", *csv, "points.csv from eval")->required();
    c->add_option("--reference", *ref, "Reference method name")->required();
    c->add_option("--test", *test, "Test method name")->required();
    c->callback([=, &action] { action = [=] { return cmd_bdrate(*csv, *ref, *test); }; });
  }
  {
    auto* c = app.add_subcommand("plot", "Render an RD plot from a points.csv");
    auto csv = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>("rd_curves.svg");
    c->add_option("--csv", *csv, "points.csv from eval")->required();
    c->add_option("--out", *out, "Output SVG path");
    c->callback([=, &action] { action = [=] { return cmd_plot(*csv, *out); }; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    return action();
  } catch (const ConfigError& e) {
    std::cerr << "error (config): " << e.what() << "\n";
    return kExitConfig;
  } catch (const WeightsError& e) {
    std::cerr << "error (weights): " << e.what() << "\n";
    return kExitWeights;
  } catch (const CodecError& e) {
    std::cerr << "error (codec): " << e.what() << "\n";
    return kExitCodec;
  } catch (const DataError& e) {
    std::cerr << "error (data): " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
