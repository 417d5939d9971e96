// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#include "acnf/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "acnf/error.hpp"
#include "acnf/eval.hpp"
#include "acnf/resize.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace acnf {

double default_lambda_bit(int qf) {
  if (qf < 1 || qf > 100) throw ConfigError("lambda_bit default: qf out of range");
  if (qf <= 15) return 2e-4;
  if (qf <= 30) return 1e-4;
  return 3e-5;
}

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (qf < 1 || qf > 100) throw ConfigError("qf must be in [1,100]");
  if (!valid_scale(scale)) throw ConfigError("scale must be 0.5, 0.75 or 1.0");
  if (lambda_reg < 0) throw ConfigError("lambda_reg must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr_pretrain <= 0 || lr_finetune <= 0 || lr_aux <= 0)
    throw ConfigError("learning rates must be positive");
  if (adam_beta1 <= 0 || adam_beta1 >= 1 || adam_beta2 <= 0 || adam_beta2 >= 1)
    throw ConfigError("adam betas must be in (0,1)");
  if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
  if (patch_size <= 0 || patch_size % 8 != 0)
    throw ConfigError("patch_size must be a positive multiple of 8");
  if (scaled_len(patch_size, scale) % 8 != 0)
    throw ConfigError("patch_size scaled by " + std::to_string(scale) +
                      " must stay divisible by 8 (use a multiple of 32)");
  if (steps_pretrain_acn < 0 || steps_pretrain_benet < 0 || steps_pretrain_crnet < 0 ||
      steps_pretrain_ppnet < 0 || steps_finetune < 0)
    throw ConfigError("step counts must be >= 0");
  if (log_every < 1) throw ConfigError("log_every must be >= 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  // Architecture knobs get the same early validation the networks apply.
  default_spec("CRNet", qf, scale, channels, crnet_depth, crnet_width);
  default_spec("PPNet", qf, scale, channels, ppnet_depth, ppnet_width);
  default_spec("ACN", qf, 1.0, channels, acn_depth, acn_width);
  default_spec("BENet", qf, 1.0, channels, benet_depth, benet_width);
}

ordered_json TrainConfig::to_json() const {
  ordered_json j;
  j["qf"] = qf;
  j["scale"] = scale;
  j["lambda_bit"] = lambda_bit;
  j["lambda_reg"] = lambda_reg;
  j["batch_size"] = batch_size;
  j["lr_pretrain"] = lr_pretrain;
  j["lr_finetune"] = lr_finetune;
  j["lr_aux"] = lr_aux;
  j["adam_beta1"] = adam_beta1;
  j["adam_beta2"] = adam_beta2;
  j["steps_pretrain_acn"] = steps_pretrain_acn;
  j["steps_pretrain_benet"] = steps_pretrain_benet;
  j["steps_pretrain_crnet"] = steps_pretrain_crnet;
  j["steps_pretrain_ppnet"] = steps_pretrain_ppnet;
  j["steps_finetune"] = steps_finetune;
  j["seed"] = seed;
  j["channels"] = channels;
  j["patch_size"] = patch_size;
  j["crnet_depth"] = crnet_depth;
  j["crnet_width"] = crnet_width;
  j["ppnet_depth"] = ppnet_depth;
  j["ppnet_width"] = ppnet_width;
  j["acn_depth"] = acn_depth;
  j["acn_width"] = acn_width;
  j["benet_depth"] = benet_depth;
  j["benet_width"] = benet_width;
  j["simultaneous"] = simultaneous;
  j["refresh_acn"] = refresh_acn;
  j["refresh_benet"] = refresh_benet;
  j["log_every"] = log_every;
  j["checkpoint_every"] = checkpoint_every;
  return j;
}

TrainConfig TrainConfig::from_json(const json& j) {
  TrainConfig c;
  ordered_json known = c.to_json();
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.contains(it.key())) throw ConfigError("unknown config key '" + it.key() + "'");
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) {
      try {
        field = j.at(key).get<std::decay_t<decltype(field)>>();
      } catch (const std::exception&) {
        throw ConfigError(std::string("bad value for config key '") + key + "'");
      }
    }
  };
  get("qf", c.qf);
  get("scale", c.scale);
  get("lambda_bit", c.lambda_bit);
  get("lambda_reg", c.lambda_reg);
  get("batch_size", c.batch_size);
  get("lr_pretrain", c.lr_pretrain);
  get("lr_finetune", c.lr_finetune);
  get("lr_aux", c.lr_aux);
  get("adam_beta1", c.adam_beta1);
  get("adam_beta2", c.adam_beta2);
  get("steps_pretrain_acn", c.steps_pretrain_acn);
  get("steps_pretrain_benet", c.steps_pretrain_benet);
  get("steps_pretrain_crnet", c.steps_pretrain_crnet);
  get("steps_pretrain_ppnet", c.steps_pretrain_ppnet);
  get("steps_finetune", c.steps_finetune);
  get("seed", c.seed);
  get("channels", c.channels);
  get("patch_size", c.patch_size);
  get("crnet_depth", c.crnet_depth);
  get("crnet_width", c.crnet_width);
  get("ppnet_depth", c.ppnet_depth);
  get("ppnet_width", c.ppnet_width);
  get("acn_depth", c.acn_depth);
  get("acn_width", c.acn_width);
  get("benet_depth", c.benet_depth);
  get("benet_width", c.benet_width);
  get("simultaneous", c.simultaneous);
  get("refresh_acn", c.refresh_acn);
  get("refresh_benet", c.refresh_benet);
  get("log_every", c.log_every);
  get("checkpoint_every", c.checkpoint_every);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Scalar losses
// ---------------------------------------------------------------------------

double rec_loss(const Tensor& x, const Tensor& x_hat) { return mse(x, x_hat); }

double reg_loss(const Tensor& c, const Tensor& x, double scale) {
  Tensor target = bicubic_resize(x, scale);
  if (!c.same_shape(target))
    throw ValueError("reg_loss: compact " + c.shape_str() + " vs bicubic target " +
                     target.shape_str());
  return mse(c, target);
}

double bit_loss(const Tensor& c, Network& benet) {
  if (benet.spec.kind != "BENet") throw WeightsError("bit_loss: weights are not a BENet");
  Tensor bpp = benet.infer(c);
  double acc = 0;
  for (float v : bpp.v) acc += v;
  return acc / static_cast<double>(bpp.v.size());
}

LossBreakdown total_loss(const Tensor& x, const Tensor& c, const Tensor& x_hat,
                         const TrainConfig& cfg, Network& benet) {
  LossBreakdown lb;
  lb.rec = rec_loss(x, x_hat);
  lb.bit = bit_loss(c, benet);
  lb.reg = reg_loss(c, x, cfg.scale);
  lb.total = lb.rec + cfg.lambda_bit_effective() * lb.bit + cfg.lambda_reg * lb.reg;
  if (!std::isfinite(lb.total) || lb.rec < 0 || lb.bit < 0 || lb.reg < 0)
    throw Error("loss breakdown is not finite and non-negative");
  return lb;
}

// ---------------------------------------------------------------------------
// Shared pretraining machinery
// ---------------------------------------------------------------------------

namespace {

Tensor stack_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw ValueError("stack_batch: empty");
  const Tensor& first = items[0];
  Tensor out(static_cast<int>(items.size()), first.h, first.w, first.c);
  size_t stride = first.size();
  for (size_t i = 0; i < items.size(); ++i) {
    if (items[i].n != 1 || items[i].size() != stride)
      throw ValueError("stack_batch: shape mismatch");
    std::copy(items[i].v.begin(), items[i].v.end(), out.v.begin() + i * stride);
  }
  return out;
}

class LossLog {
 public:
  LossLog(const std::string& run_dir, const std::string& header) {
    if (run_dir.empty()) return;
    std::error_code ec;
    fs::create_directories(run_dir, ec);
    path_ = (fs::path(run_dir) / "loss_log.csv").string();
    bool fresh = !fs::exists(path_) || fs::file_size(path_) == 0;
    f_.open(path_, std::ios::app);
    if (!f_) throw DataError("cannot open loss log: " + path_);
    if (fresh) f_ << header;
  }
  void row(const std::string& s) {
    if (f_.is_open()) {
      f_ << s;
      f_.flush();
    }
  }

 private:
  std::string path_;
  std::ofstream f_;
};

std::string pretrain_row(int64_t step, double loss) {
  char buf[80];
  std::snprintf(buf, sizeof buf, "%lld,%.9e\n", static_cast<long long>(step), loss);
  return buf;
}

void require_cache(const CodecCache& cache, const TrainConfig& cfg, CacheTransform want) {
  if (cache.entries.empty()) throw DataError("pretraining: empty codec cache");
  if (cache.transform != want)
    throw ConfigError("pretraining: cache transform is '" + to_string(cache.transform) +
                      "', expected '" + to_string(want) + "'");
  if (cache.qf != cfg.qf)
    throw ConfigError("pretraining: cache qf " + std::to_string(cache.qf) + " != config qf " +
                      std::to_string(cfg.qf));
  if (cache.channels != cfg.channels) throw ConfigError("pretraining: cache channel mismatch");
}

void guard_finite(double loss, int64_t step) {
  if (!std::isfinite(loss))
    throw Error("training diverged: non-finite loss at step " + std::to_string(step));
}

}  // namespace

Network pretrain_acn(PatchLoader& data, const CodecCache& cache, const TrainConfig& cfg,
                     int steps, const std::string& run_dir) {
  cfg.validate();
  require_cache(cache, cfg, CacheTransform::kNone);
  NetworkSpec spec = default_spec("ACN", cfg.qf, 1.0, cfg.channels);
  spec.depth = cfg.acn_depth;
  spec.width = cfg.acn_width;
  validate_spec(spec);
  Rng rng(cfg.seed);
  Network net(spec, rng);
  Adam opt(cfg.lr_pretrain, cfg.adam_beta1, cfg.adam_beta2);
  LossLog log(run_dir, "step,loss\n");
  size_t n = cache.entries.size();
  for (int step = 1; step <= steps; ++step) {
    std::vector<Tensor> ins, outs;
    for (int k = 0; k < cfg.batch_size; ++k) {
      const auto& ent = cache.entries[rng.below(n)];
      ins.push_back(cache_input(data, ent.ref, cache.scale, cache.transform));
      outs.push_back(ent.decoded);
    }
    net.zero_grads();
    Var loss = mse_loss(net.forward(input_var(stack_batch(ins))), constant(stack_batch(outs)));
    double lv = loss->value.v[0];
    guard_finite(lv, step);
    backward(loss);
    opt.step(net.params());
    log.row(pretrain_row(step, lv));
  }
  net.training_step = steps;
  return net;
}

Network pretrain_benet(PatchLoader& data, const CodecCache& cache, const TrainConfig& cfg,
                       int steps, const std::string& run_dir) {
  cfg.validate();
  require_cache(cache, cfg, CacheTransform::kNone);
  NetworkSpec spec = default_spec("BENet", cfg.qf, 1.0, cfg.channels);
  spec.depth = cfg.benet_depth;
  spec.width = cfg.benet_width;
  validate_spec(spec);
  Rng rng(cfg.seed);
  Network net(spec, rng);
  Adam opt(cfg.lr_pretrain, cfg.adam_beta1, cfg.adam_beta2);
  LossLog log(run_dir, "step,loss\n");
  size_t n = cache.entries.size();
  for (int step = 1; step <= steps; ++step) {
    std::vector<Tensor> ins;
    Tensor target(cfg.batch_size, 1, 1, 1);
    for (int k = 0; k < cfg.batch_size; ++k) {
      const auto& ent = cache.entries[rng.below(n)];
      ins.push_back(cache_input(data, ent.ref, cache.scale, cache.transform));
      target.v[static_cast<size_t>(k)] = static_cast<float>(
          static_cast<double>(ent.bit_count) /
          (static_cast<double>(ent.decoded.h) * ent.decoded.w));
    }
    net.zero_grads();
    Var loss = mse_loss(net.forward(input_var(stack_batch(ins))), constant(std::move(target)));
    double lv = loss->value.v[0];
    guard_finite(lv, step);
    backward(loss);
    opt.step(net.params());
    log.row(pretrain_row(step, lv));
  }
  net.training_step = steps;
  return net;
}

Network pretrain_crnet(PatchLoader& data, const TrainConfig& cfg, int steps,
                       const std::string& run_dir) {
  cfg.validate();
  const auto& refs = data.store().train;
  if (refs.empty()) throw DataError("pretraining: empty patch store");
  NetworkSpec spec = default_spec("CRNet", cfg.qf, cfg.scale, cfg.channels);
  spec.depth = cfg.crnet_depth;
  spec.width = cfg.crnet_width;
  validate_spec(spec);
  Rng rng(cfg.seed);
  Network net(spec, rng);
  Adam opt(cfg.lr_pretrain, cfg.adam_beta1, cfg.adam_beta2);
  LossLog log(run_dir, "step,loss\n");
  for (int step = 1; step <= steps; ++step) {
    std::vector<Tensor> ins, outs;
    for (int k = 0; k < cfg.batch_size; ++k) {
      Tensor x = data.patch(refs[rng.below(refs.size())]);
      outs.push_back(bicubic_resize(x, cfg.scale));
      ins.push_back(std::move(x));
    }
    net.zero_grads();
    Var loss = mse_loss(net.forward(input_var(stack_batch(ins))), constant(stack_batch(outs)));
    double lv = loss->value.v[0];
    guard_finite(lv, step);
    backward(loss);
    opt.step(net.params());
    log.row(pretrain_row(step, lv));
  }
  net.training_step = steps;
  return net;
}

Network pretrain_ppnet(PatchLoader& data, const CodecCache& down_cache, const TrainConfig& cfg,
                       int steps, const std::string& run_dir) {
  cfg.validate();
  require_cache(down_cache, cfg, CacheTransform::kBicubicDown);
  if (down_cache.scale != cfg.scale)
    throw ConfigError("pretraining: cache scale " + std::to_string(down_cache.scale) +
                      " != config scale " + std::to_string(cfg.scale));
  NetworkSpec spec = default_spec("PPNet", cfg.qf, cfg.scale, cfg.channels);
  spec.depth = cfg.ppnet_depth;
  spec.width = cfg.ppnet_width;
  validate_spec(spec);
  Rng rng(cfg.seed);
  Network net(spec, rng);
  Adam opt(cfg.lr_pretrain, cfg.adam_beta1, cfg.adam_beta2);
  LossLog log(run_dir, "step,loss\n");
  size_t n = down_cache.entries.size();
  int ps = data.store().patch_size;
  for (int step = 1; step <= steps; ++step) {
    std::vector<Tensor> ins, outs;
    for (int k = 0; k < cfg.batch_size; ++k) {
      const auto& ent = down_cache.entries[rng.below(n)];
      ins.push_back(ent.decoded);
      outs.push_back(data.patch(ent.ref));
    }
    net.zero_grads();
    Var loss =
        mse_loss(net.forward(input_var(stack_batch(ins)), ps, ps), constant(stack_batch(outs)));
    double lv = loss->value.v[0];
    guard_finite(lv, step);
    backward(loss);
    opt.step(net.params());
    log.row(pretrain_row(step, lv));
  }
  net.training_step = steps;
  return net;
}

// ---------------------------------------------------------------------------
// End-to-end training
// ---------------------------------------------------------------------------

TrainState::TrainState(TrainConfig cfg_, Network f, Network g, Network h, Network p)
    : cfg(std::move(cfg_)),
      crnet(std::move(f)),
      ppnet(std::move(g)),
      acn(std::move(h)),
      benet(std::move(p)),
      opt_f(cfg.lr_finetune, cfg.adam_beta1, cfg.adam_beta2),
      opt_g(cfg.lr_finetune, cfg.adam_beta1, cfg.adam_beta2),
      opt_h(cfg.lr_aux, cfg.adam_beta1, cfg.adam_beta2),
      opt_p(cfg.lr_aux, cfg.adam_beta1, cfg.adam_beta2),
      rng(cfg.seed) {
  cfg.validate();
  if (crnet.spec.kind != "CRNet" || ppnet.spec.kind != "PPNet" || acn.spec.kind != "ACN" ||
      benet.spec.kind != "BENet")
    throw WeightsError("end-to-end training: wrong network kind among the four inits");
  if (crnet.spec.scale != cfg.scale || ppnet.spec.scale != cfg.scale)
    throw WeightsError("end-to-end training: CRNet/PPNet scale does not match config");
}

namespace {

void write_adam_blob(std::ofstream& f, Adam& opt, std::vector<Param*> params) {
  int64_t t = opt.step_count();
  f.write(reinterpret_cast<const char*>(&t), sizeof t);
  for (Param* p : params) {
    uint64_t count = p->value.size();
    f.write(reinterpret_cast<const char*>(&count), sizeof count);
    const Adam::Moments* mom = opt.moments(p);
    Tensor zero;
    if (!mom) {
      zero = Tensor::zeros_like(p->value);
    }
    const Tensor& m = mom ? mom->m : zero;
    const Tensor& v = mom ? mom->v : zero;
    f.write(reinterpret_cast<const char*>(m.v.data()), static_cast<std::streamsize>(count * 4));
    f.write(reinterpret_cast<const char*>(v.v.data()), static_cast<std::streamsize>(count * 4));
  }
}

void read_adam_blob(std::ifstream& f, Adam& opt, std::vector<Param*> params) {
  int64_t t = 0;
  f.read(reinterpret_cast<char*>(&t), sizeof t);
  opt.set_step_count(t);
  for (Param* p : params) {
    uint64_t count = 0;
    f.read(reinterpret_cast<char*>(&count), sizeof count);
    if (!f || count != p->value.size()) throw WeightsError("optimizer state: size mismatch");
    Adam::Moments mom;
    mom.m = Tensor::zeros_like(p->value);
    mom.v = Tensor::zeros_like(p->value);
    f.read(reinterpret_cast<char*>(mom.m.v.data()), static_cast<std::streamsize>(count * 4));
    f.read(reinterpret_cast<char*>(mom.v.v.data()), static_cast<std::streamsize>(count * 4));
    if (!f) throw WeightsError("optimizer state: truncated");
    opt.restore_moments(p, std::move(mom));
  }
}

}  // namespace

void TrainState::save(const std::string& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  {
    std::ofstream f(fs::path(dir) / "cfg.json");
    if (!f) throw DataError("cannot write " + dir + "/cfg.json");
    f << cfg.to_json().dump(2) << "\n";
  }
  crnet.save((fs::path(dir) / "crnet").string());
  ppnet.save((fs::path(dir) / "ppnet").string());
  acn.save((fs::path(dir) / "acn").string());
  benet.save((fs::path(dir) / "benet").string());
  auto* self = const_cast<TrainState*>(this);  // params() is non-const; state is not mutated
  std::ofstream f(fs::path(dir) / "optim.bin", std::ios::binary);
  if (!f) throw DataError("cannot write " + dir + "/optim.bin");
  const char magic[8] = {'A', 'C', 'N', 'F', 'O', 'P', 'T', '1'};
  f.write(magic, 8);
  write_adam_blob(f, self->opt_f, self->crnet.params());
  write_adam_blob(f, self->opt_g, self->ppnet.params());
  write_adam_blob(f, self->opt_h, self->acn.params());
  write_adam_blob(f, self->opt_p, self->benet.params());
  if (!f) throw DataError("short write to " + dir + "/optim.bin");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%lld\n%.17g\n", static_cast<long long>(step), loss_ema);
  std::ofstream sf(fs::path(dir) / "state.txt");
  sf << rng.serialize() << "\n" << buf;
  if (!sf) throw DataError("cannot write " + dir + "/state.txt");
}

TrainState TrainState::load(const std::string& dir) {
  std::ifstream cf(fs::path(dir) / "cfg.json");
  if (!cf) throw WeightsError("checkpoint missing cfg.json: " + dir);
  TrainConfig cfg;
  try {
    cfg = TrainConfig::from_json(json::parse(cf));
  } catch (const std::exception& e) {
    throw WeightsError("checkpoint has bad cfg.json: " + std::string(e.what()));
  }
  TrainState st(cfg, Network::load((fs::path(dir) / "crnet").string()),
                Network::load((fs::path(dir) / "ppnet").string()),
                Network::load((fs::path(dir) / "acn").string()),
                Network::load((fs::path(dir) / "benet").string()));
  std::ifstream f(fs::path(dir) / "optim.bin", std::ios::binary);
  if (!f) throw WeightsError("checkpoint missing optim.bin: " + dir);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != "ACNFOPT1")
    throw WeightsError("checkpoint optim.bin has bad magic: " + dir);
  read_adam_blob(f, st.opt_f, st.crnet.params());
  read_adam_blob(f, st.opt_g, st.ppnet.params());
  read_adam_blob(f, st.opt_h, st.acn.params());
  read_adam_blob(f, st.opt_p, st.benet.params());
  std::ifstream sf(fs::path(dir) / "state.txt");
  if (!sf) throw WeightsError("checkpoint missing state.txt: " + dir);
  std::string rng_state;
  if (!std::getline(sf, rng_state)) throw WeightsError("checkpoint state.txt truncated");
  st.rng.deserialize(rng_state);
  long long step_ll = 0;
  double ema = -1;
  sf >> step_ll >> ema;
  if (!sf) throw WeightsError("checkpoint state.txt truncated");
  st.step = step_ll;
  st.loss_ema = ema;
  return st;
}

std::string csv_row(const StepStats& s) {
  char buf[200];
  std::snprintf(buf, sizeof buf, "%lld,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e\n",
                static_cast<long long>(s.step), s.loss.rec, s.loss.bit, s.loss.reg, s.loss.total,
                s.real_bpp, s.acn_psnr);
  return buf;
}

std::vector<StepStats> train_end_to_end(TrainState& state, PatchLoader& data,
                                        const CodecBackend& codec, int total_steps,
                                        const std::string& run_dir) {
  const TrainConfig& cfg = state.cfg;
  cfg.validate();
  const auto& refs = data.store().train;
  if (refs.empty()) throw DataError("end-to-end training: empty patch store");
  if (data.store().patch_size != cfg.patch_size)
    throw ConfigError("end-to-end training: patch store size " +
                      std::to_string(data.store().patch_size) + " != config patch_size " +
                      std::to_string(cfg.patch_size));
  const double lambda_bit = cfg.lambda_bit_effective();
  const int ps = cfg.patch_size;
  LossLog log(run_dir, "step,rec,bit,reg,total,real_bpp,acn_psnr\n");
  std::vector<StepStats> out;

  while (state.step < total_steps) {
    // Minibatch draw.
    std::vector<Tensor> xs, regs;
    for (int k = 0; k < cfg.batch_size; ++k) {
      Tensor x = data.patch(refs[state.rng.below(refs.size())]);
      regs.push_back(bicubic_resize(x, cfg.scale));
      xs.push_back(std::move(x));
    }
    Tensor xb = stack_batch(xs);
    Tensor regb = stack_batch(regs);

    // (a) Joint f/g step against the frozen surrogates.
    bool upd_f = cfg.simultaneous || state.step % 2 == 0;
    bool upd_g = cfg.simultaneous || state.step % 2 == 1;
    state.acn.set_trainable(false);
    state.benet.set_trainable(false);
    state.crnet.set_trainable(upd_f);
    state.ppnet.set_trainable(upd_g);
    state.crnet.zero_grads();
    state.ppnet.zero_grads();

    Var xv = constant(xb);
    Var c = state.crnet.forward(xv);
    Var x_hat = state.ppnet.forward(state.acn.forward(c), ps, ps);
    Var rec = mse_loss(x_hat, xv);
    Var bit = mean_all(state.benet.forward(c));
    Var reg = mse_loss(c, constant(regb));
    Var total = add(rec, add(mul_scalar(bit, lambda_bit), mul_scalar(reg, cfg.lambda_reg)));

    StepStats st;
    st.step = state.step + 1;
    st.loss.rec = rec->value.v[0];
    st.loss.bit = bit->value.v[0];
    st.loss.reg = reg->value.v[0];
    st.loss.total = st.loss.rec + lambda_bit * st.loss.bit + cfg.lambda_reg * st.loss.reg;
    double graph_total = total->value.v[0];
    if (std::abs(graph_total - st.loss.total) >
        1e-4 * std::max(1.0, std::abs(st.loss.total)))
      throw Error("loss breakdown does not match its weighted sum");

    // Divergence guard before touching any weights.
    if (!std::isfinite(st.loss.total))
      throw Error("training diverged: non-finite loss at step " + std::to_string(st.step));
    if (state.loss_ema > 0 && state.step > 20 && st.loss.total > 10.0 * state.loss_ema)
      throw Error("training diverged: loss " + std::to_string(st.loss.total) + " exceeds 10x EMA " +
                  std::to_string(state.loss_ema) + " at step " + std::to_string(st.step));
    state.loss_ema = state.loss_ema < 0 ? st.loss.total : 0.99 * state.loss_ema + 0.01 * st.loss.total;

    Tensor c_val = c->value;  // unquantized f(x), reused for the refresh step
    backward(total);
    if (upd_f) state.opt_f.step(state.crnet.params());
    if (upd_g) state.opt_g.step(state.ppnet.params());

    // (b) Real-codec roundtrips on the quantized compact batch.
    std::vector<Tensor> decs;
    Tensor bpp_target(cfg.batch_size, 1, 1, 1);
    double real_bpp = 0;
    for (int k = 0; k < cfg.batch_size; ++k) {
      Tensor cq = quantize_unit(c_val.slice(k));
      auto [dec, bits] = codec.roundtrip(cq, cfg.qf);
      double bpp = static_cast<double>(bits) / (static_cast<double>(cq.h) * cq.w);
      bpp_target.v[static_cast<size_t>(k)] = static_cast<float>(bpp);
      real_bpp += bpp;
      decs.push_back(std::move(dec));
    }
    st.real_bpp = real_bpp / cfg.batch_size;
    Tensor dec_b = stack_batch(decs);

    // (c) One surrogate refresh step each at lr_aux, on this batch's group.
    state.crnet.set_trainable(true);
    state.ppnet.set_trainable(true);
    if (cfg.refresh_acn) {
      state.acn.set_trainable(true);
      state.acn.zero_grads();
      Var h_out = state.acn.forward(constant(c_val));
      st.acn_psnr = psnr(h_out->value, dec_b);
      Var h_loss = mse_loss(h_out, constant(dec_b));
      guard_finite(h_loss->value.v[0], st.step);
      backward(h_loss);
      state.opt_h.step(state.acn.params());
    } else {
      st.acn_psnr = psnr(state.acn.infer(c_val), dec_b);
      state.acn.set_trainable(true);
    }
    if (cfg.refresh_benet) {
      state.benet.set_trainable(true);
      state.benet.zero_grads();
      Var p_loss = mse_loss(state.benet.forward(constant(c_val)), constant(bpp_target));
      guard_finite(p_loss->value.v[0], st.step);
      backward(p_loss);
      state.opt_p.step(state.benet.params());
    } else {
      state.benet.set_trainable(true);
    }

    ++state.step;
    out.push_back(st);
    if (state.step % cfg.log_every == 0) log.row(csv_row(st));
    if (!run_dir.empty() && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      fs::path ckpt = fs::path(run_dir) / "ckpt";
      fs::path tmp = fs::path(run_dir) / "ckpt.tmp";
      std::error_code ec;
      fs::remove_all(tmp, ec);
      state.save(tmp.string());
      fs::remove_all(ckpt, ec);
      fs::rename(tmp, ckpt);
    }
  }
  state.crnet.training_step = state.step;
  state.ppnet.training_step = state.step;
  state.acn.training_step = state.step;
  state.benet.training_step = state.step;
  return out;
}

}  // namespace acnf
