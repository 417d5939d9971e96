// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "acnf/data.hpp"
#include "acnf/networks.hpp"

namespace acnf {

double default_lambda_bit(int qf);

struct TrainConfig {
  int qf = 10;
  double scale = 1.0;
  double lambda_bit = -1.0;  // < 0 -> default_lambda_bit(qf)
  double lambda_reg = 0.1;
  int batch_size = 16;
  double lr_pretrain = 1e-4;
  double lr_finetune = 5e-5;
  double lr_aux = 5e-6;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.99;
  int steps_pretrain_acn = 2000;
  int steps_pretrain_benet = 2000;
  int steps_pretrain_crnet = 500;
  int steps_pretrain_ppnet = 2000;
  int steps_finetune = 2000;
  uint64_t seed = 1;
  int channels = 1;
  int patch_size = 128;
  // Architecture knobs (defaults match the released operating points).
  int crnet_depth = 8, crnet_width = 64;
  int ppnet_depth = 16, ppnet_width = 64;
  int acn_depth = 12, acn_width = 256;
  int benet_depth = 10, benet_width = 256;
  bool simultaneous = true;  // joint f/g updates; false = alternating ablation
  bool refresh_acn = true;   // Algorithm step (c) toggles, for ablations
  bool refresh_benet = true;
  int log_every = 1;
  int checkpoint_every = 0;  // 0 = off

  double lambda_bit_effective() const { return lambda_bit < 0 ? default_lambda_bit(qf) : lambda_bit; }
  nlohmann::ordered_json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
  void validate() const;  // throws ConfigError
};

struct LossBreakdown {
  double rec = 0, bit = 0, reg = 0, total = 0;
};

// Scalar, non-differentiable loss entry points (the differentiable versions
// live inside the training loops as tape expressions).
double rec_loss(const Tensor& x, const Tensor& x_hat);
double reg_loss(const Tensor& c, const Tensor& x, double scale);
double bit_loss(const Tensor& c, Network& benet);
LossBreakdown total_loss(const Tensor& x, const Tensor& c, const Tensor& x_hat,
                         const TrainConfig& cfg, Network& benet);

// ---------------------------------------------------------------------------
// Pretraining (one network at a time, Adam at lr_pretrain).
// Each writes "step,loss" lines to <run_dir>/loss_log.csv when run_dir is
// nonempty and stamps training_step on the returned network.
// ---------------------------------------------------------------------------

Network pretrain_acn(PatchLoader& data, const CodecCache& cache, const TrainConfig& cfg,
                     int steps, const std::string& run_dir = "");
Network pretrain_benet(PatchLoader& data, const CodecCache& cache, const TrainConfig& cfg,
                       int steps, const std::string& run_dir = "");
Network pretrain_crnet(PatchLoader& data, const TrainConfig& cfg, int steps,
                       const std::string& run_dir = "");
Network pretrain_ppnet(PatchLoader& data, const CodecCache& down_cache, const TrainConfig& cfg,
                       int steps, const std::string& run_dir = "");

// ---------------------------------------------------------------------------
// End-to-end fine-tuning (Algorithm: joint f/g step against frozen h/p, real
// codec roundtrips on the quantized compact batch, then one h and one p
// refresh step at lr_aux).
// ---------------------------------------------------------------------------

struct StepStats {
  int64_t step = 0;
  LossBreakdown loss;
  double real_bpp = 0;   // measured bits per compact pixel from the real codec
  double acn_psnr = 0;   // surrogate fidelity: PSNR(h(c), decode(encode(c)))
};

struct TrainState {
  TrainConfig cfg;
  Network crnet, ppnet, acn, benet;
  Adam opt_f, opt_g, opt_h, opt_p;
  Rng rng;
  int64_t step = 0;
  double loss_ema = -1.0;

  TrainState(TrainConfig cfg, Network f, Network g, Network h, Network p);
  void save(const std::string& dir) const;
  static TrainState load(const std::string& dir);
};

// Advances state until total_steps, appending one CSV row per step
// ("step,rec,bit,reg,total,real_bpp,acn_psnr") to <run_dir>/loss_log.csv when
// run_dir is nonempty, checkpointing to <run_dir>/ckpt every
// cfg.checkpoint_every steps. Aborts with Error on non-finite loss or on
// total > 10x its exponential moving average (divergence guard).
std::vector<StepStats> train_end_to_end(TrainState& state, PatchLoader& data,
                                        const CodecBackend& codec, int total_steps,
                                        const std::string& run_dir = "");

std::string csv_row(const StepStats& s);  // fixed %.9e formatting, reproducible

}  // namespace acnf
