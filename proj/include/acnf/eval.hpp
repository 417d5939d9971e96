// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "acnf/codec.hpp"
#include "acnf/container.hpp"
#include "acnf/networks.hpp"
#include "acnf/tensor.hpp"

namespace acnf {

// PSNR in dB over the 8-bit domain (MAX=255); both images are quantized to
// the 8-bit grid first. Zero MSE reports the 100 dB sentinel.
double psnr(const Tensor& a, const Tensor& b);

// Mean local SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01 K2=0.03, L=255,
// averaged over channels. Throws if images are smaller than the window.
double ssim(const Tensor& a, const Tensor& b);

struct RDPoint {
  std::string method;
  int qf = 0;
  double scale = 1.0;
  double bpp = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct RDCurve {
  std::string method;
  std::vector<RDPoint> points;  // strictly increasing bpp
};

// Sorts by bpp and enforces the strictly-increasing-bpp invariant.
RDCurve make_curve(const std::string& method, std::vector<RDPoint> points);

struct CompressResult {
  RDPoint point;
  std::vector<uint8_t> container;  // complete .acnf.jpg byte stream
  Tensor recon;                    // clamped restored image
};

// Full inference path: compact = quantize(clamp(f(x))); JPEG-encode; pack;
// recon = clamp(g(decode)). bpp charges every container byte to the original
// pixel count.
CompressResult compress_eval(const Tensor& image, Network& crnet, Network& ppnet, int qf,
                             double scale, const CodecBackend& codec,
                             const std::array<uint8_t, 8>& model_id);

// Baselines measured under the same bpp accounting (bare JPEG bytes).
RDPoint jpeg_rd_point(const Tensor& image, int qf, const CodecBackend& codec);
RDPoint bicubic_rd_point(const Tensor& image, int qf, double scale, const CodecBackend& codec);

// Averages per-qf over images, then forms a curve.
using RdPointFn = std::function<RDPoint(const Tensor& image, int qf)>;
RDCurve rd_sweep(const std::string& method, const std::vector<Tensor>& images,
                 const std::vector<int>& qfs, const RdPointFn& point_fn);

// Classic Bjontegaard rate delta in percent (negative = test saves bitrate):
// cubic fit of log10(rate) vs PSNR per curve, integrated over the common
// PSNR interval. Requires >= 4 points per curve and overlapping PSNR ranges.
double bd_rate(const RDCurve& reference, const RDCurve& test);

// Half-open qf ranges mapping to scales: qf <= low_max -> 0.5,
// low_max < qf <= mid_max -> 0.75, otherwise 1.0.
struct ScalePolicy {
  int low_max = 15;
  int mid_max = 50;
};
double select_scale(int qf, const ScalePolicy& policy = {});

// Writes points.csv, summary.json (pairwise BD-rates both directions when
// eligible), and rd_curves.svg into out_dir. Deterministic bytes.
void emit_report(const std::vector<RDCurve>& curves, const std::string& out_dir);

void write_points_csv(const std::string& path, const std::vector<RDCurve>& curves);
std::vector<RDCurve> read_points_csv(const std::string& path);
void write_rd_svg(const std::string& path, const std::vector<RDCurve>& curves);

}  // namespace acnf
