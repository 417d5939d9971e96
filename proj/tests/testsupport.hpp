// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared test utilities: brute-force oracles written directly from the
// definitions (no code shared with the library paths they check), a central
// finite-difference gradient checker, and tmp-dir plumbing.

#pragma once

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "acnf/autodiff.hpp"
#include "acnf/tensor.hpp"

namespace testsupport {

// Unique scratch directory, removed on destruction.
class TmpDir {
 public:
  explicit TmpDir(const std::string& tag) {
    std::string tpl =
        (std::filesystem::temp_directory_path() / ("acnf_" + tag + "_XXXXXX")).string();
    std::vector<char> buf(tpl.begin(), tpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw std::runtime_error("mkdtemp failed");
    path_ = buf.data();
  }
  ~TmpDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::string& path() const { return path_; }
  std::string sub(const std::string& name) const {
    return (std::filesystem::path(path_) / name).string();
  }

 private:
  std::string path_;
};

template <class T = float>
acnf::TensorT<T> random_tensor(acnf::Rng& rng, int n, int h, int w, int c, double lo = 0.0,
                               double hi = 1.0) {
  acnf::TensorT<T> t(n, h, w, c);
  for (auto& v : t.v) v = static_cast<T>(lo + (hi - lo) * rng.uniform());
  return t;
}

// ---------------------------------------------------------------------------
// PSNR oracle: quantize both images to the 8-bit grid, MSE over all samples,
// 10*log10(255^2 / MSE), 100 dB when identical.
// ---------------------------------------------------------------------------
inline double oracle_psnr(const acnf::Tensor& a, const acnf::Tensor& b) {
  if (a.v.size() != b.v.size()) throw std::runtime_error("oracle_psnr: shape mismatch");
  auto q = [](float v) {
    double s = std::lround(255.0 * static_cast<double>(v));
    return std::min(255.0, std::max(0.0, s));
  };
  double se = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = q(a.v[i]) - q(b.v[i]);
    se += d * d;
  }
  double mse = se / static_cast<double>(a.v.size());
  if (mse == 0.0) return 100.0;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// ---------------------------------------------------------------------------
// SSIM oracle: direct 2D 11x11 Gaussian window (sigma 1.5), valid positions
// only, K1=0.01 K2=0.03 L=255, mean over windows then channels.
// ---------------------------------------------------------------------------
inline double oracle_ssim(const acnf::Tensor& a, const acnf::Tensor& b) {
  const int win = 11;
  const double sigma = 1.5, L = 255.0;
  const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
  if (a.h < win || a.w < win) throw std::runtime_error("oracle_ssim: image smaller than window");
  double g[win][win], gsum = 0.0;
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) {
      double di = i - 5, dj = j - 5;
      g[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
      gsum += g[i][j];
    }
  for (int i = 0; i < win; ++i)
    for (int j = 0; j < win; ++j) g[i][j] /= gsum;
  auto q = [](float v) {
    double s = std::lround(255.0 * static_cast<double>(v));
    return std::min(255.0, std::max(0.0, s));
  };
  double chan_mean = 0.0;
  for (int ch = 0; ch < a.c; ++ch) {
    double acc = 0.0;
    long count = 0;
    for (int y = 0; y + win <= a.h; ++y)
      for (int x = 0; x + win <= a.w; ++x) {
        double mu_a = 0, mu_b = 0, aa = 0, bb = 0, ab = 0;
        for (int i = 0; i < win; ++i)
          for (int j = 0; j < win; ++j) {
            double va = q(a.at(0, y + i, x + j, ch)), vb = q(b.at(0, y + i, x + j, ch));
            mu_a += g[i][j] * va;
            mu_b += g[i][j] * vb;
            aa += g[i][j] * va * va;
            bb += g[i][j] * vb * vb;
            ab += g[i][j] * va * vb;
          }
        double var_a = aa - mu_a * mu_a, var_b = bb - mu_b * mu_b, cov = ab - mu_a * mu_b;
        double s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
                   ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
        acc += s;
        ++count;
      }
    chan_mean += acc / static_cast<double>(count);
  }
  return chan_mean / a.c;
}

// ---------------------------------------------------------------------------
// Bicubic oracle: per output pixel, Keys kernel a=-0.5 widened by 1/scale
// when minifying, taps clamped to the edge, weights renormalized. Matches the
// definition, not the library's separable-plan implementation.
// ---------------------------------------------------------------------------
inline double keys_cubic(double t) {
  t = std::fabs(t);
  if (t < 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

inline acnf::Tensor oracle_bicubic(const acnf::Tensor& x, int out_h, int out_w) {
  acnf::Tensor out(x.n, out_h, out_w, x.c);
  auto axis = [](int in_len, int out_len, int dst, std::vector<int>& idx,
                 std::vector<double>& wts) {
    double scale = static_cast<double>(out_len) / in_len;
    double widen = scale < 1.0 ? 1.0 / scale : 1.0;
    double src = (dst + 0.5) / scale - 0.5;
    int lo = static_cast<int>(std::floor(src - 2.0 * widen)) + 1;
    int hi = static_cast<int>(std::ceil(src + 2.0 * widen)) - 1;
    idx.clear();
    wts.clear();
    double sum = 0.0;
    for (int k = lo; k <= hi; ++k) {
      double w = keys_cubic((k - src) / widen);
      if (w == 0.0) continue;
      idx.push_back(std::min(in_len - 1, std::max(0, k)));
      wts.push_back(w);
      sum += w;
    }
    for (auto& w : wts) w /= sum;
  };
  std::vector<int> yi, xi;
  std::vector<double> yw, xw;
  for (int n = 0; n < x.n; ++n)
    for (int oy = 0; oy < out_h; ++oy) {
      axis(x.h, out_h, oy, yi, yw);
      for (int ox = 0; ox < out_w; ++ox) {
        axis(x.w, out_w, ox, xi, xw);
        for (int c = 0; c < x.c; ++c) {
          double acc = 0.0;
          for (size_t a = 0; a < yi.size(); ++a)
            for (size_t b = 0; b < xi.size(); ++b)
              acc += yw[a] * xw[b] * x.at(n, yi[a], xi[b], c);
          out.at(n, oy, ox, c) = static_cast<float>(acc);
        }
      }
    }
  return out;
}

// ---------------------------------------------------------------------------
// BD-rate oracle: cubic least-squares fit of log10(bpp) against PSNR via
// explicit normal equations in long double, then midpoint-rule numeric
// integration at 200k samples (the library integrates analytically).
// ---------------------------------------------------------------------------
struct BdSample {
  double bpp, psnr;
};

inline std::array<long double, 4> oracle_cubic_fit(const std::vector<BdSample>& pts) {
  // Solve (V^T V) c = V^T y with Vandermonde V in PSNR, y = log10(bpp).
  long double a[4][5] = {};
  for (const auto& p : pts) {
    long double v[4] = {1.0L, p.psnr, static_cast<long double>(p.psnr) * p.psnr,
                        static_cast<long double>(p.psnr) * p.psnr * p.psnr};
    long double y = std::log10(static_cast<long double>(p.bpp));
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) a[i][j] += v[i] * v[j];
      a[i][4] += v[i] * y;
    }
  }
  for (int col = 0; col < 4; ++col) {  // Gaussian elimination, partial pivot
    int piv = col;
    for (int r = col + 1; r < 4; ++r)
      if (std::fabs(static_cast<double>(a[r][col])) > std::fabs(static_cast<double>(a[piv][col])))
        piv = r;
    for (int j = 0; j < 5; ++j) std::swap(a[col][j], a[piv][j]);
    for (int r = 0; r < 4; ++r) {
      if (r == col) continue;
      long double f = a[r][col] / a[col][col];
      for (int j = 0; j < 5; ++j) a[r][j] -= f * a[col][j];
    }
  }
  return {a[0][4] / a[0][0], a[1][4] / a[1][1], a[2][4] / a[2][2], a[3][4] / a[3][3]};
}

inline double oracle_bd_rate(const std::vector<BdSample>& ref, const std::vector<BdSample>& test) {
  auto fit_r = oracle_cubic_fit(ref), fit_t = oracle_cubic_fit(test);
  auto minmax_psnr = [](const std::vector<BdSample>& v) {
    long double lo = v.front().psnr, hi = v.front().psnr;
    for (const auto& p : v) {
      lo = std::min(lo, static_cast<long double>(p.psnr));
      hi = std::max(hi, static_cast<long double>(p.psnr));
    }
    return std::pair<long double, long double>(lo, hi);
  };
  auto [rlo, rhi] = minmax_psnr(ref);
  auto [tlo, thi] = minmax_psnr(test);
  long double lo = std::max(rlo, tlo), hi = std::min(rhi, thi);
  if (!(hi > lo)) throw std::runtime_error("oracle_bd_rate: no PSNR overlap");
  auto eval = [](const std::array<long double, 4>& c, long double p) {
    return c[0] + c[1] * p + c[2] * p * p + c[3] * p * p * p;
  };
  const int kSamples = 200000;
  long double acc = 0.0, step = (hi - lo) / kSamples;
  for (int i = 0; i < kSamples; ++i) {
    long double p = lo + (i + 0.5L) * step;
    acc += (eval(fit_t, p) - eval(fit_r, p)) * step;
  }
  long double mean_diff = acc / (hi - lo);
  return static_cast<double>(100.0L * (std::pow(10.0L, mean_diff) - 1.0L));
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checking (double precision graphs).
// ---------------------------------------------------------------------------
inline double fd_derivative(const std::function<double()>& loss, double* slot,
                            double eps = 1e-5) {
  double keep = *slot;
  *slot = keep + eps;
  double up = loss();
  *slot = keep - eps;
  double dn = loss();
  *slot = keep;
  return (up - dn) / (2.0 * eps);
}

struct GradcheckStats {
  int checked = 0;
  int failed = 0;
  double worst_rel = 0.0;
  double pass_fraction() const {
    return checked == 0 ? 0.0 : 1.0 - static_cast<double>(failed) / checked;
  }
};

// Compares analytic against central finite differences at sampled parameter
// coordinates. rel tolerance with a small absolute floor for near-zero pairs.
inline void check_coord(GradcheckStats& st, double analytic, double fd, double rel_tol = 1e-3,
                        double abs_floor = 1e-7) {
  double denom = std::max(std::fabs(analytic), std::fabs(fd));
  double err = std::fabs(analytic - fd);
  double rel = denom > 0 ? err / denom : 0.0;
  ++st.checked;
  bool ok = err <= abs_floor || rel <= rel_tol;
  if (!ok) ++st.failed;
  if (denom > abs_floor) st.worst_rel = std::max(st.worst_rel, rel);
}

// Samples up to n_coords coordinates of each parameter (round-robin) and
// gradchecks them against `loss`, which must rebuild the graph on every call.
// Analytic grads must already be accumulated in the params before calling.
inline GradcheckStats gradcheck_params(const std::vector<acnf::ParamT<double>*>& params,
                                       const std::function<double()>& loss, acnf::Rng& rng,
                                       int n_coords, double rel_tol = 1e-3) {
  GradcheckStats st;
  std::vector<std::pair<acnf::ParamT<double>*, size_t>> coords;
  for (auto* p : params)
    for (size_t i = 0; i < p->value.v.size(); ++i) coords.emplace_back(p, i);
  rng.shuffle(coords.begin(), coords.end());
  size_t take = std::min<size_t>(coords.size(), static_cast<size_t>(n_coords));
  for (size_t k = 0; k < take; ++k) {
    auto [p, i] = coords[k];
    double fd = fd_derivative(loss, &p->value.v[i]);
    check_coord(st, p->grad.v[i], fd, rel_tol);
  }
  return st;
}

}  // namespace testsupport
