// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "acnf/tensor.hpp"

namespace acnf {

// Keys-style cubic kernel with a = -0.5.
inline double cubic_kernel(double t) {
  t = std::fabs(t);
  if (t <= 1.0) return 1.5 * t * t * t - 2.5 * t * t + 1.0;
  if (t < 2.0) return -0.5 * t * t * t + 2.5 * t * t - 4.0 * t + 2.0;
  return 0.0;
}

// Sampling plan for one axis. Coordinates map as src = (dst + 0.5)/s - 0.5.
// For downscale the kernel is widened by 1/s (antialiasing); weights are
// renormalized so a constant signal stays constant. Borders replicate.
struct ResizeAxisPlan {
  int in_len = 0, out_len = 0;
  int taps = 0;
  std::vector<int> index;       // out_len * taps source indices, clamped
  std::vector<double> weight;   // out_len * taps weights, rows sum to 1

  ResizeAxisPlan() = default;
  ResizeAxisPlan(int in_len_, int out_len_) : in_len(in_len_), out_len(out_len_) {
    if (in_len <= 0 || out_len <= 0) throw ValueError("resize: empty axis");
    double scale = static_cast<double>(out_len) / in_len;
    double k = std::min(scale, 1.0);   // kernel scale; <1 widens the support
    double support = 2.0 / k;
    taps = static_cast<int>(std::ceil(support * 2.0)) + 2;
    index.assign(static_cast<size_t>(out_len) * taps, 0);
    weight.assign(static_cast<size_t>(out_len) * taps, 0.0);
    for (int o = 0; o < out_len; ++o) {
      double center = (o + 0.5) / scale - 0.5;
      int left = static_cast<int>(std::floor(center - support)) + 1;
      double sum = 0.0;
      for (int t = 0; t < taps; ++t) {
        int j = left + t;
        double wgt = cubic_kernel((center - j) * k) * k;
        index[static_cast<size_t>(o) * taps + t] = std::clamp(j, 0, in_len - 1);
        weight[static_cast<size_t>(o) * taps + t] = wgt;
        sum += wgt;
      }
      for (int t = 0; t < taps; ++t) weight[static_cast<size_t>(o) * taps + t] /= sum;
    }
  }
};

namespace detail {

// Separable application, rows then columns, accumulating in double.
template <class T>
TensorT<T> resize_apply(const TensorT<T>& x, const ResizeAxisPlan& rows,
                        const ResizeAxisPlan& cols) {
  TensorT<T> tmp(x.n, rows.out_len, x.w, x.c);
  for (int i = 0; i < x.n; ++i)
    for (int y = 0; y < rows.out_len; ++y)
      for (int xx = 0; xx < x.w; ++xx)
        for (int k = 0; k < x.c; ++k) {
          double acc = 0.0;
          for (int t = 0; t < rows.taps; ++t)
            acc += rows.weight[static_cast<size_t>(y) * rows.taps + t] *
                   static_cast<double>(x.at(i, rows.index[static_cast<size_t>(y) * rows.taps + t], xx, k));
          tmp.at(i, y, xx, k) = static_cast<T>(acc);
        }
  TensorT<T> out(x.n, rows.out_len, cols.out_len, x.c);
  for (int i = 0; i < x.n; ++i)
    for (int y = 0; y < rows.out_len; ++y)
      for (int xx = 0; xx < cols.out_len; ++xx)
        for (int k = 0; k < x.c; ++k) {
          double acc = 0.0;
          for (int t = 0; t < cols.taps; ++t)
            acc += cols.weight[static_cast<size_t>(xx) * cols.taps + t] *
                   static_cast<double>(tmp.at(i, y, cols.index[static_cast<size_t>(xx) * cols.taps + t], k));
          out.at(i, y, xx, k) = static_cast<T>(acc);
        }
  return out;
}

// Transpose of resize_apply, for gradient propagation.
template <class T>
TensorT<T> resize_apply_transposed(const TensorT<T>& gout, const ResizeAxisPlan& rows,
                                   const ResizeAxisPlan& cols, int in_h, int in_w) {
  TensorT<T> tmp(gout.n, gout.h, in_w, gout.c);
  for (int i = 0; i < gout.n; ++i)
    for (int y = 0; y < gout.h; ++y)
      for (int xx = 0; xx < cols.out_len; ++xx)
        for (int k = 0; k < gout.c; ++k) {
          double g = static_cast<double>(gout.at(i, y, xx, k));
          for (int t = 0; t < cols.taps; ++t)
            tmp.at(i, y, cols.index[static_cast<size_t>(xx) * cols.taps + t], k) +=
                static_cast<T>(cols.weight[static_cast<size_t>(xx) * cols.taps + t] * g);
        }
  TensorT<T> out(gout.n, in_h, in_w, gout.c);
  for (int i = 0; i < gout.n; ++i)
    for (int y = 0; y < rows.out_len; ++y)
      for (int xx = 0; xx < in_w; ++xx)
        for (int k = 0; k < gout.c; ++k) {
          double g = static_cast<double>(tmp.at(i, y, xx, k));
          for (int t = 0; t < rows.taps; ++t)
            out.at(i, rows.index[static_cast<size_t>(y) * rows.taps + t], xx, k) +=
                static_cast<T>(rows.weight[static_cast<size_t>(y) * rows.taps + t] * g);
        }
  return out;
}

}  // namespace detail

inline int scaled_len(int len, double scale) {
  int out = static_cast<int>(std::lround(scale * len));
  return std::max(out, 1);
}

// Unclamped bicubic resampling to explicit output dimensions.
template <class T>
TensorT<T> resize_bicubic_to(const TensorT<T>& x, int out_h, int out_w) {
  if (x.empty()) throw ValueError("resize: empty input");
  ResizeAxisPlan rows(x.h, out_h), cols(x.w, out_w);
  return detail::resize_apply(x, rows, cols);
}

/// The public image-domain resize: dims round(scale*len), values clamped to [0,1].
template <class T>
TensorT<T> bicubic_resize(const TensorT<T>& x, double scale) {
  if (!(scale > 0.0)) throw ValueError("bicubic_resize: scale must be > 0");
  TensorT<T> out = resize_bicubic_to(x, scaled_len(x.h, scale), scaled_len(x.w, scale));
  for (T& v : out.v) v = std::clamp(v, T(0), T(1));
  return out;
}

}  // namespace acnf
