// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

#include "acnf/tensor.hpp"

namespace acnf {

// Deterministic procedural test images: smooth gradient base, a few
// soft-edged shapes, oriented sinusoids with 1/f-style amplitude decay, and
// mild texture noise. Index selects the image; same (index, dims, channels)
// always yields the same pixels.
inline Tensor synthetic_image(uint64_t index, int h, int w, int channels = 1) {
  if (h <= 0 || w <= 0 || (channels != 1 && channels != 3))
    throw ValueError("synthetic_image: bad dims/channels");
  Rng rng(0x5eedc0de ^ (index * 0x9e3779b97f4a7c15ULL));
  Tensor img(1, h, w, channels);

  double base = rng.uniform(0.25, 0.65);
  double gx = rng.uniform(-0.3, 0.3), gy = rng.uniform(-0.3, 0.3);

  struct Blob {
    double cy, cx, ry, rx, amp, soft;
  };
  Blob blobs[4];
  int n_blobs = 2 + static_cast<int>(rng.below(3));
  for (int i = 0; i < n_blobs; ++i)
    blobs[i] = {rng.uniform(0.1, 0.9) * h, rng.uniform(0.1, 0.9) * w,
                rng.uniform(0.08, 0.3) * h, rng.uniform(0.08, 0.3) * w,
                rng.uniform(-0.35, 0.35), rng.uniform(2.0, 10.0)};

  struct Wave {
    double fy, fx, phase, amp;
  };
  Wave waves[5];
  int n_waves = 3 + static_cast<int>(rng.below(3));
  for (int i = 0; i < n_waves; ++i) {
    double freq = rng.uniform(2.0, 24.0);  // cycles per image
    double theta = rng.uniform(0.0, 2.0 * M_PI);
    waves[i] = {freq * std::sin(theta) / h, freq * std::cos(theta) / w,
                rng.uniform(0.0, 2.0 * M_PI), rng.uniform(0.02, 0.12) * (4.0 / (2.0 + freq))};
  }

  double chroma[3] = {0, 0, 0};
  if (channels == 3)
    for (int k = 0; k < 3; ++k) chroma[k] = rng.uniform(-0.08, 0.08);

  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double v = base + gx * (static_cast<double>(x) / w - 0.5) +
                 gy * (static_cast<double>(y) / h - 0.5);
      for (int i = 0; i < n_blobs; ++i) {
        const Blob& b = blobs[i];
        double dy = (y - b.cy) / b.ry, dx = (x - b.cx) / b.rx;
        double d = std::sqrt(dy * dy + dx * dx);
        v += b.amp / (1.0 + std::exp(b.soft * (d - 1.0)));  // soft disc edge
      }
      for (int i = 0; i < n_waves; ++i) {
        const Wave& wv = waves[i];
        v += wv.amp * std::sin(2.0 * M_PI * (wv.fy * y + wv.fx * x) + wv.phase);
      }
      v += rng.uniform(-0.015, 0.015);
      v = std::clamp(v, 0.02, 0.98);
      if (channels == 1) {
        img.at(0, y, x, 0) = static_cast<float>(v);
      } else {
        for (int k = 0; k < 3; ++k)
          img.at(0, y, x, k) = static_cast<float>(std::clamp(v + chroma[k] * v, 0.02, 0.98));
      }
    }
  return img;
}

}  // namespace acnf
