// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "acnf/error.hpp"

namespace acnf {

// Dense 4-D array, row-major with the last axis fastest.
// Images use the axes as (batch, height, width, channels); parameter
// tensors reuse the same four slots as generic dimensions (e.g. a conv
// kernel is stored as (kh, kw, c_in, c_out)).
template <class T>
struct TensorT {
  int n = 0, h = 0, w = 0, c = 0;
  std::vector<T> v;

  TensorT() = default;
  TensorT(int n_, int h_, int w_, int c_)
      : n(n_), h(h_), w(w_), c(c_), v(checked_size(n_, h_, w_, c_), T(0)) {}

  static size_t checked_size(int n_, int h_, int w_, int c_) {
    if (n_ < 0 || h_ < 0 || w_ < 0 || c_ < 0) throw ValueError("negative tensor dimension");
    return static_cast<size_t>(n_) * h_ * w_ * c_;
  }

  static TensorT zeros_like(const TensorT& o) { return TensorT(o.n, o.h, o.w, o.c); }

  size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }
  bool same_shape(const TensorT& o) const {
    return n == o.n && h == o.h && w == o.w && c == o.c;
  }
  std::string shape_str() const {
    std::ostringstream os;
    os << "(" << n << "," << h << "," << w << "," << c << ")";
    return os.str();
  }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& at(int i, int y, int x, int k) {
    return v[((static_cast<size_t>(i) * h + y) * w + x) * c + k];
  }
  const T& at(int i, int y, int x, int k) const {
    return v[((static_cast<size_t>(i) * h + y) * w + x) * c + k];
  }

  void fill(T value) { std::fill(v.begin(), v.end(), value); }

  bool all_finite() const {
    for (T x : v)
      if (!std::isfinite(static_cast<double>(x))) return false;
    return true;
  }

  template <class U>
  TensorT<U> cast() const {
    TensorT<U> out(n, h, w, c);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }

  // Single image slice (batch axis dropped to 1).
  TensorT slice(int i) const {
    TensorT out(1, h, w, c);
    size_t stride = static_cast<size_t>(h) * w * c;
    std::copy(v.begin() + i * stride, v.begin() + (i + 1) * stride, out.v.begin());
    return out;
  }
};

using Tensor = TensorT<float>;

// Mean squared difference, accumulated in double.
template <class T>
double mse(const TensorT<T>& a, const TensorT<T>& b) {
  if (!a.same_shape(b)) throw ValueError("mse: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  if (a.empty()) throw ValueError("mse: empty tensors");
  double acc = 0.0;
  for (size_t i = 0; i < a.v.size(); ++i) {
    double d = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.v.size());
}

// Clamp to [0,1] and snap to the 8-bit grid: round(255*v)/255.
template <class T>
TensorT<T> quantize_unit(const TensorT<T>& x) {
  TensorT<T> out = x;
  for (T& v : out.v) {
    double q = std::lround(std::min(1.0, std::max(0.0, static_cast<double>(v))) * 255.0);
    v = static_cast<T>(q / 255.0);
  }
  return out;
}

template <class T>
std::vector<uint8_t> to_bytes_8bit(const TensorT<T>& x) {
  std::vector<uint8_t> out(x.size());
  for (size_t i = 0; i < x.v.size(); ++i) {
    double q = std::lround(std::min(1.0, std::max(0.0, static_cast<double>(x.v[i]))) * 255.0);
    out[i] = static_cast<uint8_t>(q);
  }
  return out;
}

template <class T = float>
TensorT<T> from_bytes_8bit(const std::vector<uint8_t>& bytes, int h, int w, int c) {
  if (bytes.size() != static_cast<size_t>(h) * w * c)
    throw ValueError("from_bytes_8bit: size mismatch");
  TensorT<T> out(1, h, w, c);
  for (size_t i = 0; i < bytes.size(); ++i) out.v[i] = static_cast<T>(bytes[i] / 255.0);
  return out;
}

// Deterministic RNG. The engine is std::mt19937_64 (bit-exact across
// standard libraries); the variate transforms below are spelled out here
// so draws do not depend on implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) : eng_(seed) {}

  uint64_t u64() { return eng_(); }

  // Uniform in [0,1).
  double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, bound). bound must be > 0.
  uint64_t below(uint64_t bound) {
    if (bound == 0) throw ValueError("Rng::below: zero bound");
    // Rejection sampling keeps the draw unbiased.
    uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    uint64_t r;
    do {
      r = eng_();
    } while (r >= limit);
    return r % bound;
  }

  // Box-Muller; one fresh pair per call, second value discarded.
  double normal() {
    double u1 = uniform(), u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <class It>
  void shuffle(It first, It last) {
    size_t len = static_cast<size_t>(last - first);
    for (size_t i = len; i > 1; --i) std::swap(first[i - 1], first[below(i)]);
  }

  std::string serialize() const {
    std::ostringstream os;
    os << eng_;
    return os.str();
  }
  void deserialize(const std::string& s) {
    std::istringstream is(s);
    is >> eng_;
    if (!is) throw ValueError("Rng::deserialize: malformed state");
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace acnf
