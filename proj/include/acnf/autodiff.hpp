// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstring>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "acnf/resize.hpp"
#include "acnf/tensor.hpp"

namespace acnf {

// ---------------------------------------------------------------------------
// Plain (non-differentiable) block rearrangements.
// space_to_depth moves each bxb spatial block into b*b*c channels, channel
// index (dy*b + dx)*c + k; depth_to_space is its exact inverse.
// ---------------------------------------------------------------------------

template <class T>
TensorT<T> space_to_depth(const TensorT<T>& x, int block) {
  if (block <= 0) throw ValueError("space_to_depth: block must be positive");
  if (x.h % block != 0 || x.w % block != 0)
    throw ValueError("space_to_depth: dims " + x.shape_str() + " not divisible by block");
  TensorT<T> out(x.n, x.h / block, x.w / block, block * block * x.c);
  for (int i = 0; i < x.n; ++i)
    for (int y = 0; y < out.h; ++y)
      for (int xx = 0; xx < out.w; ++xx)
        for (int dy = 0; dy < block; ++dy)
          for (int dx = 0; dx < block; ++dx)
            std::memcpy(&out.at(i, y, xx, (dy * block + dx) * x.c),
                        &x.at(i, y * block + dy, xx * block + dx, 0), sizeof(T) * x.c);
  return out;
}

template <class T>
TensorT<T> depth_to_space(const TensorT<T>& x, int block) {
  if (block <= 0) throw ValueError("depth_to_space: block must be positive");
  if (x.c % (block * block) != 0)
    throw ValueError("depth_to_space: channels " + x.shape_str() + " not divisible by block^2");
  int c_out = x.c / (block * block);
  TensorT<T> out(x.n, x.h * block, x.w * block, c_out);
  for (int i = 0; i < x.n; ++i)
    for (int y = 0; y < x.h; ++y)
      for (int xx = 0; xx < x.w; ++xx)
        for (int dy = 0; dy < block; ++dy)
          for (int dx = 0; dx < block; ++dx)
            std::memcpy(&out.at(i, y * block + dy, xx * block + dx, 0),
                        &x.at(i, y, xx, (dy * block + dx) * c_out), sizeof(T) * c_out);
  return out;
}

// ---------------------------------------------------------------------------
// Reverse-mode tape.
// ---------------------------------------------------------------------------

// Suppresses tape construction; forwards run value-only and intermediates are
// freed as soon as they go out of scope.
struct NoGradScope {
  NoGradScope() { ++depth(); }
  ~NoGradScope() { --depth(); }
  NoGradScope(const NoGradScope&) = delete;
  static bool active() { return depth() > 0; }
  static int& depth() {
    thread_local int d = 0;
    return d;
  }
};

template <class T>
struct ParamT {
  std::string name;
  TensorT<T> value;
  TensorT<T> grad;
  bool trainable = true;

  void zero_grad() { grad = TensorT<T>::zeros_like(value); }
};

using Param = ParamT<float>;

template <class T>
struct NodeT;
template <class T>
using VarT = std::shared_ptr<NodeT<T>>;

template <class T>
struct NodeT {
  TensorT<T> value;
  TensorT<T> grad;
  bool needs_grad = false;
  ParamT<T>* param = nullptr;
  std::vector<VarT<T>> inputs;
  // Reads this->grad, accumulates into inputs' grads.
  std::function<void(NodeT<T>&)> backprop;

  void ensure_grad() {
    if (grad.empty()) grad = TensorT<T>::zeros_like(value);
  }
};

using Var = VarT<float>;

template <class T>
VarT<T> constant(TensorT<T> t) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(t);
  return n;
}

template <class T>
VarT<T> input_var(TensorT<T> t) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(t);
  n->needs_grad = true;
  return n;
}

template <class T>
VarT<T> param_var(ParamT<T>& p) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = p.value;
  n->needs_grad = p.trainable;
  n->param = &p;
  return n;
}

namespace detail {

template <class T>
VarT<T> make_op(TensorT<T> value, std::vector<VarT<T>> inputs,
                std::function<void(NodeT<T>&)> backprop) {
  auto n = std::make_shared<NodeT<T>>();
  n->value = std::move(value);
  if (NoGradScope::active()) return n;
  n->inputs = std::move(inputs);
  for (const auto& in : n->inputs) n->needs_grad = n->needs_grad || in->needs_grad;
  if (n->needs_grad) n->backprop = std::move(backprop);
  return n;
}

template <class T>
void topo_collect(const VarT<T>& root, std::vector<NodeT<T>*>& order) {
  std::unordered_set<NodeT<T>*> seen;
  std::vector<std::pair<NodeT<T>*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      NodeT<T>* child = node->inputs[next++].get();
      if (child->needs_grad && seen.insert(child).second) stack.push_back({child, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

}  // namespace detail

// Runs reverse-mode accumulation from a scalar root and folds leaf gradients
// into their owning parameters.
template <class T>
void backward(const VarT<T>& root) {
  if (root->value.size() != 1) throw ValueError("backward: root must be scalar");
  if (!root->needs_grad) throw ValueError("backward: root does not require gradients");
  std::vector<NodeT<T>*> order;
  detail::topo_collect(root, order);
  root->ensure_grad();
  root->grad.v[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT<T>* node = *it;
    if (node->backprop && node->needs_grad) {
      node->ensure_grad();
      node->backprop(*node);
      // All consumers ran earlier in reverse-topo order, so this grad is
      // fully spent; drop it unless a parameter accumulation still needs it.
      if (!node->param) node->grad = TensorT<T>{};
    }
  }
  for (NodeT<T>* node : order)
    if (node->param && node->param->trainable && !node->grad.empty()) {
      if (node->param->grad.empty()) node->param->zero_grad();
      for (size_t i = 0; i < node->grad.v.size(); ++i)
        node->param->grad.v[i] += node->grad.v[i];
    }
}

// ---------------------------------------------------------------------------
// Ops.
// ---------------------------------------------------------------------------

template <class T>
VarT<T> add(const VarT<T>& a, const VarT<T>& b) {
  if (!a->value.same_shape(b->value))
    throw ValueError("add: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  TensorT<T> out = a->value;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b->value.v[i];
  return detail::make_op<T>(std::move(out), {a, b}, [](NodeT<T>& n) {
    for (int j = 0; j < 2; ++j)
      if (n.inputs[j]->needs_grad) {
        n.inputs[j]->ensure_grad();
        for (size_t i = 0; i < n.grad.v.size(); ++i) n.inputs[j]->grad.v[i] += n.grad.v[i];
      }
  });
}

template <class T>
VarT<T> mul_scalar(const VarT<T>& a, double s) {
  TensorT<T> out = a->value;
  for (auto& v : out.v) v = static_cast<T>(v * s);
  return detail::make_op<T>(std::move(out), {a}, [s](NodeT<T>& n) {
    n.inputs[0]->ensure_grad();
    for (size_t i = 0; i < n.grad.v.size(); ++i)
      n.inputs[0]->grad.v[i] += static_cast<T>(n.grad.v[i] * s);
  });
}

template <class T>
VarT<T> relu(const VarT<T>& a) {
  TensorT<T> out = a->value;
  for (auto& v : out.v) v = std::max(v, T(0));
  return detail::make_op<T>(std::move(out), {a}, [](NodeT<T>& n) {
    n.inputs[0]->ensure_grad();
    const auto& x = n.inputs[0]->value.v;
    for (size_t i = 0; i < n.grad.v.size(); ++i)
      if (x[i] > T(0)) n.inputs[0]->grad.v[i] += n.grad.v[i];
  });
}

template <class T>
VarT<T> softplus(const VarT<T>& a) {
  TensorT<T> out = a->value;
  for (auto& v : out.v) {
    double x = static_cast<double>(v);
    v = static_cast<T>(x > 30.0 ? x : std::log1p(std::exp(std::min(x, 30.0))));
  }
  return detail::make_op<T>(std::move(out), {a}, [](NodeT<T>& n) {
    n.inputs[0]->ensure_grad();
    const auto& x = n.inputs[0]->value.v;
    for (size_t i = 0; i < n.grad.v.size(); ++i) {
      double sig = 1.0 / (1.0 + std::exp(-static_cast<double>(x[i])));
      n.inputs[0]->grad.v[i] += static_cast<T>(n.grad.v[i] * sig);
    }
  });
}

namespace detail {

template <class T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// im2col for one sample, zero padding, stride 1, odd kernel.
// Column layout (dy, dx, c) matches the flat layout of a (k,k,c_in,c_out)
// kernel tensor, so the kernel tensor maps directly onto a (k*k*c_in, c_out)
// matrix.
template <class T>
void im2col(const TensorT<T>& x, int sample, int k, std::vector<T>& col) {
  int pad = (k - 1) / 2;
  size_t cols = static_cast<size_t>(k) * k * x.c;
  col.assign(static_cast<size_t>(x.h) * x.w * cols, T(0));
  for (int y = 0; y < x.h; ++y)
    for (int dy = 0; dy < k; ++dy) {
      int sy = y + dy - pad;
      if (sy < 0 || sy >= x.h) continue;
      for (int xx = 0; xx < x.w; ++xx) {
        T* row = &col[(static_cast<size_t>(y) * x.w + xx) * cols];
        for (int dx = 0; dx < k; ++dx) {
          int sx = xx + dx - pad;
          if (sx < 0 || sx >= x.w) continue;
          std::memcpy(row + (static_cast<size_t>(dy) * k + dx) * x.c,
                      &x.at(sample, sy, sx, 0), sizeof(T) * x.c);
        }
      }
    }
}

template <class T>
void col2im_add(const std::vector<T>& col, int k, TensorT<T>& gx, int sample) {
  int pad = (k - 1) / 2;
  size_t cols = static_cast<size_t>(k) * k * gx.c;
  for (int y = 0; y < gx.h; ++y)
    for (int xx = 0; xx < gx.w; ++xx) {
      const T* row = &col[(static_cast<size_t>(y) * gx.w + xx) * cols];
      for (int dy = 0; dy < k; ++dy) {
        int sy = y + dy - pad;
        if (sy < 0 || sy >= gx.h) continue;
        for (int dx = 0; dx < k; ++dx) {
          int sx = xx + dx - pad;
          if (sx < 0 || sx >= gx.w) continue;
          T* dst = &gx.at(sample, sy, sx, 0);
          const T* src = row + (static_cast<size_t>(dy) * k + dx) * gx.c;
          for (int kk = 0; kk < gx.c; ++kk) dst[kk] += src[kk];
        }
      }
    }
}

}  // namespace detail

// 2-D convolution, stride 1, zero padding to keep spatial dims.
// weight: (k, k, c_in, c_out); bias: (1, 1, 1, c_out) or null.
template <class T>
VarT<T> conv2d(const VarT<T>& x, const VarT<T>& weight, const VarT<T>& bias) {
  const TensorT<T>& xv = x->value;
  const TensorT<T>& wv = weight->value;
  int k = wv.n;
  if (wv.h != k || (k != 1 && k != 3))
    throw ValueError("conv2d: unsupported kernel " + wv.shape_str());
  if (wv.w != xv.c)
    throw ValueError("conv2d: input channels " + xv.shape_str() + " vs kernel " + wv.shape_str());
  int c_out = wv.c;
  if (bias && (bias->value.c != c_out || bias->value.size() != static_cast<size_t>(c_out)))
    throw ValueError("conv2d: bias shape mismatch");

  using Mat = detail::RowMat<T>;
  size_t kdim = static_cast<size_t>(k) * k * xv.c;
  Eigen::Map<const Mat> wmat(wv.data(), kdim, c_out);
  TensorT<T> out(xv.n, xv.h, xv.w, c_out);
  size_t positions = static_cast<size_t>(xv.h) * xv.w;
  std::vector<T> col;
  for (int i = 0; i < xv.n; ++i) {
    Eigen::Map<Mat> omat(out.data() + i * positions * c_out, positions, c_out);
    if (k == 1) {
      Eigen::Map<const Mat> xmat(xv.data() + i * positions * xv.c, positions, xv.c);
      omat.noalias() = xmat * wmat;
    } else {
      detail::im2col(xv, i, k, col);
      Eigen::Map<const Mat> cmat(col.data(), positions, kdim);
      omat.noalias() = cmat * wmat;
    }
    if (bias) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> bvec(bias->value.data(), c_out);
      omat.rowwise() += bvec;
    }
  }

  std::vector<VarT<T>> ins{x, weight};
  if (bias) ins.push_back(bias);
  int kk = k;
  return detail::make_op<T>(std::move(out), std::move(ins), [kk](NodeT<T>& n) {
    const TensorT<T>& xv = n.inputs[0]->value;
    const TensorT<T>& wv = n.inputs[1]->value;
    int c_out = wv.c;
    size_t kdim = static_cast<size_t>(kk) * kk * xv.c;
    size_t positions = static_cast<size_t>(xv.h) * xv.w;
    using Mat = detail::RowMat<T>;
    Eigen::Map<const Mat> wmat(wv.data(), kdim, c_out);

    bool need_x = n.inputs[0]->needs_grad;
    bool need_w = n.inputs[1]->needs_grad;
    bool need_b = n.inputs.size() > 2 && n.inputs[2]->needs_grad;
    if (need_x) n.inputs[0]->ensure_grad();
    if (need_w) n.inputs[1]->ensure_grad();
    if (need_b) n.inputs[2]->ensure_grad();

    std::vector<T> col, dcol;
    for (int i = 0; i < xv.n; ++i) {
      Eigen::Map<const Mat> gmat(n.grad.data() + i * positions * c_out, positions, c_out);
      if (need_b) {
        // Fixed-order accumulation: vectorized reductions over unaligned
        // maps are not bit-reproducible across allocations.
        auto& bgv = n.inputs[2]->grad.v;
        const T* gp = n.grad.data() + i * positions * c_out;
        for (size_t r = 0; r < positions; ++r)
          for (int kc = 0; kc < c_out; ++kc)
            bgv[static_cast<size_t>(kc)] += gp[r * static_cast<size_t>(c_out) + kc];
      }
      if (kk == 1) {
        Eigen::Map<const Mat> xmat(xv.data() + i * positions * xv.c, positions, xv.c);
        if (need_w) {
          Eigen::Map<Mat> wg(n.inputs[1]->grad.data(), kdim, c_out);
          wg.noalias() += xmat.transpose() * gmat;
        }
        if (need_x) {
          Eigen::Map<Mat> xg(n.inputs[0]->grad.data() + i * positions * xv.c, positions, xv.c);
          xg.noalias() += gmat * wmat.transpose();
        }
      } else {
        detail::im2col(xv, i, kk, col);
        Eigen::Map<const Mat> cmat(col.data(), positions, kdim);
        if (need_w) {
          Eigen::Map<Mat> wg(n.inputs[1]->grad.data(), kdim, c_out);
          wg.noalias() += cmat.transpose() * gmat;
        }
        if (need_x) {
          dcol.assign(positions * kdim, T(0));
          Eigen::Map<Mat> dmat(dcol.data(), positions, kdim);
          dmat.noalias() = gmat * wmat.transpose();
          detail::col2im_add(dcol, kk, n.inputs[0]->grad, i);
        }
      }
    }
  });
}

template <class T>
VarT<T> space_to_depth_op(const VarT<T>& x, int block) {
  TensorT<T> out = space_to_depth(x->value, block);
  return detail::make_op<T>(std::move(out), {x}, [block](NodeT<T>& n) {
    n.inputs[0]->ensure_grad();
    TensorT<T> g = depth_to_space(n.grad, block);
    for (size_t i = 0; i < g.v.size(); ++i) n.inputs[0]->grad.v[i] += g.v[i];
  });
}

template <class T>
VarT<T> depth_to_space_op(const VarT<T>& x, int block) {
  TensorT<T> out = depth_to_space(x->value, block);
  return detail::make_op<T>(std::move(out), {x}, [block](NodeT<T>& n) {
    n.inputs[0]->ensure_grad();
    TensorT<T> g = space_to_depth(n.grad, block);
    for (size_t i = 0; i < g.v.size(); ++i) n.inputs[0]->grad.v[i] += g.v[i];
  });
}

// Bicubic resampling as a linear op (no clamping here).
template <class T>
VarT<T> resize_bicubic_op(const VarT<T>& x, int out_h, int out_w) {
  auto rows = std::make_shared<ResizeAxisPlan>(x->value.h, out_h);
  auto cols = std::make_shared<ResizeAxisPlan>(x->value.w, out_w);
  TensorT<T> out = detail::resize_apply(x->value, *rows, *cols);
  int in_h = x->value.h, in_w = x->value.w;
  return detail::make_op<T>(std::move(out), {x}, [rows, cols, in_h, in_w](NodeT<T>& n) {
    n.inputs[0]->ensure_grad();
    TensorT<T> g = detail::resize_apply_transposed(n.grad, *rows, *cols, in_h, in_w);
    for (size_t i = 0; i < g.v.size(); ++i) n.inputs[0]->grad.v[i] += g.v[i];
  });
}

// Mean over spatial dims -> (n, 1, 1, c).
template <class T>
VarT<T> global_avg_pool(const VarT<T>& x) {
  const TensorT<T>& xv = x->value;
  TensorT<T> out(xv.n, 1, 1, xv.c);
  double inv = 1.0 / (static_cast<double>(xv.h) * xv.w);
  for (int i = 0; i < xv.n; ++i)
    for (int k = 0; k < xv.c; ++k) {
      double acc = 0.0;
      for (int y = 0; y < xv.h; ++y)
        for (int xx = 0; xx < xv.w; ++xx) acc += xv.at(i, y, xx, k);
      out.at(i, 0, 0, k) = static_cast<T>(acc * inv);
    }
  return detail::make_op<T>(std::move(out), {x}, [](NodeT<T>& n) {
    n.inputs[0]->ensure_grad();
    TensorT<T>& gx = n.inputs[0]->grad;
    T inv = static_cast<T>(1.0 / (static_cast<double>(gx.h) * gx.w));
    for (int i = 0; i < gx.n; ++i)
      for (int k = 0; k < gx.c; ++k) {
        T g = n.grad.at(i, 0, 0, k) * inv;
        for (int y = 0; y < gx.h; ++y)
          for (int xx = 0; xx < gx.w; ++xx) gx.at(i, y, xx, k) += g;
      }
  });
}

// Mean of all elements -> scalar (1,1,1,1).
template <class T>
VarT<T> mean_all(const VarT<T>& x) {
  TensorT<T> out(1, 1, 1, 1);
  double acc = 0.0;
  for (T v : x->value.v) acc += v;
  out.v[0] = static_cast<T>(acc / static_cast<double>(x->value.size()));
  return detail::make_op<T>(std::move(out), {x}, [](NodeT<T>& n) {
    n.inputs[0]->ensure_grad();
    T g = static_cast<T>(n.grad.v[0] / static_cast<double>(n.inputs[0]->value.size()));
    for (auto& v : n.inputs[0]->grad.v) v += g;
  });
}

// Mean squared error over all elements -> scalar.
template <class T>
VarT<T> mse_loss(const VarT<T>& a, const VarT<T>& b) {
  if (!a->value.same_shape(b->value))
    throw ValueError("mse_loss: shape mismatch " + a->value.shape_str() + " vs " + b->value.shape_str());
  TensorT<T> out(1, 1, 1, 1);
  double acc = 0.0;
  for (size_t i = 0; i < a->value.v.size(); ++i) {
    double d = static_cast<double>(a->value.v[i]) - static_cast<double>(b->value.v[i]);
    acc += d * d;
  }
  out.v[0] = static_cast<T>(acc / static_cast<double>(a->value.size()));
  return detail::make_op<T>(std::move(out), {a, b}, [](NodeT<T>& n) {
    T scale = static_cast<T>(2.0 / static_cast<double>(n.inputs[0]->value.size()) *
                             static_cast<double>(n.grad.v[0]));
    const auto& av = n.inputs[0]->value.v;
    const auto& bv = n.inputs[1]->value.v;
    if (n.inputs[0]->needs_grad) {
      n.inputs[0]->ensure_grad();
      for (size_t i = 0; i < av.size(); ++i) n.inputs[0]->grad.v[i] += scale * (av[i] - bv[i]);
    }
    if (n.inputs[1]->needs_grad) {
      n.inputs[1]->ensure_grad();
      for (size_t i = 0; i < av.size(); ++i) n.inputs[1]->grad.v[i] -= scale * (av[i] - bv[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Adam.
// ---------------------------------------------------------------------------

template <class T>
class AdamT {
 public:
  AdamT() = default;
  AdamT(double lr, double beta1, double beta2, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  void step(std::vector<ParamT<T>*> params) {
    ++t_;
    double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (ParamT<T>* p : params) {
      if (!p->trainable || p->grad.empty()) continue;
      auto& st = state_[p];
      if (st.m.empty()) {
        st.m = TensorT<T>::zeros_like(p->value);
        st.v = TensorT<T>::zeros_like(p->value);
      }
      for (size_t i = 0; i < p->value.v.size(); ++i) {
        double g = p->grad.v[i];
        double m = beta1_ * st.m.v[i] + (1.0 - beta1_) * g;
        double v = beta2_ * st.v.v[i] + (1.0 - beta2_) * g * g;
        st.m.v[i] = static_cast<T>(m);
        st.v.v[i] = static_cast<T>(v);
        p->value.v[i] -= static_cast<T>(lr_ * (m / c1) / (std::sqrt(v / c2) + eps_));
      }
    }
  }

  // Moment state keyed by parameter name, for checkpointing.
  struct Moments {
    TensorT<T> m, v;
  };
  const Moments* moments(ParamT<T>* p) const {
    auto it = state_.find(p);
    return it == state_.end() ? nullptr : &it->second;
  }
  void restore_moments(ParamT<T>* p, Moments mom) { state_[p] = std::move(mom); }
  void set_step_count(int64_t t) { t_ = t; }

 private:
  double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.99, eps_ = 1e-8;
  int64_t t_ = 0;
  std::unordered_map<ParamT<T>*, Moments> state_;
};

using Adam = AdamT<float>;

}  // namespace acnf
