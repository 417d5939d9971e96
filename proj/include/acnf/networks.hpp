// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <deque>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "acnf/autodiff.hpp"
#include "acnf/hashutil.hpp"

namespace acnf {

struct NetworkSpec {
  std::string kind;    // CRNet | PPNet | ACN | BENet
  int depth = 0;       // residual blocks (CRNet/PPNet) or 1x1 conv layers (ACN/BENet)
  int width = 0;
  int block_size = 0;  // 8 for ACN/BENet, 0 otherwise
  double scale = 1.0;  // CRNet/PPNet operating scale
  int qf_tag = 0;
  int channels = 1;    // image channels the network operates on
};

inline bool valid_scale(double s) { return s == 0.5 || s == 0.75 || s == 1.0; }

inline void validate_spec(const NetworkSpec& s) {
  if (s.qf_tag < 1 || s.qf_tag > 100)
    throw ConfigError("network spec: qf_tag " + std::to_string(s.qf_tag) + " outside [1,100]");
  if (s.channels != 1 && s.channels != 3)
    throw ConfigError("network spec: channels must be 1 or 3");
  if (s.width <= 0) throw ConfigError("network spec: width must be positive");
  if (s.kind == "CRNet" || s.kind == "PPNet") {
    if (!valid_scale(s.scale)) throw ConfigError("network spec: scale must be 0.5, 0.75 or 1.0");
    if (s.depth < 1) throw ConfigError("network spec: depth must be >= 1");
  } else if (s.kind == "ACN") {
    if (s.block_size != 8) throw ConfigError("network spec: ACN block_size must be 8");
    if (s.depth < 4 || s.depth % 2 != 0)
      throw ConfigError("network spec: ACN depth must be even and >= 4");
  } else if (s.kind == "BENet") {
    if (s.block_size != 8) throw ConfigError("network spec: BENet block_size must be 8");
    if (s.depth < 2) throw ConfigError("network spec: BENet depth must be >= 2");
  } else {
    throw ConfigError("network spec: unknown kind '" + s.kind + "'");
  }
}

// Default hyperparameters per network kind; depth/width < 0 keep the default.
inline NetworkSpec default_spec(const std::string& kind, int qf, double scale, int channels = 1,
                                int depth = -1, int width = -1) {
  NetworkSpec s;
  s.kind = kind;
  s.qf_tag = qf;
  s.channels = channels;
  if (kind == "CRNet") {
    s.depth = 8;
    s.width = 64;
    s.scale = scale;
  } else if (kind == "PPNet") {
    s.depth = 16;
    s.width = 64;
    s.scale = scale;
  } else if (kind == "ACN") {
    s.depth = 12;
    s.width = 256;
    s.block_size = 8;
  } else if (kind == "BENet") {
    s.depth = 10;
    s.width = 256;
    s.block_size = 8;
  }
  if (depth > 0) s.depth = depth;
  if (width > 0) s.width = width;
  validate_spec(s);
  return s;
}

inline nlohmann::ordered_json spec_to_json(const NetworkSpec& s) {
  nlohmann::ordered_json j;
  j["kind"] = s.kind;
  j["depth"] = s.depth;
  j["width"] = s.width;
  j["block_size"] = s.block_size;
  j["scale"] = s.scale;
  j["qf_tag"] = s.qf_tag;
  j["channels"] = s.channels;
  return j;
}

inline NetworkSpec spec_from_json(const nlohmann::json& j) {
  NetworkSpec s;
  s.kind = j.at("kind").get<std::string>();
  s.depth = j.at("depth").get<int>();
  s.width = j.at("width").get<int>();
  s.block_size = j.at("block_size").get<int>();
  s.scale = j.at("scale").get<double>();
  s.qf_tag = j.at("qf_tag").get<int>();
  s.channels = j.at("channels").get<int>();
  return s;
}

// Canonical checkpoint directory name for an operating point.
inline std::string weights_dir_name(const std::string& kind_lower, int qf, double scale) {
  char buf[64];
  if (scale == 0.5 || scale == 0.75)
    std::snprintf(buf, sizeof buf, "%s_qf%d_s%.2f", kind_lower.c_str(), qf, scale);
  else
    std::snprintf(buf, sizeof buf, "%s_qf%d_s%.1f", kind_lower.c_str(), qf, scale);
  return buf;
}

// ---------------------------------------------------------------------------
// NetworkT: one class covering all four architectures. The layer list is laid
// out deterministically by the constructor, so save/load order is fixed.
// ---------------------------------------------------------------------------

template <class T>
class NetworkT {
 public:
  NetworkSpec spec;
  int64_t training_step = 0;

  NetworkT(NetworkSpec sp, Rng& rng) : spec(std::move(sp)) {
    validate_spec(spec);
    int c = spec.channels;
    if (spec.kind == "CRNet" || spec.kind == "PPNet") {
      add_conv("head", 3, c, spec.width, &rng);
      for (int b = 0; b < spec.depth; ++b) {
        add_conv("block" + std::to_string(b) + ".conv0", 3, spec.width, spec.width, &rng);
        add_conv("block" + std::to_string(b) + ".conv1", 3, spec.width, spec.width, &rng);
      }
      if (spec.kind == "PPNet" && spec.scale == 0.5)
        add_conv("up", 3, spec.width, 4 * spec.width, &rng);
      if (spec.kind == "PPNet") add_conv("refine", 3, spec.width, spec.width, &rng);
      add_conv("tail", 3, spec.width, c, nullptr);  // zero init: output = bicubic skip
    } else {
      int cin = spec.block_size * spec.block_size * c;
      int cout = spec.kind == "ACN" ? cin : 1;
      add_conv("in", 1, cin, spec.width, &rng);
      if (spec.kind == "ACN") {
        for (int p = 0; p < (spec.depth - 2) / 2; ++p) {
          add_conv("pair" + std::to_string(p) + ".conv0", 1, spec.width, spec.width, &rng);
          add_conv("pair" + std::to_string(p) + ".conv1", 1, spec.width, spec.width, &rng);
        }
        add_conv("out", 1, spec.width, cout, nullptr);  // zero init: identity network
      } else {
        for (int m = 0; m < spec.depth - 2; ++m)
          add_conv("mid" + std::to_string(m), 1, spec.width, spec.width, &rng);
        add_conv("out", 1, spec.width, cout, &rng);
      }
    }
  }

  // CRNet: x at original resolution -> compact image (unclamped).
  // ACN: compact image -> imitation of decode(encode(.)), same dims.
  // BENet: compact image -> (n,1,1,1) predicted bits per input pixel.
  VarT<T> forward(const VarT<T>& x) {
    if (spec.kind == "CRNet") {
      int oh = scaled_len(x->value.h, spec.scale), ow = scaled_len(x->value.w, spec.scale);
      return forward_crnet(x, oh, ow);
    }
    if (spec.kind == "ACN") return forward_acn(x);
    if (spec.kind == "BENet") return forward_benet(x);
    throw ConfigError("forward(x): PPNet needs explicit output dims");
  }

  // PPNet: decoded compact image -> restored image at (out_h, out_w).
  VarT<T> forward(const VarT<T>& x, int out_h, int out_w) {
    if (spec.kind == "PPNet") return forward_ppnet(x, out_h, out_w);
    if (spec.kind == "CRNet") return forward_crnet(x, out_h, out_w);
    throw ConfigError("forward(x,h,w): only CRNet/PPNet take output dims");
  }

  TensorT<T> infer(const TensorT<T>& x) {
    NoGradScope ng;
    return forward(constant(x))->value;
  }
  TensorT<T> infer(const TensorT<T>& x, int out_h, int out_w) {
    NoGradScope ng;
    return forward(constant(x), out_h, out_w)->value;
  }

  std::vector<ParamT<T>*> params() {
    std::vector<ParamT<T>*> out;
    out.reserve(store_.size());
    for (auto& p : store_) out.push_back(&p);
    return out;
  }
  void zero_grads() {
    for (auto& p : store_) p.zero_grad();
  }
  // Frozen surrogates during the joint f/g step: no grads flow to these.
  void set_trainable(bool trainable) {
    for (auto& p : store_) p.trainable = trainable;
  }
  ParamT<T>* find(const std::string& name) {
    for (auto& p : store_)
      if (p.name == name) return &p;
    return nullptr;
  }
  size_t param_count() const {
    size_t n = 0;
    for (const auto& p : store_) n += p.value.size();
    return n;
  }

  // -------------------------------------------------------------------------
  // Serialization: <dir>/manifest.json + <dir>/params.bin (LE float32,
  // row-major, concatenated in manifest order).
  // -------------------------------------------------------------------------

  void save(const std::string& dir) const {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    std::vector<uint8_t> blob;
    for (const auto& p : store_)
      for (T v : p.value.v) {
        float f = static_cast<float>(v);
        uint8_t b[4];
        std::memcpy(b, &f, 4);
        blob.insert(blob.end(), b, b + 4);
      }
    nlohmann::ordered_json man;
    man["format"] = "acnf-weights-v1";
    man["spec"] = spec_to_json(spec);
    man["training_step"] = training_step;
    auto params_j = nlohmann::ordered_json::array();
    for (const auto& p : store_) {
      nlohmann::ordered_json pj;
      pj["name"] = p.name;
      pj["shape"] = {p.value.n, p.value.h, p.value.w, p.value.c};
      params_j.push_back(pj);
    }
    man["params"] = params_j;
    man["params_sha256"] = sha256_hex(blob);
    {
      std::ofstream f(fs::path(dir) / "params.bin", std::ios::binary);
      if (!f) throw WeightsError("cannot write " + dir + "/params.bin");
      f.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size()));
      if (!f) throw WeightsError("short write to " + dir + "/params.bin");
    }
    {
      std::ofstream f(fs::path(dir) / "manifest.json");
      if (!f) throw WeightsError("cannot write " + dir + "/manifest.json");
      f << man.dump(2) << "\n";
    }
  }

  static NetworkT load(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw WeightsError("missing weights manifest: " + dir + "/manifest.json");
    nlohmann::json man;
    try {
      man = nlohmann::json::parse(mf);
    } catch (const std::exception& e) {
      throw WeightsError("bad weights manifest " + dir + ": " + e.what());
    }
    if (man.value("format", "") != "acnf-weights-v1")
      throw WeightsError("unsupported weights format in " + dir);
    NetworkSpec sp;
    try {
      sp = spec_from_json(man.at("spec"));
    } catch (const std::exception& e) {
      throw WeightsError("bad spec in weights manifest " + dir + ": " + e.what());
    }
    Rng rng(0);
    NetworkT net(sp, rng);
    net.training_step = man.value("training_step", int64_t{0});
    const auto& pj = man.at("params");
    if (pj.size() != net.store_.size())
      throw WeightsError("weights " + dir + ": manifest lists " + std::to_string(pj.size()) +
                         " params, architecture has " + std::to_string(net.store_.size()));
    std::ifstream bf(fs::path(dir) / "params.bin", std::ios::binary);
    if (!bf) throw WeightsError("missing weights blob: " + dir + "/params.bin");
    if (man.contains("params_sha256")) {
      std::vector<uint8_t> blob((std::istreambuf_iterator<char>(bf)),
                                std::istreambuf_iterator<char>());
      if (sha256_hex(blob) != man.at("params_sha256").get<std::string>())
        throw WeightsError("weights " + dir + ": params.bin does not match manifest digest");
      bf.clear();
      bf.seekg(0);
    }
    size_t idx = 0;
    for (auto& p : net.store_) {
      const auto& ent = pj.at(idx++);
      if (ent.at("name").get<std::string>() != p.name)
        throw WeightsError("weights " + dir + ": param order mismatch at '" + p.name + "'");
      auto sh = ent.at("shape");
      if (sh.size() != 4 || sh[0].get<int>() != p.value.n || sh[1].get<int>() != p.value.h ||
          sh[2].get<int>() != p.value.w || sh[3].get<int>() != p.value.c)
        throw WeightsError("weights " + dir + ": shape mismatch for '" + p.name + "'");
      std::vector<float> raw(p.value.size());
      bf.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
      if (static_cast<size_t>(bf.gcount()) != raw.size() * 4)
        throw WeightsError("weights " + dir + ": params.bin truncated at '" + p.name + "'");
      for (size_t i = 0; i < raw.size(); ++i) p.value.v[i] = static_cast<T>(raw[i]);
      if (!p.value.all_finite())
        throw WeightsError("weights " + dir + ": non-finite values in '" + p.name + "'");
    }
    bf.peek();
    if (!bf.eof()) throw WeightsError("weights " + dir + ": params.bin has trailing bytes");
    return net;
  }

 private:
  struct Conv {
    ParamT<T>* w;
    ParamT<T>* b;
  };
  std::deque<ParamT<T>> store_;

  ParamT<T>& add_param(const std::string& name, TensorT<T> init) {
    store_.push_back(ParamT<T>{name, std::move(init), {}, true});
    return store_.back();
  }

  // He-normal weights (or zeros when rng is null), zero biases.
  void add_conv(const std::string& name, int k, int cin, int cout, Rng* rng) {
    TensorT<T> w(k, k, cin, cout);
    if (rng) {
      double stdev = std::sqrt(2.0 / (static_cast<double>(k) * k * cin));
      for (auto& v : w.v) v = static_cast<T>(rng->normal() * stdev);
    }
    add_param(name + ".w", std::move(w));
    add_param(name + ".b", TensorT<T>(1, 1, 1, cout));
  }

  Conv conv(const std::string& name) {
    ParamT<T>* w = find(name + ".w");
    ParamT<T>* b = find(name + ".b");
    if (!w || !b) throw WeightsError("missing parameter '" + name + "'");
    return {w, b};
  }

  VarT<T> apply(const std::string& name, const VarT<T>& x) {
    Conv c = conv(name);
    return conv2d(x, param_var(*c.w), param_var(*c.b));
  }

  VarT<T> body(const VarT<T>& h) {
    VarT<T> t = h;
    for (int b = 0; b < spec.depth; ++b) {
      std::string base = "block" + std::to_string(b) + ".";
      t = add(t, apply(base + "conv1", relu(apply(base + "conv0", t))));
    }
    return t;
  }

  VarT<T> forward_crnet(const VarT<T>& x, int out_h, int out_w) {
    check_channels(x);
    VarT<T> skip = resize_bicubic_op(x, out_h, out_w);
    VarT<T> t = resize_bicubic_op(apply("head", x), out_h, out_w);
    t = body(t);
    return add(skip, apply("tail", t));
  }

  VarT<T> forward_ppnet(const VarT<T>& x, int out_h, int out_w) {
    check_channels(x);
    VarT<T> skip = resize_bicubic_op(x, out_h, out_w);
    VarT<T> h = apply("head", x);
    VarT<T> t = add(h, body(h));
    if (spec.scale == 0.5) {
      t = depth_to_space_op(apply("up", t), 2);
      if (t->value.h != out_h || t->value.w != out_w) t = resize_bicubic_op(t, out_h, out_w);
    } else {
      t = resize_bicubic_op(t, out_h, out_w);
    }
    t = relu(apply("refine", t));
    return add(skip, apply("tail", t));
  }

  VarT<T> forward_acn(const VarT<T>& x) {
    check_channels(x);
    VarT<T> v = space_to_depth_op(x, spec.block_size);
    VarT<T> t = relu(apply("in", v));
    for (int p = 0; p < (spec.depth - 2) / 2; ++p) {
      std::string base = "pair" + std::to_string(p) + ".";
      t = add(t, apply(base + "conv1", relu(apply(base + "conv0", t))));
    }
    return depth_to_space_op(add(v, apply("out", t)), spec.block_size);
  }

  VarT<T> forward_benet(const VarT<T>& x) {
    check_channels(x);
    VarT<T> t = relu(apply("in", space_to_depth_op(x, spec.block_size)));
    for (int m = 0; m < spec.depth - 2; ++m) t = relu(apply("mid" + std::to_string(m), t));
    return softplus(global_avg_pool(apply("out", t)));
  }

  void check_channels(const VarT<T>& x) const {
    if (x->value.c != spec.channels)
      throw ValueError(spec.kind + ": input has " + std::to_string(x->value.c) +
                       " channels, spec expects " + std::to_string(spec.channels));
  }
};

using Network = NetworkT<float>;

}  // namespace acnf
