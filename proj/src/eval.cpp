// Copyright 2026 the acnf authors
// SPDX-License-Identifier: Apache-2.0

#include "acnf/eval.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "acnf/error.hpp"
#include "acnf/resize.hpp"

namespace fs = std::filesystem;

namespace acnf {

namespace {

std::vector<int> quantized_255(const Tensor& t) {
  std::vector<int> q(t.v.size());
  for (size_t i = 0; i < t.v.size(); ++i) {
    float v = std::clamp(t.v[i], 0.0f, 1.0f);
    q[i] = static_cast<int>(std::lround(v * 255.0f));
  }
  return q;
}

}  // namespace

double psnr(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ValueError("psnr: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  if (a.empty()) throw ValueError("psnr: empty input");
  std::vector<int> qa = quantized_255(a), qb = quantized_255(b);
  double acc = 0.0;
  for (size_t i = 0; i < qa.size(); ++i) {
    double d = qa[i] - qb[i];
    acc += d * d;
  }
  double mse = acc / static_cast<double>(qa.size());
  if (mse == 0.0) return 100.0;  // sentinel for identical images
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw ValueError("ssim: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
  constexpr int kWin = 11;
  constexpr double kSigma = 1.5, kL = 255.0, kK1 = 0.01, kK2 = 0.03;
  if (a.h < kWin || a.w < kWin)
    throw ValueError("ssim: image smaller than " + std::to_string(kWin) + "x" + std::to_string(kWin));
  double kernel[kWin];
  double ksum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    double d = i - (kWin - 1) / 2.0;
    kernel[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    ksum += kernel[i];
  }
  for (double& k : kernel) k /= ksum;

  const double c1 = (kK1 * kL) * (kK1 * kL), c2 = (kK2 * kL) * (kK2 * kL);
  std::vector<int> qa = quantized_255(a), qb = quantized_255(b);
  int oh = a.h - kWin + 1, ow = a.w - kWin + 1;
  double total = 0.0;
  size_t count = 0;

  // Separable valid-mode filtering of the five moment fields, per channel.
  std::vector<double> rows(5 * static_cast<size_t>(oh) * a.w);
  auto row_at = [&](int f, int y, int x) -> double& {
    return rows[(static_cast<size_t>(f) * oh + y) * a.w + x];
  };
  for (int ch = 0; ch < a.c; ++ch) {
    auto px = [&](const std::vector<int>& q, int y, int x) {
      return static_cast<double>(q[(static_cast<size_t>(y) * a.w + x) * a.c + ch]);
    };
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < a.w; ++x) {
        double m[5] = {0, 0, 0, 0, 0};
        for (int t = 0; t < kWin; ++t) {
          double va = px(qa, y + t, x), vb = px(qb, y + t, x), k = kernel[t];
          m[0] += k * va;
          m[1] += k * vb;
          m[2] += k * va * va;
          m[3] += k * vb * vb;
          m[4] += k * va * vb;
        }
        for (int f = 0; f < 5; ++f) row_at(f, y, x) = m[f];
      }
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double m[5] = {0, 0, 0, 0, 0};
        for (int t = 0; t < kWin; ++t)
          for (int f = 0; f < 5; ++f) m[f] += kernel[t] * row_at(f, y, x + t);
        double mu1 = m[0], mu2 = m[1];
        double s11 = m[2] - mu1 * mu1, s22 = m[3] - mu2 * mu2, s12 = m[4] - mu1 * mu2;
        double num = (2.0 * mu1 * mu2 + c1) * (2.0 * s12 + c2);
        double den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2);
        total += num / den;
        ++count;
      }
  }
  return total / static_cast<double>(count);
}

RDCurve make_curve(const std::string& method, std::vector<RDPoint> points) {
  if (points.empty()) throw ValueError("rd curve '" + method + "': no points");
  std::sort(points.begin(), points.end(),
            [](const RDPoint& a, const RDPoint& b) { return a.bpp < b.bpp; });
  for (size_t i = 0; i < points.size(); ++i) {
    if (!(points[i].bpp > 0)) throw ValueError("rd curve: bpp must be positive");
    if (i > 0 && !(points[i].bpp > points[i - 1].bpp))
      throw ValueError("rd curve '" + method + "': bpp values must be strictly increasing");
  }
  return RDCurve{method, std::move(points)};
}

CompressResult compress_eval(const Tensor& image, Network& crnet, Network& ppnet, int qf,
                             double scale, const CodecBackend& codec,
                             const std::array<uint8_t, 8>& model_id) {
  if (image.n != 1) throw ValueError("compress_eval: single image expected");
  if (crnet.spec.kind != "CRNet" || ppnet.spec.kind != "PPNet")
    throw WeightsError("compress_eval: wrong network kinds");
  if (crnet.spec.qf_tag != qf || ppnet.spec.qf_tag != qf || crnet.spec.scale != scale ||
      ppnet.spec.scale != scale)
    throw WeightsError("compress_eval: weights are for qf " + std::to_string(crnet.spec.qf_tag) +
                       " scale " + std::to_string(crnet.spec.scale) + ", requested qf " +
                       std::to_string(qf) + " scale " + std::to_string(scale));

  Tensor compact = quantize_unit(crnet.infer(image));
  EncodedArtifact artifact = codec.encode(compact, qf);
  ContainerMetadata meta;
  meta.version = 1;
  meta.scale_code = code_from_scale(scale);
  meta.qf = static_cast<uint8_t>(qf);
  meta.orig_width = static_cast<uint16_t>(image.w);
  meta.orig_height = static_cast<uint16_t>(image.h);
  meta.model_id = model_id;
  std::vector<uint8_t> container = pack(artifact, meta);

  Tensor recon = ppnet.infer(codec.decode(artifact), image.h, image.w);
  for (float& v : recon.v) v = std::clamp(v, 0.0f, 1.0f);

  RDPoint pt;
  pt.method = "acn";
  pt.qf = qf;
  pt.scale = scale;
  pt.bpp = static_cast<double>(container.size()) * 8.0 /
           (static_cast<double>(image.h) * image.w);
  pt.psnr_db = psnr(image, recon);
  pt.ssim = ssim(image, recon);
  return {pt, std::move(container), std::move(recon)};
}

RDPoint jpeg_rd_point(const Tensor& image, int qf, const CodecBackend& codec) {
  EncodedArtifact a = codec.encode(image, qf);
  Tensor recon = codec.decode(a);
  RDPoint pt;
  pt.method = "jpeg";
  pt.qf = qf;
  pt.scale = 1.0;
  pt.bpp = static_cast<double>(a.bit_count) / (static_cast<double>(image.h) * image.w);
  pt.psnr_db = psnr(image, recon);
  pt.ssim = ssim(image, recon);
  return pt;
}

RDPoint bicubic_rd_point(const Tensor& image, int qf, double scale, const CodecBackend& codec) {
  Tensor down = bicubic_resize(image, scale);
  EncodedArtifact a = codec.encode(down, qf);
  Tensor up = resize_bicubic_to(codec.decode(a), image.h, image.w);
  for (float& v : up.v) v = std::clamp(v, 0.0f, 1.0f);
  RDPoint pt;
  pt.method = "bicubic";
  pt.qf = qf;
  pt.scale = scale;
  pt.bpp = static_cast<double>(a.bit_count) / (static_cast<double>(image.h) * image.w);
  pt.psnr_db = psnr(image, up);
  pt.ssim = ssim(image, up);
  return pt;
}

RDCurve rd_sweep(const std::string& method, const std::vector<Tensor>& images,
                 const std::vector<int>& qfs, const RdPointFn& point_fn) {
  if (images.empty()) throw ValueError("rd_sweep: no images");
  if (qfs.size() < 2) throw ValueError("rd_sweep: need at least 2 quality factors");
  std::vector<RDPoint> points;
  for (int qf : qfs) {
    RDPoint mean;
    for (const Tensor& img : images) {
      RDPoint p = point_fn(img, qf);
      mean.bpp += p.bpp;
      mean.psnr_db += p.psnr_db;
      mean.ssim += p.ssim;
      mean.scale = p.scale;
    }
    double inv = 1.0 / static_cast<double>(images.size());
    mean.bpp *= inv;
    mean.psnr_db *= inv;
    mean.ssim *= inv;
    mean.method = method;
    mean.qf = qf;
    points.push_back(mean);
  }
  return make_curve(method, std::move(points));
}

namespace {

// Least-squares cubic fit of log10(bpp) as a function of PSNR.
Eigen::Vector4d fit_log_rate(const RDCurve& c) {
  int n = static_cast<int>(c.points.size());
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    double p = c.points[static_cast<size_t>(i)].psnr_db;
    A(i, 0) = 1.0;
    A(i, 1) = p;
    A(i, 2) = p * p;
    A(i, 3) = p * p * p;
    y(i) = std::log10(c.points[static_cast<size_t>(i)].bpp);
  }
  return A.colPivHouseholderQr().solve(y);
}

double integrate_cubic(const Eigen::Vector4d& k, double lo, double hi) {
  auto anti = [&](double x) {
    return k(0) * x + k(1) * x * x / 2.0 + k(2) * x * x * x / 3.0 + k(3) * x * x * x * x / 4.0;
  };
  return anti(hi) - anti(lo);
}

}  // namespace

double bd_rate(const RDCurve& reference, const RDCurve& test) {
  if (reference.points.size() < 4 || test.points.size() < 4)
    throw ValueError("bd_rate: each curve needs at least 4 points");
  auto span = [](const RDCurve& c) {
    double lo = c.points.front().psnr_db, hi = c.points.front().psnr_db;
    for (const auto& p : c.points) {
      lo = std::min(lo, p.psnr_db);
      hi = std::max(hi, p.psnr_db);
    }
    return std::pair<double, double>(lo, hi);
  };
  auto [rlo, rhi] = span(reference);
  auto [tlo, thi] = span(test);
  double lo = std::max(rlo, tlo), hi = std::min(rhi, thi);
  if (!(hi > lo)) throw ValueError("bd_rate: PSNR ranges do not overlap");
  Eigen::Vector4d kr = fit_log_rate(reference), kt = fit_log_rate(test);
  double delta = (integrate_cubic(kt, lo, hi) - integrate_cubic(kr, lo, hi)) / (hi - lo);
  return 100.0 * (std::pow(10.0, delta) - 1.0);
}

double select_scale(int qf, const ScalePolicy& policy) {
  if (qf < 1 || qf > 100) throw ConfigError("select_scale: qf out of range");
  if (!(policy.low_max < policy.mid_max) || policy.low_max < 1 || policy.mid_max > 100)
    throw ConfigError("select_scale: malformed policy ranges");
  if (qf <= policy.low_max) return 0.5;
  if (qf <= policy.mid_max) return 0.75;
  return 1.0;
}

void write_points_csv(const std::string& path, const std::vector<RDCurve>& curves) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  f << "method,qf,scale,bpp,psnr_db,ssim\n";
  char line[256];
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      std::snprintf(line, sizeof line, "%s,%d,%.2f,%.6f,%.6f,%.6f\n", p.method.c_str(), p.qf,
                    p.scale, p.bpp, p.psnr_db, p.ssim);
      f << line;
    }
}

std::vector<RDCurve> read_points_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot read " + path);
  std::string line;
  if (!std::getline(f, line) || line != "method,qf,scale,bpp,psnr_db,ssim")
    throw DataError("bad RD csv header in " + path);
  std::vector<RDCurve> curves;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    RDPoint p;
    std::getline(ss, p.method, ',');
    std::getline(ss, field, ',');
    p.qf = std::stoi(field);
    std::getline(ss, field, ',');
    p.scale = std::stod(field);
    std::getline(ss, field, ',');
    p.bpp = std::stod(field);
    std::getline(ss, field, ',');
    p.psnr_db = std::stod(field);
    std::getline(ss, field, ',');
    p.ssim = std::stod(field);
    auto it = std::find_if(curves.begin(), curves.end(),
                           [&](const RDCurve& c) { return c.method == p.method; });
    if (it == curves.end()) {
      curves.push_back(RDCurve{p.method, {}});
      it = curves.end() - 1;
    }
    it->points.push_back(p);
  }
  return curves;
}

void write_rd_svg(const std::string& path, const std::vector<RDCurve>& curves) {
  if (curves.empty()) throw ValueError("rd plot: no curves");
  double blo = 1e30, bhi = -1e30, plo = 1e30, phi = -1e30;
  for (const auto& c : curves)
    for (const auto& p : c.points) {
      blo = std::min(blo, p.bpp);
      bhi = std::max(bhi, p.bpp);
      plo = std::min(plo, p.psnr_db);
      phi = std::max(phi, p.psnr_db);
    }
  if (bhi <= blo) bhi = blo + 1.0;
  if (phi <= plo) phi = plo + 1.0;
  const double kW = 640, kH = 480, kML = 70, kMR = 20, kMT = 20, kMB = 50;
  auto sx = [&](double b) { return kML + (b - blo) / (bhi - blo) * (kW - kML - kMR); };
  auto sy = [&](double p) { return kH - kMB - (p - plo) / (phi - plo) * (kH - kMT - kMB); };
  static const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path);
  char buf[512];
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"480\" "
       "viewBox=\"0 0 640 480\">\n<rect width=\"640\" height=\"480\" fill=\"white\"/>\n";
  // Axes with 5 ticks per dimension.
  for (int i = 0; i <= 5; ++i) {
    double b = blo + (bhi - blo) * i / 5.0, p = plo + (phi - plo) * i / 5.0;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n",
                  sx(b), sy(plo), sx(b), sy(phi));
    f << buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n",
                  sx(blo), sy(p), sx(bhi), sy(p));
    f << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%.3f</text>\n",
                  sx(b), kH - kMB + 16, b);
    f << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"end\">%.1f</text>\n",
                  kML - 6, sy(p) + 4, p);
    f << buf;
  }
  f << "<text x=\"320\" y=\"472\" font-size=\"13\" text-anchor=\"middle\">bits per pixel</text>\n"
       "<text x=\"16\" y=\"240\" font-size=\"13\" text-anchor=\"middle\" "
       "transform=\"rotate(-90 16 240)\">PSNR (dB)</text>\n";
  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const char* color = kColors[ci % 6];
    std::string pts;
    for (const auto& p : curves[ci].points) {
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", sx(p.bpp), sy(p.psnr_db));
      pts += buf;
      std::snprintf(buf, sizeof buf, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"3\" fill=\"%s\"/>\n",
                    sx(p.bpp), sy(p.psnr_db), color);
      f << buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.5\"/>\n",
                  pts.c_str(), color);
    f << buf;
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\" fill=\"%s\">%s</text>\n",
                  kW - kMR - 120.0, kMT + 18.0 * (ci + 1), color, curves[ci].method.c_str());
    f << buf;
  }
  f << "</svg>\n";
}

void emit_report(const std::vector<RDCurve>& curves, const std::string& out_dir) {
  if (curves.empty()) throw ValueError("emit_report: no curves");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  write_points_csv((fs::path(out_dir) / "points.csv").string(), curves);

  nlohmann::ordered_json j;
  auto carr = nlohmann::ordered_json::array();
  for (const auto& c : curves) {
    nlohmann::ordered_json cj;
    cj["method"] = c.method;
    cj["points"] = c.points.size();
    carr.push_back(cj);
  }
  j["curves"] = carr;
  nlohmann::ordered_json bd = nlohmann::ordered_json::object();
  for (const auto& ref : curves)
    for (const auto& test : curves) {
      if (ref.method == test.method) continue;
      std::string key = test.method + "_vs_" + ref.method;
      try {
        bd[key] = bd_rate(ref, test);
      } catch (const ValueError&) {
        bd[key] = nullptr;  // ineligible pair (too few points or no overlap)
      }
    }
  j["bd_rate_percent"] = bd;
  std::ofstream f(fs::path(out_dir) / "summary.json");
  if (!f) throw DataError("cannot write summary.json in " + out_dir);
  f << j.dump(2) << "\n";

  write_rd_svg((fs::path(out_dir) / "rd_curves.svg").string(), curves);
}

}  // namespace acnf
