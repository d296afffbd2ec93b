#pragma once

#include <json.hpp>

#include "medvsr/data.hpp"
#include "medvsr/ops_dcn.hpp"

namespace medvsr {

// Peak signal-to-noise ratio on [0,1] frames, capped at 99 dB so identical
// inputs stay finite.
template <class T>
double psnr(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "psnr: shape mismatch");
  require(a.numel() > 0, "psnr: empty input");
  double mse = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = double(a[i]) - double(b[i]);
    mse += d * d;
  }
  mse /= double(a.numel());
  if (mse == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

namespace detail {

inline const std::vector<double>& ssim_window() {
  static const std::vector<double> w = [] {
    std::vector<double> v(11 * 11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i)
      for (int j = 0; j < 11; ++j) {
        double dy = i - 5, dx = j - 5;
        v[size_t(i * 11 + j)] = std::exp(-(dx * dx + dy * dy) / (2 * 1.5 * 1.5));
        sum += v[size_t(i * 11 + j)];
      }
    for (double& x : v) x /= sum;
    return v;
  }();
  return w;
}

}  // namespace detail

// Single-scale SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2 on the [0,1] range, valid positions only, channels averaged.
template <class T>
double ssim(const Tensor<T>& a, const Tensor<T>& b) {
  require(a.same_shape(b), "ssim: shape mismatch");
  require(a.rank() == 3, "ssim: want [C,H,W]");
  int64_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  require(H >= 11 && W >= 11, "ssim: frame smaller than the 11x11 window");
  const std::vector<double>& win = detail::ssim_window();
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  int64_t count = 0;
  for (int64_t c = 0; c < C; ++c) {
    const T* pa = a.data() + c * H * W;
    const T* pb = b.data() + c * H * W;
    for (int64_t y = 0; y + 11 <= H; ++y)
      for (int64_t x = 0; x + 11 <= W; ++x) {
        double mx = 0, my = 0, xx = 0, yy = 0, xy = 0;
        for (int64_t i = 0; i < 11; ++i)
          for (int64_t j = 0; j < 11; ++j) {
            double wv = win[size_t(i * 11 + j)];
            double va = double(pa[(y + i) * W + x + j]);
            double vb = double(pb[(y + i) * W + x + j]);
            mx += wv * va;
            my += wv * vb;
            xx += wv * va * va;
            yy += wv * vb * vb;
            xy += wv * (va * vb);  // grouping keeps ssim exactly symmetric
          }
        double sx = xx - mx * mx, sy = yy - my * my, sxy = xy - mx * my;
        total += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                 ((mx * mx + my * my + c1) * (sx + sy + c2));
        ++count;
      }
  }
  return total / double(count);
}

// Charbonnier penalty as a plain value (the training loss without a graph).
// The per-pixel form uses a running mean so that charbonnier(x, x) == eps.
template <class T>
double charbonnier_value(const Tensor<T>& a, const Tensor<T>& b, double eps,
                         ag::CharbonnierForm form = ag::CharbonnierForm::kPerPixel) {
  require(a.same_shape(b), "charbonnier: shape mismatch");
  require(a.numel() > 0, "charbonnier: empty input");
  require(eps > 0, "charbonnier: eps must be positive");
  if (form == ag::CharbonnierForm::kWholeNorm) {
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
      double d = double(a[i]) - double(b[i]);
      s += d * d;
    }
    return s == 0.0 ? eps : std::sqrt(s + eps * eps);
  }
  double mean = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    double d = double(a[i]) - double(b[i]);
    double v = d == 0.0 ? eps : std::sqrt(d * d + eps * eps);
    mean += (v - mean) / double(i + 1);
  }
  return mean;
}

// Forward-backward residual for one flow pair: per pixel p,
// || o_f(p) + o_b(p + o_f(p)) ||_2 with a bilinear read of o_b.
template <class T>
Tensor<T> flow_consistency_map(const Tensor<T>& fwd, const Tensor<T>& back) {
  require(fwd.rank() == 3 && fwd.dim(0) == 2 && fwd.same_shape(back),
          "flow_consistency: want matching [2,H,W] flows");
  int64_t H = fwd.dim(1), W = fwd.dim(2);
  const T* fx = fwd.data();
  const T* fy = fwd.data() + H * W;
  const T* bx = back.data();
  const T* by = back.data() + H * W;
  Tensor<T> err({H, W});
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < W; ++x) {
      T vx = fx[y * W + x], vy = fy[y * W + x];
      T px = T(x) + vx, py = T(y) + vy;
      T wx = detail::bilin_read(bx, H, W, px, py);
      T wy = detail::bilin_read(by, H, W, px, py);
      err[y * W + x] = std::sqrt((vx + wx) * (vx + wx) + (vy + wy) * (vy + wy));
    }
  return err;
}

// Mean forward-backward residual over all adjacent pairs of a clip.
template <class T>
double flow_consistency_error(const Clip<T>& clip, const FlowEstimator& est) {
  check_clip(clip, "flow_consistency");
  require(clip.size() >= 2, "flow_consistency: need at least two frames");
  double total = 0.0;
  for (size_t t = 0; t + 1 < clip.size(); ++t) {
    Tensor<T> fwd = estimate_flow(clip[t], clip[t + 1], est);
    Tensor<T> back = estimate_flow(clip[t + 1], clip[t], est);
    Tensor<T> err = flow_consistency_map(fwd, back);
    double m = 0.0;
    for (int64_t i = 0; i < err.numel(); ++i) m += double(err[i]);
    total += m / double(err.numel());
  }
  return total / double(clip.size() - 1);
}

// Per-clip quality summary: per-frame PSNR/SSIM, their means, and optionally
// the mean flow-consistency error of the restored clip.
struct MetricReport {
  std::string clip;
  std::vector<double> frame_psnr, frame_ssim;
  double clip_psnr = 0.0, clip_ssim = 0.0;
  double flow_error = -1.0;  // negative = not computed

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["clip"] = clip;
    j["frame_psnr"] = frame_psnr;
    j["frame_ssim"] = frame_ssim;
    j["psnr"] = clip_psnr;
    j["ssim"] = clip_ssim;
    if (flow_error >= 0.0) j["flow_error"] = flow_error;
    return j;
  }
};

template <class T>
MetricReport evaluate_clip(const std::string& name, const Clip<T>& sr,
                           const Clip<T>& gt) {
  check_clip(sr, "evaluate_clip");
  require(sr.size() == gt.size(), "evaluate_clip: clip length mismatch");
  MetricReport r;
  r.clip = name;
  for (size_t t = 0; t < sr.size(); ++t) {
    r.frame_psnr.push_back(psnr(sr[t], gt[t]));
    r.frame_ssim.push_back(ssim(sr[t], gt[t]));
    r.clip_psnr += r.frame_psnr.back();
    r.clip_ssim += r.frame_ssim.back();
  }
  r.clip_psnr /= double(sr.size());
  r.clip_ssim /= double(sr.size());
  return r;
}

inline std::string metrics_csv_header() { return "clip,frame,psnr,ssim"; }

inline void append_metrics_csv(std::string& csv, const MetricReport& r) {
  char buf[128];
  for (size_t t = 0; t < r.frame_psnr.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%s,%zu,%.17g,%.17g\n", r.clip.c_str(),
                  t + 1, r.frame_psnr[t], r.frame_ssim[t]);
    csv += buf;
  }
}

// Mean of clip means: (psnr, ssim).
inline std::pair<double, double> aggregate(
    const std::vector<MetricReport>& reports) {
  require(!reports.empty(), "aggregate: no reports");
  double p = 0.0, s = 0.0;
  for (const MetricReport& r : reports) {
    p += r.clip_psnr;
    s += r.clip_ssim;
  }
  return {p / double(reports.size()), s / double(reports.size())};
}

}  // namespace medvsr
