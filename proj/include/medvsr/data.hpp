#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "medvsr/errors.hpp"
#include "medvsr/ops_image.hpp"
#include "medvsr/rng.hpp"
#include "medvsr/tensor.hpp"

namespace medvsr {

// A clip is an ordered list of [3,H,W] frames with values in [0,1].
template <class T>
using Clip = std::vector<Tensor<T>>;

template <class T>
void check_clip(const Clip<T>& clip, const char* who) {
  require(!clip.empty(), std::string(who) + ": empty clip");
  const Tensor<T>& f0 = clip.front();
  require(f0.rank() == 3 && f0.dim(0) == 3,
          std::string(who) + ": frames must be [3,H,W]");
  for (const auto& f : clip)
    require(f.shape() == f0.shape(),
            std::string(who) + ": frames must share one shape");
}

// ---------------------------------------------------------------------------
// Degradation: bicubic x4 downsample, additive Gaussian noise, clamp.

struct DegradationSpec {
  int64_t scale = 4;
  double noise_std = 15.0;  // on the 0..255 intensity scale
  uint64_t seed = 0;
};

template <class T>
Tensor<T> center_crop_divisible(const Tensor<T>& frame, int64_t scale) {
  int64_t C = frame.dim(0), H = frame.dim(1), W = frame.dim(2);
  int64_t h = (H / scale) * scale, w = (W / scale) * scale;
  require(h > 0 && w > 0, "degrade: frame smaller than the scale factor");
  if (h == H && w == W) return frame;
  int64_t y0 = (H - h) / 2, x0 = (W - w) / 2;
  Tensor<T> out({C, h, w});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        out.at3(c, y, x) = frame.at3(c, y0 + y, x0 + x);
  return out;
}

template <class T>
Clip<T> degrade(const Clip<T>& hr, const DegradationSpec& spec) {
  check_clip(hr, "degrade");
  require(spec.scale == 4, "degrade: only the x4 configuration is supported");
  require(spec.noise_std >= 0, "degrade: negative noise level");
  Rng rng(spec.seed);
  double sigma = spec.noise_std / 255.0;
  Clip<T> lr;
  lr.reserve(hr.size());
  for (const auto& frame : hr) {
    Tensor<T> f = center_crop_divisible(frame, spec.scale);
    Tensor<T> d = resize_bicubic(f, f.dim(1) / spec.scale,
                                 f.dim(2) / spec.scale, /*antialias=*/true);
    for (int64_t i = 0; i < d.numel(); ++i) {
      double v = double(d[i]);
      if (sigma > 0) v += rng.normal(0.0, sigma);
      d[i] = T(std::min(1.0, std::max(0.0, v)));
    }
    lr.push_back(std::move(d));
  }
  return lr;
}

// ---------------------------------------------------------------------------
// Patch sampling: a random temporal window plus aligned spatial crops. The
// offsets are drawn on the LR grid; the HR crop sits at scale times them.

template <class T>
Tensor<T> crop(const Tensor<T>& frame, int64_t y0, int64_t x0, int64_t h,
               int64_t w) {
  require(y0 >= 0 && x0 >= 0 && y0 + h <= frame.dim(1) &&
              x0 + w <= frame.dim(2),
          "crop: window outside the frame");
  Tensor<T> out({frame.dim(0), h, w});
  for (int64_t c = 0; c < frame.dim(0); ++c)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x)
        out.at3(c, y, x) = frame.at3(c, y0 + y, x0 + x);
  return out;
}

template <class T>
std::pair<Clip<T>, Clip<T>> sample_patch(const Clip<T>& hr, const Clip<T>& lr,
                                         int64_t size, int64_t frames,
                                         Rng& rng) {
  check_clip(hr, "sample_patch");
  check_clip(lr, "sample_patch");
  require(hr.size() == lr.size(), "sample_patch: clip length mismatch");
  require(frames >= 1 && int64_t(hr.size()) >= frames,
          "sample_patch: clip shorter than the requested window");
  int64_t hr_h = hr[0].dim(1), hr_w = hr[0].dim(2);
  int64_t lr_h = lr[0].dim(1), lr_w = lr[0].dim(2);
  require(lr_h > 0 && hr_h % lr_h == 0 && hr_w % lr_w == 0 &&
              hr_h / lr_h == hr_w / lr_w,
          "sample_patch: HR is not an integer multiple of LR");
  int64_t scale = hr_h / lr_h;
  require(size % scale == 0, "sample_patch: patch size must divide by scale");
  int64_t ls = size / scale;
  require(ls <= lr_h && ls <= lr_w, "sample_patch: patch larger than frame");
  int64_t t0 = rng.uniform_int(0, int64_t(hr.size()) - frames);
  int64_t ly = rng.uniform_int(0, lr_h - ls);
  int64_t lx = rng.uniform_int(0, lr_w - ls);
  Clip<T> hp, lp;
  for (int64_t t = t0; t < t0 + frames; ++t) {
    hp.push_back(crop(hr[size_t(t)], ly * scale, lx * scale, size, size));
    lp.push_back(crop(lr[size_t(t)], ly, lx, ls, ls));
  }
  return {std::move(hp), std::move(lp)};
}

template <class T>
std::pair<Clip<T>, Clip<T>> sample_patch(const Clip<T>& hr, const Clip<T>& lr,
                                         int64_t size, int64_t frames,
                                         uint64_t seed) {
  Rng rng(seed);
  return sample_patch(hr, lr, size, frames, rng);
}

// ---------------------------------------------------------------------------
// Synthetic clips: procedural stand-ins with known motion.

enum class SynthKind { kMovingBars, kDriftingTexture, kJitter };

inline const char* synth_kind_name(SynthKind k) {
  switch (k) {
    case SynthKind::kMovingBars: return "moving_bars";
    case SynthKind::kDriftingTexture: return "drifting_texture";
    case SynthKind::kJitter: return "jitter";
  }
  return "?";
}

inline SynthKind parse_synth_kind(const std::string& s) {
  if (s == "moving_bars") return SynthKind::kMovingBars;
  if (s == "drifting_texture") return SynthKind::kDriftingTexture;
  if (s == "jitter") return SynthKind::kJitter;
  throw contract_error("unknown synthetic clip kind: " + s);
}

namespace detail {

// Band-limited texture: a fixed mix of oriented sinusoids, evaluated at
// arbitrary (possibly fractional) coordinates so global shifts stay exact.
struct SinMix {
  struct Wave {
    double fx, fy, phase, amp;
  };
  std::vector<Wave> waves[3];

  explicit SinMix(Rng& rng, int n_waves = 6) {
    for (auto& ch : waves)
      for (int i = 0; i < n_waves; ++i) {
        double period = rng.uniform(6.0, 24.0);
        double theta = rng.uniform(0.0, 6.283185307179586);
        ch.push_back({std::cos(theta) / period, std::sin(theta) / period,
                      rng.uniform(0.0, 6.283185307179586),
                      rng.uniform(0.5, 1.0)});
      }
  }

  double eval(int c, double x, double y) const {
    double acc = 0.0, norm = 0.0;
    for (const auto& w : waves[c]) {
      acc += w.amp * std::sin(6.283185307179586 * (w.fx * x + w.fy * y) +
                              w.phase);
      norm += w.amp;
    }
    // map to [0.05, 0.95]
    return 0.5 + 0.45 * acc / norm;
  }
};

}  // namespace detail

// `shifts`, when given, receives the per-frame global (sx, sy) displacement
// actually applied — the ground truth for motion statistics.
template <class T>
Clip<T> synth_clip(SynthKind kind, int64_t frames, int64_t h, int64_t w,
                   uint64_t seed, double vx = 0.7, double vy = 0.3,
                   double jitter_max = 6.0,
                   std::vector<std::array<double, 2>>* shifts = nullptr) {
  require(frames >= 1 && h >= 1 && w >= 1, "synth_clip: bad dimensions");
  Rng rng(seed);
  if (shifts) shifts->clear();
  Clip<T> clip;
  clip.reserve(size_t(frames));
  if (kind == SynthKind::kMovingBars) {
    double theta = rng.uniform(0.0, 3.141592653589793);
    double cs = std::cos(theta), sn = std::sin(theta);
    double phase[3] = {rng.uniform(0.0, 6.28), rng.uniform(0.0, 6.28),
                       rng.uniform(0.0, 6.28)};
    for (int64_t t = 0; t < frames; ++t) {
      if (shifts) shifts->push_back({vx * double(t), vy * double(t)});
      Tensor<T> f({3, h, w});
      for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < h; ++y)
          for (int64_t x = 0; x < w; ++x) {
            double u = (double(x) - vx * double(t)) * cs +
                       (double(y) - vy * double(t)) * sn;
            f.at3(c, y, x) =
                T(0.5 + 0.45 * std::sin(6.283185307179586 * u / 12.0 +
                                        phase[c]));
          }
      clip.push_back(std::move(f));
    }
    return clip;
  }
  detail::SinMix mix(rng);
  for (int64_t t = 0; t < frames; ++t) {
    double sx, sy;
    if (kind == SynthKind::kDriftingTexture) {
      sx = vx * double(t);
      sy = vy * double(t);
    } else {  // jitter: fresh global shift every frame
      sx = rng.uniform(-jitter_max, jitter_max);
      sy = rng.uniform(-jitter_max, jitter_max);
    }
    if (shifts) shifts->push_back({sx, sy});
    Tensor<T> f({3, h, w});
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x)
          f.at3(c, y, x) =
              T(mix.eval(int(c), double(x) - sx, double(y) - sy));
    clip.push_back(std::move(f));
  }
  return clip;
}

// ---------------------------------------------------------------------------
// Optical flow estimation. The returned field o maps coordinates of `a` into
// `b`: a(p) corresponds to b(p + o(p)), channel 0 = x, channel 1 = y.

enum class FlowMethod { kZero, kBlockMatch };

inline const char* flow_method_name(FlowMethod m) {
  return m == FlowMethod::kZero ? "zero" : "block_match";
}

inline FlowMethod parse_flow_method(const std::string& s) {
  if (s == "zero") return FlowMethod::kZero;
  if (s == "block_match") return FlowMethod::kBlockMatch;
  throw contract_error("unknown flow method: " + s);
}

struct FlowEstimator {
  FlowMethod method = FlowMethod::kZero;
  int64_t block = 8;
  int64_t radius = 4;
};

template <class T>
Tensor<T> estimate_flow(const Tensor<T>& a, const Tensor<T>& b,
                        const FlowEstimator& est) {
  require(a.rank() == 3 && a.shape() == b.shape(),
          "estimate_flow: frames must share one [C,H,W] shape");
  int64_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  Tensor<T> flow({2, H, W}, T(0));
  if (est.method == FlowMethod::kZero) return flow;
  require(est.block >= 1 && est.radius >= 0, "estimate_flow: bad parameters");
  for (int64_t by = 0; by < H; by += est.block)
    for (int64_t bx = 0; bx < W; bx += est.block) {
      int64_t bh = std::min(est.block, H - by);
      int64_t bw = std::min(est.block, W - bx);
      int64_t best_dy = 0, best_dx = 0;
      double best_sad = -1.0;
      int64_t best_mag = 0;
      for (int64_t dy = -est.radius; dy <= est.radius; ++dy)
        for (int64_t dx = -est.radius; dx <= est.radius; ++dx) {
          if (by + dy < 0 || bx + dx < 0 || by + dy + bh > H ||
              bx + dx + bw > W)
            continue;  // displaced block must stay inside b
          double sad = 0.0;
          for (int64_t c = 0; c < C; ++c)
            for (int64_t y = 0; y < bh; ++y)
              for (int64_t x = 0; x < bw; ++x)
                sad += std::abs(double(a.at3(c, by + y, bx + x)) -
                                double(b.at3(c, by + dy + y, bx + dx + x)));
          int64_t mag = dy * dy + dx * dx;
          bool better =
              best_sad < 0 || sad < best_sad ||
              (sad == best_sad &&
               (mag < best_mag ||
                (mag == best_mag && (dy < best_dy ||
                                     (dy == best_dy && dx < best_dx)))));
          if (better) {
            best_sad = sad;
            best_dy = dy;
            best_dx = dx;
            best_mag = mag;
          }
        }
      for (int64_t y = by; y < by + bh; ++y)
        for (int64_t x = bx; x < bx + bw; ++x) {
          flow.at3(0, y, x) = T(best_dx);
          flow.at3(1, y, x) = T(best_dy);
        }
    }
  return flow;
}

// Adjacent-pair flows for a clip, both directions, estimated once.
// fwd[i] maps frame-i coordinates into frame i+1; back[i] maps frame-(i+1)
// coordinates into frame i.
template <class T>
struct ClipFlows {
  std::vector<Tensor<T>> fwd, back;
};

template <class T>
ClipFlows<T> clip_flows(const Clip<T>& clip, const FlowEstimator& est) {
  check_clip(clip, "clip_flows");
  ClipFlows<T> out;
  for (size_t i = 0; i + 1 < clip.size(); ++i) {
    out.fwd.push_back(estimate_flow(clip[i], clip[i + 1], est));
    out.back.push_back(estimate_flow(clip[i + 1], clip[i], est));
  }
  return out;
}

}  // namespace medvsr
