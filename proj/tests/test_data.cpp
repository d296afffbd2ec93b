#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <cmath>

#include "medvsr/data.hpp"

using namespace medvsr;

namespace {

Clip<double> random_clip(int64_t frames, int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  Clip<double> clip;
  for (int64_t t = 0; t < frames; ++t)
    clip.push_back(rand_uniform<double>({3, h, w}, rng, 0.0, 1.0));
  return clip;
}

Tensor<double> translate_wrapless(const Tensor<double>& a, int64_t dx,
                                  int64_t dy) {
  // b(y, x) = a(y - dy, x - dx); out-of-range reads clamp (only the interior
  // matters for the recovery checks)
  Tensor<double> b(a.shape());
  for (int64_t c = 0; c < a.dim(0); ++c)
    for (int64_t y = 0; y < a.dim(1); ++y)
      for (int64_t x = 0; x < a.dim(2); ++x) {
        int64_t sy = std::clamp<int64_t>(y - dy, 0, a.dim(1) - 1);
        int64_t sx = std::clamp<int64_t>(x - dx, 0, a.dim(2) - 1);
        b.at3(c, y, x) = a.at3(c, sy, sx);
      }
  return b;
}

}  // namespace

TEST_CASE("noise-free degradation of a constant frame stays constant") {
  Clip<double> hr = {Tensor<double>({3, 16, 16}, 0.37)};
  DegradationSpec spec;
  spec.noise_std = 0.0;
  Clip<double> lr = degrade(hr, spec);
  REQUIRE(lr.size() == 1);
  CHECK(lr[0].dim(1) == 4);
  CHECK(lr[0].dim(2) == 4);
  for (int64_t i = 0; i < lr[0].numel(); ++i)
    CHECK(lr[0][i] == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("degradation is bitwise deterministic under a fixed seed") {
  Clip<double> hr = random_clip(3, 24, 20, 5);
  DegradationSpec spec;
  spec.seed = 99;
  Clip<double> a = degrade(hr, spec);
  Clip<double> b = degrade(hr, spec);
  REQUIRE(a.size() == b.size());
  for (size_t t = 0; t < a.size(); ++t) CHECK(bitwise_equal(a[t], b[t]));
  spec.seed = 100;
  Clip<double> c = degrade(hr, spec);
  CHECK(max_abs_diff(a[0], c[0]) > 0.0);
}

TEST_CASE("measured noise level matches the specification within 2 percent") {
  Clip<double> hr = {Tensor<double>({3, 512, 512}, 0.5)};
  DegradationSpec spec;
  spec.seed = 7;
  Clip<double> lr = degrade(hr, spec);
  // Welford over all LR pixels; the clean signal is exactly 0.5 and the
  // clamp sits more than 8 sigma away.
  double mean = 0.0, m2 = 0.0;
  int64_t n = 0;
  for (int64_t i = 0; i < lr[0].numel(); ++i) {
    double v = lr[0][i] - 0.5;
    ++n;
    double d = v - mean;
    mean += d / double(n);
    m2 += d * (v - mean);
  }
  double stddev = std::sqrt(m2 / double(n - 1));
  double target = 15.0 / 255.0;
  CHECK(std::abs(stddev - target) / target < 0.02);
  CHECK(std::abs(mean) < 3.0 * target / std::sqrt(double(n)));
}

TEST_CASE("degradation center-crops frames that do not divide by four") {
  Rng rng(3);
  Clip<double> hr = {rand_uniform<double>({3, 13, 18}, rng, 0.0, 1.0)};
  DegradationSpec spec;
  spec.noise_std = 0.0;
  Clip<double> lr = degrade(hr, spec);
  CHECK(lr[0].dim(1) == 3);
  CHECK(lr[0].dim(2) == 4);
  Clip<double> tiny = {Tensor<double>({3, 2, 8}, 0.1)};
  CHECK_THROWS_AS(degrade(tiny, spec), contract_error);
}

TEST_CASE("patch sampling keeps the x4 grid alignment exactly") {
  // LR built by decimation so alignment is directly observable
  Clip<double> hr = random_clip(5, 32, 40, 11);
  Clip<double> lr;
  for (const auto& f : hr) {
    Tensor<double> d({3, 8, 10});
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t y = 0; y < 8; ++y)
        for (int64_t x = 0; x < 10; ++x)
          d.at3(c, y, x) = f.at3(c, 4 * y, 4 * x);
    lr.push_back(std::move(d));
  }
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    auto [hp, lp] = sample_patch(hr, lr, 16, 3, rng);
    REQUIRE(hp.size() == 3);
    REQUIRE(lp.size() == 3);
    CHECK(hp[0].dim(1) == 16);
    CHECK(lp[0].dim(1) == 4);
    for (size_t t = 0; t < lp.size(); ++t)
      for (int64_t c = 0; c < 3; ++c)
        for (int64_t y = 0; y < 4; ++y)
          for (int64_t x = 0; x < 4; ++x)
            CHECK(lp[t].at3(c, y, x) == hp[t].at3(c, 4 * y, 4 * x));
  }
}

TEST_CASE("full-frame patches are identity crops and seeds reproduce") {
  Clip<double> hr = random_clip(4, 16, 16, 31);
  DegradationSpec spec;
  spec.noise_std = 0.0;
  Clip<double> lr = degrade(hr, spec);
  auto [hp, lp] = sample_patch(hr, lr, 16, 2, uint64_t(5));
  auto [hp2, lp2] = sample_patch(hr, lr, 16, 2, uint64_t(5));
  for (size_t t = 0; t < hp.size(); ++t) {
    CHECK(bitwise_equal(hp[t], hp2[t]));
    CHECK(bitwise_equal(lp[t], lp2[t]));
  }
  // spatial crop is the identity; only the temporal window varies
  bool matched = false;
  for (size_t t0 = 0; t0 + 1 < hr.size() && !matched; ++t0)
    matched = bitwise_equal(hp[0], hr[t0]) && bitwise_equal(hp[1], hr[t0 + 1]);
  CHECK(matched);
  CHECK_THROWS_AS(sample_patch(hr, lr, 18, 2, uint64_t(1)), contract_error);
  CHECK_THROWS_AS(sample_patch(hr, lr, 16, 9, uint64_t(1)), contract_error);
}

TEST_CASE("synthetic clips are seed deterministic") {
  for (SynthKind k : {SynthKind::kMovingBars, SynthKind::kDriftingTexture,
                      SynthKind::kJitter}) {
    Clip<double> a = synth_clip<double>(k, 3, 12, 14, 77);
    Clip<double> b = synth_clip<double>(k, 3, 12, 14, 77);
    REQUIRE(a.size() == b.size());
    for (size_t t = 0; t < a.size(); ++t) CHECK(bitwise_equal(a[t], b[t]));
    Clip<double> c = synth_clip<double>(k, 3, 12, 14, 78);
    CHECK(max_abs_diff(a[0], c[0]) > 0.0);
  }
}

TEST_CASE("zero-velocity bars are a static clip") {
  Clip<double> clip =
      synth_clip<double>(SynthKind::kMovingBars, 4, 10, 10, 3, 0.0, 0.0);
  for (size_t t = 1; t < clip.size(); ++t)
    CHECK(bitwise_equal(clip[0], clip[t]));
  Clip<double> moving =
      synth_clip<double>(SynthKind::kMovingBars, 4, 10, 10, 3, 0.7, 0.3);
  CHECK(max_abs_diff(moving[0], moving[1]) > 0.0);
}

TEST_CASE("jitter shift statistics match the configured distribution") {
  std::vector<std::array<double, 2>> shifts;
  synth_clip<double>(SynthKind::kJitter, 4000, 4, 4, 13, 0.7, 0.3, 6.0,
                     &shifts);
  REQUIRE(shifts.size() == 4000);
  double acc = 0.0;
  int64_t n = 0;
  for (size_t t = 1; t < shifts.size(); ++t)
    for (int a = 0; a < 2; ++a) {
      acc += std::abs(shifts[t][a] - shifts[t - 1][a]);
      ++n;
    }
  // |U - U'| for independent uniforms on [-6, 6] has mean 4
  double mean = acc / double(n);
  CHECK(std::abs(mean - 4.0) < 0.15);
  for (const auto& s : shifts) {
    CHECK(std::abs(s[0]) <= 6.0);
    CHECK(std::abs(s[1]) <= 6.0);
  }
}

TEST_CASE("zero-method flow is identically zero") {
  Clip<double> clip = random_clip(2, 9, 7, 41);
  FlowEstimator est;
  est.method = FlowMethod::kZero;
  Tensor<double> o = estimate_flow(clip[0], clip[1], est);
  CHECK(o.dim(0) == 2);
  CHECK(o.dim(1) == 9);
  CHECK(o.dim(2) == 7);
  for (int64_t i = 0; i < o.numel(); ++i) CHECK(o[i] == 0.0);
  Tensor<double> bad({3, 9, 8}, 0.0);
  CHECK_THROWS_AS(estimate_flow(clip[0], bad, est), contract_error);
}

TEST_CASE("block matching on identical frames picks the zero displacement") {
  Clip<double> clip = random_clip(1, 16, 16, 43);
  FlowEstimator est{FlowMethod::kBlockMatch, 4, 3};
  Tensor<double> o = estimate_flow(clip[0], clip[0], est);
  for (int64_t i = 0; i < o.numel(); ++i) CHECK(o[i] == 0.0);
  // constant frames tie every candidate; the magnitude rule keeps zero
  Tensor<double> flat({3, 12, 12}, 0.5);
  Tensor<double> oz = estimate_flow(flat, flat, est);
  for (int64_t i = 0; i < oz.numel(); ++i) CHECK(oz[i] == 0.0);
}

TEST_CASE("block matching recovers integer translations on interior blocks") {
  Rng rng(47);
  FlowEstimator est{FlowMethod::kBlockMatch, 4, 3};
  for (auto [dx, dy] : {std::pair<int64_t, int64_t>{2, 1},
                        {-3, 0},
                        {1, -2},
                        {3, 3}}) {
    Tensor<double> a = rand_uniform<double>({3, 20, 24}, rng, 0.0, 1.0);
    Tensor<double> b = translate_wrapless(a, dx, dy);
    Tensor<double> o = estimate_flow(a, b, est);
    for (int64_t by = 0; by < 20; by += est.block)
      for (int64_t bx = 0; bx < 24; bx += est.block) {
        // interior: the displaced block lies fully inside the frame and away
        // from the clamped border band of the translated copy
        int64_t lo_y = by + dy, hi_y = by + dy + est.block;
        int64_t lo_x = bx + dx, hi_x = bx + dx + est.block;
        if (lo_y < std::max<int64_t>(0, dy) ||
            hi_y > std::min<int64_t>(20, 20 + dy))
          continue;
        if (lo_x < std::max<int64_t>(0, dx) ||
            hi_x > std::min<int64_t>(24, 24 + dx))
          continue;
        CHECK(o.at3(0, by, bx) == double(dx));
        CHECK(o.at3(1, by, bx) == double(dy));
      }
  }
}

TEST_CASE("block matching agrees with an exhaustive per-block reference") {
  Rng rng(53);
  FlowEstimator est{FlowMethod::kBlockMatch, 4, 2};
  for (int rep = 0; rep < 25; ++rep) {
    Tensor<double> a = rand_uniform<double>({3, 10, 9}, rng, 0.0, 1.0);
    Tensor<double> b = rand_uniform<double>({3, 10, 9}, rng, 0.0, 1.0);
    Tensor<double> o = estimate_flow(a, b, est);
    for (int64_t by = 0; by < 10; by += 4)
      for (int64_t bx = 0; bx < 9; bx += 4) {
        int64_t bh = std::min<int64_t>(4, 10 - by);
        int64_t bw = std::min<int64_t>(4, 9 - bx);
        double best = -1.0;
        int64_t bdy = 0, bdx = 0;
        for (int64_t dy = -2; dy <= 2; ++dy)
          for (int64_t dx = -2; dx <= 2; ++dx) {
            if (by + dy < 0 || bx + dx < 0 || by + dy + bh > 10 ||
                bx + dx + bw > 9)
              continue;
            double sad = 0.0;
            for (int64_t c = 0; c < 3; ++c)
              for (int64_t y = 0; y < bh; ++y)
                for (int64_t x = 0; x < bw; ++x)
                  sad += std::abs(a.at3(c, by + y, bx + x) -
                                  b.at3(c, by + dy + y, bx + dx + x));
            int64_t mag = dy * dy + dx * dx;
            int64_t bmag = bdy * bdy + bdx * bdx;
            if (best < 0 || sad < best ||
                (sad == best &&
                 (mag < bmag || (mag == bmag &&
                                 (dy < bdy || (dy == bdy && dx < bdx)))))) {
              best = sad;
              bdy = dy;
              bdx = dx;
            }
          }
        CHECK(o.at3(0, by, bx) == double(bdx));
        CHECK(o.at3(1, by, bx) == double(bdy));
      }
  }
}

TEST_CASE("clip flows pair up adjacent frames in both directions") {
  Clip<double> clip = random_clip(4, 12, 12, 61);
  FlowEstimator est{FlowMethod::kBlockMatch, 4, 2};
  ClipFlows<double> fl = clip_flows(clip, est);
  REQUIRE(fl.fwd.size() == 3);
  REQUIRE(fl.back.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK(bitwise_equal(fl.fwd[i],
                        estimate_flow(clip[i], clip[i + 1], est)));
    CHECK(bitwise_equal(fl.back[i],
                        estimate_flow(clip[i + 1], clip[i], est)));
  }
}
