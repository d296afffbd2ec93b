#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "medvsr/train.hpp"

using namespace medvsr;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.width = 8;
  c.state = 4;
  c.window = 4;
  c.branches = 2;
  c.kernel = 3;
  c.depth = 1;
  c.flow = {FlowMethod::kZero, 4, 2};
  return c;
}

SampleSet<double> tiny_dataset(int clips, uint64_t seed) {
  SampleSet<double> data;
  DegradationSpec spec;
  for (int i = 0; i < clips; ++i) {
    spec.seed = seed + uint64_t(i);
    Clip<double> hr = synth_clip<double>(SynthKind::kDriftingTexture, 3, 16,
                                         16, seed * 31 + uint64_t(i));
    data.lr.push_back(degrade(hr, spec));
    data.hr.push_back(std::move(hr));
  }
  return data;
}

std::string read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(bool(is));
  return std::string((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("cosine schedule hits both endpoints and decays monotonically") {
  CHECK(cosine_lr(0, 1000) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(cosine_lr(1000, 1000) == doctest::Approx(1e-7).epsilon(1e-12));
  CHECK(cosine_lr(500, 1000) ==
        doctest::Approx(0.5 * (2e-4 + 1e-7)).epsilon(1e-12));
  double prev = cosine_lr(0, 100);
  for (int64_t k = 1; k <= 100; ++k) {
    double cur = cosine_lr(k, 100);
    CHECK(cur < prev);
    prev = cur;
  }
  CHECK_THROWS_AS(cosine_lr(5, 4), contract_error);
  CHECK_THROWS_AS(cosine_lr(-1, 4), contract_error);
}

TEST_CASE("adam first step matches the closed form") {
  Tensor<double> w({3}, 1.0);
  Tensor<double> g({3});
  g[0] = 0.5;
  g[1] = -2.0;
  g[2] = 0.0;
  Adam<double> opt;
  opt.init_like({&w});
  opt.step({&w}, {&g}, 1e-2);
  // bias-corrected first step: w -= lr * g / (|g| + eps)
  for (int i = 0; i < 3; ++i) {
    double gk = g[i];
    double expect = 1.0 - 1e-2 * gk / (std::abs(gk) + 1e-8);
    CHECK(w[i] == doctest::Approx(expect).epsilon(1e-9));
  }
  CHECK(opt.step_count == 1);
}

TEST_CASE("a zero-rate step leaves weights bitwise unchanged") {
  Rng rng(5);
  Tensor<double> w = randn<double>({17}, rng);
  Tensor<double> g = randn<double>({17}, rng);
  Tensor<double> before = w;
  Adam<double> opt;
  opt.init_like({&w});
  opt.step({&w}, {&g}, 0.0);
  CHECK(bitwise_equal(w, before));
  // moments still advanced
  double mom = 0.0;
  for (int64_t i = 0; i < 17; ++i) mom += std::abs(opt.m[0][i]);
  CHECK(mom > 0.0);
}

TEST_CASE("repeated steps on one fixed batch drive the loss down") {
  TrainState<double> st;
  st.init(tiny_config(), 71);
  SampleSet<double> data = tiny_dataset(1, 3);
  Batch<double> batch;
  batch.hr.push_back(data.hr[0]);
  batch.lr.push_back(data.lr[0]);
  std::vector<double> losses;
  for (int k = 0; k < 100; ++k)
    losses.push_back(train_step(st, batch, 5e-4));
  double head = 0.0, tail = 0.0;
  for (int k = 0; k < 10; ++k) {
    head += losses[size_t(k)];
    tail += losses[losses.size() - 10 + size_t(k)];
  }
  CHECK(tail < head);
  CHECK(st.iteration == 100);
  for (double l : losses) CHECK(std::isfinite(l));
}

TEST_CASE("a poisoned weight raises a numeric error naming the tensor") {
  TrainState<double> st;
  st.init(tiny_config(), 11);
  // wake the zero-initialized projections so the poison can reach the loss
  Rng noise(99);
  for (auto* p : st.params)
    for (int64_t k = 0; k < p->numel(); ++k) (*p)[k] += 0.05 * noise.normal();
  st.model.w_in[0] = std::numeric_limits<double>::infinity();
  SampleSet<double> data = tiny_dataset(1, 7);
  Batch<double> batch;
  batch.hr.push_back(data.hr[0]);
  batch.lr.push_back(data.lr[0]);
  bool threw = false;
  try {
    train_step(st, batch, 1e-4);
  } catch (const numeric_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("w_in") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("batches of two average the per-clip losses") {
  TrainState<double> st;
  st.init(tiny_config(), 13);
  SampleSet<double> data = tiny_dataset(2, 17);
  Batch<double> both, first, second;
  both.hr = data.hr;
  both.lr = data.lr;
  first.hr = {data.hr[0]};
  first.lr = {data.lr[0]};
  second.hr = {data.hr[1]};
  second.lr = {data.lr[1]};
  // measure each loss at the same weights via a zero learning rate
  double l_both = train_step(st, both, 0.0);
  double l_first = train_step(st, first, 0.0);
  double l_second = train_step(st, second, 0.0);
  CHECK(l_both == doctest::Approx(0.5 * (l_first + l_second)).epsilon(1e-12));
}

TEST_CASE("checkpoint roundtrip restores everything bitwise") {
  const std::string path = "ckpt_roundtrip_test.bin";
  TrainState<double> a;
  a.init(tiny_config(), 101);
  SampleSet<double> data = tiny_dataset(2, 23);
  TrainSchedule sch;
  sch.iterations = 10;
  sch.batch = 1;
  sch.patch = 12;
  sch.frames = 2;
  for (int k = 0; k < 3; ++k) train_iteration(a, data, sch);
  save_checkpoint(path, a, "demo=1\n");

  TrainState<double> b;
  b.init(tiny_config(), 999);  // different seed: all weights differ
  CheckpointMeta meta = load_checkpoint(path, b);
  CHECK(meta.iteration == 3);
  CHECK(meta.config_text == "demo=1\n");
  CHECK(b.iteration == 3);
  CHECK(b.rng.serialize() == a.rng.serialize());
  REQUIRE(a.params.size() == b.params.size());
  for (size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.names[i] == b.names[i]);
    CHECK(bitwise_equal(*a.params[i], *b.params[i]));
    CHECK(bitwise_equal(a.opt.m[i], b.opt.m[i]));
    CHECK(bitwise_equal(a.opt.v[i], b.opt.v[i]));
  }
  CHECK(a.opt.step_count == b.opt.step_count);

  // saving the restored state reproduces the file byte for byte
  const std::string path2 = "ckpt_roundtrip_test2.bin";
  save_checkpoint(path2, b, meta.config_text);
  CHECK(read_file(path) == read_file(path2));

  // forward outputs agree bitwise after the roundtrip
  Clip<double> lr = data.lr[0];
  Clip<double> sr_a = a.model.forward_clip(lr);
  Clip<double> sr_b = b.model.forward_clip(lr);
  for (size_t t = 0; t < sr_a.size(); ++t)
    CHECK(bitwise_equal(sr_a[t], sr_b[t]));

  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("resume replays the uninterrupted loss sequence bitwise") {
  const std::string path = "ckpt_resume_test.bin";
  SampleSet<double> data = tiny_dataset(2, 31);
  TrainSchedule sch;
  sch.iterations = 10;
  sch.batch = 1;
  sch.patch = 12;
  sch.frames = 2;

  TrainState<double> full;
  full.init(tiny_config(), 303);
  std::vector<double> ref;
  for (int k = 0; k < 10; ++k) ref.push_back(train_iteration(full, data, sch));

  TrainState<double> half;
  half.init(tiny_config(), 303);
  for (int k = 0; k < 5; ++k) {
    double l = train_iteration(half, data, sch);
    CHECK(l == ref[size_t(k)]);
  }
  save_checkpoint(path, half, "");

  TrainState<double> resumed;
  resumed.init(tiny_config(), 0);
  load_checkpoint(path, resumed);
  for (int k = 5; k < 10; ++k) {
    double l = train_iteration(resumed, data, sch);
    CHECK(l == ref[size_t(k)]);
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint loading rejects a mismatched architecture") {
  const std::string path = "ckpt_mismatch_test.bin";
  TrainState<double> a;
  a.init(tiny_config(), 1);
  save_checkpoint(path, a, "");
  ModelConfig other = tiny_config();
  other.depth = 2;
  TrainState<double> b;
  b.init(other, 1);
  CHECK_THROWS_AS(load_checkpoint(path, b), contract_error);
  CHECK_THROWS_AS(read_checkpoint_meta("does_not_exist.bin"), contract_error);
  std::remove(path.c_str());
}
