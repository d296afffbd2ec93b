#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "gradcheck.hpp"
#include "medvsr/model.hpp"

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

Clip<double> random_clip(int64_t frames, int64_t h, int64_t w, uint64_t seed) {
  Rng rng(seed);
  Clip<double> clip;
  for (int64_t t = 0; t < frames; ++t)
    clip.push_back(rand_uniform<double>({3, h, w}, rng, 0.0, 1.0));
  return clip;
}

// Kick every zero-initialized tensor off its residual-identity point so
// gradient checks exercise the real data paths.
template <class M>
void wake_params(M& m, uint64_t seed) {
  Rng rng(seed);
  m.visit("m", [&](const std::string&, Tensor<double>& t) {
    for (int64_t i = 0; i < t.numel(); ++i) t[i] += rng.normal(0.0, 0.05);
  });
}

}  // namespace

TEST_CASE("config invariants reject bad geometry") {
  ModelConfig c = tiny_config();
  CHECK_NOTHROW(c.validate());
  c.branches = 3;
  CHECK_THROWS_AS(c.validate(), contract_error);
  c = tiny_config();
  c.scale = 2;
  CHECK_THROWS_AS(c.validate(), contract_error);
  c = tiny_config();
  c.window = 1;
  CHECK_THROWS_AS(c.validate(), contract_error);
  c = tiny_config();
  c.kernel = 4;
  CHECK_THROWS_AS(c.validate(), contract_error);
  c = tiny_config();
  c.depth = -1;
  CHECK_THROWS_AS(c.validate(), contract_error);
}

TEST_CASE("feature extraction is frame independent with width channels") {
  Rng rng(7);
  Model<double> m;
  m.init(rng, tiny_config());
  Clip<double> clip = random_clip(1, 10, 12, 11);
  Graph<double> g;
  int a = m.extract(g, g.leaf(clip[0], false));
  int b = m.extract(g, g.leaf(clip[0], false));
  Tensor<double> va = g.val(a);  // copy: graph grows below
  CHECK(va.rank() == 3);
  CHECK(va.dim(0) == 8);
  CHECK(va.dim(1) == 10);
  CHECK(va.dim(2) == 12);
  CHECK(bitwise_equal(va, g.val(b)));
  Tensor<double> bad({2, 10, 12}, 0.3);
  Graph<double> g2;
  CHECK_THROWS_AS(m.extract(g2, g2.leaf(bad, false)), contract_error);
}

TEST_CASE("feature extraction gradients match finite differences") {
  Rng rng(19);
  Model<double> m;
  m.init(rng, tiny_config());
  wake_params(m, 5);
  Tensor<double> frame = rand_uniform<double>({3, 6, 5}, rng, 0.0, 1.0);
  Tensor<double> w = rand_uniform<double>({8, 6, 5}, rng, -1.0, 1.0);
  auto res = testutil::check_gradients(
      {&frame, &m.w_in, &m.b_in, &m.extr1.w_a, &m.extr1.w_o, &m.extr2.w_a},
      [&](Graph<double>& g) {
        return ag::dot_const(g, m.extract(g, g.param(frame)), w);
      });
  CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("forward produces x4 RGB frames for any clip length") {
  Rng rng(23);
  Model<double> m;
  m.init(rng, tiny_config());
  for (int64_t frames : {1, 2, 4}) {
    Clip<double> lr = random_clip(frames, 8, 12, 100 + uint64_t(frames));
    Clip<double> sr = m.forward_clip(lr);
    REQUIRE(int64_t(sr.size()) == frames);
    for (const auto& f : sr) {
      CHECK(f.dim(0) == 3);
      CHECK(f.dim(1) == 32);
      CHECK(f.dim(2) == 48);
    }
  }
  CHECK_THROWS_AS(m.forward_clip(Clip<double>{}), contract_error);
}

TEST_CASE("single-frame clips degenerate to empty flows") {
  Rng rng(29);
  Model<double> m;
  m.init(rng, tiny_config());
  Clip<double> lr = random_clip(1, 8, 8, 41);
  ClipFlows<double> fl = clip_flows(lr, m.cfg.flow);
  CHECK(fl.fwd.empty());
  CHECK(fl.back.empty());
  Clip<double> sr = m.forward_with_flows(lr, fl);
  CHECK(sr.size() == 1);
}

TEST_CASE("static clips reconstruct to identical frames") {
  Rng rng(31);
  ModelConfig c = tiny_config();
  c.flow = {FlowMethod::kBlockMatch, 4, 2};
  Model<double> m;
  m.init(rng, c);
  wake_params(m, 9);  // identity-at-init would make this vacuous
  Clip<double> lr;
  Tensor<double> frame = rand_uniform<double>({3, 8, 8}, rng, 0.0, 1.0);
  for (int t = 0; t < 4; ++t) lr.push_back(frame);
  Clip<double> sr = m.forward_clip(lr);
  for (size_t t = 1; t < sr.size(); ++t)
    CHECK(bitwise_equal(sr[0], sr[t]));
}

TEST_CASE("one-graph and per-step forwards agree bitwise") {
  Rng rng(37);
  ModelConfig c = tiny_config();
  c.flow = {FlowMethod::kBlockMatch, 4, 2};
  Model<double> m;
  m.init(rng, c);
  wake_params(m, 13);
  Clip<double> lr = random_clip(3, 8, 8, 55);
  ClipFlows<double> fl = clip_flows(lr, c.flow);
  Clip<double> piecewise = m.forward_with_flows(lr, fl);
  Graph<double> g;
  std::vector<int> ids = m.forward_nodes(g, lr, fl);
  REQUIRE(ids.size() == piecewise.size());
  for (size_t t = 0; t < ids.size(); ++t)
    CHECK(bitwise_equal(piecewise[t], g.val(ids[t])));
}

TEST_CASE("reconstruction at init is exactly the bicubic x4 baseline") {
  Rng rng(43);
  Model<double> m;
  m.init(rng, tiny_config());
  Clip<double> lr = random_clip(3, 8, 8, 77);
  Clip<double> sr = m.forward_clip(lr);
  for (size_t t = 0; t < lr.size(); ++t) {
    Tensor<double> base = resize_bicubic(lr[t], 32, 32, false);
    CHECK(max_abs_diff(sr[t], base) < 1e-12);
  }
}

TEST_CASE("every parameter earns a gradient on a generic batch") {
  Rng rng(47);
  Model<double> m;
  m.init(rng, tiny_config());
  wake_params(m, 21);
  Clip<double> lr = random_clip(3, 8, 8, 91);
  Clip<double> hr = random_clip(3, 32, 32, 92);
  ClipFlows<double> fl = clip_flows(lr, m.cfg.flow);
  Graph<double> g;
  std::vector<int> ids = m.forward_nodes(g, lr, fl);
  int loss = -1;
  for (size_t t = 0; t < ids.size(); ++t) {
    int c = ag::charbonnier(g, ids[t], g.leaf(hr[t], false), 1e-3);
    loss = loss < 0 ? c : ag::add(g, loss, c);
  }
  g.backward(loss);
  int checked = 0, dead = 0;
  std::string first_dead;
  m.visit("m", [&](const std::string& name, Tensor<double>& t) {
    ++checked;
    const Tensor<double>* gr = g.grad_of(t);
    double mag = 0.0;
    if (gr)
      for (int64_t i = 0; i < gr->numel(); ++i) mag += std::abs((*gr)[i]);
    if (!gr || mag == 0.0) {
      ++dead;
      if (first_dead.empty()) first_dead = name;
    }
  });
  CHECK(checked > 40);
  CHECK_MESSAGE(dead == 0, "first dead parameter: " << first_dead);
}

TEST_CASE("parameter names are unique and shapes stable across visits") {
  Rng rng(53);
  Model<double> m;
  m.init(rng, tiny_config());
  std::set<std::string> names;
  int64_t total = 0;
  m.visit("m", [&](const std::string& name, Tensor<double>& t) {
    CHECK(names.insert(name).second);
    total += t.numel();
  });
  CHECK(total == param_count(m));
  CHECK(total > 0);
}

TEST_CASE("ablation switches move the parameter count in the right direction") {
  Rng rng(59);
  ModelConfig base = tiny_config();
  auto count = [&](const ModelConfig& c) {
    Model<double> m;
    Rng r(59);
    m.init(r, c);
    return param_count(m);
  };
  int64_t full = count(base);
  ModelConfig no_sp = base;
  no_sp.sp = false;
  CHECK(count(no_sp) < full);
  ModelConfig no_cat = base;
  no_cat.cat = false;
  CHECK(count(no_cat) > full);
  int64_t prev = 0;
  for (int64_t k : {3, 5, 7, 9}) {
    ModelConfig kc = base;
    kc.kernel = k;
    int64_t n = count(kc);
    CHECK(n > prev);
    prev = n;
  }
  ModelConfig no_cssb = base;
  no_cssb.cssb = false;
  CHECK(count(no_cssb) < full);
}

TEST_CASE("training-scale gradient flows through the full clip graph") {
  Rng rng(61);
  ModelConfig c = tiny_config();
  Model<double> m;
  m.init(rng, c);
  wake_params(m, 33);
  Clip<double> lr = random_clip(2, 4, 4, 131);
  Clip<double> hr = random_clip(2, 16, 16, 132);
  ClipFlows<double> fl = clip_flows(lr, c.flow);
  auto res = testutil::check_gradients(
      {&m.w_in, &m.up.w_f, &m.branches[0].align.w_d, &m.issr.issb.w_r},
      [&](Graph<double>& g) {
        std::vector<int> ids = m.forward_nodes(g, lr, fl);
        int loss = -1;
        for (size_t t = 0; t < ids.size(); ++t) {
          int ch = ag::charbonnier(g, ids[t], g.leaf(hr[t], false), 1e-3);
          loss = loss < 0 ? ch : ag::add(g, loss, ch);
        }
        return loss;
      });
  CHECK_MESSAGE(res.ok, res.detail);
}
