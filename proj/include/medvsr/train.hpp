#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "medvsr/model.hpp"

namespace medvsr {

// Cosine decay: full rate after 0 completed iterations, floor after `total`.
inline double cosine_lr(int64_t iters_done, int64_t total,
                        double lr_max = 2e-4, double lr_min = 1e-7) {
  require(total >= 1 && iters_done >= 0 && iters_done <= total,
          "cosine_lr: phase outside the schedule");
  double phase = double(iters_done) / double(total);
  return lr_min +
         0.5 * (lr_max - lr_min) *
             (1.0 + std::cos(3.141592653589793238462643383279 * phase));
}

template <class T>
struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step_count = 0;
  std::vector<Tensor<T>> m, v;

  void init_like(const std::vector<Tensor<T>*>& params) {
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.emplace_back(p->shape(), T(0));
      v.emplace_back(p->shape(), T(0));
    }
    step_count = 0;
  }

  // A null gradient entry counts as zero. lr = 0 leaves weights bitwise
  // untouched while the moments still advance.
  void step(const std::vector<Tensor<T>*>& params,
            const std::vector<const Tensor<T>*>& grads, double lr) {
    require(params.size() == m.size() && grads.size() == params.size(),
            "adam: state does not match the parameter list");
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, double(step_count));
    double bc2 = 1.0 - std::pow(beta2, double(step_count));
    for (size_t i = 0; i < params.size(); ++i) {
      Tensor<T>& w = *params[i];
      for (int64_t k = 0; k < w.numel(); ++k) {
        double gk = grads[i] ? double((*grads[i])[k]) : 0.0;
        double mk = beta1 * double(m[i][k]) + (1.0 - beta1) * gk;
        double vk = beta2 * double(v[i][k]) + (1.0 - beta2) * gk * gk;
        m[i][k] = T(mk);
        v[i][k] = T(vk);
        w[k] = T(double(w[k]) -
                 lr * (mk / bc1) / (std::sqrt(vk / bc2) + eps));
      }
    }
  }
};

// Model + optimizer + the batch-sampling stream. Parameter pointers index
// into the model, so the state is pinned in place once initialized.
template <class T>
struct TrainState {
  Model<T> model;
  Adam<T> opt;
  int64_t iteration = 0;  // completed iterations
  Rng rng{0};             // batch sampling stream
  std::vector<std::string> names;
  std::vector<Tensor<T>*> params;

  TrainState() = default;
  TrainState(const TrainState&) = delete;
  TrainState& operator=(const TrainState&) = delete;

  void init(const ModelConfig& cfg, uint64_t seed) {
    uint64_t s = seed;
    uint64_t wseed = splitmix64(s);
    uint64_t bseed = splitmix64(s);
    Rng wrng(wseed);
    model.init(wrng, cfg);
    rng.reseed(bseed);
    iteration = 0;
    bind();
    opt.init_like(params);
  }

  void bind() {
    names.clear();
    params.clear();
    model.visit("model", [this](const std::string& n, Tensor<T>& t) {
      names.push_back(n);
      params.push_back(&t);
    });
  }
};

template <class T>
struct Batch {
  std::vector<Clip<T>> lr, hr;  // paired patch clips
};

// One optimization step: forward the whole batch in one graph, Charbonnier
// summed over frames and averaged over batch items, one Adam update.
template <class T>
double train_step(TrainState<T>& st, const Batch<T>& batch, double lr,
                  double charb_eps = 1e-3) {
  require(!batch.lr.empty() && batch.lr.size() == batch.hr.size(),
          "train: batch must pair LR and HR clips");
  Graph<T> g;
  int loss = -1;
  for (size_t b = 0; b < batch.lr.size(); ++b) {
    ClipFlows<T> fl = clip_flows(batch.lr[b], st.model.cfg.flow);
    std::vector<int> ids = st.model.forward_nodes(g, batch.lr[b], fl);
    require(batch.hr[b].size() == ids.size(),
            "train: HR clip length mismatch");
    for (size_t t = 0; t < ids.size(); ++t) {
      int ch = ag::charbonnier(g, ids[t], g.leaf(batch.hr[b][t], false),
                               charb_eps);
      loss = loss < 0 ? ch : ag::add(g, loss, ch);
    }
  }
  if (batch.lr.size() > 1)
    loss = ag::scale(g, loss, 1.0 / double(batch.lr.size()));
  double lval = double(g.val(loss)[0]);
  if (!std::isfinite(lval)) {
    std::string bad = "(loss only)";
    for (size_t i = 0; i < st.params.size(); ++i)
      for (int64_t k = 0; k < st.params[i]->numel(); ++k)
        if (!std::isfinite(double((*st.params[i])[k]))) {
          bad = st.names[i];
          k = st.params[i]->numel();
          i = st.params.size() - 1;
        }
    throw numeric_error("train: non-finite loss after iteration " +
                        std::to_string(st.iteration) +
                        "; first non-finite tensor: " + bad);
  }
  g.backward(loss);
  std::vector<const Tensor<T>*> grads;
  grads.reserve(st.params.size());
  for (auto* p : st.params) grads.push_back(g.grad_of(*p));
  st.opt.step(st.params, grads, lr);
  ++st.iteration;
  return lval;
}

struct TrainSchedule {
  int64_t iterations = 100000;
  double lr_max = 2e-4, lr_min = 1e-7;
  int64_t batch = 2, patch = 96, frames = 7;
  double charb_eps = 1e-3;
};

template <class T>
struct SampleSet {
  std::vector<Clip<T>> hr, lr;  // parallel clip lists
};

// Samples a batch from the state's own stream and advances one step at the
// scheduled rate. Resuming from a checkpoint replays the identical sequence.
template <class T>
double train_iteration(TrainState<T>& st, const SampleSet<T>& data,
                       const TrainSchedule& sch) {
  require(!data.hr.empty() && data.hr.size() == data.lr.size(),
          "train: dataset must pair HR and LR clips");
  Batch<T> b;
  for (int64_t i = 0; i < sch.batch; ++i) {
    int64_t ci = st.rng.uniform_int(0, int64_t(data.hr.size()) - 1);
    auto [hp, lp] = sample_patch(data.hr[size_t(ci)], data.lr[size_t(ci)],
                                 sch.patch, sch.frames, st.rng);
    b.hr.push_back(std::move(hp));
    b.lr.push_back(std::move(lp));
  }
  double lr = cosine_lr(st.iteration, sch.iterations, sch.lr_max, sch.lr_min);
  return train_step(st, b, lr, sch.charb_eps);
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned little-endian binary. Layout: magic, version,
// config echo, iteration, RNG state, named weight directory, Adam state.

namespace detail {

constexpr char kCkptMagic[8] = {'M', 'V', 'S', 'R', 'C', 'K', 'P', 'T'};
constexpr uint32_t kCkptVersion = 1;

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(reinterpret_cast<const char*>(p), std::streamsize(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(reinterpret_cast<char*>(p), std::streamsize(n));
  require(bool(is), "checkpoint: truncated file");
}

template <class U>
void write_pod(std::ostream& os, U v) {
  write_bytes(os, &v, sizeof(U));
}

template <class U>
U read_pod(std::istream& is) {
  U v;
  read_bytes(is, &v, sizeof(U));
  return v;
}

inline void write_str(std::ostream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  write_bytes(os, s.data(), s.size());
}

inline std::string read_str(std::istream& is) {
  uint64_t n = read_pod<uint64_t>(is);
  require(n <= (1u << 26), "checkpoint: implausible string length");
  std::string s(size_t(n), '\0');
  if (n) read_bytes(is, s.data(), size_t(n));
  return s;
}

template <class T>
void write_tensor_data(std::ostream& os, const Tensor<T>& t) {
  if (t.numel())
    write_bytes(os, &t[0], size_t(t.numel()) * sizeof(T));
}

template <class T>
void read_tensor_data(std::istream& is, Tensor<T>& t) {
  if (t.numel()) read_bytes(is, &t[0], size_t(t.numel()) * sizeof(T));
}

}  // namespace detail

struct CheckpointMeta {
  std::string config_text;
  int64_t iteration = 0;
  std::string rng_state;
};

template <class T>
void save_checkpoint(const std::string& path, TrainState<T>& st,
                     const std::string& config_text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(bool(os), "checkpoint: cannot open for writing: " + path);
  detail::write_bytes(os, detail::kCkptMagic, 8);
  detail::write_pod<uint32_t>(os, detail::kCkptVersion);
  detail::write_str(os, config_text);
  detail::write_pod<uint64_t>(os, uint64_t(st.iteration));
  detail::write_str(os, st.rng.serialize());
  detail::write_pod<uint64_t>(os, st.params.size());
  for (size_t i = 0; i < st.params.size(); ++i) {
    detail::write_str(os, st.names[i]);
    const Tensor<T>& t = *st.params[i];
    detail::write_pod<uint32_t>(os, uint32_t(t.rank()));
    for (size_t d = 0; d < t.rank(); ++d)
      detail::write_pod<int64_t>(os, t.dim(d));
    detail::write_tensor_data(os, t);
  }
  detail::write_pod<uint64_t>(os, uint64_t(st.opt.step_count));
  require(st.opt.m.size() == st.params.size(),
          "checkpoint: optimizer state out of step with the parameters");
  for (size_t i = 0; i < st.params.size(); ++i) {
    detail::write_tensor_data(os, st.opt.m[i]);
    detail::write_tensor_data(os, st.opt.v[i]);
  }
  require(bool(os), "checkpoint: write failed: " + path);
}

// Peek at the manifest without touching any state.
inline CheckpointMeta read_checkpoint_meta(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "checkpoint: cannot open: " + path);
  char magic[8];
  detail::read_bytes(is, magic, 8);
  require(std::equal(magic, magic + 8, detail::kCkptMagic),
          "checkpoint: bad magic: " + path);
  uint32_t ver = detail::read_pod<uint32_t>(is);
  require(ver == detail::kCkptVersion,
          "checkpoint: unsupported version " + std::to_string(ver));
  CheckpointMeta meta;
  meta.config_text = detail::read_str(is);
  meta.iteration = int64_t(detail::read_pod<uint64_t>(is));
  meta.rng_state = detail::read_str(is);
  return meta;
}

// Loads into a state whose architecture already matches the checkpoint;
// every name and shape must line up exactly.
template <class T>
CheckpointMeta load_checkpoint(const std::string& path, TrainState<T>& st) {
  std::ifstream is(path, std::ios::binary);
  require(bool(is), "checkpoint: cannot open: " + path);
  char magic[8];
  detail::read_bytes(is, magic, 8);
  require(std::equal(magic, magic + 8, detail::kCkptMagic),
          "checkpoint: bad magic: " + path);
  uint32_t ver = detail::read_pod<uint32_t>(is);
  require(ver == detail::kCkptVersion,
          "checkpoint: unsupported version " + std::to_string(ver));
  CheckpointMeta meta;
  meta.config_text = detail::read_str(is);
  meta.iteration = int64_t(detail::read_pod<uint64_t>(is));
  meta.rng_state = detail::read_str(is);
  uint64_t count = detail::read_pod<uint64_t>(is);
  require(count == st.params.size(),
          "checkpoint: parameter count mismatch (file " +
              std::to_string(count) + ", model " +
              std::to_string(st.params.size()) + ")");
  for (size_t i = 0; i < st.params.size(); ++i) {
    std::string name = detail::read_str(is);
    require(name == st.names[i],
            "checkpoint: parameter order mismatch at " + name);
    uint32_t rank = detail::read_pod<uint32_t>(is);
    Tensor<T>& t = *st.params[i];
    require(rank == t.rank(), "checkpoint: rank mismatch at " + name);
    for (size_t d = 0; d < rank; ++d)
      require(detail::read_pod<int64_t>(is) == t.dim(d),
              "checkpoint: shape mismatch at " + name);
    detail::read_tensor_data(is, t);
  }
  st.opt.init_like(st.params);
  st.opt.step_count = int64_t(detail::read_pod<uint64_t>(is));
  for (size_t i = 0; i < st.params.size(); ++i) {
    detail::read_tensor_data(is, st.opt.m[i]);
    detail::read_tensor_data(is, st.opt.v[i]);
  }
  st.iteration = meta.iteration;
  st.rng.deserialize(meta.rng_state);
  return meta;
}

}  // namespace medvsr
