#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "medvsr/clip_io.hpp"
#include "medvsr/config.hpp"
#include "medvsr/metrics.hpp"
#include "medvsr/train.hpp"

namespace fs = std::filesystem;
using namespace medvsr;

namespace {

using Scalar = double;

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw usage_error("cannot open config file: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Flags shared by every verb. Precedence: file < --override < --seed/--out.
struct CommonArgs {
  std::string config, out;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  bool seed_set = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config, "key = value config file");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--seed", seed, "master seed")
        ->trigger_on_parse()
        ->each([this](const std::string&) { seed_set = true; });
    cmd->add_option("--override", overrides, "config override key=value");
  }

  RunConfig resolve() const {
    RunConfig c;
    if (!config.empty()) c = parse_config(slurp(config));
    for (const std::string& ov : overrides) {
      size_t eq = ov.find('=');
      if (eq == std::string::npos || eq == 0)
        throw usage_error("override must be key=value: " + ov);
      config_set(c, ov.substr(0, eq), ov.substr(eq + 1));
    }
    if (seed_set) c.seed = seed;
    if (!out.empty()) c.out_dir = out;
    c.model.validate();
    return c;
  }
};

// Every run leaves a replayable record of what it actually used.
void write_resolved(const RunConfig& c) {
  fs::create_directories(c.out_dir);
  std::string path = (fs::path(c.out_dir) / "config.txt").string();
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "cannot write " + path);
  os << dump_config(c);
}

std::vector<std::string> clip_names(const std::string& tree,
                                    const std::string& what) {
  if (!fs::is_directory(tree))
    throw usage_error(what + ": not a directory: " + tree);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(tree))
    if (e.is_directory()) names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw usage_error(what + ": no clip directories under " + tree);
  return names;
}

std::string join(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

SampleSet<Scalar> load_pairs(const RunConfig& c, const std::string& what) {
  if (c.data_hr.empty() || c.data_lr.empty())
    throw usage_error(what + ": data_hr and data_lr must be set");
  SampleSet<Scalar> data;
  for (const std::string& name : clip_names(c.data_hr, what)) {
    data.hr.push_back(load_clip<Scalar>(join(c.data_hr, name)));
    data.lr.push_back(load_clip<Scalar>(join(c.data_lr, name)));
  }
  return data;
}

std::string ckpt_path(const std::string& dir, int64_t iteration) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "ckpt_%08lld.bin", (long long)iteration);
  return join(dir, buf);
}

// ---------------------------------------------------------------------------

int cmd_degrade(const RunConfig& c) {
  if (c.data_hr.empty()) throw usage_error("degrade: data_hr must be set");
  std::vector<std::string> names = clip_names(c.data_hr, "degrade");
  write_resolved(c);
  nlohmann::json man;
  man["scale"] = 4;
  man["noise_std"] = c.noise_std;
  man["seed"] = c.seed;
  man["clips"] = nlohmann::json::array();
  for (const std::string& name : names) {
    Clip<Scalar> hr = load_clip<Scalar>(join(c.data_hr, name));
    DegradationSpec spec;
    spec.noise_std = c.noise_std;
    uint64_t s = c.seed ^ hash_str(name);
    spec.seed = splitmix64(s);
    save_clip(join(c.out_dir, name), degrade(hr, spec));
    man["clips"].push_back({{"clip", name}, {"seed", spec.seed}});
  }
  std::string path = join(c.out_dir, "manifest.json");
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "cannot write " + path);
  os << man.dump(2) << "\n";
  std::printf("degraded %zu clips -> %s\n", names.size(), c.out_dir.c_str());
  return 0;
}

int cmd_train(const RunConfig& c) {
  require(c.checkpoint_every >= 1, "train: checkpoint_every must be >= 1");
  SampleSet<Scalar> data = load_pairs(c, "train");
  write_resolved(c);
  TrainState<Scalar> st;
  st.init(c.model, c.seed);
  if (!c.checkpoint.empty()) load_checkpoint(c.checkpoint, st);
  require(st.iteration <= c.schedule.iterations,
          "train: checkpoint is already past the scheduled iterations");
  std::string echo = dump_config(c);
  std::string log_path = join(c.out_dir, "loss.csv");
  std::ofstream log(log_path, std::ios::trunc);
  require(bool(log), "cannot write " + log_path);
  log << "iteration,loss,lr\n";
  char row[96];
  while (st.iteration < c.schedule.iterations) {
    double lr = cosine_lr(st.iteration, c.schedule.iterations,
                          c.schedule.lr_max, c.schedule.lr_min);
    double loss = train_iteration(st, data, c.schedule);
    std::snprintf(row, sizeof row, "%lld,%.17g,%.17g\n",
                  (long long)st.iteration, loss, lr);
    log << row;
    if (st.iteration % c.checkpoint_every == 0 ||
        st.iteration == c.schedule.iterations) {
      save_checkpoint(ckpt_path(c.out_dir, st.iteration), st, echo);
      log.flush();
    }
  }
  std::printf("trained to iteration %lld -> %s\n", (long long)st.iteration,
              c.out_dir.c_str());
  return 0;
}

int cmd_infer(const RunConfig& rc, std::string ckpt, std::string clip_dir) {
  if (ckpt.empty()) ckpt = rc.checkpoint;
  if (clip_dir.empty()) clip_dir = rc.clip_dir;
  if (ckpt.empty()) throw usage_error("infer: --checkpoint must be set");
  if (clip_dir.empty()) throw usage_error("infer: --clip must be set");
  // the checkpoint's config echo is authoritative for the architecture
  CheckpointMeta meta = read_checkpoint_meta(ckpt);
  RunConfig cc = parse_config(meta.config_text);
  cc.model.validate();
  TrainState<Scalar> st;
  st.init(cc.model, cc.seed);
  load_checkpoint(ckpt, st);
  cc.out_dir = rc.out_dir;
  cc.clip_dir = clip_dir;
  cc.checkpoint = ckpt;
  write_resolved(cc);
  Clip<Scalar> lr = load_clip<Scalar>(clip_dir);
  Clip<Scalar> sr = st.model.forward_clip(lr);
  save_clip(cc.out_dir, sr);
  std::printf("wrote %zu frames -> %s\n", sr.size(), cc.out_dir.c_str());
  return 0;
}

bool has_frames(const std::string& dir) {
  if (!fs::is_directory(dir)) return false;
  for (const auto& e : fs::directory_iterator(dir))
    if (parse_frame_name(e.path().filename().string()) >= 0) return true;
  return false;
}

int cmd_eval(const RunConfig& c, const std::string& sr_dir,
             const std::string& gt_dir) {
  // a tree of clip directories, or a single clip of bare frames
  std::vector<std::pair<std::string, std::string>> pairs;  // name, subpath
  if (has_frames(sr_dir)) {
    pairs.emplace_back(fs::path(sr_dir).filename().string(), "");
  } else {
    std::vector<std::string> sr_names = clip_names(sr_dir, "eval");
    std::vector<std::string> gt_names = clip_names(gt_dir, "eval");
    require(sr_names == gt_names,
            "eval: clip sets differ between " + sr_dir + " and " + gt_dir);
    for (const std::string& n : sr_names) pairs.emplace_back(n, n);
  }
  write_resolved(c);
  std::vector<MetricReport> reports;
  std::string jsonl, csv = metrics_csv_header() + "\n";
  for (const auto& [name, sub] : pairs) {
    Clip<Scalar> sr = load_clip<Scalar>(sub.empty() ? sr_dir : join(sr_dir, sub));
    Clip<Scalar> gt = load_clip<Scalar>(sub.empty() ? gt_dir : join(gt_dir, sub));
    require(sr.size() == gt.size(),
            "eval: frame count mismatch for clip " + name);
    MetricReport r = evaluate_clip(name, sr, gt);
    jsonl += r.to_json().dump() + "\n";
    append_metrics_csv(csv, r);
    std::printf("%s: psnr %.4f ssim %.6f\n", name.c_str(), r.clip_psnr,
                r.clip_ssim);
    reports.push_back(std::move(r));
  }
  auto [p, s] = aggregate(reports);
  std::printf("aggregate: psnr %.4f ssim %.6f\n", p, s);
  for (auto [fname, text] : {std::pair<const char*, std::string*>{
                                 "report.jsonl", &jsonl},
                             {"metrics.csv", &csv}}) {
    std::string path = join(c.out_dir, fname);
    std::ofstream os(path, std::ios::trunc);
    require(bool(os), "cannot write " + path);
    os << *text;
  }
  return 0;
}

int cmd_flow_error(const RunConfig& c, std::string clip_dir,
                   const std::string& method) {
  if (clip_dir.empty()) clip_dir = c.clip_dir;
  if (clip_dir.empty()) throw usage_error("flow-error: --clip must be set");
  FlowEstimator est = c.model.flow;
  if (!method.empty()) est.method = parse_flow_method(method);
  Clip<Scalar> clip = load_clip<Scalar>(clip_dir);
  double err = flow_consistency_error(clip, est);
  write_resolved(c);
  std::string path = join(c.out_dir, "flow_error.txt");
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "cannot write " + path);
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.17g\n", err);
  os << buf;
  std::printf("flow consistency error (%s): %.17g\n",
              flow_method_name(est.method), err);
  return 0;
}

// Ablation rows are config overrides, so each row's setting round-trips
// through the variant's resolved-config dump unchanged.
std::vector<std::string> variants_for(const std::string& axis) {
  if (axis == "cssb") return {"full", "lpe=false", "lw=false", "sp=false"};
  if (axis == "issb") return {"full", "lw=false", "cat=false"};
  if (axis == "lksb")
    return {"kernel=3", "kernel=5", "kernel=7", "kernel=9",
            "lksb_kind=resblock", "lksb_kind=dwblock", "lksb_kind=pblock"};
  if (axis == "prop")
    return {"prop_scheme=t2t", "prop_scheme=t1t", "prop_scheme=t2t1",
            "prop_scheme=both"};
  if (axis == "window") return {"window=4", "window=8", "window=16", "window=32"};
  throw usage_error("ablate: unknown axis: " + axis);
}

int cmd_ablate(const RunConfig& base, const std::string& axis) {
  SampleSet<Scalar> all = load_pairs(base, "ablate");
  require(all.hr.size() >= 2,
          "ablate: need at least two clips (the last is held out)");
  SampleSet<Scalar> data;
  for (size_t i = 0; i + 1 < all.hr.size(); ++i) {
    data.hr.push_back(std::move(all.hr[i]));
    data.lr.push_back(std::move(all.lr[i]));
  }
  const Clip<Scalar>& held_hr = all.hr.back();
  const Clip<Scalar>& held_lr = all.lr.back();
  write_resolved(base);
  std::string csv = "variant,params,psnr,ssim\n";
  for (const std::string& v : variants_for(axis)) {
    RunConfig c = base;
    if (v != "full") {
      size_t eq = v.find('=');
      config_set(c, v.substr(0, eq), v.substr(eq + 1));
      c.model.validate();
    }
    std::string dirname = v;
    std::replace(dirname.begin(), dirname.end(), '=', '_');
    c.out_dir = join(base.out_dir, dirname);
    write_resolved(c);
    TrainState<Scalar> st;
    st.init(c.model, c.seed);
    while (st.iteration < c.schedule.iterations)
      train_iteration(st, data, c.schedule);
    Clip<Scalar> sr = st.model.forward_clip(held_lr);
    double p = 0, s = 0;
    for (size_t t = 0; t < sr.size(); ++t) {
      p += psnr(sr[t], held_hr[t]);
      s += ssim(sr[t], held_hr[t]);
    }
    p /= double(sr.size());
    s /= double(sr.size());
    char row[160];
    std::snprintf(row, sizeof row, "%s,%lld,%.17g,%.17g\n", v.c_str(),
                  (long long)param_count(st.model), p, s);
    csv += row;
    std::printf("%-20s params %7lld  psnr %.4f  ssim %.6f\n", v.c_str(),
                (long long)param_count(st.model), p, s);
  }
  std::string path = join(base.out_dir, "ablation_" + axis + ".csv");
  std::ofstream os(path, std::ios::trunc);
  require(bool(os), "cannot write " + path);
  os << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"video x4 super-resolution: degrade, train, infer, eval"};
  app.require_subcommand(1);

  CommonArgs a_degrade, a_train, a_infer, a_eval, a_flow, a_ablate;
  std::string infer_ckpt, infer_clip, flow_clip, flow_method;
  std::string eval_sr, eval_gt, ablate_axis;

  CLI::App* degrade = app.add_subcommand("degrade", "mirror an HR tree to LR");
  a_degrade.attach(degrade);
  CLI::App* train = app.add_subcommand("train", "optimize on paired trees");
  a_train.attach(train);
  CLI::App* infer = app.add_subcommand("infer", "super-resolve a clip");
  a_infer.attach(infer);
  infer->add_option("--checkpoint", infer_ckpt, "trained checkpoint");
  infer->add_option("--clip", infer_clip, "LR clip directory");
  CLI::App* eval = app.add_subcommand("eval", "PSNR/SSIM reports");
  a_eval.attach(eval);
  eval->add_option("sr_dir", eval_sr, "super-resolved tree or clip")->required();
  eval->add_option("gt_dir", eval_gt, "ground-truth tree or clip")->required();
  CLI::App* flow = app.add_subcommand("flow-error", "flow consistency check");
  a_flow.attach(flow);
  flow->add_option("--clip", flow_clip, "clip directory");
  flow->add_option("--method", flow_method, "flow estimator")
      ->check(CLI::IsMember({"block_match", "zero"}));
  CLI::App* ablate = app.add_subcommand("ablate", "train an ablation axis");
  a_ablate.attach(ablate);
  ablate->add_option("--axis", ablate_axis, "variant family")
      ->required()
      ->check(CLI::IsMember({"cssb", "issb", "lksb", "prop", "window"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (degrade->parsed()) return cmd_degrade(a_degrade.resolve());
    if (train->parsed()) return cmd_train(a_train.resolve());
    if (infer->parsed())
      return cmd_infer(a_infer.resolve(), infer_ckpt, infer_clip);
    if (eval->parsed()) return cmd_eval(a_eval.resolve(), eval_sr, eval_gt);
    if (flow->parsed())
      return cmd_flow_error(a_flow.resolve(), flow_clip, flow_method);
    if (ablate->parsed()) return cmd_ablate(a_ablate.resolve(), ablate_axis);
  } catch (const numeric_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const usage_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const contract_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
