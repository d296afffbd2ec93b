#pragma once

#include <map>
#include <sstream>

#include "medvsr/model.hpp"
#include "medvsr/train.hpp"

namespace medvsr {

// Everything a run needs, parsed from (and dumped back to) a flat
// key = value file. Unknown and duplicate keys are rejected so a typo in an
// experiment script fails loudly instead of training the wrong model.
struct RunConfig {
  ModelConfig model;
  double noise_std = 15.0;  // degradation noise, 8-bit scale
  TrainSchedule schedule;
  uint64_t seed = 0;
  int64_t checkpoint_every = 500;
  std::string out_dir = "out";
  std::string data_hr, data_lr;  // dataset roots (one clip per subdirectory)
  std::string clip_dir;          // single-clip input for infer / flow-error
  std::string checkpoint;        // resume / infer source
};

namespace detail {

inline const char* bool_name(bool v) { return v ? "true" : "false"; }

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw contract_error("config: " + key + " wants true/false, got '" + v +
                       "'");
}

inline const char* prop_name(PropScheme s) {
  switch (s) {
    case PropScheme::kT2T: return "t2t";
    case PropScheme::kT1T: return "t1t";
    case PropScheme::kT2T1: return "t2t1";
    default: return "both";
  }
}

inline PropScheme parse_prop(const std::string& v) {
  if (v == "t2t") return PropScheme::kT2T;
  if (v == "t1t") return PropScheme::kT1T;
  if (v == "t2t1") return PropScheme::kT2T1;
  if (v == "both") return PropScheme::kBoth;
  throw contract_error("config: unknown propagation scheme '" + v + "'");
}

inline const char* compose_name(ComposeMode m) {
  return m == ComposeMode::kSum ? "sum" : "warp_compose";
}

inline ComposeMode parse_compose(const std::string& v) {
  if (v == "sum") return ComposeMode::kSum;
  if (v == "warp_compose") return ComposeMode::kWarpCompose;
  throw contract_error("config: unknown compose mode '" + v + "'");
}

inline const char* block_name(ConvBlockKind k) {
  switch (k) {
    case ConvBlockKind::kLksb: return "lksb";
    case ConvBlockKind::kResBlock: return "resblock";
    case ConvBlockKind::kDwBlock: return "dwblock";
    default: return "pblock";
  }
}

inline ConvBlockKind parse_block(const std::string& v) {
  if (v == "lksb") return ConvBlockKind::kLksb;
  if (v == "resblock") return ConvBlockKind::kResBlock;
  if (v == "dwblock") return ConvBlockKind::kDwBlock;
  if (v == "pblock") return ConvBlockKind::kPBlock;
  throw contract_error("config: unknown block kind '" + v + "'");
}

inline int64_t parse_int(const std::string& v, const std::string& key) {
  size_t pos = 0;
  int64_t out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && !v.empty(),
          "config: " + key + " wants an integer, got '" + v + "'");
  return out;
}

inline double parse_real(const std::string& v, const std::string& key) {
  size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  require(pos == v.size() && !v.empty(),
          "config: " + key + " wants a number, got '" + v + "'");
  return out;
}

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

// Applies one key = value assignment (also the --override mechanism).
inline void config_set(RunConfig& c, const std::string& key,
                       const std::string& value) {
  using namespace detail;
  if (key == "width") c.model.width = parse_int(value, key);
  else if (key == "state") c.model.state = parse_int(value, key);
  else if (key == "window") c.model.window = parse_int(value, key);
  else if (key == "branches") c.model.branches = parse_int(value, key);
  else if (key == "kernel") c.model.kernel = parse_int(value, key);
  else if (key == "depth") c.model.depth = parse_int(value, key);
  else if (key == "scale") c.model.scale = parse_int(value, key);
  else if (key == "flow_method") c.model.flow.method = parse_flow_method(value);
  else if (key == "flow_block") c.model.flow.block = parse_int(value, key);
  else if (key == "flow_radius") c.model.flow.radius = parse_int(value, key);
  else if (key == "lpe") c.model.lpe = parse_bool(value, key);
  else if (key == "lw") c.model.lw = parse_bool(value, key);
  else if (key == "sp") c.model.sp = parse_bool(value, key);
  else if (key == "cat") c.model.cat = parse_bool(value, key);
  else if (key == "cssb") c.model.cssb = parse_bool(value, key);
  else if (key == "prop_scheme") c.model.prop_scheme = parse_prop(value);
  else if (key == "compose_mode") c.model.compose_mode = parse_compose(value);
  else if (key == "lksb_kind") c.model.lksb_kind = parse_block(value);
  else if (key == "noise_std") c.noise_std = parse_real(value, key);
  else if (key == "iterations") c.schedule.iterations = parse_int(value, key);
  else if (key == "lr_max") c.schedule.lr_max = parse_real(value, key);
  else if (key == "lr_min") c.schedule.lr_min = parse_real(value, key);
  else if (key == "batch") c.schedule.batch = parse_int(value, key);
  else if (key == "patch") c.schedule.patch = parse_int(value, key);
  else if (key == "frames") c.schedule.frames = parse_int(value, key);
  else if (key == "charb_eps") c.schedule.charb_eps = parse_real(value, key);
  else if (key == "seed") c.seed = uint64_t(parse_int(value, key));
  else if (key == "checkpoint_every")
    c.checkpoint_every = parse_int(value, key);
  else if (key == "out_dir") c.out_dir = value;
  else if (key == "data_hr") c.data_hr = value;
  else if (key == "data_lr") c.data_lr = value;
  else if (key == "clip_dir") c.clip_dir = value;
  else if (key == "checkpoint") c.checkpoint = value;
  else throw contract_error("config: unknown key '" + key + "'");
}

// key = value per line; '#' starts a comment; duplicate keys rejected.
inline RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::istringstream is(text);
  std::string line;
  std::map<std::string, int> seen;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    require(eq != std::string::npos, "config: line " + std::to_string(lineno) +
                                         " is not key = value: '" + line +
                                         "'");
    std::string key = detail::trim(line.substr(0, eq));
    std::string value = detail::trim(line.substr(eq + 1));
    require(!key.empty(), "config: empty key on line " +
                              std::to_string(lineno));
    require(seen.insert({key, lineno}).second,
            "config: duplicate key '" + key + "' on line " +
                std::to_string(lineno));
    config_set(c, key, value);
  }
  return c;
}

// Fully-resolved dump: every key, defaults expanded; parse(dump(c)) == c.
inline std::string dump_config(const RunConfig& c) {
  using namespace detail;
  std::ostringstream os;
  os.precision(17);
  os << "# model\n"
     << "width = " << c.model.width << "\n"
     << "state = " << c.model.state << "\n"
     << "window = " << c.model.window << "\n"
     << "branches = " << c.model.branches << "\n"
     << "kernel = " << c.model.kernel << "\n"
     << "depth = " << c.model.depth << "\n"
     << "scale = " << c.model.scale << "\n"
     << "flow_method = " << flow_method_name(c.model.flow.method) << "\n"
     << "flow_block = " << c.model.flow.block << "\n"
     << "flow_radius = " << c.model.flow.radius << "\n"
     << "lpe = " << bool_name(c.model.lpe) << "\n"
     << "lw = " << bool_name(c.model.lw) << "\n"
     << "sp = " << bool_name(c.model.sp) << "\n"
     << "cat = " << bool_name(c.model.cat) << "\n"
     << "cssb = " << bool_name(c.model.cssb) << "\n"
     << "prop_scheme = " << prop_name(c.model.prop_scheme) << "\n"
     << "compose_mode = " << compose_name(c.model.compose_mode) << "\n"
     << "lksb_kind = " << block_name(c.model.lksb_kind) << "\n"
     << "# degradation\n"
     << "noise_std = " << c.noise_std << "\n"
     << "# schedule\n"
     << "iterations = " << c.schedule.iterations << "\n"
     << "lr_max = " << c.schedule.lr_max << "\n"
     << "lr_min = " << c.schedule.lr_min << "\n"
     << "batch = " << c.schedule.batch << "\n"
     << "patch = " << c.schedule.patch << "\n"
     << "frames = " << c.schedule.frames << "\n"
     << "charb_eps = " << c.schedule.charb_eps << "\n"
     << "# run\n"
     << "seed = " << c.seed << "\n"
     << "checkpoint_every = " << c.checkpoint_every << "\n"
     << "out_dir = " << c.out_dir << "\n"
     << "data_hr = " << c.data_hr << "\n"
     << "data_lr = " << c.data_lr << "\n"
     << "clip_dir = " << c.clip_dir << "\n"
     << "checkpoint = " << c.checkpoint << "\n";
  return os.str();
}

inline bool operator==(const RunConfig& a, const RunConfig& b) {
  return dump_config(a) == dump_config(b);
}

}  // namespace medvsr
