#pragma once

// Experiment configuration: a flat key = value document. Every field is listed
// once in config_fields(), which drives parsing, serialisation and the CLI flags,
// so the three cannot drift apart.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "mvalign/decoder.hpp"
#include "mvalign/depthaug.hpp"
#include "mvalign/errors.hpp"
#include "mvalign/metrics.hpp"

namespace mvalign::harness {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Variant { ours, full_epi, no_epi, no_depth_aug, indep_aug };
inline constexpr std::array<Variant, 5> kAllVariants{Variant::ours, Variant::full_epi, Variant::no_epi,
                                                     Variant::no_depth_aug, Variant::indep_aug};

enum class TrainDepth { gt, structured, independent };
enum class Optimizer { gd, adam };
enum class DepthSource { gt, gt_plus_structured, gt_plus_independent };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::ours: return "ours";
    case Variant::full_epi: return "full_epi";
    case Variant::no_epi: return "no_epi";
    case Variant::no_depth_aug: return "no_depth_aug";
    case Variant::indep_aug: return "indep_aug";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  for (auto v : kAllVariants)
    if (variant_name(v) == s) return v;
  throw ConfigError("unknown variant '" + s + "'");
}

inline std::string depth_source_name(DepthSource s) {
  switch (s) {
    case DepthSource::gt: return "gt";
    case DepthSource::gt_plus_structured: return "gt_plus_structured";
    case DepthSource::gt_plus_independent: return "gt_plus_independent";
  }
  return "?";
}

inline DepthSource parse_depth_source(const std::string& s) {
  for (auto d : {DepthSource::gt, DepthSource::gt_plus_structured, DepthSource::gt_plus_independent})
    if (depth_source_name(d) == s) return d;
  throw ConfigError("unknown depth source '" + s + "'");
}

/// The switch points a variant controls. Everything else is shared.
struct Wiring {
  AttentionMode attention = AttentionMode::truncated;
  TrainDepth train_depth = TrainDepth::structured;
  bool operator==(const Wiring&) const = default;
};

inline Wiring wiring(Variant v) {
  switch (v) {
    case Variant::ours: return {AttentionMode::truncated, TrainDepth::structured};
    case Variant::full_epi: return {AttentionMode::full, TrainDepth::structured};
    case Variant::no_epi: return {AttentionMode::none, TrainDepth::structured};
    case Variant::no_depth_aug: return {AttentionMode::truncated, TrainDepth::gt};
    case Variant::indep_aug: return {AttentionMode::truncated, TrainDepth::independent};
  }
  return {};
}

struct ExperimentConfig {
  // rig
  double ortho_scale = kRigRadius;
  double z_near = 0.5;
  double z_far = 2.5;
  // training data
  int n_scenes = 8;
  std::uint64_t data_seed = 1;
  int resolution = 256;
  // held-out data
  int eval_scenes = 8;
  std::uint64_t eval_seed = 1001;
  int val_scenes = 2;
  // decoder and attention
  int levels = 4;
  int d = 8;
  std::vector<int> n_p{7, 7, 7, 2};
  double r = 0.1;
  bool residual = true;
  bool plucker = true;
  bool front_condition = true;
  bool nearest = false;
  int n_line_samples = 16;
  int full_max_resolution = 128;
  // depth augmentation
  std::vector<NoiseTerm> noise = NoiseSpec::standard().terms;
  std::uint64_t eval_noise_seed = 777;
  DepthSource depth_source = DepthSource::gt_plus_structured;
  // optimisation
  int epochs = 10;
  Optimizer optimizer = Optimizer::adam;
  double learning_rate = 1e-3;
  int batch = 1;
  std::uint64_t train_seed = 42;
  Variant variant = Variant::ours;
  // matcher
  int match_window = 7;
  double match_threshold = 0.9;
  int match_stride = 4;
  // bench
  double kv_budget_mb = 128.0;
  int bench_repeats = 3;

  int base_resolution() const { return resolution >> (levels - 1); }
  int latent_factor() const { return 1 << (levels - 1); }

  NoiseSpec noise_spec(std::uint64_t seed) const { return {noise, seed}; }

  DecoderConfig decoder() const {
    DecoderConfig c;
    c.levels = levels;
    c.base_resolution = base_resolution();
    c.d = d;
    c.n_p_schedule = n_p;
    c.r = r;
    c.residual = residual;
    c.use_plucker = plucker;
    c.front_condition = front_condition;
    c.interpolation = nearest ? Interpolation::nearest : Interpolation::bilinear;
    c.mode = wiring(variant).attention;
    c.n_line_samples = n_line_samples;
    c.full_max_resolution = full_max_resolution;
    c.z_range = {z_near, z_far};
    c.ortho_scale = ortho_scale;
    return c;
  }

  MatcherConfig matcher() const {
    MatcherConfig m;
    m.window = match_window;
    m.ncc_threshold = match_threshold;
    m.stride = match_stride;
    m.z_range = {z_near, z_far};
    return m;
  }

  void validate() const;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <class N>
N parse_number(const std::string& key, const std::string& s) {
  N v{};
  const auto* end = s.data() + s.size();
  const auto res = std::from_chars(s.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError(key + ": cannot parse '" + s + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + s + "'");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace detail

struct ConfigField {
  std::string key;
  std::string help;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_fields() {
  using C = ExperimentConfig;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto real = [&f](std::string key, std::string help, double C::*m) {
      f.push_back({key, std::move(help), [m](const C& c) { return detail::fmt(c.*m); },
                   [m, key](C& c, const std::string& s) { c.*m = detail::parse_number<double>(key, s); }});
    };
    auto integer = [&f](std::string key, std::string help, int C::*m) {
      f.push_back({key, std::move(help), [m](const C& c) { return std::to_string(c.*m); },
                   [m, key](C& c, const std::string& s) { c.*m = detail::parse_number<int>(key, s); }});
    };
    auto seed = [&f](std::string key, std::string help, std::uint64_t C::*m) {
      f.push_back({key, std::move(help), [m](const C& c) { return std::to_string(c.*m); },
                   [m, key](C& c, const std::string& s) { c.*m = detail::parse_number<std::uint64_t>(key, s); }});
    };
    auto flag = [&f](std::string key, std::string help, bool C::*m) {
      f.push_back({key, std::move(help), [m](const C& c) { return std::string(c.*m ? "true" : "false"); },
                   [m, key](C& c, const std::string& s) { c.*m = detail::parse_bool(key, s); }});
    };

    real("ortho_scale", "world units per image half-extent", &C::ortho_scale);
    real("z_near", "near end of the scene depth range", &C::z_near);
    real("z_far", "far end of the scene depth range", &C::z_far);
    integer("n_scenes", "training scenes", &C::n_scenes);
    seed("data_seed", "training scene seed", &C::data_seed);
    integer("resolution", "output resolution", &C::resolution);
    integer("eval_scenes", "held-out evaluation scenes", &C::eval_scenes);
    seed("eval_seed", "held-out scene seed", &C::eval_seed);
    integer("val_scenes", "held-out scenes scored every epoch", &C::val_scenes);
    integer("levels", "decoder levels", &C::levels);
    integer("d", "feature width", &C::d);
    f.push_back({"n_p", "samples per pixel for each level, comma separated",
                 [](const C& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.n_p.size(); ++i) s += (i ? "," : "") + std::to_string(c.n_p[i]);
                   return s;
                 },
                 [](C& c, const std::string& s) {
                   c.n_p.clear();
                   for (const auto& t : detail::split(s, ',')) c.n_p.push_back(detail::parse_number<int>("n_p", detail::trim(t)));
                 }});
    real("r", "truncation half-range in world units", &C::r);
    flag("residual", "residual connection around attention", &C::residual);
    flag("plucker", "append Plücker codes to sampled features", &C::plucker);
    flag("front_condition", "feed the front image to every level", &C::front_condition);
    flag("nearest", "nearest-neighbour feature sampling", &C::nearest);
    integer("n_line_samples", "keys per query for full epipolar attention", &C::n_line_samples);
    integer("full_max_resolution", "full epipolar attention only up to this resolution", &C::full_max_resolution);
    f.push_back({"noise", "structured noise terms as resolution:scale, comma separated",
                 [](const C& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.noise.size(); ++i)
                     s += (i ? "," : "") + std::to_string(c.noise[i].resolution) + ":" + detail::fmt(c.noise[i].scale);
                   return s;
                 },
                 [](C& c, const std::string& s) {
                   c.noise.clear();
                   for (const auto& t : detail::split(s, ',')) {
                     const auto kv = detail::split(detail::trim(t), ':');
                     if (kv.size() != 2) throw ConfigError("noise: expected resolution:scale, got '" + t + "'");
                     c.noise.push_back({detail::parse_number<int>("noise", kv[0]), detail::parse_number<double>("noise", kv[1])});
                   }
                 }});
    seed("eval_noise_seed", "seed of the held-out depth perturbation", &C::eval_noise_seed);
    f.push_back({"depth_source", "inference depth: gt, gt_plus_structured, gt_plus_independent",
                 [](const C& c) { return depth_source_name(c.depth_source); },
                 [](C& c, const std::string& s) { c.depth_source = parse_depth_source(s); }});
    integer("epochs", "training epochs", &C::epochs);
    f.push_back({"optimizer", "gd (plain fixed-step) or adam (fixed-step, per-parameter normalised)",
                 [](const C& c) { return std::string(c.optimizer == Optimizer::gd ? "gd" : "adam"); },
                 [](C& c, const std::string& s) {
                   if (s == "gd") c.optimizer = Optimizer::gd;
                   else if (s == "adam") c.optimizer = Optimizer::adam;
                   else throw ConfigError("unknown optimizer '" + s + "'");
                 }});
    real("learning_rate", "step size", &C::learning_rate);
    integer("batch", "scenes per step", &C::batch);
    seed("train_seed", "initialisation, shuffling and training noise seed", &C::train_seed);
    f.push_back({"variant", "ours, full_epi, no_epi, no_depth_aug, indep_aug",
                 [](const C& c) { return variant_name(c.variant); },
                 [](C& c, const std::string& s) { c.variant = parse_variant(s); }});
    integer("match_window", "matcher NCC window", &C::match_window);
    real("match_threshold", "matcher NCC acceptance threshold", &C::match_threshold);
    integer("match_stride", "matcher query grid stride", &C::match_stride);
    real("kv_budget_mb", "key/value memory budget for bench feasibility", &C::kv_budget_mb);
    integer("bench_repeats", "timed repetitions per bench size", &C::bench_repeats);
    return f;
  }();
  return fields;
}

inline void ExperimentConfig::validate() const {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(ortho_scale > 0.0, "ortho_scale must be positive");
  need(z_far > z_near && z_near > 0.0, "need 0 < z_near < z_far");
  need(n_scenes >= 1 && eval_scenes >= 1 && val_scenes >= 0, "scene counts must be positive");
  need(levels >= 1 && levels <= 8, "levels out of range");
  need(resolution > 0 && resolution % latent_factor() == 0 && base_resolution() >= 2,
       "resolution must be a multiple of 2^(levels-1)");
  need(d >= 1, "d must be >= 1");
  need(!n_p.empty(), "n_p schedule is empty");
  for (int v : n_p) need(v >= 1, "n_p entries must be >= 1");
  need(r > 0.0, "r must be positive");
  need(n_line_samples >= 2, "n_line_samples must be >= 2");
  for (const auto& t : noise) {
    need(t.resolution >= 1 && t.resolution <= resolution, "noise resolution out of range");
    need(t.scale >= 0.0, "noise scale must be non-negative");
  }
  need(epochs >= 0, "epochs must be >= 0");
  need(learning_rate > 0.0, "learning_rate must be positive");
  need(batch >= 1, "batch must be >= 1");
  need(match_window >= 1 && match_window % 2 == 1, "match_window must be odd");
  need(match_stride >= 1, "match_stride must be >= 1");
  need(kv_budget_mb > 0.0 && bench_repeats >= 1, "bench settings must be positive");
}

inline std::map<std::string, std::string> to_map(const ExperimentConfig& c) {
  std::map<std::string, std::string> m;
  for (const auto& f : config_fields()) m[f.key] = f.get(c);
  return m;
}

inline std::string to_kv(const ExperimentConfig& c) {
  std::string s;
  for (const auto& f : config_fields()) s += f.key + " = " + f.get(c) + "\n";
  return s;
}

inline void set_field(ExperimentConfig& c, const std::string& key, const std::string& value) {
  for (const auto& f : config_fields()) {
    if (f.key == key) {
      f.set(c, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

/// Parses `key = value` lines; '#' starts a comment. Unlisted keys keep their defaults.
inline ExperimentConfig from_kv(const std::string& text, ExperimentConfig base = {}) {
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    set_field(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
  }
  return base;
}

inline ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {}) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_kv(ss.str(), std::move(base));
}

inline void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write config " + path.string());
  os << to_kv(c);
}

}  // namespace mvalign::harness
