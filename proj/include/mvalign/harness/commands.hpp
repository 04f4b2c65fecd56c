#pragma once

// On-disk dataset rendering and the cost/timing benchmark.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvalign/attention.hpp"
#include "mvalign/harness/config.hpp"
#include "mvalign/harness/experiment.hpp"
#include "mvalign/metrics.hpp"
#include "mvalign/synthscene.hpp"

namespace mvalign::harness {

namespace fs = std::filesystem;

inline void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw FormatError("cannot create output directory " + dir.string());
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw FormatError("output directory is not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

inline std::string scene_dir_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "scene_%03zu", i);
  return buf;
}

/// Writes the training scenes as PPM colour + PFM depth per view, and manifest.json.
/// Returns the manifest.
inline nlohmann::ordered_json render_dataset(const ExperimentConfig& cfg, const fs::path& dir) {
  ensure_dir(dir);
  const auto data = training_set(cfg);
  nlohmann::ordered_json m;
  m["config"] = to_map(cfg);
  m["views"] = nlohmann::ordered_json::array();
  for (const auto v : kRigOrder) m["views"].push_back(view_name(v));
  m["scenes"] = nlohmann::ordered_json::array();
  for (std::size_t s = 0; s < data.size(); ++s) {
    const std::string sd = scene_dir_name(s);
    fs::create_directories(dir / sd);
    nlohmann::ordered_json scene;
    scene["seed"] = data[s].seed;
    scene["files"] = nlohmann::ordered_json::array();
    for (std::size_t v = 0; v < data[s].views.size(); ++v) {
      const std::string stem = sd + "/" + std::string(view_name(kRigOrder[v]));
      save_ppm(dir / (stem + ".ppm"), data[s].views[v].color);
      save_pfm(dir / (stem + ".pfm"), data[s].views[v].depth);
      scene["files"].push_back({{"view", view_name(kRigOrder[v])}, {"color", stem + ".ppm"}, {"depth", stem + ".pfm"}});
    }
    m["scenes"].push_back(scene);
  }
  std::ofstream os(dir / "manifest.json");
  os << m.dump(2) << '\n';
  if (!os) throw FormatError("cannot write manifest in " + dir.string());
  return m;
}

/// Completeness pass: every manifest entry exists and every image file under `dir`
/// is referenced by the manifest. Returns the problems found (empty when complete).
inline std::vector<std::string> check_manifest(const fs::path& dir) {
  std::vector<std::string> problems;
  std::ifstream is(dir / "manifest.json");
  if (!is) return {"manifest.json missing"};
  const auto m = nlohmann::json::parse(is);
  std::set<std::string> listed;
  for (const auto& scene : m.at("scenes"))
    for (const auto& f : scene.at("files"))
      for (const char* key : {"color", "depth"}) listed.insert(f.at(key).get<std::string>());
  for (const auto& rel : listed)
    if (!fs::is_regular_file(dir / rel)) problems.push_back("missing file " + rel);
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto ext = e.path().extension();
    if (ext != ".ppm" && ext != ".pfm") continue;
    const auto rel = fs::relative(e.path(), dir).generic_string();
    if (!listed.count(rel)) problems.push_back("unlisted file " + rel);
  }
  return problems;
}

/// Loads a dataset written by render_dataset. The dataset must have been rendered with the
/// same scene settings as `cfg`; scene geometry is not stored, only the views.
inline std::vector<SceneRecord> load_dataset(const fs::path& dir, const ExperimentConfig& cfg) {
  if (const auto problems = check_manifest(dir); !problems.empty()) {
    throw FormatError("dataset " + dir.string() + " is incomplete: " + problems.front());
  }
  std::ifstream is(dir / "manifest.json");
  const auto m = nlohmann::json::parse(is);
  const auto want = to_map(cfg);
  for (const char* key : {"n_scenes", "data_seed", "resolution", "ortho_scale"}) {
    const auto got = m.at("config").at(key).get<std::string>();
    if (got != want.at(key)) {
      throw ConfigError("dataset " + dir.string() + " has " + key + " = " + got + ", config says " + want.at(key));
    }
  }
  const auto rig = make_rig(cfg.ortho_scale, cfg.resolution);
  std::vector<SceneRecord> out;
  for (const auto& scene : m.at("scenes")) {
    SceneRecord rec;
    rec.seed = scene.at("seed").get<std::uint64_t>();
    const auto& files = scene.at("files");
    if (files.size() != rig.size()) throw FormatError("dataset scene does not cover the rig");
    for (std::size_t v = 0; v < files.size(); ++v) {
      RenderedView view{load_ppm(dir / files[v].at("color").get<std::string>()),
                        load_pfm(dir / files[v].at("depth").get<std::string>()), rig[v]};
      rec.views.push_back(std::move(view));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bench

struct CostRow {
  AttentionMode mode = AttentionMode::truncated;
  LevelCost cost;
  double ratio_full_over_truncated = 0.0;  // per resolution, keys ratio
};

inline const std::vector<int>& bench_resolutions() {
  static const std::vector<int> r{32, 64, 128, 256};
  return r;
}

/// Analytic single-level costs of both modes at every bench resolution. Full attention
/// is charged at every resolution here; feasibility comes from the budget alone.
inline std::vector<CostRow> bench_costs(const ExperimentConfig& cfg) {
  CostParams p;
  p.resolutions = bench_resolutions();
  p.n_p = cfg.n_p;
  p.d = cfg.d;
  p.n_line_samples = cfg.n_line_samples;
  p.kv_budget_bytes = cfg.kv_budget_mb * 1024.0 * 1024.0;
  const auto tr = cost_model(AttentionMode::truncated, p);
  const auto fu = cost_model(AttentionMode::full, p);
  std::vector<CostRow> rows;
  for (std::size_t i = 0; i < p.resolutions.size(); ++i) {
    const double ratio = fu.levels[i].kv_floats / tr.levels[i].kv_floats;
    rows.push_back({AttentionMode::truncated, tr.levels[i], ratio});
    rows.push_back({AttentionMode::full, fu.levels[i], ratio});
  }
  return rows;
}

inline void write_cost_csv(std::ostream& os, const std::vector<CostRow>& rows) {
  os << "mode,resolution,keys_per_query,kv_floats_per_view,flops_per_view,kv_bytes_total,feasible,ratio_full_over_truncated\n";
  for (const auto& r : rows) {
    os << mode_name(r.mode) << ',' << r.cost.resolution << ',' << r.cost.keys_per_query << ','
       << csv_number(r.cost.kv_floats) << ',' << csv_number(r.cost.attention_flops) << ','
       << csv_number(r.cost.kv_bytes_total) << ',' << (r.cost.feasible ? 1 : 0) << ','
       << csv_number(r.ratio_full_over_truncated) << '\n';
  }
}

struct TimingRow {
  AttentionMode mode = AttentionMode::truncated;
  int resolution = 0;
  double seconds = 0.0;  // fastest of the repeats, one reference view
};

struct LinearFit {
  double slope = 0.0, intercept = 0.0, r2 = 0.0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i], my += y[i];
  mx /= n, my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  LinearFit f;
  f.slope = sxx > 0 ? sxy / sxx : 0.0;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

/// Times one forward pass of each attention mode at sizes that fit in memory. Every
/// pixel carries valid depth so the work is proportional to H·W.
inline std::vector<TimingRow> bench_timings(const ExperimentConfig& cfg, const std::vector<int>& sizes) {
  NoGradScope<float> no_grad;
  const auto dc = cfg.decoder();
  AttentionConfig acfg = dc.attention(1);
  Rng rng(derive_seed(cfg.train_seed, 0xbe7c));
  const auto w = AttentionWeights<float>::init(acfg, kNumViews - 1, rng);
  std::vector<TimingRow> rows;
  for (const int res : sizes) {
    MultiViewSet<float> mv;
    const auto rig = make_rig(cfg.ortho_scale, res);
    for (std::size_t v = 0; v < rig.size(); ++v) {
      mv.cameras.push_back(rig[v]);
      mv.features.push_back({BasicTensor<float>::uniform(
                                 {static_cast<std::size_t>(res), static_cast<std::size_t>(res),
                                  static_cast<std::size_t>(acfg.d)},
                                 -1.0, 1.0, rng),
                             kRigOrder[v], 1});
    }
    const auto depth = DepthMap::constant(res, res, static_cast<float>(kRigRadius));
    for (const auto mode : {AttentionMode::truncated, AttentionMode::full}) {
      double best = 1e300;
      for (int rep = 0; rep < cfg.bench_repeats; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        if (mode == AttentionMode::truncated) {
          (void)truncated_epipolar_attention(mv, ViewId::front, depth, acfg, w);
        } else {
          (void)full_epipolar_attention(mv, ViewId::front, dc.z_range, dc.n_line_samples, acfg, w);
        }
        best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
      }
      rows.push_back({mode, res, best});
    }
  }
  return rows;
}

inline void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows) {
  os << "mode,resolution,pixels,seconds\n";
  for (const auto& r : rows) {
    os << mode_name(r.mode) << ',' << r.resolution << ',' << static_cast<long>(r.resolution) * r.resolution << ','
       << csv_number(r.seconds) << '\n';
  }
}

inline LinearFit timing_fit(const std::vector<TimingRow>& rows, AttentionMode mode) {
  std::vector<double> x, y;
  for (const auto& r : rows) {
    if (r.mode != mode) continue;
    x.push_back(static_cast<double>(r.resolution) * r.resolution);
    y.push_back(r.seconds);
  }
  return fit_line(x, y);
}

}  // namespace mvalign::harness
