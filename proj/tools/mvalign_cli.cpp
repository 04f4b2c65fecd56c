// mvalign: render / train / eval / bench / oracle.
//
// Every subcommand accepts --config FILE plus one --<key> flag per config field;
// flags override the file. Outputs land in --out.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "mvalign.hpp"
#include "mvalign/harness/commands.hpp"
#include "mvalign/harness/config.hpp"
#include "mvalign/harness/crosschecks.hpp"
#include "mvalign/harness/experiment.hpp"

namespace fs = std::filesystem;
using namespace mvalign;
using namespace mvalign::harness;
using json = nlohmann::ordered_json;

namespace {

struct Common {
  std::string config_file;
  std::string out;
  std::map<std::string, std::string> overrides;
};

void add_common(CLI::App* sub, Common& c, const std::string& default_out) {
  c.out = default_out;
  sub->add_option("--config", c.config_file, "key = value config file")->check(CLI::ExistingFile);
  sub->add_option("--out", c.out, "output directory")->capture_default_str();
  for (const auto& f : config_fields()) {
    sub->add_option_function<std::string>(
        "--" + f.key, [&c, key = f.key](const std::string& v) { c.overrides[key] = v; }, f.help);
  }
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_file.empty() ? ExperimentConfig{} : load_config(c.config_file);
  for (const auto& [k, v] : c.overrides) set_field(cfg, k, v);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  os << text;
  if (!os) throw FormatError("cannot write " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt_check(const CheckResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-44s %s  value=%.4g bound=%.4g  %s", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                r.value, r.bound, r.detail.c_str());
  return buf;
}

json check_json(const CheckResult& r) {
  return {{"name", r.name}, {"passed", r.passed}, {"value", r.value}, {"bound", r.bound}, {"detail", r.detail}};
}

int cmd_render(const Common& c) {
  const auto cfg = resolve(c);
  render_dataset(cfg, c.out);
  const auto problems = check_manifest(c.out);
  for (const auto& p : problems) std::cerr << "render: " << p << "\n";
  std::cout << "rendered " << cfg.n_scenes << " scenes × " << kNumViews << " views to " << c.out << "\n";
  return problems.empty() ? 0 : 1;
}

int cmd_train(const Common& c, const std::string& data_dir) {
  const auto cfg = resolve(c);
  const auto data = data_dir.empty() ? training_set(cfg) : load_dataset(data_dir, cfg);
  const auto held = cfg.val_scenes > 0 ? heldout_set(cfg, cfg.val_scenes) : std::vector<SceneRecord>{};
  const fs::path out = c.out;
  ensure_dir(out);
  save_config(out / "config.txt", cfg);
  try {
    auto result = train(cfg, data, held, [](const EpochLog& e) {
      std::cout << "epoch " << e.epoch << "  train " << csv_number(e.train_loss) << "  val " << csv_number(e.val_loss)
                << std::endl;
    });
    save_weights(out / "weights", result.weights, cfg);
    std::ofstream csv(out / "train.csv");
    write_train_csv(csv, result.record);
    write_json(out / "run.json", result.record.to_json());
    return 0;
  } catch (const NumericError& e) {
    write_text(out / "run.json", std::string(e.what()) + "\n");
    std::cerr << "train: diverged, record written to " << (out / "run.json") << "\n";
    return 3;
  }
}

int cmd_eval(const Common& c, const std::string& weights_dir, bool ground_truth) {
  const auto cfg = resolve(c);
  const auto held = heldout_set(cfg, cfg.eval_scenes);
  const fs::path out = c.out;
  std::vector<EvalRow> rows;
  if (ground_truth) {
    rows = evaluate_ground_truth(cfg, held);
  } else {
    if (weights_dir.empty()) throw FormatError("eval: --weights is required unless --ground-truth is given");
    rows = evaluate(cfg, load_weights(weights_dir, cfg), held);
  }
  ensure_dir(out);
  std::ofstream csv(out / "eval.csv");
  write_eval_csv(csv, rows);
  auto s = summarize(rows, cfg);
  if (ground_truth) s.variant = "ground_truth";
  json j = summary_json(s);
  j["config"] = to_map(cfg);
  write_json(out / "summary.json", j);
  std::cout << s.variant << "  psnr " << csv_number(s.mean_psnr) << "  ssim " << csv_number(s.mean_ssim)
            << "  corr " << s.total_corr << "\n";
  return 0;
}

int cmd_bench(const Common& c) {
  const auto cfg = resolve(c);
  const fs::path out = c.out;
  ensure_dir(out);
  const auto costs = bench_costs(cfg);
  {
    std::ofstream csv(out / "cost.csv");
    write_cost_csv(csv, costs);
  }
  const auto timings = bench_timings(cfg, {32, 48, 64, 96});
  {
    std::ofstream csv(out / "timing.csv");
    write_timing_csv(csv, timings);
  }
  json j;
  j["config"] = to_map(cfg);
  for (const auto mode : {AttentionMode::truncated, AttentionMode::full}) {
    const auto fit = timing_fit(timings, mode);
    j["timing_fit"][std::string(mode_name(mode))] = {{"seconds_per_pixel", fit.slope},
                                                     {"intercept_s", fit.intercept},
                                                     {"r2", fit.r2}};
    std::cout << mode_name(mode) << " attention: " << fit.slope * 1e6 << " µs/pixel, R² = " << fit.r2 << "\n";
  }
  for (const auto& r : costs) {
    if (!r.cost.feasible) std::cout << mode_name(r.mode) << " at " << r.cost.resolution << " exceeds the kv budget\n";
  }
  write_json(out / "bench.json", j);
  return 0;
}

int cmd_oracle(const Common& c) {
  const auto cfg = resolve(c);
  std::vector<CheckResult> checks;
  checks.push_back(check_round_trip(100000, cfg.train_seed));
  const auto [collinear, on_line] = check_truncated_samples(2000, cfg.train_seed + 1);
  checks.push_back(collinear);
  checks.push_back(on_line);
  checks.push_back(check_attention_oracle(20, cfg.train_seed + 2));
  checks.push_back(check_full_vs_truncated(20, cfg.train_seed + 3));
  const auto [structured, independent] = check_noise_structure(100, cfg.train_seed + 4);
  checks.push_back(structured);
  checks.push_back(independent);
  const auto [ratio, scaling] = check_cost_ratios(cfg.n_line_samples, cfg.n_p.front());
  checks.push_back(ratio);
  checks.push_back(scaling);
  const auto [p, s] = check_image_metrics(20, cfg.train_seed + 5);
  checks.push_back(p);
  checks.push_back(s);

  const std::vector<int> shifts{0, 2, 4};
  const auto st = study_matcher(2, cfg.eval_seed, 128, cfg.matcher(), shifts);
  const double rel = std::abs(static_cast<double>(st.aligned - st.gt_pairs)) / static_cast<double>(st.gt_pairs);
  checks.push_back({"matcher.aligned_vs_gt", rel, 0.05, rel <= 0.05,
                    std::to_string(st.aligned) + " matched / " + std::to_string(st.gt_pairs) + " gt"});
  const bool mono = st.shifted[0] > st.shifted[1] && st.shifted[1] > st.shifted[2];
  checks.push_back({"matcher.misalignment_monotone", static_cast<double>(st.shifted[2]), 0.0, mono,
                    std::to_string(st.shifted[0]) + " > " + std::to_string(st.shifted[1]) + " > " +
                        std::to_string(st.shifted[2])});

  json j = json::array();
  bool ok = true;
  for (const auto& r : checks) {
    std::cout << fmt_check(r) << "\n";
    j.push_back(check_json(r));
    ok = ok && r.passed;
  }
  ensure_dir(c.out);
  write_json(fs::path(c.out) / "oracle.json", j);
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth-truncated epipolar attention toolkit"};
  app.require_subcommand(1);

  Common render_c, train_c, eval_c, bench_c, oracle_c;
  std::string data_dir, weights_dir;
  bool ground_truth = false;

  auto* render = app.add_subcommand("render", "render the training scenes to PPM/PFM plus manifest.json");
  add_common(render, render_c, "data");
  auto* train = app.add_subcommand("train", "train the decoder for one variant");
  add_common(train, train_c, "run");
  train->add_option("--data", data_dir, "dataset written by render (default: regenerate from seeds)");
  auto* eval = app.add_subcommand("eval", "score trained weights on held-out scenes");
  add_common(eval, eval_c, "eval");
  eval->add_option("--weights", weights_dir, "weights directory written by train");
  eval->add_flag("--ground-truth", ground_truth, "score the ground-truth images against themselves");
  auto* bench = app.add_subcommand("bench", "analytic cost table and attention timings");
  add_common(bench, bench_c, "bench");
  auto* orc = app.add_subcommand("oracle", "run every brute-force cross-check");
  add_common(orc, oracle_c, "oracle");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*render) return cmd_render(render_c);
    if (*train) return cmd_train(train_c, data_dir);
    if (*eval) return cmd_eval(eval_c, weights_dir, ground_truth);
    if (*bench) return cmd_bench(bench_c);
    if (*orc) return cmd_oracle(oracle_c);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
