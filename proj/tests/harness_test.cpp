#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mvalign/harness/commands.hpp"
#include "mvalign/harness/experiment.hpp"

using namespace mvalign;
using namespace mvalign::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("mvalign_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Smallest configuration the full noise schedule accepts.
ExperimentConfig tiny() {
  ExperimentConfig c;
  c.resolution = 128;
  c.n_scenes = 2;
  c.eval_scenes = 1;
  c.val_scenes = 0;
  c.epochs = 1;
  return c;
}

}  // namespace

TEST(Config, KeyValueRoundTrip) {
  ExperimentConfig c;
  c.r = 0.25;
  c.n_p = {5, 3};
  c.variant = Variant::indep_aug;
  c.noise = {{3, 0.2}, {32, 0.05}};
  c.depth_source = DepthSource::gt;
  const auto back = from_kv(to_kv(c));
  EXPECT_EQ(to_kv(back), to_kv(c));
  EXPECT_EQ(back.n_p, c.n_p);
  EXPECT_EQ(back.variant, Variant::indep_aug);
}

TEST(Config, CommentsAndBlankLinesAreIgnored) {
  const auto c = from_kv("# header\n\n  epochs = 3  # trailing\nvariant=no_epi\n");
  EXPECT_EQ(c.epochs, 3);
  EXPECT_EQ(c.variant, Variant::no_epi);
}

TEST(Config, BadInputIsAConfigError) {
  EXPECT_THROW(from_kv("nonsense"), ConfigError);
  EXPECT_THROW(from_kv("no_such_key = 1"), ConfigError);
  EXPECT_THROW(from_kv("epochs = many"), ConfigError);
  EXPECT_THROW(from_kv("variant = best"), ConfigError);
  ExperimentConfig c;
  c.resolution = 100;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Config, EveryFieldHasHelpAndAUniqueKey) {
  std::set<std::string> keys;
  for (const auto& f : config_fields()) {
    EXPECT_FALSE(f.help.empty()) << f.key;
    EXPECT_TRUE(keys.insert(f.key).second) << f.key;
  }
}

TEST(Variants, NoEpiDiffersFromOursOnlyInTheAttentionBranch) {
  EXPECT_EQ(wiring(Variant::no_epi).attention, AttentionMode::none);
  EXPECT_EQ(wiring(Variant::no_epi).train_depth, wiring(Variant::ours).train_depth);
  ExperimentConfig a, b;
  b.variant = Variant::no_epi;
  auto ma = to_map(a), mb = to_map(b);
  std::vector<std::string> diff;
  for (const auto& [k, v] : ma)
    if (mb.at(k) != v) diff.push_back(k);
  EXPECT_EQ(diff, std::vector<std::string>{"variant"});
  auto da = a.decoder(), db = b.decoder();
  db.mode = da.mode;
  EXPECT_EQ(db.n_p_schedule, da.n_p_schedule);
  EXPECT_EQ(db.d, da.d);
}

TEST(Variants, EachAblationTogglesOneSwitch) {
  const auto ours = wiring(Variant::ours);
  for (auto v : {Variant::full_epi, Variant::no_epi, Variant::no_depth_aug, Variant::indep_aug}) {
    const auto w = wiring(v);
    EXPECT_EQ((w.attention != ours.attention) + (w.train_depth != ours.train_depth), 1) << variant_name(v);
  }
}

TEST(Render, WritesEveryViewAndAManifest) {
  auto cfg = tiny();
  cfg.data_seed = 7;
  const auto dir = scratch("render");
  render_dataset(cfg, dir);
  int ppm = 0, pfm = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    ppm += e.path().extension() == ".ppm";
    pfm += e.path().extension() == ".pfm";
  }
  EXPECT_EQ(ppm, 12);
  EXPECT_EQ(pfm, 12);
  EXPECT_TRUE(fs::exists(dir / "manifest.json"));
  EXPECT_TRUE(check_manifest(dir).empty());
}

TEST(Render, RerunIsByteIdentical) {
  const auto cfg = tiny();
  const auto a = scratch("rerun_a"), b = scratch("rerun_b");
  render_dataset(cfg, a);
  render_dataset(cfg, b);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    EXPECT_EQ(slurp(e.path()), slurp(b / rel)) << rel;
  }
}

TEST(Render, CompletenessCheckFlagsMissingAndStrayFiles) {
  const auto cfg = tiny();
  const auto dir = scratch("complete");
  render_dataset(cfg, dir);
  fs::remove(dir / "scene_000" / "front.pfm");
  std::ofstream(dir / "scene_001" / "extra.ppm") << "P6";
  const auto problems = check_manifest(dir);
  ASSERT_EQ(problems.size(), 2u);
  EXPECT_NE(problems[0].find("front.pfm"), std::string::npos);
  EXPECT_NE(problems[1].find("extra.ppm"), std::string::npos);
  EXPECT_THROW(load_dataset(dir, cfg), FormatError);
}

TEST(Render, LoadedDatasetMatchesTheRenderedViews) {
  const auto cfg = tiny();
  const auto dir = scratch("load");
  render_dataset(cfg, dir);
  const auto loaded = load_dataset(dir, cfg);
  const auto fresh = training_set(cfg);
  ASSERT_EQ(loaded.size(), fresh.size());
  for (std::size_t s = 0; s < loaded.size(); ++s)
    for (std::size_t v = 0; v < loaded[s].views.size(); ++v) {
      EXPECT_EQ(loaded[s].views[v].depth.values, fresh[s].views[v].depth.values);
      // Colour is stored with 8 bits per channel.
      for (std::size_t i = 0; i < fresh[s].views[v].color.data.size(); i += 97)
        EXPECT_NEAR(loaded[s].views[v].color.data[i], fresh[s].views[v].color.data[i], 0.5 / 255 + 1e-6);
    }
  auto other = cfg;
  other.data_seed = 99;
  EXPECT_THROW(load_dataset(dir, other), ConfigError);
}

TEST(Train, LossDecreasesOverTheFirstEpochs) {
  ExperimentConfig cfg;
  cfg.resolution = 128;
  cfg.epochs = 5;
  cfg.val_scenes = 0;
  const auto r = train(cfg, training_set(cfg), {});
  ASSERT_EQ(r.record.epochs.size(), 5u);
  for (std::size_t e = 1; e < r.record.epochs.size(); ++e)
    EXPECT_LT(r.record.epochs[e].train_loss, r.record.epochs[e - 1].train_loss) << "epoch " << e + 1;
}

TEST(Train, SameSeedsGiveIdenticalWeights) {
  const auto cfg = tiny();
  const auto data = training_set(cfg);
  auto a = train(cfg, data, {});
  auto b = train(cfg, data, {});
  auto na = a.weights.named(), nb = b.weights.named();
  ASSERT_EQ(na.size(), nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto da = na[i].second->data(), db = nb[i].second->data();
    EXPECT_TRUE(std::equal(da.begin(), da.end(), db.begin(), db.end())) << na[i].first;
  }
}

TEST(Train, WeightsSurviveTheDiskRoundTrip) {
  const auto cfg = tiny();
  auto r = train(cfg, training_set(cfg), {});
  const auto dir = scratch("weights");
  save_weights(dir, r.weights, cfg);
  auto back = load_weights(dir, cfg);
  auto na = r.weights.named(), nb = back.named();
  for (std::size_t i = 0; i < na.size(); ++i) {
    const auto da = na[i].second->data(), db = nb[i].second->data();
    EXPECT_TRUE(std::equal(da.begin(), da.end(), db.begin(), db.end())) << na[i].first;
  }
  EXPECT_THROW(load_weights(scratch("nowhere"), cfg), FormatError);
}

TEST(Eval, GroundTruthAgainstItselfScoresOne) {
  const auto cfg = tiny();
  const auto rows = evaluate_ground_truth(cfg, heldout_set(cfg, 1));
  ASSERT_EQ(rows.size(), static_cast<std::size_t>(kNumViews));
  for (const auto& r : rows) {
    EXPECT_EQ(r.ssim, 1.0);
    EXPECT_TRUE(std::isinf(r.psnr));
    EXPECT_GT(r.corr_count, 0);
  }
}

TEST(Eval, CsvHasTheContractColumns) {
  std::ostringstream os;
  write_eval_csv(os, {EvalRow{"ours", 0, "front", 20.5, 0.9, 12, 3.0}});
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  EXPECT_EQ(header, "variant,scene,view,psnr,ssim,corr_count,kv_floats");
  EXPECT_EQ(row.substr(0, 13), "ours,0,front,");
}

TEST(Eval, RerunIsIdentical) {
  const auto cfg = tiny();
  const auto r = train(cfg, training_set(cfg), {});
  const auto held = heldout_set(cfg, 1);
  std::ostringstream a, b;
  write_eval_csv(a, evaluate(cfg, r.weights, held));
  write_eval_csv(b, evaluate(cfg, r.weights, held));
  EXPECT_EQ(a.str(), b.str());
}

TEST(Bench, CostTableCoversBothModesAtEveryResolution) {
  ExperimentConfig cfg;
  const auto rows = bench_costs(cfg);
  ASSERT_EQ(rows.size(), 2 * bench_resolutions().size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    const auto expected = r.mode == AttentionMode::full ? cfg.n_line_samples : cfg.n_p[i / 2];
    EXPECT_EQ(r.cost.keys_per_query, static_cast<std::size_t>(expected));
    EXPECT_DOUBLE_EQ(r.ratio_full_over_truncated, static_cast<double>(cfg.n_line_samples) / cfg.n_p[i / 2]);
  }
  std::ostringstream os;
  write_cost_csv(os, rows);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')),
            "mode,resolution,keys_per_query,kv_floats_per_view,flops_per_view,kv_bytes_total,feasible,"
            "ratio_full_over_truncated");
}

TEST(Bench, FullAttentionFitsUpTo128AndNotAt256) {
  // Default budget and 16 line samples: 100.7 MB at 128, 402.7 MB at 256.
  const ExperimentConfig cfg;
  for (const auto& r : bench_costs(cfg)) {
    if (r.mode != AttentionMode::full) continue;
    EXPECT_EQ(r.cost.feasible, r.cost.resolution <= 128) << r.cost.resolution;
  }
}

TEST(Bench, LineFitRecoversAnExactLine) {
  const auto f = fit_line({1, 2, 3, 4}, {3, 5, 7, 9});
  EXPECT_DOUBLE_EQ(f.slope, 2.0);
  EXPECT_DOUBLE_EQ(f.intercept, 1.0);
  EXPECT_DOUBLE_EQ(f.r2, 1.0);
}

TEST(Bench, TimingsGrowLinearlyInPixels) {
  ExperimentConfig cfg;
  cfg.bench_repeats = 3;
  const auto rows = bench_timings(cfg, {32, 48, 64, 96});
  ASSERT_EQ(rows.size(), 8u);
  EXPECT_GT(timing_fit(rows, AttentionMode::truncated).r2, 0.95);
  EXPECT_GT(timing_fit(rows, AttentionMode::full).r2, 0.95);
}
