#pragma once

// Toy cross-view reconstruction task: each view's colour is decoded from its own
// block-downsampled copy plus whatever the attention can fetch from the other
// views (the front view also sees its full-resolution image as a condition).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvalign/decoder.hpp"
#include "mvalign/depthaug.hpp"
#include "mvalign/harness/config.hpp"
#include "mvalign/metrics.hpp"
#include "mvalign/synthscene.hpp"
#include "mvalign/tensor_io.hpp"

namespace mvalign::harness {

using Weights = DecoderWeights<float>;

// Stream tags keep the seeded random streams of different purposes disjoint.
inline constexpr std::uint64_t kTagTrainNoise = 1ULL << 40;
inline constexpr std::uint64_t kTagJitter = 2ULL << 40;
inline constexpr std::uint64_t kTagShuffle = 3ULL << 40;

struct SceneInputs {
  std::vector<Image> latents;
  Image front;
  std::vector<Image> targets;
  std::vector<DepthMap> depths;  // full resolution, GT
};

inline SceneInputs prepare_scene(const SceneRecord& rec, const ExperimentConfig& cfg) {
  SceneInputs s;
  for (const auto& v : rec.views) {
    if (v.color.width != cfg.resolution) throw DimensionError("scene rendered at the wrong resolution");
    s.latents.push_back(block_downsample(v.color, cfg.latent_factor()));
    s.targets.push_back(v.color);
    s.depths.push_back(v.depth);
  }
  s.front = rec.views.front().color;
  return s;
}

inline std::vector<SceneRecord> training_set(const ExperimentConfig& cfg) {
  return make_dataset(cfg.n_scenes, cfg.data_seed, cfg.resolution, cfg.ortho_scale);
}

inline std::vector<SceneRecord> heldout_set(const ExperimentConfig& cfg, int n) {
  return make_dataset(n, cfg.eval_seed, cfg.resolution, cfg.ortho_scale);
}

/// Training-time depth for one view as the variant prescribes.
inline DepthMap train_depth(const DepthMap& gt, const ExperimentConfig& cfg, std::uint64_t stream) {
  const auto spec = cfg.noise_spec(derive_seed(cfg.train_seed, kTagTrainNoise + stream));
  switch (wiring(cfg.variant).train_depth) {
    case TrainDepth::gt: return gt;
    case TrainDepth::structured: return structured_noise(gt, spec);
    case TrainDepth::independent: return independent_noise(gt, spec.matched_independent_scale(), spec.seed);
  }
  return gt;
}

/// Inference-time depth, standing in for a predicted depth map. Seeds differ from training.
inline DepthMap inference_depth(const DepthMap& gt, const ExperimentConfig& cfg, std::uint64_t stream) {
  const auto spec = cfg.noise_spec(derive_seed(cfg.eval_noise_seed, stream));
  switch (cfg.depth_source) {
    case DepthSource::gt: return gt;
    case DepthSource::gt_plus_structured: return structured_noise(gt, spec);
    case DepthSource::gt_plus_independent: return independent_noise(gt, spec.matched_independent_scale(), spec.seed);
  }
  return gt;
}

inline DecoderInput<float> decoder_input(const SceneInputs& s, std::vector<DepthMap> depths, const DecoderConfig& dc) {
  DecoderInput<float> in;
  in.latents = s.latents;
  if (dc.front_condition) in.front_image = s.front;
  if (dc.mode != AttentionMode::none) in.depths = depth_pyramid(depths, dc);
  return in;
}

/// Mean over views of the per-view colour MSE.
template <class T>
BasicTensor<T> reconstruction_loss(const std::vector<BasicTensor<T>>& outputs, const std::vector<Image>& targets) {
  BasicTensor<T> total;
  for (std::size_t v = 0; v < outputs.size(); ++v) {
    auto l = mse(outputs[v], image_to_tensor<T>(targets[v]));
    total = v == 0 ? l : add(total, l);
  }
  return scale(total, 1.0 / static_cast<double>(outputs.size()));
}

inline double evaluate_loss(const SceneInputs& s, const std::vector<DepthMap>& depths, const ExperimentConfig& cfg,
                            const Weights& w) {
  NoGradScope<float> off;
  const auto dc = cfg.decoder();
  const auto out = decoder_stack(decoder_input(s, depths, dc), dc, w);
  return reconstruction_loss(out, s.targets).item();
}

// ---------------------------------------------------------------------------
// Weights on disk: one MVT1 file per tensor plus manifest.json.

inline void save_weights(const std::filesystem::path& dir, Weights& w, const ExperimentConfig& cfg) {
  std::filesystem::create_directories(dir);
  nlohmann::ordered_json manifest;
  manifest["format"] = "MVT1";
  manifest["config"] = to_map(cfg);
  manifest["tensors"] = nlohmann::ordered_json::array();
  for (auto& [name, t] : w.named()) {
    const std::string file = name + ".mvt";
    save_mvt(dir / file, *t);
    manifest["tensors"].push_back({{"name", name}, {"file", file}, {"shape", t->shape()}});
  }
  std::ofstream os(dir / "manifest.json");
  os << manifest.dump(2) << "\n";
  if (!os) throw FormatError("cannot write " + (dir / "manifest.json").string());
}

inline Weights load_weights(const std::filesystem::path& dir, const ExperimentConfig& cfg) {
  const auto mpath = dir / "manifest.json";
  if (!std::filesystem::exists(mpath)) throw FormatError("missing weights: " + mpath.string());
  std::ifstream is(mpath);
  const auto manifest = nlohmann::json::parse(is);
  Rng rng(0);
  Weights w = Weights::init(cfg.decoder(), rng);
  std::map<std::string, std::string> files;
  for (const auto& t : manifest.at("tensors")) files[t.at("name").get<std::string>()] = t.at("file").get<std::string>();
  for (auto& [name, t] : w.named()) {
    const auto it = files.find(name);
    if (it == files.end()) throw FormatError("weights manifest lacks " + name);
    auto loaded = load_mvt<float>(dir / it->second);
    if (loaded.shape() != t->shape()) {
      throw DimensionError("weight " + name + " has shape " + shape_str(loaded.shape()) + ", config expects " +
                           shape_str(t->shape()));
    }
    *t = loaded;
  }
  return w;
}

// ---------------------------------------------------------------------------
// Training

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct RunRecord {
  ExperimentConfig config;
  std::vector<EpochLog> epochs;
  std::string status = "ok";
  std::string diagnostic;
  double wall_clock_s = 0.0;
  nlohmann::ordered_json metrics = nlohmann::ordered_json::object();

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["variant"] = variant_name(config.variant);
    j["status"] = status;
    if (!diagnostic.empty()) j["diagnostic"] = diagnostic;
    j["config"] = to_map(config);
    j["seeds"] = {{"data_seed", config.data_seed},
                  {"eval_seed", config.eval_seed},
                  {"train_seed", config.train_seed},
                  {"eval_noise_seed", config.eval_noise_seed}};
    j["epochs"] = nlohmann::ordered_json::array();
    for (const auto& e : epochs) {
      j["epochs"].push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}});
    }
    j["metrics"] = metrics;
    j["wall_clock_s"] = wall_clock_s;
    return j;
  }
};

struct TrainResult {
  Weights weights;
  RunRecord record;
};

using ProgressFn = std::function<void(const EpochLog&)>;

/// Parameter update with a fixed step size: plain gradient descent, or Adam
/// (β1 = 0.9, β2 = 0.999, ε = 1e-8) with bias correction.
class StepRule {
 public:
  StepRule(const ExperimentConfig& cfg, const std::vector<std::pair<std::string, BasicTensor<float>*>>& params)
      : kind_(cfg.optimizer), lr_(cfg.learning_rate) {
    if (kind_ == Optimizer::adam) {
      for (const auto& [name, p] : params) {
        m_.emplace_back(p->numel(), 0.0);
        v_.emplace_back(p->numel(), 0.0);
      }
    }
  }

  /// Returns false when an updated value is not finite.
  bool step(std::size_t index, std::span<float> data, std::span<const float> grad, std::uint64_t t) {
    bool ok = true;
    if (kind_ == Optimizer::gd) {
      for (std::size_t k = 0; k < data.size(); ++k) {
        data[k] = static_cast<float>(data[k] - lr_ * grad[k]);
        ok = ok && std::isfinite(data[k]);
      }
      return ok;
    }
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
    auto& m = m_[index];
    auto& v = v_[index];
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad[k];
      m[k] = b1 * m[k] + (1.0 - b1) * g;
      v[k] = b2 * v[k] + (1.0 - b2) * g * g;
      data[k] = static_cast<float>(data[k] - lr_ * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps));
      ok = ok && std::isfinite(data[k]);
    }
    return ok;
  }

 private:
  Optimizer kind_;
  double lr_;
  std::vector<std::vector<double>> m_, v_;
};

/// Seeded fixed-step gradient descent on the mean per-view MSE. Each step averages
/// the gradients of `batch` scenes. Throws NumericError (with the record attached to
/// the message) when the loss stops being finite.
inline TrainResult train(const ExperimentConfig& cfg, const std::vector<SceneRecord>& train_data,
                         const std::vector<SceneRecord>& val_data, const ProgressFn& progress = {}) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const auto dc = cfg.decoder();
  Rng init_rng(cfg.train_seed);
  TrainResult result{Weights::init(dc, init_rng), {}};
  result.record.config = cfg;
  auto params = result.weights.named();

  std::vector<SceneInputs> scenes, val;
  for (const auto& r : train_data) scenes.push_back(prepare_scene(r, cfg));
  for (const auto& r : val_data) val.push_back(prepare_scene(r, cfg));
  std::vector<std::vector<DepthMap>> val_depths;
  for (std::size_t s = 0; s < val.size(); ++s) {
    std::vector<DepthMap> d;
    for (std::size_t v = 0; v < val[s].depths.size(); ++v) d.push_back(inference_depth(val[s].depths[v], cfg, s * kNumViews + v));
    val_depths.push_back(std::move(d));
  }

  const std::size_t n = scenes.size();
  StepRule opt(cfg, params);
  std::uint64_t step = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(cfg.train_seed, kTagShuffle + static_cast<std::uint64_t>(epoch)));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch)) {
      const std::size_t stop = std::min(n, start + static_cast<std::size_t>(cfg.batch));
      const double inv_batch = 1.0 / static_cast<double>(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t s = order[i];
        const std::uint64_t stream = (static_cast<std::uint64_t>(epoch) * n + s);
        std::vector<DepthMap> depths;
        for (std::size_t v = 0; v < scenes[s].depths.size(); ++v) {
          depths.push_back(train_depth(scenes[s].depths[v], cfg, stream * kNumViews + v));
        }
        Rng jitter(derive_seed(cfg.train_seed, kTagJitter + stream));
        Tape<float> tape;
        typename Tape<float>::Scope scope(tape);
        double loss_value = 0.0;
        try {
          const auto out = decoder_stack(decoder_input(scenes[s], std::move(depths), dc), dc, result.weights, &jitter);
          const auto loss = scale(reconstruction_loss(out, scenes[s].targets), inv_batch);
          loss_value = loss.item() / inv_batch;
          backward(loss, tape);
        } catch (const NumericError& e) {
          result.record.status = "diverged";
          result.record.diagnostic = "epoch " + std::to_string(epoch) + ", scene " + std::to_string(s) + ": " + e.what();
          throw NumericError(result.record.to_json().dump());
        }
        epoch_loss += loss_value;
      }
      ++step;
      for (std::size_t pi = 0; pi < params.size(); ++pi) {
        auto& [name, p] = params[pi];
        if (!p->has_grad()) continue;
        if (!opt.step(pi, p->mutable_data(), p->grad(), step)) {
          result.record.status = "diverged";
          result.record.diagnostic = "epoch " + std::to_string(epoch) + ": parameter " + name + " is not finite";
          throw NumericError(result.record.to_json().dump());
        }
        p->zero_grad();
      }
    }

    EpochLog log{epoch, epoch_loss / static_cast<double>(n), 0.0};
    if (!val.empty()) {
      double vl = 0.0;
      for (std::size_t s = 0; s < val.size(); ++s) vl += evaluate_loss(val[s], val_depths[s], cfg, result.weights);
      log.val_loss = vl / static_cast<double>(val.size());
    }
    result.record.epochs.push_back(log);
    if (progress) progress(log);
  }
  result.record.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation

struct EvalRow {
  std::string variant;
  int scene = 0;
  std::string view;
  double psnr = 0.0;
  double ssim = 0.0;
  int corr_count = 0;
  double kv_floats = 0.0;
};

struct EvalSummary {
  std::string variant;
  std::string depth_source;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_corr = 0.0;
  long total_corr = 0;
  CostReport cost;
};

/// Per-view key/value floats summed over the decoder levels.
inline double kv_floats_per_view(const CostReport& r) {
  double kv = 0.0;
  for (const auto& l : r.levels) kv += l.kv_floats;
  return kv;
}

inline CostReport decoder_cost(const ExperimentConfig& cfg) {
  const auto dc = cfg.decoder();
  CostParams p;
  p.resolutions.clear();
  for (int l = 1; l <= dc.levels; ++l) p.resolutions.push_back(dc.resolution(l));
  p.n_p = dc.n_p_schedule;
  p.n_views = kNumViews;
  p.d = dc.d;
  p.n_line_samples = dc.n_line_samples;
  p.full_max_resolution = dc.full_max_resolution;
  return cost_model(dc.mode, p);
}

/// Decoded colour images of every view (rig order) with inference-time depth.
inline std::vector<Image> decode_scene(const SceneInputs& s, std::size_t scene_index, const ExperimentConfig& cfg,
                                       const Weights& w) {
  std::vector<DepthMap> depths;
  for (std::size_t v = 0; v < s.depths.size(); ++v) {
    depths.push_back(inference_depth(s.depths[v], cfg, scene_index * kNumViews + v));
  }
  NoGradScope<float> off;
  const auto dc = cfg.decoder();
  const auto out = decoder_stack(decoder_input(s, std::move(depths), dc), dc, w);
  std::vector<Image> images;
  for (const auto& t : out) images.push_back(tensor_to_image(t));
  return images;
}

/// Scores decoded views against ground truth. corr_count of view v matches it against the
/// next view in rig order (cyclic), restricted to v's foreground.
inline std::vector<EvalRow> score_views(const std::vector<Image>& decoded, const SceneRecord& rec, int scene,
                                        const ExperimentConfig& cfg, double kv_floats) {
  std::vector<EvalRow> rows;
  const auto m = cfg.matcher();
  for (std::size_t v = 0; v < decoded.size(); ++v) {
    const std::size_t nv = (v + 1) % decoded.size();
    EvalRow row;
    row.variant = variant_name(cfg.variant);
    row.scene = scene;
    row.view = std::string(view_name(rec.views[v].camera.view));
    row.psnr = psnr(decoded[v], rec.views[v].color);
    row.ssim = ssim(decoded[v], rec.views[v].color);
    row.corr_count = correspondence_count(decoded[v], rec.views[v].camera, decoded[nv], rec.views[nv].camera, m,
                                          &rec.views[v].depth);
    row.kv_floats = kv_floats;
    rows.push_back(row);
  }
  return rows;
}

inline EvalSummary summarize(const std::vector<EvalRow>& rows, const ExperimentConfig& cfg) {
  EvalSummary s;
  s.variant = variant_name(cfg.variant);
  s.depth_source = depth_source_name(cfg.depth_source);
  s.cost = decoder_cost(cfg);
  for (const auto& r : rows) {
    s.mean_psnr += r.psnr;
    s.mean_ssim += r.ssim;
    s.total_corr += r.corr_count;
  }
  const double n = rows.empty() ? 1.0 : static_cast<double>(rows.size());
  s.mean_psnr /= n;
  s.mean_ssim /= n;
  s.mean_corr = static_cast<double>(s.total_corr) / n;
  return s;
}

inline std::vector<EvalRow> evaluate(const ExperimentConfig& cfg, const Weights& w,
                                     const std::vector<SceneRecord>& heldout) {
  const double kv = kv_floats_per_view(decoder_cost(cfg));
  std::vector<EvalRow> rows;
  for (std::size_t s = 0; s < heldout.size(); ++s) {
    const auto inputs = prepare_scene(heldout[s], cfg);
    const auto decoded = decode_scene(inputs, s, cfg, w);
    const auto r = score_views(decoded, heldout[s], static_cast<int>(s), cfg, kv);
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

/// Ground truth scored against itself: every SSIM is 1 and every PSNR is +inf.
inline std::vector<EvalRow> evaluate_ground_truth(const ExperimentConfig& cfg, const std::vector<SceneRecord>& heldout) {
  std::vector<EvalRow> rows;
  for (std::size_t s = 0; s < heldout.size(); ++s) {
    std::vector<Image> gt;
    for (const auto& v : heldout[s].views) gt.push_back(v.color);
    auto r = score_views(gt, heldout[s], static_cast<int>(s), cfg, 0.0);
    for (auto& row : r) row.variant = "ground_truth";
    rows.insert(rows.end(), r.begin(), r.end());
  }
  return rows;
}

inline std::string csv_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return detail::fmt(v);
}

inline void write_eval_csv(std::ostream& os, const std::vector<EvalRow>& rows) {
  os << "variant,scene,view,psnr,ssim,corr_count,kv_floats\n";
  for (const auto& r : rows) {
    os << r.variant << ',' << r.scene << ',' << r.view << ',' << csv_number(r.psnr) << ',' << csv_number(r.ssim) << ','
       << r.corr_count << ',' << csv_number(r.kv_floats) << '\n';
  }
}

inline void write_train_csv(std::ostream& os, const RunRecord& rec) {
  os << "epoch,train_loss,val_loss\n";
  for (const auto& e : rec.epochs) os << e.epoch << ',' << csv_number(e.train_loss) << ',' << csv_number(e.val_loss) << '\n';
}

inline nlohmann::ordered_json cost_json(const CostReport& r) {
  nlohmann::ordered_json j;
  j["mode"] = std::string(mode_name(r.mode));
  j["levels"] = nlohmann::ordered_json::array();
  for (const auto& l : r.levels) {
    j["levels"].push_back({{"resolution", l.resolution},
                           {"keys_per_query", l.keys_per_query},
                           {"kv_floats", l.kv_floats},
                           {"attention_flops", l.attention_flops}});
  }
  j["total_kv_floats"] = r.total_kv_floats;
  j["total_flops"] = r.total_flops;
  return j;
}

inline nlohmann::ordered_json summary_json(const EvalSummary& s) {
  nlohmann::ordered_json j;
  j["variant"] = s.variant;
  j["depth_source"] = s.depth_source;
  j["mean_psnr"] = s.mean_psnr;
  j["mean_ssim"] = s.mean_ssim;
  j["mean_corr_count"] = s.mean_corr;
  j["total_corr_count"] = s.total_corr;
  j["cost"] = cost_json(s.cost);
  return j;
}

}  // namespace mvalign::harness
