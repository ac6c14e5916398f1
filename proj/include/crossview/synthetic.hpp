#pragma once

// Synthetic first/third-person pairs with a planted correspondence signal.
//
// Each scenario owns a smooth latent trajectory: coordinate 0 ramps linearly
// with normalized time, the remaining coordinates wiggle as short Fourier
// series with bounded amplitude. The ramp dominates, so latent distance grows
// with temporal offset and a perfect embedding separates close moments from
// far ones with margin to spare. Both videos of a pair sample the trajectory
// on the same normalized grid; the two viewpoints then push the latent
// through different fixed affine maps, which is exactly the nuisance a joint
// embedding has to undo. A configurable share of frames is replaced by
// viewpoint-specific clutter (a fixed centroid plus noise) carrying no
// trajectory information at all, which is what the frame selector is supposed
// to learn to discount. Scenarios come in groups of two pairs so evaluation
// can form ego/third combinations across distinct recordings of the same
// scenario, and each scenario carries a class id expressed as a latent offset
// so a classifier head has something real to transfer.

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <vector>

#include "crossview/errors.hpp"
#include "crossview/evaluation.hpp"
#include "crossview/io.hpp"
#include "crossview/math.hpp"
#include "crossview/rng.hpp"
#include "crossview/sampling.hpp"

namespace crossview {

struct SyntheticConfig {
  std::size_t n_pairs = 100;
  std::size_t frames_per_video = 64;
  double duration_seconds = 31.2;  // third-person length; first-person varies
  std::size_t latent_dim = 8;
  std::size_t feature_dim = 32;
  double informative_fraction = 0.5;
  double domain_noise_scale = 0.05;
  double uninformative_noise_scale = 1.0;
  std::size_t n_classes = 5;  // 0 leaves every pair unlabeled
  double ego_duration_jitter = 0.15;
  bool identity_transforms = false;  // emit raw latents (needs feature_dim == latent_dim)
  std::uint64_t seed = 0;
};

inline void apply_synthetic_config(std::map<std::string, std::string>& kv, SyntheticConfig& cfg) {
  using detail::take, detail::to_double, detail::to_u64, detail::to_bool;
  take(kv, "n_pairs", [&](auto& k, auto& v) { cfg.n_pairs = to_u64(k, v); });
  take(kv, "frames_per_video", [&](auto& k, auto& v) { cfg.frames_per_video = to_u64(k, v); });
  take(kv, "duration_seconds", [&](auto& k, auto& v) { cfg.duration_seconds = to_double(k, v); });
  take(kv, "latent_dim", [&](auto& k, auto& v) { cfg.latent_dim = to_u64(k, v); });
  take(kv, "feature_dim", [&](auto& k, auto& v) { cfg.feature_dim = to_u64(k, v); });
  take(kv, "informative_fraction",
       [&](auto& k, auto& v) { cfg.informative_fraction = to_double(k, v); });
  take(kv, "domain_noise_scale",
       [&](auto& k, auto& v) { cfg.domain_noise_scale = to_double(k, v); });
  take(kv, "uninformative_noise_scale",
       [&](auto& k, auto& v) { cfg.uninformative_noise_scale = to_double(k, v); });
  take(kv, "n_classes", [&](auto& k, auto& v) { cfg.n_classes = to_u64(k, v); });
  take(kv, "ego_duration_jitter",
       [&](auto& k, auto& v) { cfg.ego_duration_jitter = to_double(k, v); });
  take(kv, "identity_transforms",
       [&](auto& k, auto& v) { cfg.identity_transforms = to_bool(k, v); });
  take(kv, "seed", [&](auto& k, auto& v) { cfg.seed = to_u64(k, v); });
}

inline std::map<std::string, std::string> dump_synthetic_config(const SyntheticConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["n_pairs"] = std::to_string(cfg.n_pairs);
  kv["frames_per_video"] = std::to_string(cfg.frames_per_video);
  kv["duration_seconds"] = format_double(cfg.duration_seconds);
  kv["latent_dim"] = std::to_string(cfg.latent_dim);
  kv["feature_dim"] = std::to_string(cfg.feature_dim);
  kv["informative_fraction"] = format_double(cfg.informative_fraction);
  kv["domain_noise_scale"] = format_double(cfg.domain_noise_scale);
  kv["uninformative_noise_scale"] = format_double(cfg.uninformative_noise_scale);
  kv["n_classes"] = std::to_string(cfg.n_classes);
  kv["ego_duration_jitter"] = format_double(cfg.ego_duration_jitter);
  kv["identity_transforms"] = cfg.identity_transforms ? "true" : "false";
  kv["seed"] = std::to_string(cfg.seed);
  return kv;
}

namespace detail {

constexpr double kRampGain = 6.0;       // slope of latent coordinate 0
constexpr double kWiggleBudget = 0.5;   // per-coordinate amplitude sum
constexpr int kHarmonics = 3;
constexpr double kClassOffsetSigma = 2.0;
constexpr double kViewpointMapOverlap = 0.7;  // shared component of the two viewpoint maps

struct ScenarioShape {
  // amp[d][m], phase[d][m] for latent coordinates 1..latent_dim-1
  std::vector<std::array<double, kHarmonics>> amp;
  std::vector<std::array<double, kHarmonics>> phase;
  int class_id = -1;
};

inline ScenarioShape draw_scenario(const SyntheticConfig& cfg, std::size_t scenario_idx) {
  Rng rng(mix_seed(cfg.seed, mix_seed(fnv1a("scenario"), scenario_idx)));
  ScenarioShape s;
  s.amp.resize(cfg.latent_dim - 1);
  s.phase.resize(cfg.latent_dim - 1);
  for (std::size_t d = 0; d + 1 < cfg.latent_dim; ++d) {
    std::array<double, kHarmonics> g{};
    double total = 0.0;
    for (int m = 0; m < kHarmonics; ++m) {
      g[m] = rng.uniform(0.2, 1.0);
      total += g[m];
    }
    for (int m = 0; m < kHarmonics; ++m) {
      s.amp[d][m] = kWiggleBudget * g[m] / total;
      s.phase[d][m] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }
  if (cfg.n_classes > 0) s.class_id = static_cast<int>(scenario_idx % cfg.n_classes);
  return s;
}

// Latent trajectory value at normalized position in [0, 1].
inline Vector latent_at(const SyntheticConfig& cfg, const ScenarioShape& s,
                        const std::vector<Vector>& class_offsets, double pos) {
  Vector h(cfg.latent_dim, 0.0);
  h[0] = kRampGain * pos;
  for (std::size_t d = 0; d + 1 < cfg.latent_dim; ++d)
    for (int m = 0; m < kHarmonics; ++m)
      h[d + 1] += s.amp[d][m] * std::sin(2.0 * std::numbers::pi * (m + 1) * pos + s.phase[d][m]);
  if (s.class_id >= 0) {
    const Vector& c = class_offsets.at(static_cast<std::size_t>(s.class_id));
    for (std::size_t d = 0; d < cfg.latent_dim; ++d) h[d] += c[d];
  }
  return h;
}

struct ViewpointMaps {
  std::vector<Vector> transform[2];  // [modality] feature_dim x latent_dim rows
  Vector clutter_centroid[2];
  std::vector<Vector> class_offsets;
};

inline ViewpointMaps draw_maps(const SyntheticConfig& cfg) {
  Rng rng(mix_seed(cfg.seed, fnv1a("synthetic-global")));
  ViewpointMaps maps;
  const double sigma = 1.0 / std::sqrt(static_cast<double>(cfg.feature_dim));
  for (int m = 0; m < 2; ++m) {
    maps.transform[m].assign(cfg.feature_dim, Vector(cfg.latent_dim));
    for (auto& row : maps.transform[m])
      for (double& v : row) v = sigma * rng.normal();
    maps.clutter_centroid[m].resize(cfg.feature_dim);
    for (double& v : maps.clutter_centroid[m]) v = rng.normal();
  }
  // Two views of one recording go through the same extractor, so the maps
  // share a component. The blend keeps each entry at variance sigma^2.
  {
    const double a = kViewpointMapOverlap;
    const double b = std::sqrt(1.0 - a * a);
    for (std::size_t r = 0; r < cfg.feature_dim; ++r)
      for (std::size_t c = 0; c < cfg.latent_dim; ++c)
        maps.transform[1][r][c] =
            a * maps.transform[0][r][c] + b * maps.transform[1][r][c];
  }
  if (cfg.identity_transforms) {
    for (int m = 0; m < 2; ++m)
      for (std::size_t r = 0; r < cfg.feature_dim; ++r)
        for (std::size_t c = 0; c < cfg.latent_dim; ++c)
          maps.transform[m][r][c] = r == c ? 1.0 : 0.0;
  }
  maps.class_offsets.assign(cfg.n_classes, Vector(cfg.latent_dim, 0.0));
  for (auto& off : maps.class_offsets)
    for (std::size_t d = 1; d < cfg.latent_dim; ++d) off[d] = kClassOffsetSigma * rng.normal();
  return maps;
}

inline std::string zero_pad(std::size_t v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace detail

struct SyntheticDataset {
  PairIndex index;
  std::vector<ManifestEntry> manifest;
  std::vector<SidecarEntry> sidecar;
  std::map<std::string, FeatureData> files;  // relative path -> contents
};

inline void validate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.n_pairs < 2) throw ConfigError("synthetic: need at least two pairs");
  if (cfg.frames_per_video < 2) throw ConfigError("synthetic: need at least two frames per video");
  if (!(cfg.duration_seconds > 0.0)) throw ConfigError("synthetic: duration must be positive");
  if (cfg.latent_dim < 2) throw ConfigError("synthetic: latent_dim must be at least 2");
  if (cfg.feature_dim == 0) throw ConfigError("synthetic: feature_dim must be positive");
  if (!(cfg.informative_fraction > 0.0) || cfg.informative_fraction > 1.0)
    throw ConfigError("synthetic: informative_fraction must lie in (0, 1]");
  if (cfg.domain_noise_scale < 0.0 || cfg.uninformative_noise_scale < 0.0)
    throw ConfigError("synthetic: noise scales cannot be negative");
  if (!(cfg.ego_duration_jitter >= 0.0) || cfg.ego_duration_jitter >= 1.0)
    throw ConfigError("synthetic: ego_duration_jitter must lie in [0, 1)");
  if (cfg.identity_transforms && cfg.feature_dim != cfg.latent_dim)
    throw ConfigError("synthetic: identity transforms need feature_dim == latent_dim");
}

inline SyntheticDataset synthesize(const SyntheticConfig& cfg) {
  validate_synthetic(cfg);
  const detail::ViewpointMaps maps = detail::draw_maps(cfg);

  SyntheticDataset out;
  std::vector<FrameRecord> records;
  for (std::size_t p = 0; p < cfg.n_pairs; ++p) {
    const std::size_t scenario_idx = p / 2;
    const detail::ScenarioShape shape = detail::draw_scenario(cfg, scenario_idx);
    const std::string pair_id = "p" + detail::zero_pad(p, 3);
    const std::string scenario_tag = "s" + detail::zero_pad(scenario_idx, 3);

    Rng pair_rng(mix_seed(cfg.seed, mix_seed(fnv1a("pair"), p)));
    const double jitter = cfg.ego_duration_jitter;
    const double ego_factor = 1.0 - jitter + 2.0 * jitter * pair_rng.uniform();
    const double durations[2] = {cfg.duration_seconds, cfg.duration_seconds * ego_factor};

    SidecarEntry truth;
    truth.pair_id = pair_id;
    if (shape.class_id >= 0) truth.labels = {shape.class_id};

    for (int m = 0; m < 2; ++m) {
      const Modality modality = m == 0 ? Modality::Third : Modality::Ego;
      Rng frame_rng(mix_seed(cfg.seed, mix_seed(fnv1a(pair_id), 100 + m)));
      auto& informative = m == 0 ? truth.third_informative : truth.ego_informative;
      auto& latents = m == 0 ? truth.third_latent : truth.ego_latent;
      const std::string video_id = pair_id + (m == 0 ? "#third" : "#ego");
      for (std::size_t i = 0; i < cfg.frames_per_video; ++i) {
        const double pos = static_cast<double>(i) / static_cast<double>(cfg.frames_per_video - 1);
        const double t = pos * durations[m];
        const Vector h = detail::latent_at(cfg, shape, maps.class_offsets, pos);
        const bool info = frame_rng.uniform() < cfg.informative_fraction;
        Vector x(cfg.feature_dim, 0.0);
        if (info) {
          for (std::size_t r = 0; r < cfg.feature_dim; ++r) {
            for (std::size_t c = 0; c < cfg.latent_dim; ++c)
              x[r] += maps.transform[m][r][c] * h[c];
            x[r] += cfg.domain_noise_scale * frame_rng.normal();
          }
        } else {
          for (std::size_t r = 0; r < cfg.feature_dim; ++r)
            x[r] = maps.clutter_centroid[m][r] +
                   cfg.uninformative_noise_scale * frame_rng.normal();
        }
        records.push_back({video_id, pair_id, modality, t, x});
        informative.push_back(info ? 1 : 0);
        latents.push_back(h);
      }
    }
    out.sidecar.push_back(std::move(truth));

    ManifestEntry e;
    e.pair_id = pair_id;
    e.scenario_tag = scenario_tag;
    e.third_path = "features/" + pair_id + "_third.aofv";
    e.ego_path = "features/" + pair_id + "_ego.aofv";
    if (shape.class_id >= 0) e.labels = {shape.class_id};
    out.manifest.push_back(std::move(e));
  }

  out.index = build_pair_index(records);
  for (const ManifestEntry& e : out.manifest) {
    PairEntry& pair = out.index.pairs.at(out.index.by_id.at(e.pair_id));
    pair.scenario_tag = e.scenario_tag;
    pair.labels = e.labels;
  }

  for (const ManifestEntry& e : out.manifest) {
    const PairEntry& pair = out.index.pairs.at(out.index.by_id.at(e.pair_id));
    FeatureData third{pair.third.features.empty() ? cfg.feature_dim : pair.third.features[0].size(),
                      pair.third.timestamps, pair.third.features};
    FeatureData ego{pair.ego.features.empty() ? cfg.feature_dim : pair.ego.features[0].size(),
                    pair.ego.timestamps, pair.ego.features};
    out.files[e.third_path] = std::move(third);
    out.files[e.ego_path] = std::move(ego);
  }
  return out;
}

// Materializes manifest.jsonl, sidecar.jsonl and the feature files under
// `out_dir`. Manifest paths stay relative, so the directory is relocatable.
inline void write_dataset(const std::filesystem::path& out_dir, const SyntheticDataset& data) {
  std::filesystem::create_directories(out_dir / "features");
  for (const auto& [rel, contents] : data.files) write_feature_file(out_dir / rel, contents);
  write_manifest(out_dir / "manifest.jsonl", data.manifest);
  write_sidecar(out_dir / "sidecar.jsonl", data.sidecar);
}

// Embeds frames as their ground-truth latents; evaluation on top of this
// shows what the protocols report when the representation is ideal.
class OracleEmbedder : public Embedder {
 public:
  explicit OracleEmbedder(std::map<std::string, SidecarEntry> truth) : truth_(std::move(truth)) {}

  Vector embed(const PairEntry& pair, Stream s, std::size_t frame) const override {
    const SidecarEntry& e = entry(pair.pair_id);
    const auto& latents = s == Stream::Third ? e.third_latent : e.ego_latent;
    return latents.at(frame);
  }
  double score(const PairEntry&, Stream, std::size_t) const override { return 0.0; }

 private:
  const SidecarEntry& entry(const std::string& pair_id) const {
    auto it = truth_.find(pair_id);
    if (it == truth_.end()) throw MismatchError("no ground truth for pair " + pair_id);
    return it->second;
  }
  std::map<std::string, SidecarEntry> truth_;
};

}  // namespace crossview
