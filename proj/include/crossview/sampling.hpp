#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "crossview/errors.hpp"
#include "crossview/math.hpp"
#include "crossview/rng.hpp"

namespace crossview {

enum class Modality : int { Third = 0, Ego = 1 };

inline const char* modality_name(Modality m) {
  return m == Modality::Third ? "third" : "ego";
}

// One frame of one video, as produced by ingest.
struct FrameRecord {
  std::string video_id;
  std::string pair_id;
  Modality modality = Modality::Third;
  double timestamp = 0.0;
  Vector features;
};

// All frames of one video, timestamp sorted.
struct VideoFrames {
  std::string video_id;
  std::vector<double> timestamps;
  std::vector<Vector> features;

  std::size_t frame_count() const { return timestamps.size(); }
  // Timelines start at zero; the last timestamp doubles as the duration.
  double duration() const { return timestamps.empty() ? 0.0 : timestamps.back(); }
};

struct PairEntry {
  std::string pair_id;
  std::string scenario_tag;
  std::vector<int> labels;  // class ids; empty when the pair is unlabeled
  VideoFrames third;
  VideoFrames ego;
};

// Pairs sorted by pair_id so every downstream iteration order is canonical.
struct PairIndex {
  std::vector<PairEntry> pairs;
  std::map<std::string, std::size_t> by_id;
};

inline PairIndex build_pair_index(const std::vector<FrameRecord>& records) {
  struct Slot {
    std::string video_id;
    std::vector<std::pair<double, const FrameRecord*>> frames;
  };
  std::map<std::string, std::array<Slot, 2>> grouped;  // pair_id -> [third, ego]
  for (const FrameRecord& r : records) {
    if (r.features.empty()) throw IngestError("frame with empty feature vector in pair " + r.pair_id);
    check_finite(r.features, "frame features");
    Slot& slot = grouped[r.pair_id][static_cast<int>(r.modality)];
    if (slot.video_id.empty())
      slot.video_id = r.video_id;
    else if (slot.video_id != r.video_id)
      throw MalformedPairError("pair " + r.pair_id + " has two distinct " +
                               modality_name(r.modality) + " videos");
    slot.frames.emplace_back(r.timestamp, &r);
  }

  PairIndex index;
  for (auto& [pair_id, slots] : grouped) {
    for (int m = 0; m < 2; ++m)
      if (slots[m].video_id.empty())
        throw MalformedPairError("pair " + pair_id + " is missing its " +
                                 modality_name(static_cast<Modality>(m)) + " video");
    PairEntry entry;
    entry.pair_id = pair_id;
    for (int m = 0; m < 2; ++m) {
      Slot& slot = slots[m];
      std::stable_sort(slot.frames.begin(), slot.frames.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      VideoFrames& v = (m == 0) ? entry.third : entry.ego;
      v.video_id = slot.video_id;
      std::size_t expect_dim = slot.frames.front().second->features.size();
      for (auto& [t, rec] : slot.frames) {
        if (rec->features.size() != expect_dim)
          throw IngestError("inconsistent feature dim within video " + v.video_id);
        v.timestamps.push_back(t);
        v.features.push_back(rec->features);
      }
    }
    index.by_id[pair_id] = index.pairs.size();
    index.pairs.push_back(std::move(entry));
  }
  return index;
}

// Linear timeline correspondence: first-person videos are stretched to the
// third-person clock, so t on the third timeline lands at
// t * duration_first / duration_third on the first-person one.
inline double time_map(double t_third, double duration_third, double duration_first) {
  if (!(duration_third > 0.0) || !(duration_first > 0.0))
    throw DegenerateVideoError("time_map requires positive durations");
  return t_third * (duration_first / duration_third);
}

struct SamplerConfig {
  double delta = 1.0;         // positive window (seconds, open bound)
  double delta_prime = 10.0;  // negative exclusion radius (seconds, open bound)
  std::uint64_t seed = 0;
};

// A triplet is one third-person frame x plus a corresponding (z) and a
// non-corresponding (z') frame from one first-person video. For the
// same-person protocols x_pair == z_pair; the cross-person protocol points
// z_pair at the scenario partner.
struct TripletSample {
  std::size_t x_pair = 0;
  std::size_t x_frame = 0;
  std::size_t z_pair = 0;
  std::size_t z_frame = 0;
  std::size_t zp_frame = 0;

  auto key() const { return std::tie(x_pair, x_frame, z_pair, z_frame, zp_frame); }
  bool operator<(const TripletSample& o) const { return key() < o.key(); }
  bool operator==(const TripletSample& o) const { return key() == o.key(); }
};

namespace detail {

struct CandidateSets {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
};

inline CandidateSets triplet_candidates(const VideoFrames& ego, double mapped_t,
                                        const SamplerConfig& cfg) {
  CandidateSets c;
  for (std::size_t j = 0; j < ego.frame_count(); ++j) {
    const double gap = std::abs(ego.timestamps[j] - mapped_t);
    if (gap < cfg.delta) c.positives.push_back(j);
    if (gap > cfg.delta_prime) c.negatives.push_back(j);
  }
  return c;
}

inline void require_nonempty(const PairEntry& a, const PairEntry& b) {
  if (a.third.frame_count() == 0)
    throw EmptyVideoError("pair " + a.pair_id + " has an empty third-person video");
  if (b.ego.frame_count() == 0)
    throw EmptyVideoError("pair " + b.pair_id + " has an empty first-person video");
}

}  // namespace detail

// Draws one training triplet: x uniform over the third-person frames that
// admit both a positive and a negative, then z and z' uniform over the
// respective candidate sets. Throws when no frame x qualifies.
inline TripletSample sample_triplet(const PairIndex& index, std::size_t pair_idx,
                                    const SamplerConfig& cfg, Rng& rng) {
  const PairEntry& pair = index.pairs.at(pair_idx);
  detail::require_nonempty(pair, pair);
  const double dur_t = pair.third.duration();
  const double dur_e = pair.ego.duration();
  std::vector<std::size_t> valid_x;
  std::vector<detail::CandidateSets> cands;
  for (std::size_t i = 0; i < pair.third.frame_count(); ++i) {
    const double mapped = time_map(pair.third.timestamps[i], dur_t, dur_e);
    auto c = detail::triplet_candidates(pair.ego, mapped, cfg);
    if (!c.positives.empty() && !c.negatives.empty()) {
      valid_x.push_back(i);
      cands.push_back(std::move(c));
    }
  }
  if (valid_x.empty())
    throw InfeasiblePairError("pair " + pair.pair_id +
                              " admits no triplet under the configured windows");
  const std::size_t pick = rng.index(valid_x.size());
  const auto& c = cands[pick];
  TripletSample s;
  s.x_pair = pair_idx;
  s.z_pair = pair_idx;
  s.x_frame = valid_x[pick];
  s.z_frame = c.positives[rng.index(c.positives.size())];
  s.zp_frame = c.negatives[rng.index(c.negatives.size())];
  return s;
}

// Deterministic evaluation triplets across two pairs that share a scenario:
// x runs over every third-person frame of pair_a, z is the ego frame of
// pair_b closest to the mapped time (earliest frame wins a tie), z' is drawn
// beyond delta_prime with an rng seeded from (cfg.seed, pair ids), so the
// list is a pure function of the inputs. Frames that admit no positive
// within delta or no negative are skipped.
inline std::vector<TripletSample> cross_person_triplets(const PairIndex& index,
                                                        std::size_t pair_a,
                                                        std::size_t pair_b,
                                                        const SamplerConfig& cfg) {
  const PairEntry& a = index.pairs.at(pair_a);
  const PairEntry& b = index.pairs.at(pair_b);
  if (a.scenario_tag != b.scenario_tag)
    throw MismatchError("pairs " + a.pair_id + " and " + b.pair_id +
                        " are from different scenarios");
  detail::require_nonempty(a, b);
  Rng rng(mix_seed(cfg.seed, mix_seed(fnv1a(a.pair_id), fnv1a(b.pair_id))));
  const double dur_t = a.third.duration();
  const double dur_e = b.ego.duration();
  std::vector<TripletSample> out;
  for (std::size_t i = 0; i < a.third.frame_count(); ++i) {
    const double mapped = time_map(a.third.timestamps[i], dur_t, dur_e);
    std::size_t best = 0;
    double best_gap = std::abs(b.ego.timestamps[0] - mapped);
    for (std::size_t j = 1; j < b.ego.frame_count(); ++j) {
      const double gap = std::abs(b.ego.timestamps[j] - mapped);
      if (gap < best_gap) {
        best = j;
        best_gap = gap;
      }
    }
    std::vector<std::size_t> negatives;
    for (std::size_t j = 0; j < b.ego.frame_count(); ++j)
      if (std::abs(b.ego.timestamps[j] - mapped) > cfg.delta_prime) negatives.push_back(j);
    if (best_gap >= cfg.delta || negatives.empty()) continue;
    TripletSample s;
    s.x_pair = pair_a;
    s.z_pair = pair_b;
    s.x_frame = i;
    s.z_frame = best;
    s.zp_frame = negatives[rng.index(negatives.size())];
    out.push_back(s);
  }
  if (out.empty())
    throw InfeasiblePairError("pairs " + a.pair_id + "/" + b.pair_id +
                              " admit no evaluation triplet");
  return out;
}

inline std::vector<TripletSample> enumerate_test_triplets(const PairIndex& index,
                                                          std::size_t pair_idx,
                                                          const SamplerConfig& cfg) {
  return cross_person_triplets(index, pair_idx, pair_idx, cfg);
}

// Pair-level train/test split. Ids are shuffled with the given seed after
// canonical sorting; the last `test_fraction` of the shuffle becomes the
// held-out set (at least one pair when any exist).
struct SplitManifest {
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

inline SplitManifest split_pairs(const PairIndex& index, double test_fraction,
                                 std::uint64_t seed) {
  if (!(test_fraction > 0.0) || !(test_fraction < 1.0))
    throw ConfigError("split fraction must lie strictly between 0 and 1");
  std::vector<std::string> ids;
  for (const auto& p : index.pairs) ids.push_back(p.pair_id);
  Rng rng(mix_seed(seed, fnv1a("pair-split")));
  rng.shuffle(ids);
  std::size_t n_test = static_cast<std::size_t>(ids.size() * test_fraction);
  if (n_test == 0 && !ids.empty()) n_test = 1;
  SplitManifest split;
  split.train_ids.assign(ids.begin(), ids.end() - n_test);
  split.test_ids.assign(ids.end() - n_test, ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

}  // namespace crossview
