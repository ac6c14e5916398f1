#pragma once

// On-disk formats. Two little-endian binary containers (feature videos and
// training checkpoints), JSONL for manifests, ground-truth sidecars and
// results, and a flat `key = value` config syntax. Every writer goes through
// a temp-file-and-rename so readers never observe a half-written file, and
// nothing here embeds wall-clock time or absolute paths.

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "crossview/errors.hpp"
#include "crossview/math.hpp"
#include "crossview/model.hpp"
#include "crossview/sampling.hpp"
#include "crossview/training.hpp"

namespace crossview {

constexpr std::uint32_t kFeatureMagic = 0x5646'4f41u;     // "AOFV" little-endian
constexpr std::uint32_t kCheckpointMagic = 0x4b43'4f41u;  // "AOCK" little-endian
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline void put_f64(std::ostream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

inline void put_str(std::ostream& out, const std::string& s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void need(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n)
    throw CorruptionError(std::string("file ends inside ") + what);
}

inline std::uint32_t get_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  need(in, reinterpret_cast<char*>(b), 4, what);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::uint64_t get_u64(std::istream& in, const char* what) {
  unsigned char b[8];
  need(in, reinterpret_cast<char*>(b), 8, what);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline double get_f64(std::istream& in, const char* what) {
  const std::uint64_t bits = get_u64(in, what);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

inline std::string get_str(std::istream& in, const char* what) {
  const std::uint32_t n = get_u32(in, what);
  std::string s(n, '\0');
  if (n) need(in, s.data(), n, what);
  return s;
}

}  // namespace detail

// Writes `content` to `path` via a sibling temp file and an atomic rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IngestError("cannot open for writing: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IngestError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Shortest decimal form that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- Feature container ----

struct FeatureData {
  std::size_t dim = 0;
  std::vector<double> timestamps;  // strictly ascending, seconds from zero
  std::vector<Vector> features;
};

inline void write_feature_file(const std::filesystem::path& path, const FeatureData& data) {
  if (data.dim == 0) throw IngestError("feature file needs a positive dimension");
  if (data.timestamps.size() != data.features.size())
    throw ShapeError("feature file: timestamp and frame counts differ");
  for (std::size_t i = 0; i + 1 < data.timestamps.size(); ++i)
    if (!(data.timestamps[i] < data.timestamps[i + 1]))
      throw IngestError("feature file: timestamps must strictly ascend");
  std::ostringstream out(std::ios::binary);
  detail::put_u32(out, kFeatureMagic);
  detail::put_u32(out, kFeatureVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(data.dim));
  detail::put_u32(out, static_cast<std::uint32_t>(data.features.size()));
  for (double t : data.timestamps) detail::put_f64(out, t);
  for (const Vector& f : data.features) {
    if (f.size() != data.dim) throw ShapeError("feature file: frame dimension mismatch");
    for (double v : f) detail::put_f64(out, v);
  }
  write_file_atomic(path, out.str());
}

inline FeatureData read_feature_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open feature file: " + path.string());
  if (detail::get_u32(in, "header") != kFeatureMagic)
    throw FormatError("not a feature file: " + path.string());
  const std::uint32_t version = detail::get_u32(in, "header");
  if (version != kFeatureVersion)
    throw FormatError("unsupported feature file version " + std::to_string(version));
  FeatureData data;
  data.dim = detail::get_u32(in, "header");
  const std::uint32_t count = detail::get_u32(in, "header");
  if (data.dim == 0) throw FormatError("feature file declares dimension zero");
  data.timestamps.resize(count);
  for (auto& t : data.timestamps) t = detail::get_f64(in, "timestamps");
  for (std::size_t i = 0; i + 1 < data.timestamps.size(); ++i)
    if (!(data.timestamps[i] < data.timestamps[i + 1]))
      throw IngestError("feature file: timestamps must strictly ascend");
  data.features.assign(count, Vector(data.dim));
  for (auto& f : data.features)
    for (double& v : f) v = detail::get_f64(in, "frame data");
  // Trailing bytes mean the writer and reader disagree about the layout.
  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw CorruptionError("feature file has trailing bytes");
  return data;
}

// ---- Manifest ----

struct ManifestEntry {
  std::string pair_id;
  std::string scenario_tag;
  std::string third_path;  // relative to the manifest's directory
  std::string ego_path;
  std::vector<int> labels;
};

inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    try {
      e.pair_id = j.at("pair_id").get<std::string>();
      e.scenario_tag = j.value("scenario_tag", std::string{});
      e.third_path = j.at("third").get<std::string>();
      e.ego_path = j.at("ego").get<std::string>();
      if (j.contains("labels")) e.labels = j["labels"].get<std::vector<int>>();
    } catch (const nlohmann::json::exception& e2) {
      throw FormatError("manifest line " + std::to_string(lineno) + ": " + e2.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestEntry>& entries) {
  std::ostringstream out;
  for (const ManifestEntry& e : entries) {
    nlohmann::json j;
    j["pair_id"] = e.pair_id;
    j["scenario_tag"] = e.scenario_tag;
    j["third"] = e.third_path;
    j["ego"] = e.ego_path;
    j["labels"] = e.labels;
    out << j.dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

// Reads every referenced feature file and assembles the pair table. Feature
// paths resolve against the manifest's own directory, so a dataset moves as a
// unit.
inline PairIndex load_dataset(const std::filesystem::path& manifest_path) {
  const auto entries = read_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  std::vector<FrameRecord> records;
  for (const ManifestEntry& e : entries) {
    const FeatureData third = read_feature_file(base / e.third_path);
    const FeatureData ego = read_feature_file(base / e.ego_path);
    for (std::size_t i = 0; i < third.features.size(); ++i)
      records.push_back({e.pair_id + "#third", e.pair_id, Modality::Third,
                         third.timestamps[i], third.features[i]});
    for (std::size_t i = 0; i < ego.features.size(); ++i)
      records.push_back({e.pair_id + "#ego", e.pair_id, Modality::Ego,
                         ego.timestamps[i], ego.features[i]});
  }
  PairIndex index = build_pair_index(records);
  for (const ManifestEntry& e : entries) {
    PairEntry& pair = index.pairs.at(index.by_id.at(e.pair_id));
    pair.scenario_tag = e.scenario_tag;
    pair.labels = e.labels;
  }
  return index;
}

// ---- Ground-truth sidecar ----

struct SidecarEntry {
  std::string pair_id;
  std::vector<int> labels;
  std::vector<std::uint8_t> third_informative;
  std::vector<std::uint8_t> ego_informative;
  std::vector<Vector> third_latent;
  std::vector<Vector> ego_latent;
};

inline void write_sidecar(const std::filesystem::path& path,
                          const std::vector<SidecarEntry>& entries) {
  std::ostringstream out;
  for (const SidecarEntry& e : entries) {
    nlohmann::json j;
    j["pair_id"] = e.pair_id;
    j["labels"] = e.labels;
    j["third_informative"] = e.third_informative;
    j["ego_informative"] = e.ego_informative;
    j["third_latent"] = e.third_latent;
    j["ego_latent"] = e.ego_latent;
    out << j.dump() << "\n";
  }
  write_file_atomic(path, out.str());
}

inline std::map<std::string, SidecarEntry> read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open sidecar: " + path.string());
  std::map<std::string, SidecarEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      SidecarEntry e;
      e.pair_id = j.at("pair_id").get<std::string>();
      e.labels = j.value("labels", std::vector<int>{});
      e.third_informative = j.at("third_informative").get<std::vector<std::uint8_t>>();
      e.ego_informative = j.at("ego_informative").get<std::vector<std::uint8_t>>();
      e.third_latent = j.at("third_latent").get<std::vector<Vector>>();
      e.ego_latent = j.at("ego_latent").get<std::vector<Vector>>();
      entries[e.pair_id] = std::move(e);
    } catch (const nlohmann::json::exception& e2) {
      throw FormatError("sidecar line " + std::to_string(lineno) + ": " + e2.what());
    }
  }
  return entries;
}

// ---- Config files ----

// Line syntax: `key = value`, `#` comments, blank lines ignored.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const char* ws = " \t\r";
    const auto a = s.find_first_not_of(ws);
    if (a == std::string::npos) return std::string{};
    const auto b = s.find_last_not_of(ws);
    return s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected `key = value`");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    if (kv.count(key)) throw ConfigError("duplicate config key: " + key);
    kv[key] = value;
  }
  return kv;
}

inline std::map<std::string, std::string> read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

namespace detail {

inline double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": `" + value + "` is not a number");
  }
}

inline std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": `" + value + "` is not a non-negative integer");
  }
}

inline bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config key " + key + ": `" + value + "` is not a boolean");
}

template <typename F>
inline void take(std::map<std::string, std::string>& kv, const std::string& key, F&& apply) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  apply(it->first, it->second);
  kv.erase(it);
}

}  // namespace detail

// Consumes the training keys it recognizes; unrelated keys stay in `kv`.
inline void apply_train_config(std::map<std::string, std::string>& kv, TrainConfig& cfg) {
  using detail::take, detail::to_double, detail::to_u64, detail::to_bool;
  take(kv, "batch_size", [&](auto& k, auto& v) { cfg.batch_size = to_u64(k, v); });
  take(kv, "base_lr", [&](auto& k, auto& v) { cfg.base_lr = to_double(k, v); });
  take(kv, "lr_decay_factor", [&](auto& k, auto& v) { cfg.lr_decay_factor = to_double(k, v); });
  take(kv, "lr_decay_every", [&](auto& k, auto& v) { cfg.lr_decay_every = to_u64(k, v); });
  take(kv, "momentum", [&](auto& k, auto& v) { cfg.momentum = to_double(k, v); });
  take(kv, "epochs", [&](auto& k, auto& v) { cfg.epochs = to_u64(k, v); });
  take(kv, "triplets_per_pair", [&](auto& k, auto& v) { cfg.triplets_per_pair = to_u64(k, v); });
  take(kv, "k", [&](auto& k, auto& v) { cfg.k = to_double(k, v); });
  take(kv, "sigma_init", [&](auto& k, auto& v) {
    if (v == "first_exponent") cfg.sigma_init = SigmaInit::FirstExponent;
    else if (v == "one") cfg.sigma_init = SigmaInit::One;
    else throw ConfigError("config key " + k + ": expected first_exponent or one");
  });
  take(kv, "reset_accumulators_each_epoch",
       [&](auto& k, auto& v) { cfg.reset_accumulators_each_epoch = to_bool(k, v); });
  take(kv, "mixed_mode", [&](auto& k, auto& v) { cfg.mixed_mode = to_bool(k, v); });
  take(kv, "test_fraction", [&](auto& k, auto& v) { cfg.test_fraction = to_double(k, v); });
  take(kv, "seed", [&](auto& k, auto& v) { cfg.seed = to_u64(k, v); });
  take(kv, "delta", [&](auto& k, auto& v) { cfg.delta = to_double(k, v); });
  take(kv, "delta_prime", [&](auto& k, auto& v) { cfg.delta_prime = to_double(k, v); });
}

inline void apply_model_config(std::map<std::string, std::string>& kv, ModelConfig& cfg) {
  using detail::take, detail::to_double, detail::to_u64, detail::to_bool;
  take(kv, "feature_dim", [&](auto& k, auto& v) { cfg.feature_dim = to_u64(k, v); });
  take(kv, "embed_dim", [&](auto& k, auto& v) { cfg.embed_dim = to_u64(k, v); });
  take(kv, "hidden_dim", [&](auto& k, auto& v) { cfg.hidden_dim = to_u64(k, v); });
  take(kv, "n_classes", [&](auto& k, auto& v) { cfg.n_classes = to_u64(k, v); });
  take(kv, "share_trunk", [&](auto& k, auto& v) { cfg.share_trunk = to_bool(k, v); });
  take(kv, "share_ego_selector",
       [&](auto& k, auto& v) { cfg.share_ego_selector = to_bool(k, v); });
  take(kv, "scale_init_sigma", [&](auto& k, auto& v) { cfg.scale_init_sigma = to_double(k, v); });
  take(kv, "scale_floor", [&](auto& k, auto& v) { cfg.scale_floor = to_double(k, v); });
}

inline void reject_unknown_keys(const std::map<std::string, std::string>& kv) {
  if (kv.empty()) return;
  std::string msg = "unknown config key(s):";
  for (const auto& [k, v] : kv) msg += " " + k;
  throw ConfigError(msg);
}

inline std::map<std::string, std::string> dump_train_config(const TrainConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["batch_size"] = std::to_string(cfg.batch_size);
  kv["base_lr"] = format_double(cfg.base_lr);
  kv["lr_decay_factor"] = format_double(cfg.lr_decay_factor);
  kv["lr_decay_every"] = std::to_string(cfg.lr_decay_every);
  kv["momentum"] = format_double(cfg.momentum);
  kv["epochs"] = std::to_string(cfg.epochs);
  kv["triplets_per_pair"] = std::to_string(cfg.triplets_per_pair);
  kv["k"] = format_double(cfg.k);
  kv["sigma_init"] = cfg.sigma_init == SigmaInit::FirstExponent ? "first_exponent" : "one";
  kv["reset_accumulators_each_epoch"] = cfg.reset_accumulators_each_epoch ? "true" : "false";
  kv["mixed_mode"] = cfg.mixed_mode ? "true" : "false";
  kv["test_fraction"] = format_double(cfg.test_fraction);
  kv["seed"] = std::to_string(cfg.seed);
  kv["delta"] = format_double(cfg.delta);
  kv["delta_prime"] = format_double(cfg.delta_prime);
  return kv;
}

inline std::map<std::string, std::string> dump_model_config(const ModelConfig& cfg) {
  std::map<std::string, std::string> kv;
  kv["feature_dim"] = std::to_string(cfg.feature_dim);
  kv["embed_dim"] = std::to_string(cfg.embed_dim);
  kv["hidden_dim"] = std::to_string(cfg.hidden_dim);
  kv["n_classes"] = std::to_string(cfg.n_classes);
  kv["share_trunk"] = cfg.share_trunk ? "true" : "false";
  kv["share_ego_selector"] = cfg.share_ego_selector ? "true" : "false";
  kv["scale_init_sigma"] = format_double(cfg.scale_init_sigma);
  kv["scale_floor"] = format_double(cfg.scale_floor);
  return kv;
}

inline std::string render_config(const std::map<std::string, std::string>& kv) {
  std::ostringstream out;
  for (const auto& [k, v] : kv) out << k << " = " << v << "\n";
  return out.str();
}

// ---- Checkpoints ----

inline void save_checkpoint(const std::filesystem::path& path, const TrainState& state) {
  std::ostringstream out(std::ios::binary);
  detail::put_u32(out, kCheckpointMagic);
  detail::put_u32(out, kCheckpointVersion);

  std::map<std::string, std::string> kv = dump_train_config(state.config);
  for (const auto& [k, v] : dump_model_config(state.model_config)) kv[k] = v;
  const std::string config_text = render_config(kv);
  detail::put_u64(out, config_text.size());
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

  const ParamLayout layout = build_layout(state.model);
  const Vector flat = pack_parameters(state.model);
  detail::put_u32(out, static_cast<std::uint32_t>(layout.tensors.size()));
  for (const auto& t : layout.tensors) {
    detail::put_str(out, t.name);
    detail::put_u64(out, t.rows);
    detail::put_u64(out, t.cols);
    for (std::size_t i = 0; i < t.rows * t.cols; ++i) detail::put_f64(out, flat[t.offset + i]);
  }

  detail::put_u64(out, state.opt.velocity.size());
  for (double v : state.opt.velocity) detail::put_f64(out, v);
  detail::put_u64(out, state.opt.epochs_done);

  detail::put_u64(out, state.accums.size());
  for (const auto& [key, acc] : state.accums) {
    detail::put_str(out, key.video_id);
    out.put(static_cast<char>(key.modality == Modality::Ego ? 1 : 0));
    detail::put_f64(out, acc.sigma);
    detail::put_u64(out, acc.count);
    detail::put_f64(out, acc.k);
  }

  detail::put_f64(out, state.loss_state.L);
  detail::put_f64(out, state.loss_state.sigma);
  detail::put_u64(out, state.loss_state.count);
  detail::put_f64(out, state.loss_state.k);

  detail::put_u64(out, state.split.train_ids.size());
  for (const auto& id : state.split.train_ids) detail::put_str(out, id);
  detail::put_u64(out, state.split.test_ids.size());
  for (const auto& id : state.split.test_ids) detail::put_str(out, id);

  write_file_atomic(path, out.str());
}

inline TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestError("cannot open checkpoint: " + path.string());
  if (detail::get_u32(in, "header") != kCheckpointMagic)
    throw FormatError("not a checkpoint file: " + path.string());
  const std::uint32_t version = detail::get_u32(in, "header");
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));

  const std::uint64_t config_len = detail::get_u64(in, "config block");
  std::string config_text(config_len, '\0');
  if (config_len) detail::need(in, config_text.data(), config_len, "config block");

  TrainState state;
  auto kv = parse_config_text(config_text);
  apply_train_config(kv, state.config);
  apply_model_config(kv, state.model_config);
  reject_unknown_keys(kv);

  // Rebuild the parameter containers for this architecture, then overwrite
  // every tensor with the stored values.
  state.model = init_model(state.model_config, 0);
  const ParamLayout layout = build_layout(state.model);
  Vector flat(layout.total, 0.0);
  const std::uint32_t n_tensors = detail::get_u32(in, "tensor table");
  if (n_tensors != layout.tensors.size())
    throw CorruptionError("checkpoint tensor count does not match its config");
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const std::string name = detail::get_str(in, "tensor name");
    const std::uint64_t rows = detail::get_u64(in, "tensor shape");
    const std::uint64_t cols = detail::get_u64(in, "tensor shape");
    const auto& expect = layout.tensors[i];
    if (name != expect.name || rows != expect.rows || cols != expect.cols)
      throw CorruptionError("checkpoint tensor " + name + " does not match its config");
    for (std::size_t j = 0; j < rows * cols; ++j)
      flat[expect.offset + j] = detail::get_f64(in, "tensor data");
  }
  unpack_parameters(state.model, flat);

  const std::uint64_t vel_len = detail::get_u64(in, "optimizer");
  if (vel_len != layout.total) throw CorruptionError("checkpoint velocity length mismatch");
  state.opt.velocity.resize(vel_len);
  for (double& v : state.opt.velocity) v = detail::get_f64(in, "optimizer");
  state.opt.epochs_done = detail::get_u64(in, "optimizer");

  const std::uint64_t n_accums = detail::get_u64(in, "accumulators");
  for (std::uint64_t i = 0; i < n_accums; ++i) {
    AccumulatorKey key;
    key.video_id = detail::get_str(in, "accumulators");
    char m;
    detail::need(in, &m, 1, "accumulators");
    key.modality = m ? Modality::Ego : Modality::Third;
    VideoAccumulator acc;
    acc.sigma = detail::get_f64(in, "accumulators");
    acc.count = detail::get_u64(in, "accumulators");
    acc.k = detail::get_f64(in, "accumulators");
    state.accums[key] = acc;
  }

  state.loss_state.L = detail::get_f64(in, "loss state");
  state.loss_state.sigma = detail::get_f64(in, "loss state");
  state.loss_state.count = detail::get_u64(in, "loss state");
  state.loss_state.k = detail::get_f64(in, "loss state");

  const std::uint64_t n_train = detail::get_u64(in, "split");
  for (std::uint64_t i = 0; i < n_train; ++i)
    state.split.train_ids.push_back(detail::get_str(in, "split"));
  const std::uint64_t n_test = detail::get_u64(in, "split");
  for (std::uint64_t i = 0; i < n_test; ++i)
    state.split.test_ids.push_back(detail::get_str(in, "split"));

  char extra;
  in.read(&extra, 1);
  if (in.gcount() != 0) throw CorruptionError("checkpoint has trailing bytes");
  return state;
}

// ---- Run records ----

// Everything needed to reproduce an invocation: tool and format versions, the
// subcommand, and the full effective configuration. Deliberately free of
// timestamps, hostnames and absolute paths so identical runs write identical
// records.
inline std::string render_run_record(const std::string& subcommand,
                                     const std::map<std::string, std::string>& config_echo) {
  std::ostringstream out;
  out << "tool = crossview\n";
  out << "feature_format_version = " << kFeatureVersion << "\n";
  out << "checkpoint_format_version = " << kCheckpointVersion << "\n";
  out << "subcommand = " << subcommand << "\n";
  for (const auto& [k, v] : config_echo) out << "config." << k << " = " << v << "\n";
  return out.str();
}

}  // namespace crossview
