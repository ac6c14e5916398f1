// Command-line front end: synthetic data generation, training, the three
// evaluation protocols, retrieval and checkpoint inspection. Every command
// is deterministic for fixed inputs; outputs carry no timestamps so repeated
// runs are byte-identical.

#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "crossview/crossview.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace crossview;

namespace {

// Command-line problems that CLI11 cannot express (conditional requirements).
struct UsageFailure {
  std::string msg;
};

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
};

std::map<std::string, std::string> load_config(const CommonOpts& c) {
  if (c.config_path.empty()) return {};
  return read_config_file(c.config_path);
}

void write_lines(const fs::path& path, const std::vector<json>& rows) {
  std::ostringstream out;
  for (const json& r : rows) out << r.dump() << "\n";
  write_file_atomic(path, out.str());
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::string>& rows) {
  std::ostringstream out;
  out << header << "\n";
  for (const auto& r : rows) out << r << "\n";
  write_file_atomic(path, out.str());
}

// ---- synth ----

int run_synth(const CommonOpts& common, const std::string& out_dir) {
  auto kv = load_config(common);
  SyntheticConfig cfg;
  apply_synthetic_config(kv, cfg);
  reject_unknown_keys(kv);
  if (common.seed) cfg.seed = *common.seed;

  const SyntheticDataset data = synthesize(cfg);
  write_dataset(out_dir, data);
  write_file_atomic(fs::path(out_dir) / "run_record.txt",
                    render_run_record("synth", dump_synthetic_config(cfg)));
  std::cout << "wrote " << data.manifest.size() << " pairs to " << out_dir << "\n";
  return 0;
}

// ---- train ----

int run_train(const CommonOpts& common, const std::string& data_path,
              const std::string& out_dir, const std::string& dump_triplets) {
  auto kv = load_config(common);
  TrainConfig tc;
  ModelConfig mc;
  apply_train_config(kv, tc);
  apply_model_config(kv, mc);
  reject_unknown_keys(kv);
  if (common.seed) tc.seed = *common.seed;

  const PairIndex index = load_dataset(data_path);
  if (index.pairs.empty()) throw IngestError("dataset is empty");
  if (mc.feature_dim == 0) mc.feature_dim = index.pairs.front().third.features.at(0).size();
  if (tc.mixed_mode && mc.n_classes == 0) {
    int max_label = -1;
    for (const auto& p : index.pairs)
      for (int c : p.labels) max_label = std::max(max_label, c);
    if (max_label < 0) throw ConfigError("mixed_mode needs labels in the dataset");
    mc.n_classes = static_cast<std::size_t>(max_label + 1);
  }

  std::vector<json> log_rows;
  const TrainState state = train(index, mc, tc, [&](std::size_t epoch, const TrainState& st) {
    json row;
    row["epoch"] = epoch;
    row["learning_rate"] = learning_rate_at(st.config, epoch);
    row["running_loss"] = running_loss_level(st.loss_state);
    row["updates_seen"] = st.loss_state.count;
    log_rows.push_back(std::move(row));
    std::cout << "epoch " << epoch << "  lr " << format_double(learning_rate_at(st.config, epoch))
              << "  running loss " << format_double(running_loss_level(st.loss_state)) << "\n";
  });

  fs::create_directories(out_dir);
  save_checkpoint(fs::path(out_dir) / "checkpoint.aock", state);
  write_lines(fs::path(out_dir) / "train_log.jsonl", log_rows);

  std::map<std::string, std::string> echo = dump_train_config(tc);
  for (const auto& [k, v] : dump_model_config(mc)) echo[k] = v;
  write_file_atomic(fs::path(out_dir) / "run_record.txt", render_run_record("train", echo));

  if (!dump_triplets.empty()) {
    std::vector<std::size_t> train_pairs;
    for (const auto& id : state.split.train_ids) train_pairs.push_back(index.by_id.at(id));
    std::vector<json> rows;
    for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
      Rng rng = epoch_stream_rng(tc, epoch);
      for (const TripletSample& t : epoch_triplet_stream(index, train_pairs, tc, rng)) {
        json row;
        row["epoch"] = epoch;
        row["x_pair"] = index.pairs[t.x_pair].pair_id;
        row["x_frame"] = t.x_frame;
        row["z_pair"] = index.pairs[t.z_pair].pair_id;
        row["z_frame"] = t.z_frame;
        row["zp_frame"] = t.zp_frame;
        rows.push_back(std::move(row));
      }
    }
    write_lines(dump_triplets, rows);
  }

  std::cout << "checkpoint: " << (fs::path(out_dir) / "checkpoint.aock").string() << "\n";
  return 0;
}

// ---- shared eval plumbing ----

struct EvalContext {
  PairIndex index;
  std::optional<TrainState> state;
  std::unique_ptr<Embedder> embedder;
  std::vector<std::size_t> selected;  // pair indices under evaluation
  SamplerConfig sampler;
};

EvalContext make_eval_context(const CommonOpts& common, const std::string& data_path,
                              const std::string& ckpt_path, const std::string& embedder_kind,
                              const std::string& sidecar_path, const std::string& split_choice) {
  EvalContext ctx;
  ctx.index = load_dataset(data_path);
  if (!ckpt_path.empty()) ctx.state = load_checkpoint(ckpt_path);

  if (embedder_kind == "model") {
    if (!ctx.state) throw UsageFailure{"--embedder model needs --checkpoint"};
    ctx.embedder = std::make_unique<ModelEmbedder>(ctx.state->model);
  } else if (embedder_kind == "oracle") {
    if (sidecar_path.empty()) throw UsageFailure{"--embedder oracle needs --sidecar"};
    ctx.embedder = std::make_unique<OracleEmbedder>(read_sidecar(sidecar_path));
  } else if (embedder_kind == "random") {
    const std::size_t dim = ctx.state ? ctx.state->model_config.embed_dim : 32;
    ctx.embedder = std::make_unique<RandomEmbedder>(dim, common.seed.value_or(0));
  } else if (embedder_kind == "identity") {
    ctx.embedder = std::make_unique<IdentityEmbedder>();
  } else {
    throw UsageFailure{"unknown embedder: " + embedder_kind};
  }

  std::vector<std::string> ids;
  if (ctx.state) {
    if (split_choice == "test") ids = ctx.state->split.test_ids;
    else if (split_choice == "train") ids = ctx.state->split.train_ids;
    else if (split_choice == "all") {
      ids = ctx.state->split.train_ids;
      ids.insert(ids.end(), ctx.state->split.test_ids.begin(), ctx.state->split.test_ids.end());
      std::sort(ids.begin(), ids.end());
    } else {
      throw UsageFailure{"unknown split: " + split_choice};
    }
    for (const auto& id : ids) {
      auto it = ctx.index.by_id.find(id);
      if (it == ctx.index.by_id.end())
        throw MismatchError("checkpoint split names pair " + id + " absent from the dataset");
      ctx.selected.push_back(it->second);
    }
  } else {
    if (split_choice != "all" && split_choice != "test")
      throw UsageFailure{"--split " + split_choice + " needs --checkpoint"};
    for (std::size_t i = 0; i < ctx.index.pairs.size(); ++i) ctx.selected.push_back(i);
  }
  if (ctx.selected.empty()) throw ConfigError("no pairs selected for evaluation");

  if (ctx.state)
    ctx.sampler = {ctx.state->config.delta, ctx.state->config.delta_prime,
                   ctx.state->config.seed};
  else
    ctx.sampler.seed = common.seed.value_or(0);
  return ctx;
}

std::string fraction_label(double f) { return format_double(f); }

// ---- eval corr ----

int run_eval_corr(const CommonOpts& common, const std::string& data_path,
                  const std::string& ckpt_path, const std::string& out_dir,
                  const std::string& embedder_kind, const std::string& sidecar_path,
                  const std::string& split_choice, const std::string& weighting,
                  std::vector<double> fractions) {
  EvalContext ctx = make_eval_context(common, data_path, ckpt_path, embedder_kind,
                                      sidecar_path, split_choice);
  WeightScheme scheme;
  if (weighting == "selector") scheme = WeightScheme::Selector;
  else if (weighting == "margin") scheme = WeightScheme::Margin;
  else throw UsageFailure{"unknown weighting: " + weighting};

  // Same-person triplets per pair, plus cross-recording triplets for every
  // ordered pair of distinct selected pairs that share a scenario tag.
  std::vector<TripletSample> same, cross;
  for (std::size_t p : ctx.selected) {
    try {
      auto t = enumerate_test_triplets(ctx.index, p, ctx.sampler);
      same.insert(same.end(), t.begin(), t.end());
    } catch (const InfeasiblePairError& e) {
      std::cerr << "warning: " << e.what() << "\n";
    }
  }
  for (std::size_t a : ctx.selected) {
    for (std::size_t b : ctx.selected) {
      if (a == b) continue;
      if (ctx.index.pairs[a].scenario_tag.empty() ||
          ctx.index.pairs[a].scenario_tag != ctx.index.pairs[b].scenario_tag)
        continue;
      try {
        auto t = cross_person_triplets(ctx.index, a, b, ctx.sampler);
        cross.insert(cross.end(), t.begin(), t.end());
      } catch (const InfeasiblePairError& e) {
        std::cerr << "warning: " << e.what() << "\n";
      }
    }
  }
  if (same.empty()) throw ConfigError("no feasible evaluation triplets");

  std::vector<json> rows;
  std::vector<std::string> csv;
  auto emit = [&](const std::string& block, const CorrespondenceResult& r) {
    json all;
    all["block"] = block;
    all["weighting"] = weighting;
    all["fraction"] = "all";
    all["accuracy"] = r.accuracy_all;
    all["n"] = r.n_triplets;
    rows.push_back(all);
    csv.push_back(block + "," + weighting + ",all," + format_double(r.accuracy_all) + "," +
                  std::to_string(r.n_triplets));
    std::cout << block << " accuracy (all, n=" << r.n_triplets
              << "): " << format_double(r.accuracy_all) << "\n";
    for (const auto& [f, acc] : r.accuracy_at) {
      json row;
      row["block"] = block;
      row["weighting"] = weighting;
      row["fraction"] = f;
      row["accuracy"] = acc;
      row["n"] = r.n_selected.at(f);
      rows.push_back(row);
      csv.push_back(block + "," + weighting + "," + fraction_label(f) + "," +
                    format_double(acc) + "," + std::to_string(r.n_selected.at(f)));
      std::cout << block << " accuracy (top " << fraction_label(f)
                << ", n=" << r.n_selected.at(f) << "): " << format_double(acc) << "\n";
    }
  };

  emit("same_person", correspondence_accuracy(*ctx.embedder, ctx.index, same, fractions, scheme));
  if (!cross.empty())
    emit("different_person",
         correspondence_accuracy(*ctx.embedder, ctx.index, cross, fractions, scheme));

  fs::create_directories(out_dir);
  write_lines(fs::path(out_dir) / "corr.jsonl", rows);
  write_csv(fs::path(out_dir) / "corr.csv", "block,weighting,fraction,accuracy,n", csv);
  std::map<std::string, std::string> echo;
  echo["embedder"] = embedder_kind;
  echo["weighting"] = weighting;
  echo["split"] = split_choice;
  write_file_atomic(fs::path(out_dir) / "run_record.txt", render_run_record("eval corr", echo));
  return 0;
}

// ---- eval align ----

int run_eval_align(const CommonOpts& common, const std::string& data_path,
                   const std::string& ckpt_path, const std::string& out_dir,
                   const std::string& embedder_kind, const std::string& sidecar_path,
                   const std::string& split_choice, double frame_rate_hint) {
  EvalContext ctx = make_eval_context(common, data_path, ckpt_path, embedder_kind,
                                      sidecar_path, split_choice);
  std::vector<json> rows;
  std::vector<std::string> csv;
  std::vector<double> errors;
  for (std::size_t p : ctx.selected) {
    const AlignmentChoice c = align_pair(*ctx.embedder, ctx.index, p, frame_rate_hint);
    errors.push_back(c.error_seconds);
    const std::string& id = ctx.index.pairs[p].pair_id;
    json row;
    row["pair_id"] = id;
    row["ego_start"] = c.ego_start;
    row["third_start"] = c.third_start;
    row["error_seconds"] = c.error_seconds;
    rows.push_back(row);
    csv.push_back(id + "," + format_double(c.ego_start) + "," + format_double(c.third_start) +
                  "," + format_double(c.error_seconds));
  }
  const double med = median_of(errors);
  const double mean = std::accumulate(errors.begin(), errors.end(), 0.0) /
                      static_cast<double>(errors.size());
  json summary;
  summary["median_error_seconds"] = med;
  summary["mean_error_seconds"] = mean;
  rows.push_back(summary);
  std::cout << "alignment error over " << errors.size() << " pairs: median "
            << format_double(med) << "s, mean " << format_double(mean) << "s\n";

  fs::create_directories(out_dir);
  write_lines(fs::path(out_dir) / "align.jsonl", rows);
  write_csv(fs::path(out_dir) / "align.csv", "pair_id,ego_start,third_start,error_seconds", csv);
  std::map<std::string, std::string> echo;
  echo["embedder"] = embedder_kind;
  echo["split"] = split_choice;
  echo["frame_rate_hint"] = format_double(frame_rate_hint);
  write_file_atomic(fs::path(out_dir) / "run_record.txt", render_run_record("eval align", echo));
  return 0;
}

// ---- eval zeroshot ----

int run_eval_zeroshot(const CommonOpts& common, const std::string& data_path,
                      const std::string& ckpt_path, const std::string& out_dir,
                      const std::string& split_choice) {
  EvalContext ctx = make_eval_context(common, data_path, ckpt_path, "model", "", split_choice);
  const ModelParameters& model = ctx.state->model;
  const std::size_t n_classes = model.config.n_classes;

  std::vector<Vector> scores;
  std::vector<std::vector<std::uint8_t>> labels;
  std::vector<std::string> ids;
  for (std::size_t p : ctx.selected) {
    const PairEntry& pair = ctx.index.pairs[p];
    scores.push_back(zero_shot_predict(model, pair.ego));
    std::vector<std::uint8_t> y(n_classes, 0);
    for (int c : pair.labels) {
      if (c < 0 || static_cast<std::size_t>(c) >= n_classes)
        throw ConfigError("label " + std::to_string(c) + " outside the class range");
      y[static_cast<std::size_t>(c)] = 1;
    }
    labels.push_back(std::move(y));
    ids.push_back(pair.pair_id);
  }
  const MapResult r = video_map(scores, labels);

  std::vector<json> rows;
  std::vector<std::string> csv;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (!r.class_used[c]) continue;
    json row;
    row["class"] = c;
    row["ap"] = r.per_class_ap[c];
    rows.push_back(row);
    csv.push_back(std::to_string(c) + "," + format_double(r.per_class_ap[c]));
  }
  json summary;
  summary["map"] = r.mean_ap;
  rows.push_back(summary);
  std::cout << "mAP over " << ids.size() << " first-person videos: " << format_double(r.mean_ap)
            << "\n";

  fs::create_directories(out_dir);
  write_lines(fs::path(out_dir) / "zeroshot.jsonl", rows);
  write_csv(fs::path(out_dir) / "zeroshot.csv", "class,ap", csv);
  std::map<std::string, std::string> echo;
  echo["split"] = split_choice;
  write_file_atomic(fs::path(out_dir) / "run_record.txt",
                    render_run_record("eval zeroshot", echo));
  return 0;
}

// ---- retrieve ----

int run_retrieve(const CommonOpts& common, const std::string& data_path,
                 const std::string& ckpt_path, const std::string& query_pair,
                 const std::string& query_stream, std::size_t query_frame, std::size_t k,
                 const std::string& gallery_stream, const std::string& split_choice,
                 const std::string& out_path) {
  EvalContext ctx = make_eval_context(common, data_path, ckpt_path, "model", "", split_choice);

  auto stream_of = [](const std::string& s) {
    if (s == "third") return Stream::Third;
    if (s == "ego") return Stream::EgoPos;
    throw UsageFailure{"stream must be `third` or `ego`, got " + s};
  };
  const Stream qs = stream_of(query_stream);
  const Stream gs = stream_of(gallery_stream);

  auto qit = ctx.index.by_id.find(query_pair);
  if (qit == ctx.index.by_id.end()) throw MismatchError("unknown pair: " + query_pair);
  const Vector query = ctx.embedder->embed(ctx.index.pairs[qit->second], qs, query_frame);

  struct GalleryRef {
    std::string pair_id;
    std::size_t frame;
    double timestamp;
  };
  std::vector<GalleryRef> refs;
  std::vector<Vector> gallery;
  for (std::size_t p : ctx.selected) {
    const PairEntry& pair = ctx.index.pairs[p];
    const VideoFrames& video = gs == Stream::Third ? pair.third : pair.ego;
    for (std::size_t f = 0; f < video.frame_count(); ++f) {
      refs.push_back({pair.pair_id, f, video.timestamps[f]});
      gallery.push_back(ctx.embedder->embed(pair, gs, f));
    }
  }

  const auto neighbors = nearest_neighbors(query, gallery, std::min(k, gallery.size()));
  std::vector<json> rows;
  for (std::size_t rank = 0; rank < neighbors.size(); ++rank) {
    const GalleryRef& ref = refs[neighbors[rank].index];
    std::cout << rank + 1 << ". " << ref.pair_id << " frame " << ref.frame << " (t="
              << format_double(ref.timestamp)
              << ")  distance " << format_double(neighbors[rank].distance) << "\n";
    json row;
    row["rank"] = rank + 1;
    row["pair_id"] = ref.pair_id;
    row["frame"] = ref.frame;
    row["timestamp"] = ref.timestamp;
    row["distance"] = neighbors[rank].distance;
    rows.push_back(row);
  }
  if (!out_path.empty()) write_lines(out_path, rows);
  return 0;
}

// ---- inspect ----

int run_inspect(const std::string& ckpt_path, bool show_defaults) {
  if (show_defaults) {
    std::map<std::string, std::string> kv = dump_train_config(TrainConfig{});
    for (const auto& [k, v] : dump_model_config(ModelConfig{})) kv[k] = v;
    std::cout << render_config(kv);
    return 0;
  }
  if (ckpt_path.empty()) throw UsageFailure{"inspect needs --checkpoint or --defaults"};
  const TrainState state = load_checkpoint(ckpt_path);
  std::map<std::string, std::string> kv = dump_train_config(state.config);
  for (const auto& [k, v] : dump_model_config(state.model_config)) kv[k] = v;
  std::cout << render_config(kv);
  std::cout << "epochs_done = " << state.opt.epochs_done << "\n";
  std::cout << "train_pairs = " << state.split.train_ids.size() << "\n";
  std::cout << "test_pairs = " << state.split.test_ids.size() << "\n";
  std::cout << "accumulators = " << state.accums.size() << "\n";
  std::cout << "updates_seen = " << state.loss_state.count << "\n";
  if (state.loss_state.count > 0)
    std::cout << "running_loss = " << format_double(running_loss_level(state.loss_state)) << "\n";
  const ParamLayout layout = build_layout(state.model);
  for (const auto& t : layout.tensors)
    std::cout << "tensor " << t.name << " [" << t.rows << " x " << t.cols << "]\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint first/third-person frame embedding toolkit"};
  app.require_subcommand(1);

  CommonOpts common;
  app.add_option("--config", common.config_path, "key = value config file");
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "seed override");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic paired dataset");
  std::string synth_out;
  synth->add_option("--out", synth_out, "output directory")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "train a joint embedding");
  std::string train_data, train_out, train_dump;
  train_cmd->add_option("--data", train_data, "manifest path")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--dump-triplets", train_dump, "write the sampled triplet stream here");

  // eval + nested protocols
  auto* eval_cmd = app.add_subcommand("eval", "evaluation protocols");
  eval_cmd->require_subcommand(1);
  std::string eval_data, eval_ckpt, eval_out, eval_embedder = "model", eval_sidecar;
  std::string eval_split = "test", eval_weighting = "selector";
  std::vector<double> eval_fractions = {0.5, 0.1, 0.05};
  double frame_rate_hint = 0.0;

  auto add_eval_common = [&](CLI::App* cmd, bool with_embedder) {
    cmd->add_option("--data", eval_data, "manifest path")->required();
    cmd->add_option("--checkpoint", eval_ckpt, "checkpoint path");
    cmd->add_option("--out", eval_out, "output directory")->required();
    cmd->add_option("--split", eval_split, "pair subset: test, train or all");
    if (with_embedder) {
      cmd->add_option("--embedder", eval_embedder, "model, oracle, random or identity");
      cmd->add_option("--sidecar", eval_sidecar, "ground-truth sidecar (oracle embedder)");
    }
  };

  auto* corr = eval_cmd->add_subcommand("corr", "correspondence accuracy");
  add_eval_common(corr, true);
  corr->add_option("--weighting", eval_weighting, "triplet ranking: selector or margin");
  corr->add_option("--fractions", eval_fractions, "confidence slices to report");

  auto* align = eval_cmd->add_subcommand("align", "one-second moment alignment");
  add_eval_common(align, true);
  align->add_option("--frame-rate-hint", frame_rate_hint,
                    "window starts on a uniform grid at this rate");

  auto* zeroshot = eval_cmd->add_subcommand("zeroshot", "first-person recognition mAP");
  add_eval_common(zeroshot, false);

  // retrieve
  auto* retrieve = app.add_subcommand("retrieve", "nearest-neighbor frame retrieval");
  std::string q_data, q_ckpt, q_pair, q_stream = "third", g_stream = "ego", q_out;
  std::string q_split = "test";
  std::size_t q_frame = 0, q_k = 10;
  retrieve->add_option("--data", q_data, "manifest path")->required();
  retrieve->add_option("--checkpoint", q_ckpt, "checkpoint path")->required();
  retrieve->add_option("--query-pair", q_pair, "pair id of the query frame")->required();
  retrieve->add_option("--query-stream", q_stream, "third or ego");
  retrieve->add_option("--query-frame", q_frame, "frame index within the query video");
  retrieve->add_option("--k", q_k, "neighbors to return");
  retrieve->add_option("--gallery-stream", g_stream, "third or ego");
  retrieve->add_option("--split", q_split, "gallery subset: test, train or all");
  retrieve->add_option("--out", q_out, "optional JSONL output path");

  // inspect
  auto* inspect = app.add_subcommand("inspect", "print checkpoint configuration and shapes");
  std::string i_ckpt;
  bool i_defaults = false;
  inspect->add_option("--checkpoint", i_ckpt, "checkpoint path");
  inspect->add_flag("--defaults", i_defaults, "print built-in configuration defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  if (seed_opt->count() > 0) common.seed = seed_value;

  try {
    if (synth->parsed()) return run_synth(common, synth_out);
    if (train_cmd->parsed()) return run_train(common, train_data, train_out, train_dump);
    if (eval_cmd->parsed()) {
      if (corr->parsed())
        return run_eval_corr(common, eval_data, eval_ckpt, eval_out, eval_embedder, eval_sidecar,
                             eval_split, eval_weighting, eval_fractions);
      if (align->parsed())
        return run_eval_align(common, eval_data, eval_ckpt, eval_out, eval_embedder, eval_sidecar,
                              eval_split, frame_rate_hint);
      if (zeroshot->parsed())
        return run_eval_zeroshot(common, eval_data, eval_ckpt, eval_out, eval_split);
    }
    if (retrieve->parsed())
      return run_retrieve(common, q_data, q_ckpt, q_pair, q_stream, q_frame, q_k, g_stream,
                          q_split, q_out);
    if (inspect->parsed()) return run_inspect(i_ckpt, i_defaults);
  } catch (const UsageFailure& e) {
    std::cerr << "usage error: " << e.msg << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
