#include <catch2/catch_amalgamated.hpp>

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "crossview/io.hpp"
#include "crossview/synthetic.hpp"
#include "testutil.hpp"

using namespace crossview;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("crossview_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

bool same_bits(double a, double b) {
  return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void spit(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

FeatureData sample_features() {
  FeatureData d;
  d.dim = 3;
  d.timestamps = {0.0, 0.1, 1.0 / 3.0, 2.5};
  d.features = {
      {0.0, -0.0, 1e-300},
      {1.7976931348623157e308, 3.141592653589793, 4.9406564584124654e-324},
      {-1.5, 2.5, -3.5},
      {1e16 + 1.0, -1e-16, 0.30000000000000004},
  };
  return d;
}

}  // namespace

TEST_CASE("atomic writes leave the content and nothing else") {
  TempDir tmp;
  const fs::path p = tmp.path / "out.txt";
  write_file_atomic(p, "hello\n");
  CHECK(slurp(p) == "hello\n");
  CHECK(!fs::exists(tmp.path / "out.txt.tmp"));
  write_file_atomic(p, "replaced");
  CHECK(slurp(p) == "replaced");
}

TEST_CASE("doubles survive their text form") {
  CHECK(format_double(1.0) == "1");
  CHECK(format_double(0.1) == "0.10000000000000001");
  // Denormals stay out of this list: glibc's stod reports them as underflow.
  for (double v : {1.0 / 3.0, 3e-5, 0.1, 1e300, -2.2250738585072014e-308, 123456.78901234567}) {
    const double back = std::stod(format_double(v));
    CHECK(same_bits(back, v));
  }
}

TEST_CASE("feature files round trip bit-exactly") {
  TempDir tmp;
  const fs::path p = tmp.path / "v.aofv";
  const FeatureData d = sample_features();
  write_feature_file(p, d);
  const FeatureData r = read_feature_file(p);
  CHECK(r.dim == d.dim);
  REQUIRE(r.timestamps.size() == d.timestamps.size());
  for (std::size_t i = 0; i < d.timestamps.size(); ++i)
    CHECK(same_bits(r.timestamps[i], d.timestamps[i]));
  REQUIRE(r.features.size() == d.features.size());
  for (std::size_t i = 0; i < d.features.size(); ++i)
    for (std::size_t j = 0; j < d.dim; ++j) CHECK(same_bits(r.features[i][j], d.features[i][j]));
}

TEST_CASE("an empty frame list is a valid feature file") {
  TempDir tmp;
  const fs::path p = tmp.path / "empty.aofv";
  FeatureData d;
  d.dim = 5;
  write_feature_file(p, d);
  const FeatureData r = read_feature_file(p);
  CHECK(r.dim == 5);
  CHECK(r.features.empty());
}

TEST_CASE("feature writer validates its input") {
  TempDir tmp;
  const fs::path p = tmp.path / "bad.aofv";
  FeatureData d = sample_features();
  d.dim = 0;
  CHECK_THROWS_AS(write_feature_file(p, d), IngestError);
  d = sample_features();
  d.timestamps.pop_back();
  CHECK_THROWS_AS(write_feature_file(p, d), ShapeError);
  d = sample_features();
  d.timestamps[2] = d.timestamps[1];  // not strictly ascending
  CHECK_THROWS_AS(write_feature_file(p, d), IngestError);
  d = sample_features();
  d.features[1].pop_back();
  CHECK_THROWS_AS(write_feature_file(p, d), ShapeError);
}

TEST_CASE("feature reader rejects foreign, stale, and damaged files") {
  TempDir tmp;

  const fs::path foreign = tmp.path / "foreign.bin";
  spit(foreign, "PNG\x89 definitely not ours");
  CHECK_THROWS_AS(read_feature_file(foreign), FormatError);

  CHECK_THROWS_AS(read_feature_file(tmp.path / "missing.aofv"), IngestError);

  {
    std::ostringstream out(std::ios::binary);
    detail::put_u32(out, kFeatureMagic);
    detail::put_u32(out, 999);  // unsupported version
    const fs::path p = tmp.path / "version.aofv";
    spit(p, out.str());
    CHECK_THROWS_AS(read_feature_file(p), FormatError);
  }
  {
    std::ostringstream out(std::ios::binary);
    detail::put_u32(out, kFeatureMagic);
    detail::put_u32(out, kFeatureVersion);
    detail::put_u32(out, 0);  // dimension zero
    detail::put_u32(out, 0);
    const fs::path p = tmp.path / "dim0.aofv";
    spit(p, out.str());
    CHECK_THROWS_AS(read_feature_file(p), FormatError);
  }
  {
    std::ostringstream out(std::ios::binary);
    detail::put_u32(out, kFeatureMagic);
    detail::put_u32(out, kFeatureVersion);
    detail::put_u32(out, 1);
    detail::put_u32(out, 2);
    detail::put_f64(out, 1.0);  // descending timestamps
    detail::put_f64(out, 0.0);
    detail::put_f64(out, 0.5);
    detail::put_f64(out, 0.5);
    const fs::path p = tmp.path / "order.aofv";
    spit(p, out.str());
    CHECK_THROWS_AS(read_feature_file(p), IngestError);
  }

  const fs::path good = tmp.path / "good.aofv";
  write_feature_file(good, sample_features());
  const std::string bytes = slurp(good);
  for (std::size_t cut : {std::size_t{2}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    const fs::path p = tmp.path / ("cut" + std::to_string(cut) + ".aofv");
    spit(p, bytes.substr(0, cut));
    CHECK_THROWS_AS(read_feature_file(p), CorruptionError);
  }
  const fs::path padded = tmp.path / "padded.aofv";
  spit(padded, bytes + "x");
  CHECK_THROWS_AS(read_feature_file(padded), CorruptionError);
}

TEST_CASE("manifest round trip") {
  TempDir tmp;
  const fs::path p = tmp.path / "manifest.jsonl";
  std::vector<ManifestEntry> entries = {
      {"a", "s0", "features/a_third.aofv", "features/a_ego.aofv", {0, 2}},
      {"b", "", "b3.aofv", "be.aofv", {}},
  };
  write_manifest(p, entries);
  const auto back = read_manifest(p);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].pair_id == entries[i].pair_id);
    CHECK(back[i].scenario_tag == entries[i].scenario_tag);
    CHECK(back[i].third_path == entries[i].third_path);
    CHECK(back[i].ego_path == entries[i].ego_path);
    CHECK(back[i].labels == entries[i].labels);
  }
}

TEST_CASE("manifest parse failures carry the line number") {
  TempDir tmp;
  const fs::path p = tmp.path / "bad.jsonl";
  spit(p, "{\"pair_id\":\"a\",\"third\":\"t\",\"ego\":\"e\"}\n{oops\n");
  CHECK_THROWS_WITH(read_manifest(p), Catch::Matchers::ContainsSubstring("line 2"));
  const fs::path q = tmp.path / "missing.jsonl";
  spit(q, "{\"pair_id\":\"a\",\"ego\":\"e\"}\n");
  CHECK_THROWS_AS(read_manifest(q), FormatError);
  CHECK_THROWS_AS(read_manifest(tmp.path / "absent.jsonl"), IngestError);
}

TEST_CASE("sidecar round trip") {
  TempDir tmp;
  const fs::path p = tmp.path / "sidecar.jsonl";
  std::vector<SidecarEntry> entries(2);
  entries[0].pair_id = "a";
  entries[0].labels = {1};
  entries[0].third_informative = {1, 0, 1};
  entries[0].ego_informative = {0, 1};
  entries[0].third_latent = {{0.1, -0.2}, {0.3, 0.4}, {1.0 / 3.0, 2e-7}};
  entries[0].ego_latent = {{5.5, 6.25}, {-0.0, 1e-12}};
  entries[1].pair_id = "b";
  entries[1].third_informative = {1};
  entries[1].ego_informative = {1};
  entries[1].third_latent = {{9.0}};
  entries[1].ego_latent = {{-9.0}};
  write_sidecar(p, entries);

  const auto back = read_sidecar(p);
  REQUIRE(back.size() == 2);
  const SidecarEntry& a = back.at("a");
  CHECK(a.labels == entries[0].labels);
  CHECK(a.third_informative == entries[0].third_informative);
  CHECK(a.ego_informative == entries[0].ego_informative);
  REQUIRE(a.third_latent.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(same_bits(a.third_latent[i][j], entries[0].third_latent[i][j]));
  CHECK(back.at("b").ego_latent[0][0] == -9.0);
}

TEST_CASE("datasets load through the manifest and move as a unit") {
  TempDir tmp;
  const fs::path ds = tmp.path / "ds";
  fs::create_directories(ds / "features");

  Rng rng(91);
  auto make = [&](double base) {
    FeatureData d;
    d.dim = 2;
    for (int i = 0; i < 4; ++i) {
      d.timestamps.push_back(i);
      d.features.push_back({base + i, rng.normal()});
    }
    return d;
  };
  const FeatureData a3 = make(0.0), ae = make(10.0), b3 = make(20.0), be = make(30.0);
  write_feature_file(ds / "features/a_third.aofv", a3);
  write_feature_file(ds / "features/a_ego.aofv", ae);
  write_feature_file(ds / "features/b_third.aofv", b3);
  write_feature_file(ds / "features/b_ego.aofv", be);
  write_manifest(ds / "manifest.jsonl",
                 {{"a", "s0", "features/a_third.aofv", "features/a_ego.aofv", {1}},
                  {"b", "s0", "features/b_third.aofv", "features/b_ego.aofv", {}}});

  const PairIndex index = load_dataset(ds / "manifest.jsonl");
  REQUIRE(index.pairs.size() == 2);
  CHECK(index.pairs[0].pair_id == "a");
  CHECK(index.pairs[0].scenario_tag == "s0");
  CHECK(index.pairs[0].labels == std::vector<int>{1});
  CHECK(index.pairs[1].labels.empty());
  REQUIRE(index.pairs[0].third.frame_count() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(same_bits(index.pairs[0].third.features[i][0], a3.features[i][0]));
    CHECK(same_bits(index.pairs[1].ego.features[i][1], be.features[i][1]));
  }

  // Relative paths mean the directory can relocate wholesale.
  const fs::path moved = tmp.path / "elsewhere";
  fs::rename(ds, moved);
  const PairIndex again = load_dataset(moved / "manifest.jsonl");
  CHECK(again.pairs.size() == 2);
  CHECK(same_bits(again.pairs[0].third.features[2][0], a3.features[2][0]));
}

TEST_CASE("config text parsing") {
  const auto kv = parse_config_text(
      "# a comment\n"
      "\n"
      "  batch_size =  7 \n"
      "name_with_value = hello world\n"
      "flag=true\n");
  CHECK(kv.at("batch_size") == "7");
  CHECK(kv.at("name_with_value") == "hello world");
  CHECK(kv.at("flag") == "true");
  CHECK(kv.size() == 3);

  CHECK_THROWS_AS(parse_config_text("batch_size 7\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("= 7\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_text("a = 1\na = 2\n"), ConfigError);
}

TEST_CASE("config appliers consume their keys and validate values") {
  auto kv = parse_config_text("batch_size = 4\nmomentum = 0.5\nmystery = 1\n");
  TrainConfig cfg;
  apply_train_config(kv, cfg);
  CHECK(cfg.batch_size == 4);
  CHECK(cfg.momentum == 0.5);
  REQUIRE(kv.size() == 1);
  CHECK(kv.count("mystery") == 1);
  CHECK_THROWS_AS(reject_unknown_keys(kv), ConfigError);
  kv.clear();
  CHECK_NOTHROW(reject_unknown_keys(kv));

  auto bad1 = parse_config_text("batch_size = four\n");
  TrainConfig c1;
  CHECK_THROWS_AS(apply_train_config(bad1, c1), ConfigError);
  auto bad2 = parse_config_text("momentum = fast\n");
  CHECK_THROWS_AS(apply_train_config(bad2, c1), ConfigError);
  auto bad3 = parse_config_text("mixed_mode = maybe\n");
  CHECK_THROWS_AS(apply_train_config(bad3, c1), ConfigError);
  auto bad4 = parse_config_text("sigma_init = zero\n");
  CHECK_THROWS_AS(apply_train_config(bad4, c1), ConfigError);
  auto ok = parse_config_text("sigma_init = one\n");
  apply_train_config(ok, c1);
  CHECK(c1.sigma_init == SigmaInit::One);
}

TEST_CASE("configs survive dump, render, parse, apply") {
  TrainConfig cfg;
  cfg.batch_size = 11;
  cfg.base_lr = 7e-4;
  cfg.lr_decay_factor = 3.0;
  cfg.lr_decay_every = 5;
  cfg.momentum = 0.875;
  cfg.epochs = 4;
  cfg.triplets_per_pair = 17;
  cfg.k = 0.25;
  cfg.sigma_init = SigmaInit::One;
  cfg.reset_accumulators_each_epoch = true;
  cfg.mixed_mode = true;
  cfg.test_fraction = 0.3;
  cfg.seed = 1234567890123ull;
  cfg.delta = 1.5;
  cfg.delta_prime = 8.25;

  auto kv = parse_config_text(render_config(dump_train_config(cfg)));
  TrainConfig back;
  apply_train_config(kv, back);
  reject_unknown_keys(kv);
  CHECK(dump_train_config(back) == dump_train_config(cfg));

  ModelConfig mc;
  mc.feature_dim = 9;
  mc.embed_dim = 5;
  mc.hidden_dim = 7;
  mc.n_classes = 3;
  mc.share_trunk = false;
  mc.share_ego_selector = false;
  mc.scale_init_sigma = 2.5;
  mc.scale_floor = 0.125;
  auto kv2 = parse_config_text(render_config(dump_model_config(mc)));
  ModelConfig mback;
  apply_model_config(kv2, mback);
  reject_unknown_keys(kv2);
  CHECK(dump_model_config(mback) == dump_model_config(mc));

  SyntheticConfig sc;
  sc.n_pairs = 12;
  sc.frames_per_video = 48;
  sc.duration_seconds = 20.5;
  sc.latent_dim = 6;
  sc.feature_dim = 6;
  sc.informative_fraction = 0.75;
  sc.domain_noise_scale = 0.01;
  sc.uninformative_noise_scale = 2.0;
  sc.n_classes = 4;
  sc.ego_duration_jitter = 0.05;
  sc.identity_transforms = true;
  sc.seed = 77;
  auto kv3 = parse_config_text(render_config(dump_synthetic_config(sc)));
  SyntheticConfig sback;
  apply_synthetic_config(kv3, sback);
  reject_unknown_keys(kv3);
  CHECK(dump_synthetic_config(sback) == dump_synthetic_config(sc));
}

TEST_CASE("checkpoints round trip every piece of training state") {
  TempDir tmp;
  const fs::path p = tmp.path / "model.aock";

  TrainState st;
  st.model_config.feature_dim = 4;
  st.model_config.embed_dim = 3;
  st.model_config.hidden_dim = 5;
  st.model_config.n_classes = 2;
  st.model_config.share_trunk = false;
  st.model_config.share_ego_selector = false;
  st.config.batch_size = 6;
  st.config.sigma_init = SigmaInit::One;
  st.config.mixed_mode = true;
  st.config.seed = 31337;
  st.model = init_model(st.model_config, 31337);
  const ParamLayout lay = build_layout(st.model);
  Rng rng(92);
  st.opt.velocity = testutil::random_vector(lay.total, rng);
  st.opt.epochs_done = 3;
  st.accums[{"a#third", Modality::Third}] = {1.25, 7, 0.1};
  st.accums[{"b#ego", Modality::Ego}] = {0.052387510293847, 2, 0.25};
  st.loss_state = {0.62385710923845, 1.5, 9, 0.1};
  st.split.train_ids = {"a", "c"};
  st.split.test_ids = {"b"};

  save_checkpoint(p, st);
  const TrainState back = load_checkpoint(p);

  CHECK(dump_train_config(back.config) == dump_train_config(st.config));
  CHECK(dump_model_config(back.model_config) == dump_model_config(st.model_config));

  const Vector want = pack_parameters(st.model);
  const Vector got = pack_parameters(back.model);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(same_bits(got[i], want[i]));
  REQUIRE(back.opt.velocity.size() == st.opt.velocity.size());
  for (std::size_t i = 0; i < st.opt.velocity.size(); ++i)
    CHECK(same_bits(back.opt.velocity[i], st.opt.velocity[i]));
  CHECK(back.opt.epochs_done == 3);

  REQUIRE(back.accums.size() == 2);
  const VideoAccumulator& acc = back.accums.at({"b#ego", Modality::Ego});
  CHECK(same_bits(acc.sigma, 0.052387510293847));
  CHECK(acc.count == 2);
  CHECK(acc.k == 0.25);
  CHECK(back.accums.at({"a#third", Modality::Third}).count == 7);

  CHECK(same_bits(back.loss_state.L, st.loss_state.L));
  CHECK(back.loss_state.sigma == 1.5);
  CHECK(back.loss_state.count == 9);
  CHECK(back.split.train_ids == st.split.train_ids);
  CHECK(back.split.test_ids == st.split.test_ids);

  // The trunk groups are rebuilt from the stored config, not left at defaults.
  CHECK(back.model.trunks.size() == 2);
  CHECK(back.model.selectors.size() == 3);
}

TEST_CASE("checkpoint damage is detected") {
  TempDir tmp;
  const fs::path p = tmp.path / "model.aock";
  TrainState st;
  st.model_config.feature_dim = 3;
  st.model_config.embed_dim = 2;
  st.model = init_model(st.model_config, 1);
  st.opt.velocity.assign(build_layout(st.model).total, 0.0);
  save_checkpoint(p, st);
  const std::string bytes = slurp(p);

  const fs::path wrong = tmp.path / "wrong.aock";
  spit(wrong, "not a checkpoint at all");
  CHECK_THROWS_AS(load_checkpoint(wrong), FormatError);
  CHECK_THROWS_AS(load_checkpoint(tmp.path / "absent.aock"), IngestError);

  for (std::size_t cut : {std::size_t{3}, bytes.size() / 3, bytes.size() - 1}) {
    const fs::path q = tmp.path / ("cut" + std::to_string(cut) + ".aock");
    spit(q, bytes.substr(0, cut));
    CHECK_THROWS_AS(load_checkpoint(q), CorruptionError);
  }
  const fs::path padded = tmp.path / "padded.aock";
  spit(padded, bytes + std::string(1, '\0'));
  CHECK_THROWS_AS(load_checkpoint(padded), CorruptionError);

  // Damaging a tensor name breaks the table check.
  std::string renamed = bytes;
  const auto pos = renamed.find("trunk0.l1.bias");
  REQUIRE(pos != std::string::npos);
  renamed[pos] = 'x';
  const fs::path r = tmp.path / "renamed.aock";
  spit(r, renamed);
  CHECK_THROWS_AS(load_checkpoint(r), CorruptionError);
}

TEST_CASE("run records are pure functions of the invocation") {
  const std::map<std::string, std::string> echo = dump_train_config(TrainConfig{});
  const std::string a = render_run_record("train", echo);
  const std::string b = render_run_record("train", echo);
  CHECK(a == b);
  CHECK(a.rfind("tool = crossview\n", 0) == 0);
  CHECK(a.find("subcommand = train\n") != std::string::npos);
  CHECK(a.find("config.batch_size = 15\n") != std::string::npos);
  CHECK(a.find("config.delta_prime = 10\n") != std::string::npos);
}

TEST_CASE("synthetic generation is deterministic down to the bytes") {
  SyntheticConfig cfg;
  cfg.n_pairs = 4;
  cfg.frames_per_video = 16;
  cfg.latent_dim = 4;
  cfg.feature_dim = 6;
  cfg.n_classes = 2;
  cfg.seed = 21;

  TempDir tmp;
  const fs::path da = tmp.path / "a";
  const fs::path db = tmp.path / "b";
  write_dataset(da, synthesize(cfg));
  write_dataset(db, synthesize(cfg));

  CHECK(slurp(da / "manifest.jsonl") == slurp(db / "manifest.jsonl"));
  CHECK(slurp(da / "sidecar.jsonl") == slurp(db / "sidecar.jsonl"));
  for (const auto& entry : fs::directory_iterator(da / "features")) {
    const fs::path rel = entry.path().filename();
    CHECK(slurp(entry.path()) == slurp(db / "features" / rel));
  }

  // A different seed must actually change the data.
  SyntheticConfig other = cfg;
  other.seed = 22;
  TempDir tmp2;
  write_dataset(tmp2.path / "c", synthesize(other));
  CHECK(slurp(da / "manifest.jsonl") == slurp(tmp2.path / "c" / "manifest.jsonl"));
  CHECK(slurp(da / "sidecar.jsonl") != slurp(tmp2.path / "c" / "sidecar.jsonl"));
}

TEST_CASE("synthetic latents agree across viewpoints and identity transforms expose them") {
  SyntheticConfig cfg;
  cfg.n_pairs = 4;
  cfg.frames_per_video = 12;
  cfg.latent_dim = 5;
  cfg.feature_dim = 5;
  cfg.identity_transforms = true;
  cfg.domain_noise_scale = 0.0;
  cfg.n_classes = 2;
  cfg.seed = 23;
  const SyntheticDataset data = synthesize(cfg);

  for (const SidecarEntry& e : data.sidecar) {
    REQUIRE(e.third_latent.size() == cfg.frames_per_video);
    REQUIRE(e.ego_latent.size() == cfg.frames_per_video);
    // Both viewpoints sample the same latent trajectory at the same positions.
    for (std::size_t i = 0; i < cfg.frames_per_video; ++i)
      for (std::size_t j = 0; j < cfg.latent_dim; ++j)
        CHECK(same_bits(e.third_latent[i][j], e.ego_latent[i][j]));

    // Identity transforms with zero noise emit the latent itself for every
    // informative frame.
    const PairEntry& pair = data.index.pairs.at(data.index.by_id.at(e.pair_id));
    for (std::size_t i = 0; i < cfg.frames_per_video; ++i) {
      if (!e.third_informative[i]) continue;
      for (std::size_t j = 0; j < cfg.latent_dim; ++j)
        CHECK(same_bits(pair.third.features[i][j], e.third_latent[i][j]));
    }
  }
}

TEST_CASE("synthetic configuration is validated") {
  SyntheticConfig cfg;
  cfg.n_pairs = 1;
  CHECK_THROWS_AS(synthesize(cfg), ConfigError);
  cfg = {};
  cfg.frames_per_video = 1;
  CHECK_THROWS_AS(synthesize(cfg), ConfigError);
  cfg = {};
  cfg.duration_seconds = 0.0;
  CHECK_THROWS_AS(synthesize(cfg), ConfigError);
  cfg = {};
  cfg.ego_duration_jitter = 1.0;
  CHECK_THROWS_AS(synthesize(cfg), ConfigError);
  cfg = {};
  cfg.identity_transforms = true;  // feature_dim 32 != latent_dim 8
  CHECK_THROWS_AS(synthesize(cfg), ConfigError);
}
