#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "actprompt/dataset.hpp"
#include "actprompt/errors.hpp"
#include "testutil.hpp"

using namespace actprompt;
using testutil::TempDir;
using testutil::write_text;

TEST_CASE("load_mapping parses id/label lines") {
  TempDir dir("mapping");
  write_text(dir.file("mapping.txt"), "0 take\n1 pour\n");
  auto vocab = load_mapping(dir.file("mapping.txt"));
  REQUIRE(vocab.size() == 2);
  CHECK(vocab.entries[0] == std::pair<int, std::string>{0, "take"});
  CHECK(vocab.entries[1] == std::pair<int, std::string>{1, "pour"});
  CHECK(vocab.phrase(1) == "pour");
  CHECK(vocab.id_of("take") == 0);
}

TEST_CASE("load_mapping rejects bad input") {
  TempDir dir("mapping_bad");
  write_text(dir.file("empty.txt"), "");
  CHECK_THROWS_AS(load_mapping(dir.file("empty.txt")), InputError);

  write_text(dir.file("dup.txt"), "0 take\n0 pour\n");
  CHECK_THROWS_AS(load_mapping(dir.file("dup.txt")), InputError);

  write_text(dir.file("malformed.txt"), "0 take\nnot_an_entry\n");
  try {
    load_mapping(dir.file("malformed.txt"));
    FAIL("expected InputError");
  } catch (const InputError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }

  write_text(dir.file("noninteger.txt"), "x take\n");
  CHECK_THROWS_AS(load_mapping(dir.file("noninteger.txt")), InputError);

  write_text(dir.file("gap.txt"), "0 take\n2 pour\n");
  CHECK_THROWS_AS(load_mapping(dir.file("gap.txt")), InputError);

  CHECK_THROWS_AS(load_mapping(dir.file("missing.txt")), InputError);
}

TEST_CASE("framewise labels look up through the vocab") {
  TempDir dir("gt");
  write_text(dir.file("mapping.txt"), "0 take\n1 pour\n");
  auto vocab = load_mapping(dir.file("mapping.txt"));

  write_text(dir.file("v.txt"), "take\ntake\npour\n");
  CHECK(load_framewise_labels(dir.file("v.txt"), vocab) == std::vector<int>{0, 0, 1});

  write_text(dir.file("bad.txt"), "take\nstir\n");
  try {
    load_framewise_labels(dir.file("bad.txt"), vocab);
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("stir") != std::string::npos);
    CHECK(msg.find(":2") != std::string::npos);
  }
}

TEST_CASE("label_map remaps tokens before lookup") {
  TempDir dir("remap");
  write_text(dir.file("mapping.txt"), "0 cut\n1 pour\n");
  auto base = load_mapping(dir.file("mapping.txt"));
  auto vocab = ActionVocab::from_entries(base.entries, {{"cut_tomato", "cut"}});
  write_text(dir.file("v.txt"), "cut_tomato\n");
  CHECK(load_framewise_labels(dir.file("v.txt"), vocab) ==
        std::vector<int>{vocab.id_of("cut")});
}

TEST_CASE("BRPF decodes the documented layout") {
  TempDir dir("brpf");
  std::string bytes = "BRPF";
  auto push_u32 = [&bytes](std::uint32_t v) {
    bytes.append(reinterpret_cast<const char*>(&v), 4);
  };
  push_u32(1);  // version
  push_u32(2);  // T
  push_u32(3);  // F
  for (int i = 0; i < 6; ++i) {
    float f = static_cast<float>(i);
    bytes.append(reinterpret_cast<const char*>(&f), 4);
  }
  write_text(dir.file("f.brpf"), bytes);
  Mat m = load_feature_file(dir.file("f.brpf"));
  REQUIRE(m.rows() == 2);
  REQUIRE(m.cols() == 3);
  CHECK(m(0, 0) == 0.0);
  CHECK(m(0, 2) == 2.0);
  CHECK(m(1, 0) == 3.0);
  CHECK(m(1, 2) == 5.0);

  write_text(dir.file("badmagic.brpf"), "NOPE" + bytes.substr(4));
  CHECK_THROWS_AS(load_feature_file(dir.file("badmagic.brpf")), InputError);

  write_text(dir.file("short.brpf"), bytes.substr(0, bytes.size() - 4));
  CHECK_THROWS_AS(load_feature_file(dir.file("short.brpf")), InputError);
}

TEST_CASE("BRPF write/load round trip is byte exact") {
  TempDir dir("brpf_rt");
  std::mt19937_64 rng(3);
  Mat m = testutil::random_mat(rng, 7, 5);
  // quantize to float32 so the round trip is lossless
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = static_cast<float>(m(i));
  write_feature_file(dir.file("a.brpf"), m);
  Mat loaded = load_feature_file(dir.file("a.brpf"));
  CHECK((loaded - m).norm() == 0.0);
  write_feature_file(dir.file("b.brpf"), loaded);
  CHECK(testutil::read_bytes(dir.file("a.brpf")) == testutil::read_bytes(dir.file("b.brpf")));
}

TEST_CASE("synthetic generation is deterministic in the config") {
  SynthConfig cfg;
  cfg.n_actions = 6;
  cfg.feature_dim = 16;
  cfg.noise_sigma = 0.1;
  cfg.seed = 42;
  cfg.n_videos = 4;
  auto a = generate_synthetic(cfg);
  auto b = generate_synthetic(cfg);
  REQUIRE(a.videos.size() == b.videos.size());
  for (size_t i = 0; i < a.videos.size(); ++i) {
    CHECK(a.videos[i].video_id == b.videos[i].video_id);
    CHECK(a.videos[i].frame_labels == b.videos[i].frame_labels);
    CHECK((a.videos[i].features - b.videos[i].features).norm() == 0.0);
    CHECK(a.videos[i].activity_label == b.videos[i].activity_label);
  }
  CHECK(a.activity_names == b.activity_names);

  cfg.seed = 43;
  auto c = generate_synthetic(cfg);
  bool all_same = true;
  for (size_t i = 0; i < a.videos.size() && all_same; ++i) {
    all_same = a.videos[i].frame_labels == c.videos[i].frame_labels &&
               (a.videos[i].features - c.videos[i].features).norm() == 0.0;
  }
  CHECK_FALSE(all_same);
}

TEST_CASE("zero noise reproduces prototypes exactly") {
  SynthConfig cfg;
  cfg.n_actions = 5;
  cfg.feature_dim = 12;
  cfg.noise_sigma = 0.0;
  cfg.seed = 9;
  cfg.n_videos = 3;
  Mat proto = synth_prototypes(cfg);
  auto ds = generate_synthetic(cfg);
  for (const auto& video : ds.videos) {
    for (int f = 0; f < video.length(); ++f) {
      CHECK((video.features.row(f) - proto.row(video.frame_labels[static_cast<size_t>(f)]))
                .norm() == 0.0);
    }
  }
}

TEST_CASE("prototypes are pairwise orthogonal when feature_dim allows") {
  SynthConfig cfg;
  cfg.n_actions = 6;
  cfg.feature_dim = 32;
  cfg.seed = 5;
  Mat proto = synth_prototypes(cfg);
  for (int a = 0; a < cfg.n_actions; ++a) {
    CHECK(proto.row(a).norm() == doctest::Approx(1.0).epsilon(1e-9));
    for (int b = 0; b < a; ++b) {
      CHECK(std::abs(proto.row(a).dot(proto.row(b))) < 1e-6);
    }
  }
}

TEST_CASE("every synthetic video satisfies the length invariant") {
  SynthConfig cfg;
  cfg.seed = 17;
  cfg.n_videos = 10;
  cfg.feature_dim = 8;
  auto ds = generate_synthetic(cfg);
  REQUIRE(ds.videos.size() == 10);
  for (const auto& video : ds.videos) {
    CHECK(static_cast<Eigen::Index>(video.frame_labels.size()) == video.features.rows());
    CHECK(video.length() >= 1);
    for (int label : video.frame_labels) {
      CHECK(label >= 0);
      CHECK(label < cfg.n_actions);
    }
  }
}

TEST_CASE("held-out videos share prototypes and activities") {
  SynthConfig cfg;
  cfg.seed = 21;
  cfg.n_videos = 6;
  cfg.feature_dim = 16;
  auto base = generate_synthetic(cfg);
  auto held = generate_synthetic(cfg, cfg.n_videos, 4);
  CHECK(held.videos.size() == 4);
  CHECK(held.videos[0].video_id == "synth_6");
  CHECK(held.activity_names == base.activity_names);
  CHECK(held.activity_steps == base.activity_steps);
  // same stream ids give identical videos
  auto again = generate_synthetic(cfg, cfg.n_videos, 4);
  CHECK((held.videos[0].features - again.videos[0].features).norm() == 0.0);
}

TEST_CASE("synthetic config validation") {
  SynthConfig cfg;
  cfg.n_actions = 0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = SynthConfig{};
  cfg.noise_sigma = -0.5;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = SynthConfig{};
  cfg.actions_max = cfg.actions_min - 1;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}
