#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>
#include <set>

#include "actprompt/errors.hpp"
#include "actprompt/sampler.hpp"
#include "testutil.hpp"

using namespace actprompt;

namespace {

AnnotatedVideo video_from_labels(const std::vector<int>& labels) {
  AnnotatedVideo v;
  v.video_id = "v";
  v.frame_labels = labels;
  v.features = Mat::Zero(static_cast<Eigen::Index>(labels.size()), 3);
  for (Eigen::Index f = 0; f < v.features.rows(); ++f) {
    v.features(f, 0) = static_cast<double>(labels[static_cast<size_t>(f)]);
    v.features(f, 1) = static_cast<double>(f);
  }
  return v;
}

bool is_subsequence(const std::vector<int>& needle, const std::vector<int>& haystack) {
  size_t i = 0;
  for (int v : haystack) {
    if (i < needle.size() && needle[i] == v) ++i;
  }
  return i == needle.size();
}

}  // namespace

TEST_CASE("plan_cuts follows the window_len*d*s stride") {
  SampleConfig cfg;
  cfg.window_len = 16;

  cfg.schedules = {{1, 2.0}};
  auto w = plan_cuts(64, cfg);
  REQUIRE(w.size() == 2);
  CHECK(w[0].front() == 0);
  CHECK(w[0].back() == 15);
  CHECK(w[1].front() == 32);
  CHECK(w[1].back() == 47);

  cfg.schedules = {{2, 1.0}};
  w = plan_cuts(64, cfg);
  REQUIRE(w.size() == 2);
  CHECK(w[0].front() == 0);
  CHECK(w[0][1] == 2);
  CHECK(w[0].back() == 30);
  CHECK(w[1].front() == 32);

  // GTEA-style pairs share the 32-frame stride
  cfg.schedules = {{4, 0.5}};
  w = plan_cuts(64, cfg);
  REQUIRE(w.size() == 2);
  CHECK(w[1].front() == 32);
}

TEST_CASE("pad policies clamp or drop overrunning windows") {
  SampleConfig cfg;
  cfg.window_len = 16;
  cfg.schedules = {{1, 1.0}};

  cfg.pad_policy = PadPolicy::RepeatLast;
  auto w = plan_cuts(8, cfg);
  REQUIRE(w.size() == 1);
  REQUIRE(w[0].size() == 16);
  for (int f = 0; f < 8; ++f) CHECK(w[0][static_cast<size_t>(f)] == f);
  for (int f = 8; f < 16; ++f) CHECK(w[0][static_cast<size_t>(f)] == 7);

  cfg.pad_policy = PadPolicy::DropPartial;
  CHECK(plan_cuts(8, cfg).empty());
  w = plan_cuts(40, cfg);  // starts 0,16,32; the last one overruns
  REQUIRE(w.size() == 2);
  CHECK(w[1].front() == 16);
}

TEST_CASE("plan_cuts unions schedules deterministically and dedups") {
  SampleConfig cfg;
  cfg.window_len = 8;
  cfg.schedules = {{1, 1.0}, {1, 1.0}, {2, 0.5}};  // duplicate and an equal-stride variant
  auto w1 = plan_cuts(40, cfg);
  auto w2 = plan_cuts(40, cfg);
  CHECK(w1 == w2);
  std::set<std::vector<int>> dedup(w1.begin(), w1.end());
  CHECK(dedup.size() == w1.size());
}

TEST_CASE("planned windows stay within bounds") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> len_dist(1, 300);
  for (int trial = 0; trial < 100; ++trial) {
    SampleConfig cfg;
    cfg.window_len = 2 + static_cast<int>(rng() % 30);
    cfg.schedules = {{1 + static_cast<int>(rng() % 4), 0.25 * (1 + static_cast<int>(rng() % 8))}};
    cfg.pad_policy = (rng() & 1) != 0u ? PadPolicy::RepeatLast : PadPolicy::DropPartial;
    const int video_len = len_dist(rng);
    for (const auto& window : plan_cuts(video_len, cfg)) {
      REQUIRE(window.size() == static_cast<size_t>(cfg.window_len));
      for (int idx : window) {
        CHECK(idx >= 0);
        CHECK(idx <= video_len - 1);
      }
    }
  }
}

TEST_CASE("extract_cut run-length encodes the window") {
  const int A = 0, B = 1;
  auto video = video_from_labels({A, A, B, B});
  auto cut = extract_cut(video, {0, 1, 2, 3}, 8);
  REQUIRE(cut.K == 2);
  CHECK(cut.step_labels[0].action_id == A);
  CHECK(cut.step_labels[1].action_id == B);
  CHECK(cut.frame_step_ordinal == std::vector<int>{1, 1, 2, 2});
  CHECK_FALSE(cut.truncated);

  auto one = extract_cut(video_from_labels({A, A, A, A}), {0, 1, 2, 3}, 8);
  CHECK(one.K == 1);

  auto alt = extract_cut(video_from_labels({A, B, A, B}), {0, 1, 2, 3}, 8);
  CHECK(alt.K == 4);  // repetition starts a new ordinal step
  CHECK(alt.step_labels[2].action_id == A);
}

TEST_CASE("extract_cut copies window features and validates indices") {
  auto video = video_from_labels({0, 0, 1, 1, 1, 0});
  auto cut = extract_cut(video, {1, 3, 5, 5}, 8);
  CHECK(cut.features(0, 1) == 1.0);
  CHECK(cut.features(1, 1) == 3.0);
  CHECK(cut.features(3, 1) == 5.0);
  CHECK_THROWS_AS(extract_cut(video, {0, 99}, 8), InputError);
}

TEST_CASE("extract_cut truncates at k_max and flags the cut") {
  auto video = video_from_labels({0, 1, 2, 3, 4, 4});
  auto cut = extract_cut(video, {0, 1, 2, 3, 4, 5}, 3);
  CHECK(cut.K == 3);
  CHECK(cut.truncated);
  CHECK(cut.frame_step_ordinal == std::vector<int>{1, 2, 3, 0, 0, 0});
  CHECK(cut.step_labels.back().action_id == 2);
}

TEST_CASE("extract_cut matches the run-length oracle on random sequences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 1000; ++trial) {
    const int len = 1 + static_cast<int>(rng() % 32);
    std::vector<int> labels(static_cast<size_t>(len));
    for (auto& l : labels) l = static_cast<int>(rng() % 4);
    auto video = video_from_labels(labels);
    std::vector<int> window(static_cast<size_t>(len));
    for (int f = 0; f < len; ++f) window[static_cast<size_t>(f)] = f;

    auto cut = extract_cut(video, window, 64);
    auto runs = testutil::rle_oracle(labels);
    REQUIRE(cut.K == static_cast<int>(runs.size()));
    int at = 0;
    for (size_t r = 0; r < runs.size(); ++r) {
      CHECK(cut.step_labels[r].action_id == runs[r].first);
      CHECK(cut.step_labels[r].begin == at);
      at += runs[r].second;
      CHECK(cut.step_labels[r].end == at);
    }
  }
}

TEST_CASE("cut step labels respect original label order") {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const int len = 20 + static_cast<int>(rng() % 80);
    std::vector<int> labels(static_cast<size_t>(len));
    int cur = 0;
    for (auto& l : labels) {
      if (rng() % 5 == 0) cur = static_cast<int>(rng() % 4);
      l = cur;
    }
    auto video = video_from_labels(labels);
    SampleConfig cfg;
    cfg.window_len = 8;
    cfg.schedules = {{2, 0.5}};
    for (const auto& window : plan_cuts(len, cfg)) {
      auto cut = extract_cut(video, window, 16);
      std::vector<int> step_labels;
      for (const auto& s : cut.step_labels) step_labels.push_back(s.action_id);
      CHECK(is_subsequence(step_labels, labels));
    }
  }
}

TEST_CASE("uniform segments spread across the video") {
  auto segs = uniform_segments(512, 64, 8);
  REQUIRE(segs.size() == 64);
  CHECK(segs.front().front() == 0);
  CHECK(segs.back().front() == 504);
  CHECK(segs.back().back() == 511);

  segs = uniform_segments(8, 64, 8);
  REQUIRE(segs.size() == 64);
  for (const auto& s : segs) CHECK(s.front() == 0);

  segs = uniform_segments(71, 64, 8);
  int prev = -1;
  for (const auto& s : segs) {
    CHECK(s.front() >= prev);
    prev = s.front();
    CHECK(s.front() <= 63);
  }
  CHECK(segs.back().front() == 63);

  CHECK_THROWS_AS(uniform_segments(7, 64, 8), InputError);
}

TEST_CASE("sample config validation") {
  SampleConfig cfg;
  cfg.window_len = 1;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = SampleConfig{};
  cfg.schedules = {{0, 1.0}};
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = SampleConfig{};
  cfg.schedules = {{1, 0.0}};
  CHECK_THROWS_AS(cfg.validate(), InputError);
  cfg = SampleConfig{};
  cfg.k_max = 0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}
