#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "actprompt/config.hpp"
#include "actprompt/errors.hpp"
#include "testutil.hpp"

namespace fs = std::filesystem;
using namespace actprompt;

namespace {

int run(const std::string& args, const std::string& capture_to = "/dev/null") {
  const std::string cmd = std::string(ACTPROMPT_BIN) + " " + args + " >" + capture_to + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string base_config(const fs::path& dir) {
  std::ostringstream cfg;
  cfg << "data.mapping = " << (dir / "data" / "mapping.txt").string() << "\n"
      << "data.groundtruth_dir = " << (dir / "data" / "groundTruth").string() << "\n"
      << "data.features_dir = " << (dir / "data" / "features").string() << "\n"
      << "data.activities = " << (dir / "data" / "activities.txt").string() << "\n"
      << "sampler.window_len = 8\n"
      << "sampler.schedule = 1:0.5\n"
      << "sampler.k_max = 4\n"
      << "model.embed_dim = 16\n"
      << "model.fusion_layers = 1\n"
      << "model.fusion_heads = 2\n"
      << "model.text_layers = 1\n"
      << "model.text_width = 16\n"
      << "model.text_heads = 2\n"
      << "model.max_text_len = 48\n"
      << "model.seed = 1\n"
      << "train.batch_size = 6\n"
      << "train.epochs = 2\n"
      << "train.base_lr = 0.001\n"
      << "train.weight_decay = 0.01\n"
      << "train.seed = 1\n"
      << "prompts.variant_table = canonical\n"
      << "infer.n_seg = 8\n"
      << "infer.seg_len = 4\n"
      << "synth.n_actions = 4\n"
      << "synth.n_activities = 2\n"
      << "synth.actions_min = 2\n"
      << "synth.actions_max = 3\n"
      << "synth.mean_segment_len = 4\n"
      << "synth.feature_dim = 6\n"
      << "synth.noise_sigma = 0.02\n"
      << "synth.seed = 11\n"
      << "synth.n_videos = 4\n";
  return cfg.str();
}

struct CliFixture {
  testutil::TempDir dir{"cli"};
  std::string cfg_path;

  CliFixture() {
    cfg_path = dir.file("run.cfg");
    testutil::write_text(cfg_path, base_config(dir.path()));
    REQUIRE(run("synth --config " + cfg_path + " --out " + dir.file("data")) == 0);
  }
};

}  // namespace

TEST_CASE("help and usage errors") {
  CHECK(run("--help") == 0);
  CHECK(run("") == 2);                      // a subcommand is required
  CHECK(run("train --config missing.cfg") == 2);
  CHECK(run("train --no-such-flag") == 2);
  CHECK(run("frobnicate") == 2);
}

TEST_CASE("synth writes the dataset layout") {
  CliFixture fx;
  CHECK(fs::exists(fx.dir.path() / "data" / "mapping.txt"));
  CHECK(fs::exists(fx.dir.path() / "data" / "activities.txt"));
  int gt = 0, feats = 0;
  for (const auto& e : fs::directory_iterator(fx.dir.path() / "data" / "groundTruth")) {
    (void)e;
    ++gt;
  }
  for (const auto& e : fs::directory_iterator(fx.dir.path() / "data" / "features")) {
    (void)e;
    ++feats;
  }
  CHECK(gt == 4);
  CHECK(feats == 4);

  // written features load and match the groundTruth length
  RunConfig cfg = RunConfig::from_file(fx.cfg_path);
  cfg.data.mapping = fx.dir.file("data/mapping.txt");
  DiskDataset ds = load_disk_dataset(cfg);
  CHECK(ds.videos.size() == 4);
  CHECK(ds.activities.size() == 2);
}

TEST_CASE("train then extract then infer then eval") {
  CliFixture fx;
  const std::string out = fx.dir.file("out");

  REQUIRE(run("train --config " + fx.cfg_path + " --out " + out) == 0);
  CHECK(fs::exists(fs::path(out) / "model.ckpt"));
  CHECK(fs::exists(fs::path(out) / "train_log.txt"));

  const std::string ckpt = (fs::path(out) / "model.ckpt").string();

  // extraction is deterministic and BRPF-shaped
  REQUIRE(run("extract --config " + fx.cfg_path + " --checkpoint " + ckpt + " --out " +
              fx.dir.file("feat1")) == 0);
  REQUIRE(run("extract --config " + fx.cfg_path + " --checkpoint " + ckpt + " --out " +
              fx.dir.file("feat2")) == 0);
  Mat f1 = load_feature_file(fx.dir.file("feat1/synth_0.brpf"));
  CHECK(f1.cols() == 16);  // embed_dim
  CHECK(testutil::read_bytes(fx.dir.file("feat1/synth_0.brpf")) ==
        testutil::read_bytes(fx.dir.file("feat2/synth_0.brpf")));
  CHECK(run("extract --config " + fx.cfg_path + " --checkpoint " + ckpt +
            " --videos no_such_video --out " + fx.dir.file("feat3")) == 2);
  CHECK(run("extract --config " + fx.cfg_path + " --checkpoint " + fx.cfg_path + " --out " +
            fx.dir.file("feat4")) == 2);  // not a checkpoint

  // inference emits predictions and decoded frame files
  REQUIRE(run("infer --config " + fx.cfg_path + " --checkpoint " + ckpt + " --out " +
              fx.dir.file("inf")) == 0);
  CHECK(fs::exists(fx.dir.path() / "inf" / "predictions.txt"));
  CHECK(fs::exists(fx.dir.path() / "inf" / "decoded" / "synth_0.txt"));
  CHECK(fs::exists(fx.dir.path() / "inf" / "activity_predictions.txt"));
  std::ifstream pred(fx.dir.file("inf/predictions.txt"));
  std::string first_line;
  std::getline(pred, first_line);
  CHECK(first_line.find("video=synth_0 start=0 K=") == 0);
  CHECK(first_line.find("steps=") != std::string::npos);

  // decoded files have one label per frame
  RunConfig cfg = RunConfig::from_file(fx.cfg_path);
  DiskDataset ds = load_disk_dataset(cfg);
  std::ifstream decoded(fx.dir.file("inf/decoded/synth_0.txt"));
  int lines = 0;
  std::string line;
  while (std::getline(decoded, line)) ++lines;
  CHECK(lines == ds.videos[0].length());

  // eval on identical directories is a perfect score
  const std::string eval_args = "eval --pred " + fx.dir.file("data/groundTruth") + " --gt " +
                                fx.dir.file("data/groundTruth") + " --mapping " +
                                fx.dir.file("data/mapping.txt") + " --out " +
                                fx.dir.file("eval");
  REQUIRE(run(eval_args, fx.dir.file("eval_out.txt")) == 0);
  const std::string eval_out = testutil::read_bytes(fx.dir.file("eval_out.txt"));
  CHECK(eval_out.find("F1@10 F1@25 F1@50 Edit Acc\n") != std::string::npos);
  CHECK(eval_out.find("100.0 100.0 100.0 100.0 100.0") != std::string::npos);
  CHECK(fs::exists(fx.dir.path() / "eval" / "eval_report.json"));

  // decoded predictions also score end to end
  CHECK(run("eval --pred " + fx.dir.file("inf/decoded") + " --gt " +
            fx.dir.file("data/groundTruth") + " --mapping " + fx.dir.file("data/mapping.txt") +
            " --out " + fx.dir.file("eval2")) == 0);

  // excluding a background label still yields a perfect self-score and
  // drops that label from accuracy
  REQUIRE(run("eval --pred " + fx.dir.file("data/groundTruth") + " --gt " +
              fx.dir.file("data/groundTruth") + " --mapping " +
              fx.dir.file("data/mapping.txt") + " --exclude \"" + ds.vocab.phrase(0) +
              "\" --out " + fx.dir.file("eval_ex"),
              fx.dir.file("eval_ex_out.txt")) == 0);
  CHECK(testutil::read_bytes(fx.dir.file("eval_ex_out.txt"))
            .find("100.0 100.0 100.0 100.0 100.0") != std::string::npos);
  CHECK(run("eval --pred " + fx.dir.file("data/groundTruth") + " --gt " +
            fx.dir.file("data/groundTruth") + " --mapping " + fx.dir.file("data/mapping.txt") +
            " --exclude not_a_label --out " + fx.dir.file("eval_ex2")) == 2);

  // frame-count mismatch names the video and exits 2
  fs::create_directories(fx.dir.file("badpred"));
  for (const auto& e : fs::directory_iterator(fx.dir.path() / "data" / "groundTruth")) {
    fs::copy(e.path(), fx.dir.path() / "badpred" / e.path().filename());
  }
  std::ofstream truncated(fx.dir.file("badpred/synth_1.txt"));
  truncated << ds.vocab.phrase(0) << "\n";
  truncated.close();
  CHECK(run("eval --pred " + fx.dir.file("badpred") + " --gt " +
            fx.dir.file("data/groundTruth") + " --mapping " + fx.dir.file("data/mapping.txt") +
            " --out " + fx.dir.file("eval3"), fx.dir.file("eval3_out.txt")) == 2);
  CHECK(testutil::read_bytes(fx.dir.file("eval3_out.txt")).find("synth_1") !=
        std::string::npos);
}

TEST_CASE("train maps config and numeric failures to exit codes") {
  CliFixture fx;
  // missing mapping file
  std::string broken = base_config(fx.dir.path());
  broken += "data.mapping = " + fx.dir.file("nope.txt") + "\n";
  testutil::write_text(fx.dir.file("broken.cfg"), broken);
  CHECK(run("train --config " + fx.dir.file("broken.cfg") + " --out " + fx.dir.file("o1")) ==
        2);

  // unknown config key
  testutil::write_text(fx.dir.file("unknown.cfg"), base_config(fx.dir.path()) + "no.such = 1\n");
  CHECK(run("train --config " + fx.dir.file("unknown.cfg") + " --out " + fx.dir.file("o2")) ==
        2);

  // a divergent learning rate aborts with the numeric exit code
  std::string divergent = base_config(fx.dir.path());
  divergent += "train.base_lr = 1000000\ntrain.epochs = 40\ntrain.warmup_frac = 0\n";
  testutil::write_text(fx.dir.file("divergent.cfg"), divergent);
  CHECK(run("train --config " + fx.dir.file("divergent.cfg") + " --out " + fx.dir.file("o3")) ==
        3);
}

TEST_CASE("training logs are identical across reruns with one seed") {
  CliFixture fx;
  REQUIRE(run("train --config " + fx.cfg_path + " --out " + fx.dir.file("r1")) == 0);
  REQUIRE(run("train --config " + fx.cfg_path + " --out " + fx.dir.file("r2")) == 0);
  CHECK(testutil::read_bytes(fx.dir.file("r1/train_log.txt")) ==
        testutil::read_bytes(fx.dir.file("r2/train_log.txt")));
  CHECK(testutil::read_bytes(fx.dir.file("r1/model.ckpt")) ==
        testutil::read_bytes(fx.dir.file("r2/model.ckpt")));

  // --seed overrides the configured seeds
  REQUIRE(run("train --config " + fx.cfg_path + " --seed 99 --out " + fx.dir.file("r3")) == 0);
  CHECK(testutil::read_bytes(fx.dir.file("r1/train_log.txt")) !=
        testutil::read_bytes(fx.dir.file("r3/train_log.txt")));
}

TEST_CASE("config round-trips through parse and serialize") {
  CliFixture fx;
  RunConfig cfg = RunConfig::from_file(fx.cfg_path);
  const std::string text = cfg.serialize();
  RunConfig reparsed = RunConfig::from_kv(KvFile::parse_text(text));
  CHECK(reparsed.serialize() == text);
  CHECK(reparsed.sampler.window_len == cfg.sampler.window_len);
  CHECK(reparsed.sampler.schedules.size() == cfg.sampler.schedules.size());
  CHECK(reparsed.train.base_lr == cfg.train.base_lr);
  CHECK(reparsed.synth.seed == cfg.synth.seed);
  CHECK(reparsed.variant_table == cfg.variant_table);
}
