#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "actprompt/config.hpp"
#include "actprompt/contrastive.hpp"
#include "actprompt/errors.hpp"
#include "actprompt/inference.hpp"
#include "actprompt/metrics.hpp"
#include "actprompt/model.hpp"
#include "actprompt/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace actprompt;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
};

RunConfig load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) throw InputError("--config is required for this command");
  RunConfig cfg = RunConfig::from_file(g.config_path);
  if (g.seed.has_value()) {
    cfg.model.seed = *g.seed;
    cfg.train.seed = *g.seed;
    cfg.synth.seed = *g.seed;
  }
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  return cfg;
}

std::vector<std::string> dataset_corpus(const DiskDataset& ds, const RunConfig& cfg) {
  return build_prompt_corpus(ds.vocab, cfg.load_variant_table(), cfg.sampler.k_max,
                             ds.activities, cfg.activity_template);
}

Model build_model(const RunConfig& cfg, const DiskDataset& ds) {
  Tokenizer tok = Tokenizer::build(dataset_corpus(ds, cfg));
  ModelConfig mc = cfg.model;
  mc.vocab_size = tok.vocab_size();
  mc.frame_input_dim = static_cast<int>(ds.videos.front().features.cols());
  mc.max_frames = cfg.sampler.window_len;
  return Model(mc, std::move(tok));
}

int cmd_synth(const GlobalOpts& g) {
  RunConfig cfg = load_config(g);
  cfg.synth.validate();
  SynthDataset ds = generate_synthetic(cfg.synth);

  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "groundTruth");
  fs::create_directories(out / "features");

  std::ofstream mapping(out / "mapping.txt");
  for (const auto& [id, phrase] : ds.vocab.entries) mapping << id << " " << phrase << "\n";

  std::ofstream activities(out / "activities.txt");
  for (const auto& video : ds.videos) {
    std::ofstream gt(out / "groundTruth" / (video.video_id + ".txt"));
    for (int label : video.frame_labels) gt << ds.vocab.phrase(label) << "\n";
    write_feature_file((out / "features" / (video.video_id + ".brpf")).string(),
                       video.features);
    activities << video.video_id << " " << video.activity_label << "\n";
  }
  std::cout << "wrote " << ds.videos.size() << " synthetic videos to " << out.string()
            << "\n";
  return 0;
}

int cmd_train(const GlobalOpts& g) {
  RunConfig cfg = load_config(g);
  DiskDataset ds = load_disk_dataset(cfg);
  Model model = build_model(cfg, ds);
  const VariantTable table = cfg.load_variant_table();
  auto items = prepare_training_items(ds.videos, cfg.sampler, ds.vocab, table);

  fs::create_directories(cfg.out_dir);
  const std::string ckpt = (fs::path(cfg.out_dir) / "model.ckpt").string();
  std::ofstream log(fs::path(cfg.out_dir) / "train_log.txt");
  TrainResult result = train(model, items, cfg.train, ckpt, &log);
  std::cout << "trained " << result.steps_run << " steps, final loss " << result.final_loss
            << "\ncheckpoint: " << ckpt << "\n";
  return 0;
}

int cmd_extract(const GlobalOpts& g, const std::string& checkpoint,
                const std::vector<std::string>& video_ids) {
  RunConfig cfg = load_config(g);
  DiskDataset ds = load_disk_dataset(cfg);
  Model model = load_checkpoint(checkpoint);

  std::set<std::string> wanted(video_ids.begin(), video_ids.end());
  for (const auto& id : wanted) {
    const bool known = std::any_of(ds.videos.begin(), ds.videos.end(),
                                   [&](const AnnotatedVideo& v) { return v.video_id == id; });
    if (!known) throw InputError("unknown video id: " + id);
  }

  fs::create_directories(cfg.out_dir);
  int written = 0;
  for (const auto& video : ds.videos) {
    if (!wanted.empty() && wanted.count(video.video_id) == 0) continue;
    const Mat feats = model.encode_frames(video.features);
    write_feature_file((fs::path(cfg.out_dir) / (video.video_id + ".brpf")).string(), feats);
    ++written;
  }
  std::cout << "extracted features for " << written << " videos to " << cfg.out_dir << "\n";
  return 0;
}

int cmd_infer(const GlobalOpts& g, const std::string& checkpoint, const std::string& split) {
  RunConfig cfg = load_config(g);
  if (!split.empty()) cfg.data.split_file = split;
  DiskDataset ds = load_disk_dataset(cfg);
  Model model = load_checkpoint(checkpoint);
  const VariantTable table = cfg.load_variant_table();
  const VariantMode mode =
      cfg.variant_mode == "vote" ? VariantMode::Vote : VariantMode::AverageFeatures;

  BankOptions bank_opts;
  bank_opts.keep_variants = mode == VariantMode::Vote;
  bank_opts.activity_template = cfg.activity_template;
  PromptBank bank =
      build_prompt_bank(ds.vocab, table, model, cfg.sampler.k_max, ds.activities, bank_opts);

  const fs::path out(cfg.out_dir);
  fs::create_directories(out / "decoded");
  std::ofstream pred_out(out / "predictions.txt");
  std::ofstream activity_out;
  if (!ds.activities.empty()) activity_out.open(out / "activity_predictions.txt");

  for (const auto& video : ds.videos) {
    auto windows = plan_cuts(video.length(), cfg.sampler);
    std::vector<VideoCut> cuts;
    std::vector<CutPrediction> preds;
    for (const auto& window : windows) {
      cuts.push_back(extract_cut(video, window, cfg.sampler.k_max));
      preds.push_back(infer_cut(cuts.back(), bank, model, mode));
      const auto& p = preds.back();
      pred_out << "video=" << video.video_id << " start=" << window.front()
               << " K=" << p.k_hat << " steps=";
      for (size_t s = 0; s < p.steps.size(); ++s) {
        if (s > 0) pred_out << ",";
        pred_out << p.steps[s];
      }
      pred_out << "\n";
    }
    std::vector<std::pair<const VideoCut*, const CutPrediction*>> pairs;
    for (size_t i = 0; i < cuts.size(); ++i) pairs.emplace_back(&cuts[i], &preds[i]);
    const auto decoded = decode_frames(pairs, video.length());
    std::ofstream frame_out(out / "decoded" / (video.video_id + ".txt"));
    for (int label : decoded) frame_out << ds.vocab.phrase(label) << "\n";

    if (!ds.activities.empty() && video.length() >= cfg.infer_seg_len) {
      const auto [top1, ranked] =
          infer_activity(video, bank, model, cfg.infer_n_seg, cfg.infer_seg_len);
      activity_out << video.video_id << "\t" << top1;
      for (const auto& [name, score] : ranked) activity_out << "\t" << name << "=" << score;
      activity_out << "\n";
    }
  }
  std::cout << "wrote predictions to " << out.string() << "\n";
  return 0;
}

struct VideoScores {
  double f1[3];
  double edit;
  double acc;
};

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir,
             const std::string& mapping_path, const std::string& label_map_path, bool concat,
             const std::vector<std::string>& exclude_tokens, const std::string& out_dir) {
  ActionVocab vocab = load_mapping(mapping_path);
  if (!label_map_path.empty()) {
    vocab = ActionVocab::from_entries(vocab.entries, load_label_map(label_map_path));
  }
  std::set<int> excluded;
  for (const auto& token : exclude_tokens) excluded.insert(vocab.id_of(token));

  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(gt_dir)) {
    if (entry.path().extension() == ".txt") ids.push_back(entry.path().stem().string());
  }
  std::sort(ids.begin(), ids.end());
  if (ids.empty()) throw InputError("no groundTruth files under " + gt_dir);

  const double taus[3] = {0.10, 0.25, 0.50};
  std::map<std::string, VideoScores> per_video;
  std::vector<int> all_pred, all_gt;
  long long tp[3] = {0, 0, 0}, fp[3] = {0, 0, 0}, fn[3] = {0, 0, 0};

  for (const auto& id : ids) {
    const auto gt_path = fs::path(gt_dir) / (id + ".txt");
    const auto pred_path = fs::path(pred_dir) / (id + ".txt");
    if (!fs::exists(pred_path)) throw InputError("missing prediction file for video " + id);
    const auto gt = load_framewise_labels(gt_path.string(), vocab);
    const auto pred = load_framewise_labels(pred_path.string(), vocab);
    if (gt.size() != pred.size()) {
      throw InputError("video " + id + ": prediction has " + std::to_string(pred.size()) +
                       " frames, ground truth has " + std::to_string(gt.size()));
    }
    // background exclusion: drop excluded frames from Acc and excluded-label
    // segments from the segmental metrics
    std::vector<int> acc_pred, acc_gt;
    for (size_t f = 0; f < gt.size(); ++f) {
      if (excluded.count(gt[f]) != 0) continue;
      acc_pred.push_back(pred[f]);
      acc_gt.push_back(gt[f]);
    }
    if (acc_gt.empty()) {
      throw InputError("video " + id + ": every frame is excluded from scoring");
    }
    auto strip = [&excluded](Segmentation segs) {
      Segmentation kept;
      for (const auto& s : segs) {
        if (excluded.count(s.label) == 0) kept.push_back(s);
      }
      return kept;
    };
    const auto gt_segs = strip(frames_to_segments(gt));
    const auto pred_segs = strip(frames_to_segments(pred));

    VideoScores vs;
    const bool both_empty = gt_segs.empty() && pred_segs.empty();
    for (int t = 0; t < 3; ++t) {
      vs.f1[t] = both_empty ? 100.0 : f1_at(pred_segs, gt_segs, taus[t]);
    }
    if (both_empty) {
      vs.edit = 100.0;
    } else if (gt_segs.empty() || pred_segs.empty()) {
      vs.edit = 0.0;
    } else {
      vs.edit = edit_score(pred_segs, gt_segs);
    }
    vs.acc = frame_accuracy(acc_pred, acc_gt);
    per_video[id] = vs;

    all_pred.insert(all_pred.end(), acc_pred.begin(), acc_pred.end());
    all_gt.insert(all_gt.end(), acc_gt.begin(), acc_gt.end());
    for (int t = 0; t < 3; ++t) {
      const auto counts = f1_counts(pred_segs, gt_segs, taus[t]);
      tp[t] += counts.tp;
      fp[t] += counts.fp;
      fn[t] += counts.fn;
    }
  }

  VideoScores agg{};
  const double n = static_cast<double>(per_video.size());
  if (concat) {
    for (int t = 0; t < 3; ++t) {
      const double denom = static_cast<double>(2 * tp[t] + fp[t] + fn[t]);
      agg.f1[t] = denom > 0.0 ? 100.0 * 2.0 * static_cast<double>(tp[t]) / denom : 0.0;
    }
    for (const auto& [id, vs] : per_video) agg.edit += vs.edit / n;
    agg.acc = frame_accuracy(all_pred, all_gt);
  } else {
    for (const auto& [id, vs] : per_video) {
      for (int t = 0; t < 3; ++t) agg.f1[t] += vs.f1[t] / n;
      agg.edit += vs.edit / n;
      agg.acc += vs.acc / n;
    }
  }

  std::printf("F1@10 F1@25 F1@50 Edit Acc\n");
  std::printf("%.1f %.1f %.1f %.1f %.1f\n", agg.f1[0], agg.f1[1], agg.f1[2], agg.edit,
              agg.acc);

  json report;
  report["aggregation"] = concat ? "concat" : "per_video_mean";
  report["mean"] = {{"F1@10", agg.f1[0]}, {"F1@25", agg.f1[1]}, {"F1@50", agg.f1[2]},
                    {"Edit", agg.edit},   {"Acc", agg.acc}};
  for (const auto& [id, vs] : per_video) {
    report["videos"][id] = {{"F1@10", vs.f1[0]}, {"F1@25", vs.f1[1]}, {"F1@50", vs.f1[2]},
                            {"Edit", vs.edit},   {"Acc", vs.acc}};
  }
  fs::create_directories(out_dir);
  std::ofstream report_out(fs::path(out_dir) / "eval_report.json");
  report_out << report.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prompt-based ordinal action understanding pipeline"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "run configuration file");
  std::uint64_t seed_val = 0;
  auto* seed_opt = app.add_option("--seed", seed_val, "override every configured seed");
  app.add_option("--out", g.out_dir, "override the output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->fallthrough();
  auto* train_cmd = app.add_subcommand("train", "pre-train the encoders");
  train_cmd->fallthrough();
  auto* extract = app.add_subcommand("extract", "write frame-encoder features as BRPF files");
  extract->fallthrough();
  std::string ex_checkpoint;
  std::vector<std::string> ex_videos;
  extract->add_option("--checkpoint", ex_checkpoint, "model checkpoint")->required();
  extract->add_option("--videos", ex_videos, "video ids (default: all)")->delimiter(',');
  auto* infer = app.add_subcommand("infer", "prompt-based inference over a split");
  infer->fallthrough();
  std::string in_checkpoint, in_split;
  infer->add_option("--checkpoint", in_checkpoint, "model checkpoint")->required();
  infer->add_option("--split", in_split, "file listing video ids");
  auto* eval_cmd = app.add_subcommand("eval", "score decoded frame labels");
  eval_cmd->fallthrough();
  std::string ev_pred, ev_gt, ev_mapping, ev_label_map, ev_out = "out";
  std::vector<std::string> ev_exclude;
  bool ev_concat = false;
  eval_cmd->add_option("--pred", ev_pred, "directory of predicted label files")->required();
  eval_cmd->add_option("--gt", ev_gt, "directory of ground-truth label files")->required();
  eval_cmd->add_option("--mapping", ev_mapping, "mapping file")->required();
  eval_cmd->add_option("--label-map", ev_label_map, "optional label remapping file");
  eval_cmd->add_option("--exclude", ev_exclude, "background labels to drop from scoring")
      ->delimiter(',');
  eval_cmd->add_flag("--concat", ev_concat, "pool frames across videos instead of averaging");
  eval_cmd->add_option("--out", ev_out, "report directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (seed_opt->count() > 0) g.seed = seed_val;

  try {
    if (synth->parsed()) return cmd_synth(g);
    if (train_cmd->parsed()) return cmd_train(g);
    if (extract->parsed()) return cmd_extract(g, ex_checkpoint, ex_videos);
    if (infer->parsed()) return cmd_infer(g, in_checkpoint, in_split);
    if (eval_cmd->parsed()) {
      return cmd_eval(ev_pred, ev_gt, ev_mapping, ev_label_map, ev_concat, ev_exclude, ev_out);
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
