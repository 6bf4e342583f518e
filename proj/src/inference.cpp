#include "actprompt/inference.hpp"

#include <algorithm>
#include <map>

#include "actprompt/contrastive.hpp"
#include "actprompt/errors.hpp"

namespace actprompt {

namespace {

std::string render_activity(const std::string& tmpl, const std::string& name) {
  std::string out = tmpl;
  const std::string slot = "{activity}";
  size_t pos = out.find(slot);
  if (pos == std::string::npos) {
    throw InputError("activity template is missing the {activity} slot: '" + tmpl + "'");
  }
  out.replace(pos, slot.size(), name);
  return out;
}

}  // namespace

PromptBank build_prompt_bank(const ActionVocab& vocab, const VariantTable& table,
                             const Model& model, int k_max,
                             const std::vector<std::string>& activities,
                             const BankOptions& options) {
  if (vocab.size() == 0) throw InputError("prompt bank needs a non-empty action vocabulary");
  if (k_max < 1) throw InputError("prompt bank needs k_max >= 1");
  table.validate();

  PromptBank bank;
  bank.k_max = k_max;
  bank.has_variants = options.keep_variants;

  std::vector<std::string> stat_prompts;
  for (int k = 1; k <= k_max; ++k) stat_prompts.push_back(make_statistical_prompt(k));
  bank.stat_feats = model.encode_texts(stat_prompts);

  const int n_actions = vocab.size();
  const int n_variants = static_cast<int>(table.semantic_variants.size());
  for (int i = 1; i <= k_max; ++i) {
    // encode the |A| x V prompt block for ordinal i in one batch
    std::vector<std::string> block;
    block.reserve(static_cast<size_t>(n_actions) * n_variants);
    for (int a = 0; a < n_actions; ++a) {
      for (const auto& prompt : make_semantic_prompts(i, vocab.phrase(a), table)) {
        block.push_back(prompt);
      }
    }
    Mat feats = model.encode_texts(block);
    Mat mean(n_actions, feats.cols());
    std::vector<Mat> per_action;
    for (int a = 0; a < n_actions; ++a) {
      Mat rows = feats.middleRows(static_cast<Eigen::Index>(a) * n_variants, n_variants);
      mean.row(a) = rows.colwise().mean();
      if (options.keep_variants) per_action.push_back(std::move(rows));
    }
    bank.sem_feats.push_back(std::move(mean));
    if (options.keep_variants) bank.sem_variants.push_back(std::move(per_action));
  }

  if (!activities.empty()) {
    std::vector<std::string> prompts;
    for (const auto& name : activities) {
      prompts.push_back(render_activity(options.activity_template, name));
    }
    bank.activity_feats = model.encode_texts(prompts);
    bank.activity_names = activities;
  }
  return bank;
}

int infer_count(const Vec& mean_count, const PromptBank& bank) {
  if (bank.k_max < 1) throw InputError("infer_count: prompt bank not built");
  int best = 1;
  double best_sim = -2.0;
  for (int k = 1; k <= bank.k_max; ++k) {
    const Vec row = bank.stat_feats.row(k - 1).transpose();
    const double sim = cosine_sim(mean_count, row);
    if (sim > best_sim) {
      best_sim = sim;
      best = k;
    }
  }
  return best;
}

CutPrediction infer_from_features(const ClipFeatures& feats, const PromptBank& bank,
                                  VariantMode mode) {
  if (mode == VariantMode::Vote && !bank.has_variants) {
    throw InputError("infer_cut: vote mode needs a bank built with keep_variants");
  }
  if (feats.per_ordinal.rows() < bank.k_max) {
    throw InputError("infer_cut: features carry fewer fusion passes than k_max");
  }
  CutPrediction pred;
  pred.k_hat = infer_count(feats.mean_count, bank);
  for (int i = 1; i <= pred.k_hat; ++i) {
    const Vec clip = feats.per_ordinal.row(i - 1).transpose();
    const Mat& sem = bank.sem_feats[static_cast<size_t>(i - 1)];
    const int n_actions = static_cast<int>(sem.rows());
    Vec scores(n_actions);
    if (mode == VariantMode::AverageFeatures) {
      for (int a = 0; a < n_actions; ++a) {
        scores(a) = cosine_sim(clip, sem.row(a).transpose());
      }
    } else {
      // each variant casts one vote for its best-matching action
      scores.setZero();
      const auto& blocks = bank.sem_variants[static_cast<size_t>(i - 1)];
      const int n_variants = static_cast<int>(blocks[0].rows());
      for (int v = 0; v < n_variants; ++v) {
        int best_a = 0;
        double best_sim = -2.0;
        for (int a = 0; a < n_actions; ++a) {
          const double sim =
              cosine_sim(clip, blocks[static_cast<size_t>(a)].row(v).transpose());
          if (sim > best_sim) {
            best_sim = sim;
            best_a = a;
          }
        }
        scores(best_a) += 1.0;
      }
    }
    int best_a = 0;
    for (int a = 1; a < n_actions; ++a) {
      if (scores(a) > scores(best_a)) best_a = a;
    }
    pred.steps.push_back(best_a);
    pred.scores.push_back(std::move(scores));
  }
  return pred;
}

CutPrediction infer_cut(const VideoCut& cut, const PromptBank& bank, const Model& model,
                        VariantMode mode) {
  return infer_from_features(model.encode_cut_features(cut.features, bank.k_max), bank, mode);
}

Vec video_feature(const AnnotatedVideo& video, const Model& model, int n_seg, int seg_len) {
  const auto segments = uniform_segments(video.length(), n_seg, seg_len);
  const Vec ord1 = model.encode_text(make_ordinal_prompt(1));
  Vec mean = Vec::Zero(model.config().embed_dim);
  for (const auto& segment : segments) {
    Mat frames(seg_len, video.features.cols());
    for (int f = 0; f < seg_len; ++f) frames.row(f) = video.features.row(segment[static_cast<size_t>(f)]);
    const Mat tokens = model.encode_frames(frames);
    const auto [clip, cnt] = model.fuse(tokens, ord1);
    mean += clip;
  }
  return mean / static_cast<double>(segments.size());
}

std::pair<std::string, std::vector<std::pair<std::string, double>>> infer_activity(
    const AnnotatedVideo& video, const PromptBank& bank, const Model& model, int n_seg,
    int seg_len) {
  if (bank.activity_names.empty()) {
    throw InputError("infer_activity: no activities configured in the prompt bank");
  }
  const Vec feat = video_feature(video, model, n_seg, seg_len);
  std::vector<std::pair<std::string, double>> ranked;
  for (size_t a = 0; a < bank.activity_names.size(); ++a) {
    ranked.emplace_back(bank.activity_names[a],
                        cosine_sim(feat, bank.activity_feats.row(static_cast<Eigen::Index>(a))
                                             .transpose()));
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& x, const auto& y) { return x.second > y.second; });
  return {ranked.front().first, ranked};
}

std::vector<int> decode_frames(
    const std::vector<std::pair<const VideoCut*, const CutPrediction*>>& predictions,
    int video_len) {
  if (video_len < 1) throw InputError("decode_frames: video_len must be >= 1");
  struct Tally {
    std::map<int, std::pair<int, int>> votes;  // label -> (count, first cut index)
  };
  std::vector<Tally> tallies(static_cast<size_t>(video_len));

  for (size_t c = 0; c < predictions.size(); ++c) {
    const VideoCut& cut = *predictions[c].first;
    const CutPrediction& pred = *predictions[c].second;
    if (pred.k_hat < 1) throw InputError("decode_frames: prediction with no steps");
    std::map<int, int> cut_labels;  // raw frame -> label, one vote per cut
    for (size_t j = 0; j < cut.frame_indices.size(); ++j) {
      const int frame = cut.frame_indices[j];
      if (frame < 0 || frame >= video_len) {
        throw InputError("decode_frames: cut frame index out of range");
      }
      int ordinal = cut.frame_step_ordinal[j];
      // dropped/overflow frames fall back to the last predicted step
      const int effective = ordinal == 0 ? pred.k_hat : std::min(ordinal, pred.k_hat);
      const int label = pred.steps[static_cast<size_t>(effective - 1)];
      cut_labels.emplace(frame, label);
    }
    for (const auto& [frame, label] : cut_labels) {
      auto& tally = tallies[static_cast<size_t>(frame)].votes;
      auto it = tally.find(label);
      if (it == tally.end()) {
        tally.emplace(label, std::make_pair(1, static_cast<int>(c)));
      } else {
        it->second.first += 1;
      }
    }
  }

  std::vector<int> labels(static_cast<size_t>(video_len));
  for (int f = 0; f < video_len; ++f) {
    const auto& votes = tallies[static_cast<size_t>(f)].votes;
    if (votes.empty()) {
      throw InputError("decode_frames: frame " + std::to_string(f) +
                       " is not covered by any cut");
    }
    int best_label = -1;
    int best_count = -1;
    int best_first = -1;
    for (const auto& [label, stats] : votes) {
      const auto [count, first] = stats;
      if (count > best_count || (count == best_count && first < best_first)) {
        best_label = label;
        best_count = count;
        best_first = first;
      }
    }
    labels[static_cast<size_t>(f)] = best_label;
  }
  return labels;
}

}  // namespace actprompt
