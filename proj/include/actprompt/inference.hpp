#pragma once

#include <string>
#include <utility>
#include <vector>

#include "actprompt/dataset.hpp"
#include "actprompt/linalg.hpp"
#include "actprompt/model.hpp"
#include "actprompt/prompts.hpp"
#include "actprompt/sampler.hpp"

namespace actprompt {

// Frozen text features for every prompt the inference stage can ask about.
struct PromptBank {
  int k_max = 0;
  Mat stat_feats;                              // k_max x D, row k-1 = count k
  std::vector<Mat> sem_feats;                  // [i-1] = |A| x D, variant-averaged
  std::vector<std::vector<Mat>> sem_variants;  // optional, [i-1][a] = V x D
  bool has_variants = false;
  Mat activity_feats;                          // |activities| x D, may be empty
  std::vector<std::string> activity_names;
};

// How per-variant prompt scores combine during inference.
enum class VariantMode { AverageFeatures, Vote };

struct BankOptions {
  bool keep_variants = false;  // retain per-variant features for Vote mode
  std::string activity_template = "the person is making {activity}";
};

PromptBank build_prompt_bank(const ActionVocab& vocab, const VariantTable& table,
                             const Model& model, int k_max,
                             const std::vector<std::string>& activities = {},
                             const BankOptions& options = {});

// argmax_k cos(mean_count, stat_feats[k]), ties toward the smaller count.
int infer_count(const Vec& mean_count, const PromptBank& bank);

struct CutPrediction {
  int k_hat = 0;
  std::vector<int> steps;   // length k_hat
  std::vector<Vec> scores;  // per step: similarity (or vote count) per action
};

// Decision rule on precomputed fusion outputs: count from mean_count, then
// one semantic-prompt argmax per ordinal (ties toward the smaller action id).
CutPrediction infer_from_features(const ClipFeatures& feats, const PromptBank& bank,
                                  VariantMode mode = VariantMode::AverageFeatures);

// Runs all k_max fusion passes on the cut and applies infer_from_features.
CutPrediction infer_cut(const VideoCut& cut, const PromptBank& bank, const Model& model,
                        VariantMode mode = VariantMode::AverageFeatures);

// Mean clip feature over uniformly sampled segments fused with the
// ordinal-1 prompt.
Vec video_feature(const AnnotatedVideo& video, const Model& model, int n_seg = 64,
                  int seg_len = 8);

// Ranks configured activities by cosine similarity to the video feature.
std::pair<std::string, std::vector<std::pair<std::string, double>>> infer_activity(
    const AnnotatedVideo& video, const PromptBank& bank, const Model& model, int n_seg = 64,
    int seg_len = 8);

// Majority vote of per-cut step labels onto raw frames; ties resolve toward
// the earlier cut in the list.
std::vector<int> decode_frames(
    const std::vector<std::pair<const VideoCut*, const CutPrediction*>>& predictions,
    int video_len);

}  // namespace actprompt
