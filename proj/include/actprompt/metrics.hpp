#pragma once

#include <vector>

namespace actprompt {

struct Segment {
  int label;
  int begin;  // half-open frame span [begin, end)
  int end;
};

// Contiguous non-overlapping segments sorted by start; adjacent segments
// carry distinct labels.
using Segmentation = std::vector<Segment>;

// Run-length encoding with half-open spans covering [0, labels.size()).
Segmentation frames_to_segments(const std::vector<int>& labels);

// 100 * fraction of frames with equal labels.
double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& gt);

// 100 * (1 - Levenshtein(pred labels, gt labels) / max(|pred|, |gt|)).
double edit_score(const Segmentation& pred, const Segmentation& gt);

// Greedy one-to-one matching in prediction order, picking the highest-IoU
// unmatched ground-truth segment with the same label.
struct F1Counts {
  int tp = 0;
  int fp = 0;
  int fn = 0;
};
F1Counts f1_counts(const Segmentation& pred, const Segmentation& gt, double tau);

// Segmental F1 at IoU threshold tau from the greedy matching above.
double f1_at(const Segmentation& pred, const Segmentation& gt, double tau);

// 100 * fraction of items whose ground-truth label ranks within the k
// highest scores; score ties broken toward the smaller label id.
double topk_accuracy(const std::vector<std::vector<double>>& score_lists,
                     const std::vector<int>& gt_labels, int k);

}  // namespace actprompt
