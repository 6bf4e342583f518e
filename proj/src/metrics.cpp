#include "actprompt/metrics.hpp"

#include <algorithm>
#include <numeric>

#include "actprompt/errors.hpp"

namespace actprompt {

Segmentation frames_to_segments(const std::vector<int>& labels) {
  if (labels.empty()) throw InputError("frames_to_segments: empty label list");
  Segmentation segs;
  int begin = 0;
  for (size_t f = 1; f <= labels.size(); ++f) {
    if (f == labels.size() || labels[f] != labels[f - 1]) {
      segs.push_back({labels[static_cast<size_t>(begin)], begin, static_cast<int>(f)});
      begin = static_cast<int>(f);
    }
  }
  return segs;
}

double frame_accuracy(const std::vector<int>& pred, const std::vector<int>& gt) {
  if (pred.size() != gt.size()) {
    throw InputError("frame_accuracy: length mismatch, pred=" + std::to_string(pred.size()) +
                     " gt=" + std::to_string(gt.size()));
  }
  if (pred.empty()) throw InputError("frame_accuracy: empty inputs");
  size_t equal = 0;
  for (size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == gt[i]) ++equal;
  }
  return 100.0 * static_cast<double>(equal) / static_cast<double>(pred.size());
}

namespace {

int levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), 0);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= m; ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

std::vector<int> segment_labels(const Segmentation& segs) {
  std::vector<int> labels;
  labels.reserve(segs.size());
  for (const auto& s : segs) labels.push_back(s.label);
  return labels;
}

double iou(const Segment& a, const Segment& b) {
  const int inter = std::max(0, std::min(a.end, b.end) - std::max(a.begin, b.begin));
  const int uni = std::max(a.end, b.end) - std::min(a.begin, b.begin);
  return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
}

}  // namespace

double edit_score(const Segmentation& pred, const Segmentation& gt) {
  if (pred.empty() || gt.empty()) throw InputError("edit_score: empty segmentation");
  const int dist = levenshtein(segment_labels(pred), segment_labels(gt));
  const double denom = static_cast<double>(std::max(pred.size(), gt.size()));
  return 100.0 * (1.0 - dist / denom);
}

F1Counts f1_counts(const Segmentation& pred, const Segmentation& gt, double tau) {
  if (tau <= 0.0 || tau >= 1.0) throw InputError("f1_at: tau must be in (0, 1)");
  std::vector<bool> gt_used(gt.size(), false);
  F1Counts counts;
  for (const auto& p : pred) {
    int best = -1;
    double best_iou = -1.0;
    for (size_t g = 0; g < gt.size(); ++g) {
      if (gt_used[g] || gt[g].label != p.label) continue;
      const double v = iou(p, gt[g]);
      if (v >= tau && v > best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      gt_used[static_cast<size_t>(best)] = true;
      ++counts.tp;
    }
  }
  counts.fp = static_cast<int>(pred.size()) - counts.tp;
  counts.fn = static_cast<int>(gt.size()) - counts.tp;
  return counts;
}

double f1_at(const Segmentation& pred, const Segmentation& gt, double tau) {
  const F1Counts c = f1_counts(pred, gt, tau);
  const double denom = 2.0 * c.tp + c.fp + c.fn;  // algebraically 2PR/(P+R)
  return denom > 0.0 ? 100.0 * 2.0 * c.tp / denom : 0.0;
}

double topk_accuracy(const std::vector<std::vector<double>>& score_lists,
                     const std::vector<int>& gt_labels, int k) {
  if (k < 1) throw InputError("topk_accuracy: k must be >= 1");
  if (score_lists.size() != gt_labels.size()) {
    throw InputError("topk_accuracy: item count mismatch");
  }
  if (score_lists.empty()) throw InputError("topk_accuracy: no items");
  int hits = 0;
  for (size_t i = 0; i < score_lists.size(); ++i) {
    const auto& scores = score_lists[i];
    const int gt = gt_labels[i];
    if (gt < 0 || gt >= static_cast<int>(scores.size())) {
      throw InputError("topk_accuracy: ground-truth label outside score list at item " +
                       std::to_string(i));
    }
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (scores[static_cast<size_t>(a)] != scores[static_cast<size_t>(b)]) {
        return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
      }
      return a < b;
    });
    const int rank_limit = std::min<int>(k, static_cast<int>(order.size()));
    for (int r = 0; r < rank_limit; ++r) {
      if (order[static_cast<size_t>(r)] == gt) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(score_lists.size());
}

}  // namespace actprompt
