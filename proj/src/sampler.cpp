#include "actprompt/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "actprompt/errors.hpp"

namespace actprompt {

void SampleConfig::validate() const {
  if (window_len < 2) throw InputError("sampler: window_len must be >= 2");
  if (k_max < 1) throw InputError("sampler: k_max must be >= 1");
  if (schedules.empty()) throw InputError("sampler: at least one schedule required");
  for (const auto& s : schedules) {
    if (s.downsample < 1) throw InputError("sampler: downsample must be >= 1");
    if (s.stride_rate <= 0.0) throw InputError("sampler: stride_rate must be > 0");
  }
}

std::vector<std::vector<int>> plan_cuts(int video_len, const SampleConfig& cfg) {
  cfg.validate();
  if (video_len < 1) throw InputError("plan_cuts: video_len must be >= 1");

  std::vector<std::vector<int>> windows;
  std::set<std::vector<int>> seen;
  for (const auto& sched : cfg.schedules) {
    const double step = static_cast<double>(cfg.window_len) * sched.downsample * sched.stride_rate;
    for (int w = 0;; ++w) {
      const long long start = std::llround(w * step);
      if (start >= video_len) break;
      std::vector<int> idx(static_cast<size_t>(cfg.window_len));
      bool overruns = false;
      for (int f = 0; f < cfg.window_len; ++f) {
        long long raw = start + static_cast<long long>(f) * sched.downsample;
        if (raw >= video_len) {
          overruns = true;
          raw = video_len - 1;
        }
        idx[static_cast<size_t>(f)] = static_cast<int>(raw);
      }
      if (overruns && cfg.pad_policy == PadPolicy::DropPartial) continue;
      if (seen.insert(idx).second) windows.push_back(std::move(idx));
    }
  }
  return windows;
}

VideoCut extract_cut(const AnnotatedVideo& video, const std::vector<int>& window, int k_max) {
  if (k_max < 1) throw InputError("extract_cut: k_max must be >= 1");
  VideoCut cut;
  cut.video_id = video.video_id;
  cut.frame_indices = window;
  cut.features.resize(static_cast<Eigen::Index>(window.size()), video.features.cols());

  std::vector<int> labels(window.size());
  for (size_t f = 0; f < window.size(); ++f) {
    int raw = window[f];
    if (raw < 0 || raw >= video.length()) {
      throw InputError("extract_cut: frame index " + std::to_string(raw) +
                       " out of range for video " + video.video_id);
    }
    labels[f] = video.frame_labels[static_cast<size_t>(raw)];
    cut.features.row(static_cast<Eigen::Index>(f)) = video.features.row(raw);
  }

  cut.frame_step_ordinal.assign(window.size(), 0);
  int begin = 0;
  for (size_t f = 0; f <= labels.size(); ++f) {
    if (f == labels.size() || (f > 0 && labels[f] != labels[f - 1])) {
      if (static_cast<int>(cut.step_labels.size()) < k_max) {
        cut.step_labels.push_back({labels[static_cast<size_t>(begin)], begin, static_cast<int>(f)});
        for (int g = begin; g < static_cast<int>(f); ++g) {
          cut.frame_step_ordinal[static_cast<size_t>(g)] =
              static_cast<int>(cut.step_labels.size());
        }
      } else {
        cut.truncated = true;  // frames past the k_max-th step stay at ordinal 0
      }
      begin = static_cast<int>(f);
    }
  }
  cut.K = static_cast<int>(cut.step_labels.size());
  return cut;
}

std::vector<std::vector<int>> uniform_segments(int video_len, int n_seg, int seg_len) {
  if (n_seg < 1 || seg_len < 1) throw InputError("uniform_segments: n_seg and seg_len must be >= 1");
  if (video_len < seg_len) {
    throw InputError("uniform_segments: video has " + std::to_string(video_len) +
                     " frames, segment needs " + std::to_string(seg_len));
  }
  std::vector<std::vector<int>> segments;
  segments.reserve(static_cast<size_t>(n_seg));
  const double span = static_cast<double>(video_len - seg_len);
  for (int i = 0; i < n_seg; ++i) {
    const int start =
        n_seg == 1 ? 0 : static_cast<int>(std::llround(i * span / (n_seg - 1)));
    std::vector<int> idx(static_cast<size_t>(seg_len));
    for (int f = 0; f < seg_len; ++f) idx[static_cast<size_t>(f)] = start + f;
    segments.push_back(std::move(idx));
  }
  return segments;
}

}  // namespace actprompt
