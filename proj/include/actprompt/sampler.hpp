#pragma once

#include <string>
#include <vector>

#include "actprompt/dataset.hpp"
#include "actprompt/linalg.hpp"

namespace actprompt {

struct Schedule {
  int downsample = 1;       // d: raw frames between consecutive cut frames
  double stride_rate = 1.0; // s: raw-frame step between windows is window_len*d*s
};

enum class PadPolicy { RepeatLast, DropPartial };

struct SampleConfig {
  int window_len = 16;
  std::vector<Schedule> schedules = {{1, 2.0}};
  PadPolicy pad_policy = PadPolicy::RepeatLast;
  int k_max = 8;

  void validate() const;  // throws InputError
};

struct StepSpan {
  int action_id;
  int begin;  // frame position within the cut, half-open span [begin, end)
  int end;
};

// A fixed-length window of frames with its ordered action-step list.
struct VideoCut {
  std::string video_id;
  std::vector<int> frame_indices;      // raw-frame indices, strictly increasing before clamping
  Mat features;                        // window_len x F
  std::vector<StepSpan> step_labels;   // run-length steps, at most k_max
  int K = 0;                           // = step_labels.size()
  std::vector<int> frame_step_ordinal; // 1-based step per frame; 0 = dropped by k_max truncation
  bool truncated = false;              // true when run-length encoding exceeded k_max
};

// All window index lists for one video under every schedule, deduplicated,
// in (schedule, start) order. Windows are lists of exactly window_len raw
// indices; under RepeatLast indices are clamped to video_len-1, under
// DropPartial out-of-range windows are omitted.
std::vector<std::vector<int>> plan_cuts(int video_len, const SampleConfig& cfg);

// Run-length encodes the labels inside the window into ordinal steps.
VideoCut extract_cut(const AnnotatedVideo& video, const std::vector<int>& window, int k_max);

// Uniformly spaced fixed-length segments used for activity recognition.
std::vector<std::vector<int>> uniform_segments(int video_len, int n_seg = 64, int seg_len = 8);

}  // namespace actprompt
