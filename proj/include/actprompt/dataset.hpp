#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "actprompt/linalg.hpp"

namespace actprompt {

// Label space for one dataset. Ids are contiguous from 0; verb phrases are
// unique after the optional label_map remapping has been applied.
struct ActionVocab {
  std::vector<std::pair<int, std::string>> entries;  // (id, verb phrase)
  std::map<std::string, std::string> label_map;      // raw token -> vocab phrase

  int size() const { return static_cast<int>(entries.size()); }
  const std::string& phrase(int id) const;
  // Looks a raw label token up, applying label_map first. Throws InputError
  // on unknown labels.
  int id_of(const std::string& token) const;
  bool contains(const std::string& token) const;

  // Validates id contiguity and phrase uniqueness.
  static ActionVocab from_entries(std::vector<std::pair<int, std::string>> entries,
                                  std::map<std::string, std::string> label_map = {});
};

// Per-frame annotations plus per-frame feature vectors for one raw video.
struct AnnotatedVideo {
  std::string video_id;
  std::vector<int> frame_labels;  // one action id per frame
  Mat features;                   // frames x feature_dim
  double fps = 15.0;
  std::string activity_label;     // optional

  int length() const { return static_cast<int>(frame_labels.size()); }
};

struct SynthConfig {
  int n_actions = 6;
  int n_activities = 3;
  int actions_min = 3;  // actions_per_activity range, inclusive
  int actions_max = 5;
  int mean_segment_len = 8;
  int feature_dim = 32;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
  int n_videos = 30;

  void validate() const;  // throws InputError
};

struct SynthDataset {
  ActionVocab vocab;
  std::vector<AnnotatedVideo> videos;
  std::vector<std::string> activity_names;          // one per activity
  std::vector<std::vector<int>> activity_steps;     // action-id sequence per activity
};

// mapping file: UTF-8 text, lines "<int><single space><label>".
ActionVocab load_mapping(const std::string& path);

// label_map file: lines "<raw token><single space><vocab phrase>".
std::map<std::string, std::string> load_label_map(const std::string& path);

// groundTruth file: one label token per line, line i = frame i.
std::vector<int> load_framewise_labels(const std::string& path, const ActionVocab& vocab);

// BRPF feature file: "BRPF", u32 version=1, u32 T, u32 F, then T*F
// little-endian float32, row-major.
Mat load_feature_file(const std::string& path);
void write_feature_file(const std::string& path, const Mat& features);

// Action prototype vectors used by the synthetic generator: one row per
// action, orthonormalized when feature_dim >= n_actions.
Mat synth_prototypes(const SynthConfig& cfg);

// Deterministic synthetic dataset: pure function of cfg (including seed).
SynthDataset generate_synthetic(const SynthConfig& cfg);

// Same prototypes and activities as generate_synthetic(cfg), but videos
// drawn from per-video streams [first_video, first_video + count). Lets a
// caller produce held-out videos from the same generator.
SynthDataset generate_synthetic(const SynthConfig& cfg, int first_video, int count);

}  // namespace actprompt
