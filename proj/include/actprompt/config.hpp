#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "actprompt/dataset.hpp"
#include "actprompt/model.hpp"
#include "actprompt/sampler.hpp"
#include "actprompt/trainer.hpp"

namespace actprompt {

// Flat "key = value" file with '#' comments and dotted keys. Repeated keys
// are kept in order (used by sampler.schedule).
struct KvFile {
  std::vector<std::pair<std::string, std::string>> entries;

  static KvFile parse_text(const std::string& text, const std::string& origin = "<config>");
  static KvFile parse_file(const std::string& path);
  std::string serialize() const;

  std::optional<std::string> get(const std::string& key) const;
  std::vector<std::string> get_all(const std::string& key) const;
};

struct DataPaths {
  std::string mapping;
  std::string groundtruth_dir;
  std::string features_dir;
  std::string activities_file;  // optional: lines "<video_id> <activity>"
  std::string label_map;        // optional
  std::string split_file;       // optional: one video id per line
};

struct RunConfig {
  DataPaths data;
  SampleConfig sampler;
  ModelConfig model;  // frame_input_dim and vocab_size are filled at run time
  TrainConfig train;
  SynthConfig synth;
  std::string variant_table = "default";  // "default" | "canonical" | file path
  std::string activity_template = "the person is making {activity}";
  std::string variant_mode = "average";   // "average" | "vote"
  int infer_n_seg = 64;
  int infer_seg_len = 8;
  bool eval_concat_videos = false;
  std::string out_dir = "out";

  static RunConfig from_kv(const KvFile& kv);
  static RunConfig from_file(const std::string& path);
  KvFile to_kv() const;
  std::string serialize() const { return to_kv().serialize(); }

  VariantTable load_variant_table() const;
  // Checks that every configured dataset path exists; throws InputError.
  void validate_data_paths() const;
};

// On-disk dataset in the mapping/groundTruth/features layout.
struct DiskDataset {
  ActionVocab vocab;
  std::vector<AnnotatedVideo> videos;
  std::vector<std::string> activities;  // distinct labels, sorted
};
DiskDataset load_disk_dataset(const RunConfig& cfg);

}  // namespace actprompt
