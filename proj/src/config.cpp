#include "actprompt/config.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "actprompt/errors.hpp"

namespace fs = std::filesystem;

namespace actprompt {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int to_int(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InputError("config: " + key + " expects an integer, got '" + value + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    auto v = std::stoull(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InputError("config: " + key + " expects an unsigned integer, got '" + value + "'");
  }
}

double to_double(const std::string& key, const std::string& value) {
  try {
    size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InputError("config: " + key + " expects a number, got '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw InputError("config: " + key + " expects a boolean, got '" + value + "'");
}

}  // namespace

KvFile KvFile::parse_text(const std::string& text, const std::string& origin) {
  KvFile kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw InputError(origin + ":" + std::to_string(lineno) +
                       ": expected 'key = value', got '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw InputError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    kv.entries.emplace_back(std::move(key), std::move(value));
  }
  return kv;
}

KvFile KvFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_text(buf.str(), path);
}

std::string KvFile::serialize() const {
  std::string out;
  for (const auto& [key, value] : entries) {
    out += key;
    out += " = ";
    out += value;
    out += "\n";
  }
  return out;
}

std::optional<std::string> KvFile::get(const std::string& key) const {
  std::optional<std::string> found;
  for (const auto& [k, v] : entries) {
    if (k == key) found = v;  // last assignment wins
  }
  return found;
}

std::vector<std::string> KvFile::get_all(const std::string& key) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries) {
    if (k == key) out.push_back(v);
  }
  return out;
}

RunConfig RunConfig::from_kv(const KvFile& kv) {
  RunConfig cfg;
  cfg.sampler.schedules.clear();

  for (const auto& [key, value] : kv.entries) {
    if (key == "data.mapping") cfg.data.mapping = value;
    else if (key == "data.groundtruth_dir") cfg.data.groundtruth_dir = value;
    else if (key == "data.features_dir") cfg.data.features_dir = value;
    else if (key == "data.activities") cfg.data.activities_file = value;
    else if (key == "data.label_map") cfg.data.label_map = value;
    else if (key == "data.split") cfg.data.split_file = value;
    else if (key == "sampler.window_len") cfg.sampler.window_len = to_int(key, value);
    else if (key == "sampler.schedule") {
      const size_t colon = value.find(':');
      if (colon == std::string::npos) {
        throw InputError("config: sampler.schedule expects 'd:s', got '" + value + "'");
      }
      Schedule s;
      s.downsample = to_int(key, trim(value.substr(0, colon)));
      s.stride_rate = to_double(key, trim(value.substr(colon + 1)));
      cfg.sampler.schedules.push_back(s);
    } else if (key == "sampler.pad_policy") {
      if (value == "repeat_last") cfg.sampler.pad_policy = PadPolicy::RepeatLast;
      else if (value == "drop_partial") cfg.sampler.pad_policy = PadPolicy::DropPartial;
      else throw InputError("config: sampler.pad_policy must be repeat_last or drop_partial");
    } else if (key == "sampler.k_max") cfg.sampler.k_max = to_int(key, value);
    else if (key == "model.embed_dim") cfg.model.embed_dim = to_int(key, value);
    else if (key == "model.fusion_layers") cfg.model.fusion_layers = to_int(key, value);
    else if (key == "model.fusion_heads") cfg.model.fusion_heads = to_int(key, value);
    else if (key == "model.text_layers") cfg.model.text_layers = to_int(key, value);
    else if (key == "model.text_width") cfg.model.text_width = to_int(key, value);
    else if (key == "model.text_heads") cfg.model.text_heads = to_int(key, value);
    else if (key == "model.max_text_len") cfg.model.max_text_len = to_int(key, value);
    else if (key == "model.logit_scale_init") cfg.model.logit_scale_init = to_double(key, value);
    else if (key == "model.seed") cfg.model.seed = to_u64(key, value);
    else if (key == "model.train_ordinal_embeddings") {
      cfg.model.train_ordinal_embeddings = to_bool(key, value);
    } else if (key == "train.batch_size") cfg.train.batch_size = to_int(key, value);
    else if (key == "train.epochs") cfg.train.epochs = to_int(key, value);
    else if (key == "train.max_steps") cfg.train.max_steps = to_int(key, value);
    else if (key == "train.base_lr") cfg.train.base_lr = to_double(key, value);
    else if (key == "train.weight_decay") cfg.train.weight_decay = to_double(key, value);
    else if (key == "train.warmup_frac") cfg.train.warmup_frac = to_double(key, value);
    else if (key == "train.seed") cfg.train.seed = to_u64(key, value);
    else if (key == "train.early_stop_loss") cfg.train.early_stop_loss = to_double(key, value);
    else if (key == "loss.lambda1") cfg.train.weights.lambda1 = to_double(key, value);
    else if (key == "loss.lambda2") cfg.train.weights.lambda2 = to_double(key, value);
    else if (key == "loss.enable_sem") cfg.train.weights.enable_sem = to_bool(key, value);
    else if (key == "loss.enable_integ") cfg.train.weights.enable_integ = to_bool(key, value);
    else if (key == "loss.enable_stat") cfg.train.weights.enable_stat = to_bool(key, value);
    else if (key == "prompts.variant_table") cfg.variant_table = value;
    else if (key == "prompts.activity_template") cfg.activity_template = value;
    else if (key == "infer.variant_mode") {
      if (value != "average" && value != "vote") {
        throw InputError("config: infer.variant_mode must be average or vote");
      }
      cfg.variant_mode = value;
    } else if (key == "infer.n_seg") cfg.infer_n_seg = to_int(key, value);
    else if (key == "infer.seg_len") cfg.infer_seg_len = to_int(key, value);
    else if (key == "eval.concat_videos") cfg.eval_concat_videos = to_bool(key, value);
    else if (key == "out.dir") cfg.out_dir = value;
    else if (key == "synth.n_actions") cfg.synth.n_actions = to_int(key, value);
    else if (key == "synth.n_activities") cfg.synth.n_activities = to_int(key, value);
    else if (key == "synth.actions_min") cfg.synth.actions_min = to_int(key, value);
    else if (key == "synth.actions_max") cfg.synth.actions_max = to_int(key, value);
    else if (key == "synth.mean_segment_len") cfg.synth.mean_segment_len = to_int(key, value);
    else if (key == "synth.feature_dim") cfg.synth.feature_dim = to_int(key, value);
    else if (key == "synth.noise_sigma") cfg.synth.noise_sigma = to_double(key, value);
    else if (key == "synth.seed") cfg.synth.seed = to_u64(key, value);
    else if (key == "synth.n_videos") cfg.synth.n_videos = to_int(key, value);
    else throw InputError("config: unknown key '" + key + "'");
  }
  if (cfg.sampler.schedules.empty()) cfg.sampler.schedules = {{1, 2.0}};
  cfg.model.max_frames = cfg.sampler.window_len;
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  return from_kv(KvFile::parse_file(path));
}

KvFile RunConfig::to_kv() const {
  KvFile kv;
  auto put = [&kv](const std::string& key, const std::string& value) {
    kv.entries.emplace_back(key, value);
  };
  if (!data.mapping.empty()) put("data.mapping", data.mapping);
  if (!data.groundtruth_dir.empty()) put("data.groundtruth_dir", data.groundtruth_dir);
  if (!data.features_dir.empty()) put("data.features_dir", data.features_dir);
  if (!data.activities_file.empty()) put("data.activities", data.activities_file);
  if (!data.label_map.empty()) put("data.label_map", data.label_map);
  if (!data.split_file.empty()) put("data.split", data.split_file);
  put("sampler.window_len", std::to_string(sampler.window_len));
  for (const auto& s : sampler.schedules) {
    put("sampler.schedule", std::to_string(s.downsample) + ":" + fmt_double(s.stride_rate));
  }
  put("sampler.pad_policy",
      sampler.pad_policy == PadPolicy::RepeatLast ? "repeat_last" : "drop_partial");
  put("sampler.k_max", std::to_string(sampler.k_max));
  put("model.embed_dim", std::to_string(model.embed_dim));
  put("model.fusion_layers", std::to_string(model.fusion_layers));
  put("model.fusion_heads", std::to_string(model.fusion_heads));
  put("model.text_layers", std::to_string(model.text_layers));
  put("model.text_width", std::to_string(model.text_width));
  put("model.text_heads", std::to_string(model.text_heads));
  put("model.max_text_len", std::to_string(model.max_text_len));
  put("model.logit_scale_init", fmt_double(model.logit_scale_init));
  put("model.seed", std::to_string(model.seed));
  put("model.train_ordinal_embeddings", model.train_ordinal_embeddings ? "true" : "false");
  put("train.batch_size", std::to_string(train.batch_size));
  put("train.epochs", std::to_string(train.epochs));
  put("train.max_steps", std::to_string(train.max_steps));
  put("train.base_lr", fmt_double(train.base_lr));
  put("train.weight_decay", fmt_double(train.weight_decay));
  put("train.warmup_frac", fmt_double(train.warmup_frac));
  put("train.seed", std::to_string(train.seed));
  put("train.early_stop_loss", fmt_double(train.early_stop_loss));
  put("loss.lambda1", fmt_double(train.weights.lambda1));
  put("loss.lambda2", fmt_double(train.weights.lambda2));
  put("loss.enable_sem", train.weights.enable_sem ? "true" : "false");
  put("loss.enable_integ", train.weights.enable_integ ? "true" : "false");
  put("loss.enable_stat", train.weights.enable_stat ? "true" : "false");
  put("prompts.variant_table", variant_table);
  put("prompts.activity_template", activity_template);
  put("infer.variant_mode", variant_mode);
  put("infer.n_seg", std::to_string(infer_n_seg));
  put("infer.seg_len", std::to_string(infer_seg_len));
  put("eval.concat_videos", eval_concat_videos ? "true" : "false");
  put("out.dir", out_dir);
  put("synth.n_actions", std::to_string(synth.n_actions));
  put("synth.n_activities", std::to_string(synth.n_activities));
  put("synth.actions_min", std::to_string(synth.actions_min));
  put("synth.actions_max", std::to_string(synth.actions_max));
  put("synth.mean_segment_len", std::to_string(synth.mean_segment_len));
  put("synth.feature_dim", std::to_string(synth.feature_dim));
  put("synth.noise_sigma", fmt_double(synth.noise_sigma));
  put("synth.seed", std::to_string(synth.seed));
  put("synth.n_videos", std::to_string(synth.n_videos));
  return kv;
}

VariantTable RunConfig::load_variant_table() const {
  if (variant_table == "default") return VariantTable::defaults();
  if (variant_table == "canonical") return VariantTable::canonical_only();
  return VariantTable::load(variant_table);
}

void RunConfig::validate_data_paths() const {
  auto need = [](const std::string& path, const char* what) {
    if (path.empty()) throw InputError(std::string("config: ") + what + " is not set");
    if (!fs::exists(path)) {
      throw InputError(std::string(what) + " does not exist: " + path);
    }
  };
  need(data.mapping, "data.mapping");
  need(data.groundtruth_dir, "data.groundtruth_dir");
  need(data.features_dir, "data.features_dir");
  if (!data.activities_file.empty()) need(data.activities_file, "data.activities");
  if (!data.label_map.empty()) need(data.label_map, "data.label_map");
  if (!data.split_file.empty()) need(data.split_file, "data.split");
  if (variant_table != "default" && variant_table != "canonical") {
    need(variant_table, "prompts.variant_table");
  }
}

DiskDataset load_disk_dataset(const RunConfig& cfg) {
  cfg.validate_data_paths();
  ActionVocab vocab = load_mapping(cfg.data.mapping);
  if (!cfg.data.label_map.empty()) {
    vocab = ActionVocab::from_entries(vocab.entries, load_label_map(cfg.data.label_map));
  }

  std::vector<std::string> ids;
  if (!cfg.data.split_file.empty()) {
    std::ifstream in(cfg.data.split_file);
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (!line.empty()) ids.push_back(line);
    }
  } else {
    for (const auto& entry : fs::directory_iterator(cfg.data.groundtruth_dir)) {
      if (entry.path().extension() == ".txt") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
  }
  if (ids.empty()) throw InputError("no videos found under " + cfg.data.groundtruth_dir);

  std::map<std::string, std::string> activity_of;
  if (!cfg.data.activities_file.empty()) {
    std::ifstream in(cfg.data.activities_file);
    std::string line;
    while (std::getline(in, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
      if (line.empty()) continue;
      const size_t space = line.find(' ');
      if (space == std::string::npos) {
        throw InputError("activities file line needs '<video_id> <activity>': " + line);
      }
      activity_of[line.substr(0, space)] = line.substr(space + 1);
    }
  }

  DiskDataset ds;
  std::set<std::string> activity_set;
  for (const auto& id : ids) {
    AnnotatedVideo v;
    v.video_id = id;
    v.frame_labels = load_framewise_labels(
        (fs::path(cfg.data.groundtruth_dir) / (id + ".txt")).string(), vocab);
    v.features =
        load_feature_file((fs::path(cfg.data.features_dir) / (id + ".brpf")).string());
    if (static_cast<int>(v.frame_labels.size()) != v.features.rows()) {
      throw InputError("video " + id + ": " + std::to_string(v.frame_labels.size()) +
                       " labels but " + std::to_string(v.features.rows()) + " feature rows");
    }
    auto it = activity_of.find(id);
    if (it != activity_of.end()) {
      v.activity_label = it->second;
      activity_set.insert(it->second);
    }
    ds.videos.push_back(std::move(v));
  }
  ds.vocab = std::move(vocab);
  ds.activities.assign(activity_set.begin(), activity_set.end());
  return ds;
}

}  // namespace actprompt
