#include "actprompt/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "actprompt/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "BRPF i/o assumes a little-endian host");

namespace actprompt {

const std::string& ActionVocab::phrase(int id) const {
  if (id < 0 || id >= size()) {
    throw InputError("action id out of range: " + std::to_string(id));
  }
  return entries[static_cast<size_t>(id)].second;
}

int ActionVocab::id_of(const std::string& token) const {
  auto mapped = label_map.find(token);
  const std::string& key = mapped != label_map.end() ? mapped->second : token;
  for (const auto& [id, phrase] : entries) {
    if (phrase == key) return id;
  }
  throw InputError("unknown label: '" + token + "'");
}

bool ActionVocab::contains(const std::string& token) const {
  auto mapped = label_map.find(token);
  const std::string& key = mapped != label_map.end() ? mapped->second : token;
  for (const auto& [id, phrase] : entries) {
    if (phrase == key) return true;
  }
  return false;
}

ActionVocab ActionVocab::from_entries(std::vector<std::pair<int, std::string>> entries,
                                      std::map<std::string, std::string> label_map) {
  if (entries.empty()) {
    throw InputError("action vocabulary is empty");
  }
  std::sort(entries.begin(), entries.end());
  std::set<std::string> phrases;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].first != static_cast<int>(i)) {
      if (i > 0 && entries[i].first == entries[i - 1].first) {
        throw InputError("duplicate action id " + std::to_string(entries[i].first));
      }
      throw InputError("action ids must be contiguous from 0, got id " +
                       std::to_string(entries[i].first) + " at position " +
                       std::to_string(i));
    }
    std::string phrase = entries[i].second;
    auto mapped = label_map.find(phrase);
    if (mapped != label_map.end()) phrase = mapped->second;
    if (!phrases.insert(phrase).second) {
      throw InputError("duplicate verb phrase after remapping: '" + phrase + "'");
    }
  }
  ActionVocab v;
  v.entries = std::move(entries);
  v.label_map = std::move(label_map);
  return v;
}

void SynthConfig::validate() const {
  if (n_actions < 1 || n_activities < 1 || actions_min < 1 || actions_max < actions_min ||
      mean_segment_len < 1 || feature_dim < 1 || n_videos < 1) {
    throw InputError("synthetic config: all counts must be >= 1 and ranges ordered");
  }
  if (noise_sigma < 0.0) {
    throw InputError("synthetic config: noise_sigma must be >= 0");
  }
}

namespace {

std::string rstrip(const std::string& s) {
  size_t end = s.size();
  while (end > 0 && (s[end - 1] == '\r' || s[end - 1] == '\n')) --end;
  return s.substr(0, end);
}

}  // namespace

ActionVocab load_mapping(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mapping file: " + path);
  std::vector<std::pair<int, std::string>> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = rstrip(line);
    if (line.empty()) continue;
    size_t space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size()) {
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": malformed mapping line, expected '<id> <label>'");
    }
    int id = 0;
    try {
      size_t consumed = 0;
      id = std::stoi(line.substr(0, space), &consumed);
      if (consumed != space) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": malformed mapping line, id is not an integer");
    }
    for (const auto& [seen, _] : entries) {
      if (seen == id) {
        throw InputError(path + ":" + std::to_string(lineno) + ": duplicate action id " +
                         std::to_string(id));
      }
    }
    entries.emplace_back(id, line.substr(space + 1));
  }
  if (entries.empty()) {
    throw InputError("mapping file has no entries: " + path);
  }
  return ActionVocab::from_entries(std::move(entries));
}

std::map<std::string, std::string> load_label_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open label map file: " + path);
  std::map<std::string, std::string> map;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = rstrip(line);
    if (line.empty()) continue;
    size_t space = line.find(' ');
    if (space == std::string::npos || space == 0 || space + 1 >= line.size()) {
      throw InputError(path + ":" + std::to_string(lineno) +
                       ": malformed label map line, expected '<from> <to>'");
    }
    map[line.substr(0, space)] = line.substr(space + 1);
  }
  return map;
}

std::vector<int> load_framewise_labels(const std::string& path, const ActionVocab& vocab) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open groundTruth file: " + path);
  std::vector<int> ids;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = rstrip(line);
    if (line.empty() && in.peek() == EOF) break;  // trailing newline
    try {
      ids.push_back(vocab.id_of(line));
    } catch (const InputError&) {
      throw InputError(path + ":" + std::to_string(lineno) + ": unknown label '" + line + "'");
    }
  }
  return ids;
}

namespace {

constexpr char kBrpfMagic[4] = {'B', 'R', 'P', 'F'};
constexpr std::uint32_t kBrpfVersion = 1;

void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::istream& in, const std::string& path, const char* what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw InputError(path + ": truncated BRPF header (" + what + ")");
  return v;
}

}  // namespace

Mat load_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open feature file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kBrpfMagic, 4) != 0) {
    throw InputError(path + ": not a BRPF feature file (bad magic)");
  }
  std::uint32_t version = read_u32(in, path, "version");
  if (version != kBrpfVersion) {
    throw InputError(path + ": unsupported BRPF version " + std::to_string(version));
  }
  std::uint32_t rows = read_u32(in, path, "T");
  std::uint32_t cols = read_u32(in, path, "F");
  std::vector<float> payload(static_cast<size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (static_cast<size_t>(in.gcount()) != payload.size() * sizeof(float)) {
    throw InputError(path + ": truncated BRPF payload, expected " +
                     std::to_string(payload.size()) + " float32 values");
  }
  in.peek();
  if (!in.eof()) {
    throw InputError(path + ": trailing bytes after BRPF payload");
  }
  Mat m(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r) {
    for (std::uint32_t c = 0; c < cols; ++c) {
      m(r, c) = static_cast<double>(payload[static_cast<size_t>(r) * cols + c]);
    }
  }
  return m;
}

void write_feature_file(const std::string& path, const Mat& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open feature file for writing: " + path);
  out.write(kBrpfMagic, 4);
  write_u32(out, kBrpfVersion);
  write_u32(out, static_cast<std::uint32_t>(features.rows()));
  write_u32(out, static_cast<std::uint32_t>(features.cols()));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index c = 0; c < features.cols(); ++c) {
      float v = static_cast<float>(features(r, c));
      out.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
  if (!out) throw InputError("write failed: " + path);
}

namespace {

// Verb/object word lists for synthetic action phrases; combinations are
// enumerated in row-major order so phrase i is stable across runs.
const char* kVerbs[] = {"take", "pour", "cut", "stir", "open", "close", "shake", "fold",
                        "spread", "scoop"};
const char* kObjects[] = {"bread", "water", "bowl", "cup", "egg", "jam", "lid", "pan",
                          "cheese", "butter"};

std::string synth_phrase(int i) {
  const int n = static_cast<int>(std::size(kVerbs));
  // (verb, object) pairing is injective for i < n*n
  const int verb = i % n;
  const int obj = (i % n + i / n) % n;
  std::string phrase = std::string(kVerbs[verb]) + " " + kObjects[obj];
  for (int r = 0; r < i / (n * n); ++r) phrase += " again";
  return phrase;
}

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream};
  return std::mt19937_64(seq);
}

std::vector<std::vector<int>> draw_activities(const SynthConfig& cfg) {
  auto rng = stream_rng(cfg.seed, 1);
  std::uniform_int_distribution<int> len_dist(cfg.actions_min, cfg.actions_max);
  std::uniform_int_distribution<int> act_dist(0, cfg.n_actions - 1);
  std::vector<std::vector<int>> activities;
  for (int a = 0; a < cfg.n_activities; ++a) {
    int len = len_dist(rng);
    std::vector<int> steps;
    steps.reserve(static_cast<size_t>(len));
    for (int s = 0; s < len; ++s) {
      int action = act_dist(rng);
      // adjacent steps must differ so run-length encoding recovers the plan
      while (cfg.n_actions > 1 && !steps.empty() && action == steps.back()) {
        action = act_dist(rng);
      }
      steps.push_back(action);
    }
    activities.push_back(std::move(steps));
  }
  return activities;
}

AnnotatedVideo make_video(const SynthConfig& cfg, const Mat& prototypes,
                          const std::vector<std::vector<int>>& activities,
                          const std::vector<std::string>& activity_names, int video_index) {
  auto rng = stream_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(video_index));
  int activity = video_index % cfg.n_activities;
  const std::vector<int>& steps = activities[static_cast<size_t>(activity)];

  // segment lengths vary uniformly around the configured mean
  int lo = std::max(1, cfg.mean_segment_len / 2);
  int hi = std::max(lo, cfg.mean_segment_len + cfg.mean_segment_len / 2);
  std::uniform_int_distribution<int> seg_dist(lo, hi);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<int> labels;
  for (int action : steps) {
    int seg_len = seg_dist(rng);
    for (int f = 0; f < seg_len; ++f) labels.push_back(action);
  }
  Mat feats(static_cast<Eigen::Index>(labels.size()), cfg.feature_dim);
  for (Eigen::Index f = 0; f < feats.rows(); ++f) {
    for (int d = 0; d < cfg.feature_dim; ++d) {
      double n = cfg.noise_sigma > 0.0 ? cfg.noise_sigma * noise(rng) : 0.0;
      feats(f, d) = prototypes(labels[static_cast<size_t>(f)], d) + n;
    }
  }
  AnnotatedVideo v;
  v.video_id = "synth_" + std::to_string(video_index);
  v.frame_labels = std::move(labels);
  v.features = std::move(feats);
  v.fps = 15.0;
  v.activity_label = activity_names[static_cast<size_t>(activity)];
  return v;
}

}  // namespace

Mat synth_prototypes(const SynthConfig& cfg) {
  cfg.validate();
  auto rng = stream_rng(cfg.seed, 0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat proto(cfg.n_actions, cfg.feature_dim);
  for (int a = 0; a < cfg.n_actions; ++a) {
    for (int d = 0; d < cfg.feature_dim; ++d) proto(a, d) = gauss(rng);
  }
  if (cfg.feature_dim >= cfg.n_actions) {
    // Gram-Schmidt on rows: known-separable prototypes
    for (int a = 0; a < cfg.n_actions; ++a) {
      for (int b = 0; b < a; ++b) {
        proto.row(a) -= proto.row(a).dot(proto.row(b)) * proto.row(b);
      }
      double norm = proto.row(a).norm();
      if (norm < 1e-9) {
        throw NumericError("synthetic prototypes degenerate; change seed");
      }
      proto.row(a) /= norm;
    }
  }
  return proto;
}

SynthDataset generate_synthetic(const SynthConfig& cfg) {
  return generate_synthetic(cfg, 0, cfg.n_videos);
}

SynthDataset generate_synthetic(const SynthConfig& cfg, int first_video, int count) {
  cfg.validate();
  Mat prototypes = synth_prototypes(cfg);
  auto activity_steps = draw_activities(cfg);

  std::vector<std::pair<int, std::string>> entries;
  for (int a = 0; a < cfg.n_actions; ++a) entries.emplace_back(a, synth_phrase(a));
  ActionVocab vocab = ActionVocab::from_entries(std::move(entries));

  // The activity label spells out the generating step sequence so that
  // activity prompts stay inside the trained token space.
  std::vector<std::string> names;
  for (const auto& steps : activity_steps) {
    std::string name;
    for (size_t i = 0; i < steps.size(); ++i) {
      if (i > 0) name += ", ";
      name += vocab.phrase(steps[i]);
    }
    names.push_back(std::move(name));
  }

  SynthDataset ds;
  ds.vocab = std::move(vocab);
  ds.activity_names = names;
  ds.activity_steps = activity_steps;
  for (int v = first_video; v < first_video + count; ++v) {
    ds.videos.push_back(make_video(cfg, prototypes, activity_steps, names, v));
  }
  return ds;
}

}  // namespace actprompt
