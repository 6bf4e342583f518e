#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "actprompt/errors.hpp"
#include "actprompt/model.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

namespace actprompt {

namespace {

constexpr char kMagic[4] = {'A', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint8_t kKindBytes = 0;
constexpr std::uint8_t kKindMatrix = 1;

struct Chunk {
  std::uint8_t kind;
  std::string bytes;
  Mat mat;
};

using Container = std::map<std::string, Chunk>;

template <typename T>
void write_pod(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_pod(std::istream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw InputError(path + ": truncated checkpoint");
  return v;
}

void write_container(const std::string& path, const Container& chunks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint32_t>(chunks.size()));
  for (const auto& [name, chunk] : chunks) {
    write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, chunk.kind);
    if (chunk.kind == kKindBytes) {
      write_pod(out, static_cast<std::uint64_t>(chunk.bytes.size()));
      out.write(chunk.bytes.data(), static_cast<std::streamsize>(chunk.bytes.size()));
    } else {
      write_pod(out, static_cast<std::uint64_t>(chunk.mat.rows()));
      write_pod(out, static_cast<std::uint64_t>(chunk.mat.cols()));
      for (Eigen::Index r = 0; r < chunk.mat.rows(); ++r) {
        for (Eigen::Index c = 0; c < chunk.mat.cols(); ++c) {
          write_pod(out, chunk.mat(r, c));
        }
      }
    }
  }
  if (!out) throw InputError("checkpoint write failed: " + path);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw InputError(path + ": not a checkpoint file (bad magic)");
  }
  const auto version = read_pod<std::uint32_t>(in, path);
  if (version != kVersion) {
    throw InputError(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = read_pod<std::uint32_t>(in, path);
  Container chunks;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw InputError(path + ": truncated checkpoint");
    Chunk chunk;
    chunk.kind = read_pod<std::uint8_t>(in, path);
    if (chunk.kind == kKindBytes) {
      const auto size = read_pod<std::uint64_t>(in, path);
      chunk.bytes.resize(size);
      in.read(chunk.bytes.data(), static_cast<std::streamsize>(size));
      if (!in) throw InputError(path + ": truncated checkpoint");
    } else if (chunk.kind == kKindMatrix) {
      const auto rows = read_pod<std::uint64_t>(in, path);
      const auto cols = read_pod<std::uint64_t>(in, path);
      chunk.mat.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
      for (std::uint64_t r = 0; r < rows; ++r) {
        for (std::uint64_t c = 0; c < cols; ++c) {
          chunk.mat(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
              read_pod<double>(in, path);
        }
      }
    } else {
      throw InputError(path + ": unknown chunk kind");
    }
    chunks.emplace(std::move(name), std::move(chunk));
  }
  return chunks;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const CheckpointExtra& extra) {
  Container chunks;
  chunks["config"] = Chunk{kKindBytes, model.config().serialize(), {}};
  std::string vocab;
  for (const auto& token : model.tokenizer().tokens()) {
    vocab += token;
    vocab += '\n';
  }
  chunks["vocab"] = Chunk{kKindBytes, std::move(vocab), {}};
  for (const auto& p : model.params()) {
    chunks["param/" + p.name] = Chunk{kKindMatrix, {}, p.value};
  }
  for (const auto& [name, mat] : extra.mats) {
    chunks["extra/" + name] = Chunk{kKindMatrix, {}, mat};
  }
  for (const auto& [name, blob] : extra.blobs) {
    chunks["extra/" + name] = Chunk{kKindBytes, blob, {}};
  }
  write_container(path, chunks);
}

Model load_checkpoint(const std::string& path, CheckpointExtra* extra) {
  Container chunks = read_container(path);
  auto cfg_it = chunks.find("config");
  auto vocab_it = chunks.find("vocab");
  if (cfg_it == chunks.end() || vocab_it == chunks.end()) {
    throw InputError(path + ": checkpoint missing config or vocabulary");
  }
  ModelConfig cfg = ModelConfig::deserialize(cfg_it->second.bytes);
  std::vector<std::string> tokens;
  std::istringstream vs(vocab_it->second.bytes);
  std::string token;
  while (std::getline(vs, token)) tokens.push_back(token);
  Model model(cfg, Tokenizer::from_tokens(std::move(tokens)));
  for (auto& p : model.params()) {
    auto it = chunks.find("param/" + p.name);
    if (it == chunks.end()) {
      throw InputError(path + ": checkpoint missing parameter " + p.name);
    }
    if (it->second.mat.rows() != p.value.rows() || it->second.mat.cols() != p.value.cols()) {
      throw InputError(path + ": parameter shape mismatch for " + p.name);
    }
    p.value = it->second.mat;
  }
  if (extra != nullptr) {
    extra->mats.clear();
    extra->blobs.clear();
    for (const auto& [name, chunk] : chunks) {
      if (name.rfind("extra/", 0) != 0) continue;
      const std::string key = name.substr(6);
      if (chunk.kind == kKindMatrix) {
        extra->mats[key] = chunk.mat;
      } else {
        extra->blobs[key] = chunk.bytes;
      }
    }
  }
  model.invalidate_cache();
  return model;
}

}  // namespace actprompt
