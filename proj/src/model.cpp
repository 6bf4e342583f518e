#include "actprompt/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "actprompt/errors.hpp"
#include "actprompt/prompts.hpp"

namespace actprompt {

void ModelConfig::validate() const {
  if (embed_dim < 8) throw InputError("model: embed_dim must be >= 8");
  if (fusion_layers < 1 || text_layers < 1) throw InputError("model: layer counts must be >= 1");
  if (fusion_heads < 1 || text_heads < 1) throw InputError("model: head counts must be >= 1");
  if (embed_dim % fusion_heads != 0) {
    throw InputError("model: fusion_heads must divide embed_dim");
  }
  if (text_width < 8 || text_width % text_heads != 0) {
    throw InputError("model: text_heads must divide text_width (>= 8)");
  }
  if (vocab_size < 4) throw InputError("model: vocab_size must cover the reserved tokens");
  if (max_text_len < 3) throw InputError("model: max_text_len must be >= 3");
  if (frame_input_dim < 1) throw InputError("model: frame_input_dim must be >= 1");
  if (max_frames < 1) throw InputError("model: max_frames must be >= 1");
  if (logit_scale_init < 1.0 || logit_scale_init > 100.0) {
    throw InputError("model: logit_scale_init must lie in [1, 100]");
  }
}

std::string ModelConfig::serialize() const {
  std::ostringstream out;
  out << "embed_dim " << embed_dim << "\n"
      << "fusion_layers " << fusion_layers << "\n"
      << "fusion_heads " << fusion_heads << "\n"
      << "text_layers " << text_layers << "\n"
      << "text_width " << text_width << "\n"
      << "text_heads " << text_heads << "\n"
      << "vocab_size " << vocab_size << "\n"
      << "max_text_len " << max_text_len << "\n"
      << "frame_input_dim " << frame_input_dim << "\n"
      << "max_frames " << max_frames << "\n"
      << "logit_scale_init " << std::hexfloat << logit_scale_init << std::defaultfloat << "\n"
      << "seed " << seed << "\n"
      << "train_ordinal_embeddings " << (train_ordinal_embeddings ? 1 : 0) << "\n";
  return out.str();
}

ModelConfig ModelConfig::deserialize(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string key;
  while (in >> key) {
    if (key == "embed_dim") in >> cfg.embed_dim;
    else if (key == "fusion_layers") in >> cfg.fusion_layers;
    else if (key == "fusion_heads") in >> cfg.fusion_heads;
    else if (key == "text_layers") in >> cfg.text_layers;
    else if (key == "text_width") in >> cfg.text_width;
    else if (key == "text_heads") in >> cfg.text_heads;
    else if (key == "vocab_size") in >> cfg.vocab_size;
    else if (key == "max_text_len") in >> cfg.max_text_len;
    else if (key == "frame_input_dim") in >> cfg.frame_input_dim;
    else if (key == "max_frames") in >> cfg.max_frames;
    else if (key == "logit_scale_init") {
      std::string hex;
      in >> hex;
      cfg.logit_scale_init = std::strtod(hex.c_str(), nullptr);
    } else if (key == "seed") in >> cfg.seed;
    else if (key == "train_ordinal_embeddings") {
      int b = 1;
      in >> b;
      cfg.train_ordinal_embeddings = b != 0;
    } else {
      throw InputError("model config: unknown key '" + key + "'");
    }
  }
  return cfg;
}

int Model::add_param(const std::string& name, int rows, int cols, double sigma, bool decay,
                     std::mt19937_64& rng) {
  Param p;
  p.name = name;
  p.value.resize(rows, cols);
  if (sigma == 0.0) {
    p.value.setZero();
  } else if (sigma < 0.0) {  // negative sigma marks constant-one init (layernorm gains)
    p.value.setOnes();
  } else {
    std::normal_distribution<double> dist(0.0, sigma);
    for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value(i) = dist(rng);
  }
  p.decay = decay;
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

Model::LayerRefs Model::add_layer(const std::string& prefix, int width, std::mt19937_64& rng) {
  LayerRefs l;
  const int hidden = 4 * width;
  const double w_sigma = 1.0 / std::sqrt(static_cast<double>(width));
  const double h_sigma = 1.0 / std::sqrt(static_cast<double>(hidden));
  l.ln1g = add_param(prefix + ".ln1.g", 1, width, -1.0, false, rng);
  l.ln1b = add_param(prefix + ".ln1.b", 1, width, 0.0, false, rng);
  l.wq = add_param(prefix + ".attn.wq", width, width, w_sigma, true, rng);
  l.bq = add_param(prefix + ".attn.bq", 1, width, 0.0, false, rng);
  l.wk = add_param(prefix + ".attn.wk", width, width, w_sigma, true, rng);
  l.bk = add_param(prefix + ".attn.bk", 1, width, 0.0, false, rng);
  l.wv = add_param(prefix + ".attn.wv", width, width, w_sigma, true, rng);
  l.bv = add_param(prefix + ".attn.bv", 1, width, 0.0, false, rng);
  l.wo = add_param(prefix + ".attn.wo", width, width, w_sigma, true, rng);
  l.bo = add_param(prefix + ".attn.bo", 1, width, 0.0, false, rng);
  l.ln2g = add_param(prefix + ".ln2.g", 1, width, -1.0, false, rng);
  l.ln2b = add_param(prefix + ".ln2.b", 1, width, 0.0, false, rng);
  l.w1 = add_param(prefix + ".mlp.w1", width, hidden, w_sigma, true, rng);
  l.b1 = add_param(prefix + ".mlp.b1", 1, hidden, 0.0, false, rng);
  l.w2 = add_param(prefix + ".mlp.w2", hidden, width, h_sigma, true, rng);
  l.b2 = add_param(prefix + ".mlp.b2", 1, width, 0.0, false, rng);
  return l;
}

Model::Model(ModelConfig cfg, Tokenizer tokenizer)
    : cfg_(std::move(cfg)), tokenizer_(std::move(tokenizer)) {
  if (cfg_.vocab_size == 0) cfg_.vocab_size = tokenizer_.vocab_size();
  if (cfg_.vocab_size != tokenizer_.vocab_size()) {
    throw InputError("model: vocab_size disagrees with the tokenizer");
  }
  cfg_.validate();
  std::mt19937_64 rng(cfg_.seed);

  text_.embed = add_param("text.embed", cfg_.vocab_size, cfg_.text_width, 0.1, true, rng);
  text_.pos = add_param("text.pos", cfg_.max_text_len, cfg_.text_width, 0.05, true, rng);
  for (int i = 0; i < cfg_.text_layers; ++i) {
    text_.layers.push_back(add_layer("text.l" + std::to_string(i), cfg_.text_width, rng));
  }
  text_.lnfg = add_param("text.lnf.g", 1, cfg_.text_width, -1.0, false, rng);
  text_.lnfb = add_param("text.lnf.b", 1, cfg_.text_width, 0.0, false, rng);
  text_.proj = add_param("text.proj", cfg_.text_width, cfg_.embed_dim,
                         1.0 / std::sqrt(static_cast<double>(cfg_.text_width)), true, rng);

  frame_.w1 = add_param("frame.w1", cfg_.frame_input_dim, cfg_.embed_dim,
                        1.0 / std::sqrt(static_cast<double>(cfg_.frame_input_dim)), true, rng);
  frame_.b1 = add_param("frame.b1", 1, cfg_.embed_dim, 0.0, false, rng);
  frame_.w2 = add_param("frame.w2", cfg_.embed_dim, cfg_.embed_dim,
                        1.0 / std::sqrt(static_cast<double>(cfg_.embed_dim)), true, rng);
  frame_.b2 = add_param("frame.b2", 1, cfg_.embed_dim, 0.0, false, rng);

  fusion_.cnt = add_param("fusion.cnt", 1, cfg_.embed_dim, 0.1, false, rng);
  fusion_.sep = add_param("fusion.sep", 1, cfg_.embed_dim, 0.1, false, rng);
  fusion_.pos = add_param("fusion.pos", 3 + cfg_.max_frames, cfg_.embed_dim, 0.05, true, rng);
  for (int i = 0; i < cfg_.fusion_layers; ++i) {
    fusion_.layers.push_back(add_layer("fusion.l" + std::to_string(i), cfg_.embed_dim, rng));
  }
  fusion_.lnfg = add_param("fusion.lnf.g", 1, cfg_.embed_dim, -1.0, false, rng);
  fusion_.lnfb = add_param("fusion.lnf.b", 1, cfg_.embed_dim, 0.0, false, rng);

  logit_scale_idx_ = add_param("logit_scale", 1, 1, 0.0, false, rng);
  params_[static_cast<size_t>(logit_scale_idx_)].value(0, 0) = cfg_.logit_scale_init;
}

double Model::logit_scale() const {
  return params_[static_cast<size_t>(logit_scale_idx_)].value(0, 0);
}

void Model::clamp_logit_scale() {
  double& s = params_[static_cast<size_t>(logit_scale_idx_)].value(0, 0);
  s = std::clamp(s, 1.0, 100.0);
}

void Model::invalidate_cache() {
  std::lock_guard<std::mutex> lock(*cache_mutex_);
  ordinal_cache_.clear();
}

Model::GraphParams Model::leaf_params(ag::Tape& tape, bool requires_grad) const {
  GraphParams gp;
  gp.vars.reserve(params_.size());
  for (const auto& p : params_) {
    gp.vars.push_back(tape.leaf(p.value, requires_grad));
  }
  return gp;
}

ag::Var Model::logit_scale_var(const GraphParams& p) const {
  return p.vars[static_cast<size_t>(logit_scale_idx_)];
}

std::vector<int> Model::tokenize(const std::string& text) const {
  return tokenizer_.encode(text, cfg_.max_text_len);
}

Model::TokenBatch Model::make_token_batch(const std::vector<std::string>& texts) const {
  TokenBatch batch;
  int longest = 3;
  std::vector<std::vector<int>> full;
  full.reserve(texts.size());
  for (const auto& text : texts) {
    full.push_back(tokenizer_.encode(text, cfg_.max_text_len));
    const auto& ids = full.back();
    int len = static_cast<int>(ids.size());
    while (len > 0 && ids[static_cast<size_t>(len - 1)] == Tokenizer::kPad) --len;
    longest = std::max(longest, len);
  }
  batch.seq_len = longest;
  for (auto& ids : full) {
    int eos = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == Tokenizer::kEos) {
        eos = static_cast<int>(i);
        break;
      }
    }
    ids.resize(static_cast<size_t>(longest), Tokenizer::kPad);
    batch.eos_pos.push_back(eos);
    batch.rows.push_back(std::move(ids));
  }
  return batch;
}

ag::Var Model::transformer_layer(ag::Tape& tape, const GraphParams& p, const LayerRefs& l,
                                 ag::Var x, int n_seq, int seq_len, int heads,
                                 bool causal) const {
  auto pv = [&](int idx) { return p.vars[static_cast<size_t>(idx)]; };
  ag::Var h = ag::layernorm(tape, x, pv(l.ln1g), pv(l.ln1b));
  ag::Var attn = ag::multihead_attention(tape, h, n_seq, seq_len, heads, causal, pv(l.wq),
                                         pv(l.bq), pv(l.wk), pv(l.bk), pv(l.wv), pv(l.bv),
                                         pv(l.wo), pv(l.bo));
  x = ag::add(tape, x, attn);
  ag::Var m = ag::layernorm(tape, x, pv(l.ln2g), pv(l.ln2b));
  m = ag::add_rowvec(tape, ag::matmul(tape, m, pv(l.w1)), pv(l.b1));
  m = ag::gelu(tape, m);
  m = ag::add_rowvec(tape, ag::matmul(tape, m, pv(l.w2)), pv(l.b2));
  return ag::add(tape, x, m);
}

ag::Var Model::text_forward(ag::Tape& tape, const GraphParams& p,
                            const TokenBatch& batch) const {
  auto pv = [&](int idx) { return p.vars[static_cast<size_t>(idx)]; };
  const int n = static_cast<int>(batch.rows.size());
  const int s = batch.seq_len;
  if (n == 0) throw InputError("text_forward: empty batch");

  std::vector<int> flat_ids;
  flat_ids.reserve(static_cast<size_t>(n) * s);
  for (const auto& row : batch.rows) {
    if (static_cast<int>(row.size()) != s) throw InputError("text_forward: ragged batch");
    flat_ids.insert(flat_ids.end(), row.begin(), row.end());
  }
  ag::Var x = ag::select_rows(tape, pv(text_.embed), flat_ids);
  ag::Var pos = ag::rows(tape, pv(text_.pos), 0, s);
  x = ag::add_tiled(tape, x, pos);
  for (const auto& layer : text_.layers) {
    x = transformer_layer(tape, p, layer, x, n, s, cfg_.text_heads, /*causal=*/true);
  }
  x = ag::layernorm(tape, x, pv(text_.lnfg), pv(text_.lnfb));
  std::vector<int> eos_rows(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    eos_rows[static_cast<size_t>(i)] = i * s + batch.eos_pos[static_cast<size_t>(i)];
  }
  ag::Var feats = ag::select_rows(tape, x, eos_rows);
  return ag::matmul(tape, feats, pv(text_.proj));
}

ag::Var Model::frames_forward(ag::Tape& tape, const GraphParams& p, ag::Var frames) const {
  auto pv = [&](int idx) { return p.vars[static_cast<size_t>(idx)]; };
  if (tape.val(frames).cols() != cfg_.frame_input_dim) {
    throw InputError("encode_frames: expected " + std::to_string(cfg_.frame_input_dim) +
                     " input columns, got " + std::to_string(tape.val(frames).cols()));
  }
  ag::Var h = ag::add_rowvec(tape, ag::matmul(tape, frames, pv(frame_.w1)), pv(frame_.b1));
  h = ag::gelu(tape, h);
  return ag::add_rowvec(tape, ag::matmul(tape, h, pv(frame_.w2)), pv(frame_.b2));
}

ag::Var Model::fusion_forward(ag::Tape& tape, const GraphParams& p, ag::Var ord_feats,
                              ag::Var vis_tokens, int l, ag::Var* out_cnt) const {
  auto pv = [&](int idx) { return p.vars[static_cast<size_t>(idx)]; };
  if (l < 1 || l > cfg_.max_frames) {
    throw InputError("fusion: visual token count " + std::to_string(l) +
                     " outside [1, " + std::to_string(cfg_.max_frames) + "]");
  }
  const int m = static_cast<int>(tape.val(ord_feats).rows());
  const int block = 3 + l;
  ag::Var ord = cfg_.train_ordinal_embeddings ? ord_feats : ag::detach(tape, ord_feats);
  ag::Var x = ag::assemble_blocks(tape, pv(fusion_.cnt), pv(fusion_.sep), ord, vis_tokens, l);
  ag::Var pos = ag::rows(tape, pv(fusion_.pos), 0, block);
  x = ag::add_tiled(tape, x, pos);
  for (const auto& layer : fusion_.layers) {
    x = transformer_layer(tape, p, layer, x, m, block, cfg_.fusion_heads, /*causal=*/false);
  }
  x = ag::layernorm(tape, x, pv(fusion_.lnfg), pv(fusion_.lnfb));
  if (out_cnt != nullptr) {
    std::vector<int> cnt_rows(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) cnt_rows[static_cast<size_t>(i)] = i * block;
    *out_cnt = ag::select_rows(tape, x, cnt_rows);
  }
  return ag::mean_rows_per_block(tape, x, block, 3, l);
}

Mat Model::encode_texts(const std::vector<std::string>& texts) const {
  ag::Tape tape;
  GraphParams p = leaf_params(tape, /*requires_grad=*/false);
  ag::Var out = text_forward(tape, p, make_token_batch(texts));
  return tape.val(out);
}

Vec Model::encode_text(const std::string& text) const {
  Mat feats = encode_texts({text});
  return feats.row(0).transpose();
}

Mat Model::encode_frames(const Mat& cut_features) const {
  ag::Tape tape;
  GraphParams p = leaf_params(tape, /*requires_grad=*/false);
  ag::Var out = frames_forward(tape, p, tape.constant(cut_features));
  return tape.val(out);
}

std::pair<Vec, Vec> Model::fuse(const Mat& frame_tokens, const Vec& z_ord) const {
  if (frame_tokens.cols() != cfg_.embed_dim || z_ord.size() != cfg_.embed_dim) {
    throw InputError("fuse: frame tokens and ordinal feature must have embed_dim columns");
  }
  ag::Tape tape;
  GraphParams p = leaf_params(tape, /*requires_grad=*/false);
  ag::Var ord = tape.constant(z_ord.transpose());
  ag::Var vis = tape.constant(frame_tokens);
  ag::Var cnt;
  ag::Var clip = fusion_forward(tape, p, ord, vis, static_cast<int>(frame_tokens.rows()), &cnt);
  return {tape.val(clip).row(0).transpose(), tape.val(cnt).row(0).transpose()};
}

const Vec& Model::cached_ordinal_feature(int i) const {
  std::lock_guard<std::mutex> lock(*cache_mutex_);
  auto it = ordinal_cache_.find(i);
  if (it == ordinal_cache_.end()) {
    it = ordinal_cache_.emplace(i, encode_text(make_ordinal_prompt(i))).first;
  }
  return it->second;
}

ClipFeatures Model::encode_cut(const VideoCut& cut, int K) const {
  return encode_cut_features(cut.features, K);
}

ClipFeatures Model::encode_cut_features(const Mat& cut_features, int K) const {
  if (K < 1) throw InputError("encode_cut: K must be >= 1");
  const int l = static_cast<int>(cut_features.rows());
  Mat ord_feats(K, cfg_.embed_dim);
  for (int i = 1; i <= K; ++i) {
    ord_feats.row(i - 1) = cached_ordinal_feature(i).transpose();
  }
  ag::Tape tape;
  GraphParams p = leaf_params(tape, /*requires_grad=*/false);
  ag::Var vis_single = frames_forward(tape, p, tape.constant(cut_features));
  // every pass shares the same visual tokens
  std::vector<int> repeat;
  repeat.reserve(static_cast<size_t>(K) * l);
  for (int i = 0; i < K; ++i) {
    for (int f = 0; f < l; ++f) repeat.push_back(f);
  }
  ag::Var vis = ag::select_rows(tape, vis_single, repeat);
  ag::Var cnt;
  ag::Var clip = fusion_forward(tape, p, tape.constant(ord_feats), vis, l, &cnt);

  ClipFeatures out;
  out.per_ordinal = tape.val(clip);
  out.count_vectors = tape.val(cnt);
  out.mean_clip = out.per_ordinal.colwise().mean().transpose();
  out.mean_count = out.count_vectors.colwise().mean().transpose();
  return out;
}

}  // namespace actprompt
