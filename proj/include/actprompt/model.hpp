#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "actprompt/autograd.hpp"
#include "actprompt/linalg.hpp"
#include "actprompt/sampler.hpp"
#include "actprompt/tokenizer.hpp"

namespace actprompt {

struct ModelConfig {
  int embed_dim = 512;    // D, shared latent width
  int fusion_layers = 6;
  int fusion_heads = 8;
  int text_layers = 12;
  int text_width = 512;
  int text_heads = 8;
  int vocab_size = 0;     // filled in from the tokenizer
  int max_text_len = 77;
  int frame_input_dim = 0;
  int max_frames = 16;    // longest visual token run the fusion encoder accepts
  double logit_scale_init = 1.0 / 0.07;
  std::uint64_t seed = 0;
  bool train_ordinal_embeddings = true;

  void validate() const;  // throws InputError
  std::string serialize() const;
  static ModelConfig deserialize(const std::string& text);
};

struct Param {
  std::string name;
  Mat value;
  Mat m, v;    // optimizer moments, lazily sized
  bool decay;  // weight decay applies to this tensor
};

// Fusion outputs for one cut: one row per ordinal pass.
struct ClipFeatures {
  Mat per_ordinal;    // K x D, row i-1 = clip feature under ordinal prompt i
  Mat count_vectors;  // K x D, row i-1 = count-token output of pass i
  Vec mean_clip;
  Vec mean_count;
};

class Model {
public:
  Model(ModelConfig cfg, Tokenizer tokenizer);

  const ModelConfig& config() const { return cfg_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }

  std::vector<int> tokenize(const std::string& text) const;
  Vec encode_text(const std::string& text) const;
  Mat encode_texts(const std::vector<std::string>& texts) const;  // one row per text
  Mat encode_frames(const Mat& cut_features) const;               // L x F -> L x D
  std::pair<Vec, Vec> fuse(const Mat& frame_tokens, const Vec& z_ord) const;  // (clip, cnt)

  // Runs fuse once per ordinal 1..K with the cached ordinal prompt encoding.
  ClipFeatures encode_cut(const VideoCut& cut, int K) const;
  ClipFeatures encode_cut_features(const Mat& cut_features, int K) const;

  double logit_scale() const;
  void clamp_logit_scale();  // to [1, 100]

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  // Parameters were mutated; drops cached prompt encodings.
  void invalidate_cache();

  // ---- differentiable graph building (training path) ----
  struct GraphParams {
    std::vector<ag::Var> vars;  // parallel to params()
  };
  GraphParams leaf_params(ag::Tape& tape, bool requires_grad) const;

  // Padded token batch: rows of equal length plus the <eos> position of each.
  struct TokenBatch {
    std::vector<std::vector<int>> rows;
    std::vector<int> eos_pos;
    int seq_len = 0;
  };
  TokenBatch make_token_batch(const std::vector<std::string>& texts) const;

  // N texts -> N x D features.
  ag::Var text_forward(ag::Tape& tape, const GraphParams& p, const TokenBatch& batch) const;
  // rows x F -> rows x D, row-wise two-layer perceptron.
  ag::Var frames_forward(ag::Tape& tape, const GraphParams& p, ag::Var frames) const;
  // M fusion passes over sequences [CNT][ORD][SEP] + l visual tokens.
  // ord_feats: M x D, vis_tokens: (M*l) x D. Returns clip features M x D and
  // stores the count-token outputs in *out_cnt.
  ag::Var fusion_forward(ag::Tape& tape, const GraphParams& p, ag::Var ord_feats,
                         ag::Var vis_tokens, int l, ag::Var* out_cnt) const;
  ag::Var logit_scale_var(const GraphParams& p) const;

private:
  struct LayerRefs {
    int ln1g, ln1b, wq, bq, wk, bk, wv, bv, wo, bo, ln2g, ln2b, w1, b1, w2, b2;
  };
  struct TextRefs {
    int embed, pos;
    std::vector<LayerRefs> layers;
    int lnfg, lnfb, proj;
  };
  struct FrameRefs {
    int w1, b1, w2, b2;
  };
  struct FusionRefs {
    int cnt, sep, pos;
    std::vector<LayerRefs> layers;
    int lnfg, lnfb;
  };

  int add_param(const std::string& name, int rows, int cols, double sigma, bool decay,
                std::mt19937_64& rng);
  LayerRefs add_layer(const std::string& prefix, int width, std::mt19937_64& rng);
  ag::Var transformer_layer(ag::Tape& tape, const GraphParams& p, const LayerRefs& l,
                            ag::Var x, int n_seq, int seq_len, int heads, bool causal) const;
  const Vec& cached_ordinal_feature(int i) const;

  ModelConfig cfg_;
  Tokenizer tokenizer_;
  std::vector<Param> params_;
  TextRefs text_;
  FrameRefs frame_;
  FusionRefs fusion_;
  int logit_scale_idx_ = -1;

  mutable std::unique_ptr<std::mutex> cache_mutex_ = std::make_unique<std::mutex>();
  mutable std::map<int, Vec> ordinal_cache_;
};

// Versioned binary checkpoint: model config, vocabulary, named parameter
// tensors (row-major little-endian float64), plus caller-supplied extras.
struct CheckpointExtra {
  std::map<std::string, Mat> mats;
  std::map<std::string, std::string> blobs;
};
void save_checkpoint(const std::string& path, const Model& model,
                     const CheckpointExtra& extra = {});
Model load_checkpoint(const std::string& path, CheckpointExtra* extra = nullptr);

}  // namespace actprompt
