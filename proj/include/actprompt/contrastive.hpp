#pragma once

#include <string>
#include <vector>

#include "actprompt/autograd.hpp"
#include "actprompt/linalg.hpp"
#include "actprompt/model.hpp"
#include "actprompt/prompts.hpp"
#include "actprompt/sampler.hpp"

namespace actprompt {

double cosine_sim(const Vec& a, const Vec& b);

// S[i][j] = scale * cosine_sim(Zx.row(i), Zy.row(j)); B >= 2.
Mat sim_matrix(const Mat& zx, const Mat& zy, double scale);

// Row-normalized multi-positive target: GT[i][j] = 1/|P_i| when
// keys[j] == keys[i], else 0.
Mat gt_matrix(const std::vector<std::string>& keys);

// (1/N^2) * sum P_ij * log(P_ij / Q_ij) with Q clamped to >= 1e-8 inside the
// log and the 0*log(0/q) = 0 convention.
double kl_matrix(const Mat& p, const Mat& q);

// 0.5 * [KL(rowsoftmax(S) || GT) + KL(colsoftmax(S) || GT)].
double pair_loss(const Mat& zx, const Mat& zy, const std::vector<std::string>& keys,
                 double scale);

struct LossWeights {
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  bool enable_sem = true;
  bool enable_integ = true;
  bool enable_stat = true;
};

struct LossReport {
  std::vector<double> sem_terms;   // one per ordinal position present in the batch
  std::vector<bool> sem_skipped;   // sub-batch had fewer than 2 cuts
  double integ = 0.0;
  bool integ_skipped = false;
  double stat = 0.0;
  bool stat_skipped = false;
  double total = 0.0;

  // total = sum(sem_terms) + lambda1*integ + lambda2*stat over enabled,
  // unskipped terms.
  void finalize(const LossWeights& w);
  std::string to_line(int step) const;
};

// Differentiable variant of pair_loss for gradient checks and training.
ag::Var pair_loss_graph(ag::Tape& tape, ag::Var zx, ag::Var zy,
                        const std::vector<std::string>& keys, ag::Var scale);

struct TotalLossGraph {
  ag::Var loss;            // 1x1 node; invalid when no term contributed
  bool has_terms = false;
  LossReport report;
};

// Builds the full three-part objective over a batch of cuts. The text
// feature of each semantic/integrated prompt is the mean of its variant
// encodings; each ordinal's sem term runs over the sub-batch of cuts with
// K >= i.
TotalLossGraph total_loss_graph(ag::Tape& tape, const Model& model,
                                const Model::GraphParams& params,
                                const std::vector<const VideoCut*>& cuts,
                                const std::vector<const PromptBundle*>& bundles,
                                const LossWeights& weights);

// Forward-only convenience.
LossReport total_loss(const Model& model, const std::vector<const VideoCut*>& cuts,
                      const std::vector<const PromptBundle*>& bundles,
                      const LossWeights& weights);

}  // namespace actprompt
