#include "actprompt/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "actprompt/errors.hpp"

namespace actprompt {

namespace {

constexpr double kGtEps = 1e-8;

}  // namespace

double cosine_sim(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw InputError("cosine_sim: dimension mismatch");
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw InputError("cosine_sim: zero vector");
  return a.dot(b) / (na * nb);
}

Mat sim_matrix(const Mat& zx, const Mat& zy, double scale) {
  if (zx.rows() < 2 || zy.rows() < 2) throw InputError("sim_matrix: batch must have B >= 2");
  if (zx.cols() != zy.cols()) throw InputError("sim_matrix: feature dims differ");
  Mat nx(zx.rows(), zx.cols()), ny(zy.rows(), zy.cols());
  for (Eigen::Index r = 0; r < zx.rows(); ++r) {
    const double n = zx.row(r).norm();
    if (n == 0.0) throw InputError("sim_matrix: zero row in Zx at " + std::to_string(r));
    nx.row(r) = zx.row(r) / n;
  }
  for (Eigen::Index r = 0; r < zy.rows(); ++r) {
    const double n = zy.row(r).norm();
    if (n == 0.0) throw InputError("sim_matrix: zero row in Zy at " + std::to_string(r));
    ny.row(r) = zy.row(r) / n;
  }
  return scale * (nx * ny.transpose());
}

Mat gt_matrix(const std::vector<std::string>& keys) {
  const auto b = static_cast<Eigen::Index>(keys.size());
  if (b < 2) throw InputError("gt_matrix: batch must have B >= 2");
  Mat gt = Mat::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    int positives = 0;
    for (Eigen::Index j = 0; j < b; ++j) {
      if (keys[static_cast<size_t>(j)] == keys[static_cast<size_t>(i)]) ++positives;
    }
    for (Eigen::Index j = 0; j < b; ++j) {
      if (keys[static_cast<size_t>(j)] == keys[static_cast<size_t>(i)]) {
        gt(i, j) = 1.0 / positives;
      }
    }
  }
  return gt;
}

double kl_matrix(const Mat& p, const Mat& q) {
  if (p.rows() != q.rows() || p.cols() != q.cols()) {
    throw InputError("kl_matrix: shape mismatch");
  }
  if (p.rows() != p.cols()) throw InputError("kl_matrix: matrices must be square");
  const auto n = p.rows();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double pij = p(i, j);
      if (pij < -1e-9 || pij > 1.0 + 1e-9) {
        throw InputError("kl_matrix: P entries must lie in [0, 1]");
      }
      if (pij <= 0.0) continue;  // 0 * log(0/q) = 0
      sum += pij * std::log(pij / std::max(q(i, j), kGtEps));
    }
  }
  return sum / static_cast<double>(n * n);
}

namespace {

Mat softmax_rows_mat(const Mat& s) {
  Mat out(s.rows(), s.cols());
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    Eigen::RowVectorXd e = (s.row(r).array() - mx).exp().matrix();
    out.row(r) = e / e.sum();
  }
  return out;
}

}  // namespace

double pair_loss(const Mat& zx, const Mat& zy, const std::vector<std::string>& keys,
                 double scale) {
  if (keys.size() != static_cast<size_t>(zx.rows()) || zx.rows() != zy.rows()) {
    throw InputError("pair_loss: keys/batch size mismatch");
  }
  const Mat s = sim_matrix(zx, zy, scale);
  const Mat st = softmax_rows_mat(s);
  const Mat sv = softmax_rows_mat(s.transpose()).transpose();
  const Mat gt = gt_matrix(keys);
  return 0.5 * (kl_matrix(st, gt) + kl_matrix(sv, gt));
}

void LossReport::finalize(const LossWeights& w) {
  total = 0.0;
  for (size_t i = 0; i < sem_terms.size(); ++i) {
    if (i < sem_skipped.size() && sem_skipped[i]) continue;
    total += sem_terms[i];
  }
  if (!integ_skipped) total += w.lambda1 * integ;
  if (!stat_skipped) total += w.lambda2 * stat;
}

std::string LossReport::to_line(int step) const {
  char buf[64];
  std::string line = "step=" + std::to_string(step) + " sem=";
  for (size_t i = 0; i < sem_terms.size(); ++i) {
    if (i > 0) line += ',';
    std::snprintf(buf, sizeof(buf), "%.17g", sem_terms[i]);
    line += buf;
  }
  std::snprintf(buf, sizeof(buf), " integ=%.17g", integ);
  line += buf;
  std::snprintf(buf, sizeof(buf), " stat=%.17g", stat);
  line += buf;
  std::snprintf(buf, sizeof(buf), " total=%.17g", total);
  line += buf;
  return line;
}

namespace {

// (1/N^2) sum P .* (log P - log Qc) with P strictly positive (softmax output).
ag::Var kl_graph(ag::Tape& t, ag::Var p, const Mat& q) {
  Mat logq = q.cwiseMax(kGtEps).array().log().matrix();
  ag::Var diff = ag::sub(t, ag::logv(t, p), t.constant(logq));
  ag::Var sum = ag::sum_all(t, ag::hadamard(t, p, diff));
  const double n = static_cast<double>(q.rows());
  return ag::scale(t, sum, 1.0 / (n * n));
}

}  // namespace

ag::Var pair_loss_graph(ag::Tape& tape, ag::Var zx, ag::Var zy,
                        const std::vector<std::string>& keys, ag::Var scale) {
  const Mat gt = gt_matrix(keys);
  ag::Var nx = ag::normalize_rows(tape, zx);
  ag::Var ny = ag::normalize_rows(tape, zy);
  ag::Var s = ag::mul_scalar(tape, ag::matmul(tape, nx, ag::transpose(tape, ny)), scale);
  ag::Var st = ag::softmax_rows(tape, s);
  ag::Var svt = ag::softmax_rows(tape, ag::transpose(tape, s));
  ag::Var kl1 = kl_graph(tape, st, gt);
  ag::Var kl2 = kl_graph(tape, svt, gt.transpose());
  return ag::scale(tape, ag::add(tape, kl1, kl2), 0.5);
}

namespace {

struct TextIndex {
  std::vector<std::string> texts;
  std::map<std::string, int> index_of;

  int intern(const std::string& text) {
    auto it = index_of.find(text);
    if (it != index_of.end()) return it->second;
    const int idx = static_cast<int>(texts.size());
    texts.push_back(text);
    index_of.emplace(text, idx);
    return idx;
  }
};

}  // namespace

TotalLossGraph total_loss_graph(ag::Tape& tape, const Model& model,
                                const Model::GraphParams& params,
                                const std::vector<const VideoCut*>& cuts,
                                const std::vector<const PromptBundle*>& bundles,
                                const LossWeights& weights) {
  if (cuts.size() != bundles.size()) {
    throw InputError("total_loss: cuts/bundles size mismatch");
  }
  if (cuts.empty()) throw InputError("total_loss: empty batch");
  const int b = static_cast<int>(cuts.size());
  const int window = static_cast<int>(cuts[0]->features.rows());
  int max_k = 0;
  for (const auto* cut : cuts) {
    if (cut->features.rows() != window) {
      throw InputError("total_loss: cuts must share one window length");
    }
    max_k = std::max(max_k, cut->K);
  }

  // Intern every prompt string once; repeated prompts share one encoding.
  TextIndex texts;
  for (int c = 0; c < b; ++c) {
    const PromptBundle& bundle = *bundles[static_cast<size_t>(c)];
    if (bundle.K() != cuts[static_cast<size_t>(c)]->K) {
      throw InputError("total_loss: bundle K disagrees with cut K");
    }
    texts.intern(bundle.statistical);
    for (const auto& o : bundle.ordinal) texts.intern(o);
    for (const auto& variants : bundle.semantic) {
      for (const auto& v : variants) texts.intern(v);
    }
    for (const auto& v : bundle.integrated) texts.intern(v);
  }

  ag::Var text_feats = model.text_forward(tape, params, model.make_token_batch(texts.texts));
  const int n_texts = static_cast<int>(texts.texts.size());

  // Frame tokens, then one fusion pass per (cut, ordinal <= K).
  Mat all_frames(static_cast<Eigen::Index>(b) * window, cuts[0]->features.cols());
  for (int c = 0; c < b; ++c) {
    all_frames.middleRows(static_cast<Eigen::Index>(c) * window, window) =
        cuts[static_cast<size_t>(c)]->features;
  }
  ag::Var vis_single = model.frames_forward(tape, params, tape.constant(all_frames));

  std::vector<int> pass_cut;     // cut index per pass
  std::vector<int> pass_ord;     // ordinal (1-based) per pass
  std::vector<int> ord_text_row;
  std::vector<std::vector<int>> pass_of_cut(static_cast<size_t>(b));
  for (int c = 0; c < b; ++c) {
    const PromptBundle& bundle = *bundles[static_cast<size_t>(c)];
    for (int i = 1; i <= cuts[static_cast<size_t>(c)]->K; ++i) {
      pass_of_cut[static_cast<size_t>(c)].push_back(static_cast<int>(pass_cut.size()));
      pass_cut.push_back(c);
      pass_ord.push_back(i);
      ord_text_row.push_back(texts.index_of.at(bundle.ordinal[static_cast<size_t>(i - 1)]));
    }
  }
  const int m = static_cast<int>(pass_cut.size());
  std::vector<int> vis_rows;
  vis_rows.reserve(static_cast<size_t>(m) * window);
  for (int p = 0; p < m; ++p) {
    for (int f = 0; f < window; ++f) vis_rows.push_back(pass_cut[static_cast<size_t>(p)] * window + f);
  }
  ag::Var ord_feats = ag::select_rows(tape, text_feats, ord_text_row);
  ag::Var vis = ag::select_rows(tape, vis_single, vis_rows);
  ag::Var cnt;
  ag::Var clip = model.fusion_forward(tape, params, ord_feats, vis, window, &cnt);

  // Per-cut means over that cut's passes.
  Mat cut_avg = Mat::Zero(b, m);
  for (int p = 0; p < m; ++p) {
    const int c = pass_cut[static_cast<size_t>(p)];
    cut_avg(c, p) = 1.0 / cuts[static_cast<size_t>(c)]->K;
  }
  ag::Var mean_clip = ag::matmul(tape, tape.constant(cut_avg), clip);
  ag::Var mean_cnt = ag::matmul(tape, tape.constant(cut_avg), cnt);

  ag::Var scale_var = model.logit_scale_var(params);

  auto variant_average = [&](const std::vector<int>& cut_rows,
                             auto&& variants_of) -> ag::Var {
    Mat avg = Mat::Zero(static_cast<Eigen::Index>(cut_rows.size()), n_texts);
    for (size_t r = 0; r < cut_rows.size(); ++r) {
      const std::vector<std::string>& variants = variants_of(cut_rows[r]);
      const double w = 1.0 / static_cast<double>(variants.size());
      for (const auto& v : variants) {
        avg(static_cast<Eigen::Index>(r), texts.index_of.at(v)) += w;
      }
    }
    return ag::matmul(tape, tape.constant(avg), text_feats);
  };

  TotalLossGraph out;
  auto add_term = [&](ag::Var term, double weight) {
    ag::Var scaled = weight == 1.0 ? term : ag::scale(tape, term, weight);
    out.loss = out.has_terms ? ag::add(tape, out.loss, scaled) : scaled;
    out.has_terms = true;
  };

  if (weights.enable_sem) {
    out.report.sem_terms.assign(static_cast<size_t>(max_k), 0.0);
    out.report.sem_skipped.assign(static_cast<size_t>(max_k), false);
    for (int i = 1; i <= max_k; ++i) {
      std::vector<int> sub;
      for (int c = 0; c < b; ++c) {
        if (cuts[static_cast<size_t>(c)]->K >= i) sub.push_back(c);
      }
      if (sub.size() < 2) {
        out.report.sem_skipped[static_cast<size_t>(i - 1)] = true;
        continue;
      }
      std::vector<int> zx_rows;
      std::vector<std::string> keys;
      for (int c : sub) {
        zx_rows.push_back(pass_of_cut[static_cast<size_t>(c)][static_cast<size_t>(i - 1)]);
        keys.push_back(bundles[static_cast<size_t>(c)]->semantic[static_cast<size_t>(i - 1)][0]);
      }
      ag::Var zx = ag::select_rows(tape, clip, zx_rows);
      ag::Var zy = variant_average(sub, [&](int c) -> const std::vector<std::string>& {
        return bundles[static_cast<size_t>(c)]->semantic[static_cast<size_t>(i - 1)];
      });
      ag::Var term = pair_loss_graph(tape, zx, zy, keys, scale_var);
      out.report.sem_terms[static_cast<size_t>(i - 1)] = tape.val(term)(0, 0);
      add_term(term, 1.0);
    }
  }

  std::vector<int> all_cuts(static_cast<size_t>(b));
  for (int c = 0; c < b; ++c) all_cuts[static_cast<size_t>(c)] = c;

  if (weights.enable_integ) {
    if (b < 2) {
      out.report.integ_skipped = true;
    } else {
      std::vector<std::string> keys;
      for (int c = 0; c < b; ++c) keys.push_back(bundles[static_cast<size_t>(c)]->integrated[0]);
      ag::Var zy = variant_average(all_cuts, [&](int c) -> const std::vector<std::string>& {
        return bundles[static_cast<size_t>(c)]->integrated;
      });
      ag::Var term = pair_loss_graph(tape, mean_clip, zy, keys, scale_var);
      out.report.integ = tape.val(term)(0, 0);
      add_term(term, weights.lambda1);
    }
  } else {
    out.report.integ_skipped = true;
  }

  if (weights.enable_stat) {
    if (b < 2) {
      out.report.stat_skipped = true;
    } else {
      std::vector<std::string> keys;
      Mat pick = Mat::Zero(b, n_texts);
      for (int c = 0; c < b; ++c) {
        const std::string& text = bundles[static_cast<size_t>(c)]->statistical;
        keys.push_back(text);
        pick(c, texts.index_of.at(text)) = 1.0;
      }
      ag::Var zy = ag::matmul(tape, tape.constant(pick), text_feats);
      ag::Var term = pair_loss_graph(tape, mean_cnt, zy, keys, scale_var);
      out.report.stat = tape.val(term)(0, 0);
      add_term(term, weights.lambda2);
    }
  } else {
    out.report.stat_skipped = true;
  }

  out.report.finalize(weights);
  return out;
}

LossReport total_loss(const Model& model, const std::vector<const VideoCut*>& cuts,
                      const std::vector<const PromptBundle*>& bundles,
                      const LossWeights& weights) {
  ag::Tape tape;
  Model::GraphParams params = model.leaf_params(tape, /*requires_grad=*/false);
  return total_loss_graph(tape, model, params, cuts, bundles, weights).report;
}

}  // namespace actprompt
