#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "actprompt/autograd.hpp"
#include "actprompt/linalg.hpp"
#include "actprompt/metrics.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Unique scratch directory, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("actprompt_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
  fs::path path_;
};

inline void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

inline std::string read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

// Guarded relative error for gradient checks.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

// Central finite differences through a scalar-valued tape builder. The
// builder receives leaves for each input matrix and must return a 1x1 node.
using GraphBuilder = std::function<actprompt::ag::Var(
    actprompt::ag::Tape&, const std::vector<actprompt::ag::Var>&)>;

inline double max_grad_rel_err(const GraphBuilder& build, std::vector<actprompt::Mat> inputs,
                               double h = 1e-6) {
  using namespace actprompt;
  ag::Tape tape;
  std::vector<ag::Var> leaves;
  for (const auto& m : inputs) leaves.push_back(tape.leaf(m, true));
  ag::Var loss = build(tape, leaves);
  tape.backward(loss);

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    const Mat& analytic = tape.grad(leaves[i]);
    for (Eigen::Index r = 0; r < inputs[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < inputs[i].cols(); ++c) {
        auto eval = [&](double delta) {
          std::vector<Mat> shifted = inputs;
          shifted[i](r, c) += delta;
          ag::Tape t2;
          std::vector<ag::Var> l2;
          for (const auto& m : shifted) l2.push_back(t2.leaf(m, false));
          return t2.val(build(t2, l2))(0, 0);
        };
        const double fd = (eval(h) - eval(-h)) / (2.0 * h);
        const double a = analytic.size() != 0 ? analytic(r, c) : 0.0;
        worst = std::max(worst, rel_err(a, fd));
      }
    }
  }
  return worst;
}

// Independent Levenshtein oracle: plain memoized recursion.
inline int levenshtein_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<size_t, size_t>, int> memo;
  std::function<int(size_t, size_t)> go = [&](size_t i, size_t j) -> int {
    if (i == a.size()) return static_cast<int>(b.size() - j);
    if (j == b.size()) return static_cast<int>(a.size() - i);
    auto key = std::make_pair(i, j);
    auto it = memo.find(key);
    if (it != memo.end()) return it->second;
    int best = go(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
    best = std::min(best, go(i + 1, j) + 1);
    best = std::min(best, go(i, j + 1) + 1);
    memo[key] = best;
    return best;
  };
  return go(0, 0);
}

struct OptimalMatch {
  int max_tp = 0;
  // No choice points in the candidate graph: every prediction has at most
  // one admissible ground-truth segment and vice versa. On such cases any
  // greedy order reaches the optimum, so equality can be asserted.
  bool unambiguous = true;
};

// Exhaustive one-to-one matching oracle for segmental F1 (small inputs).
inline OptimalMatch optimal_f1_matching(const actprompt::Segmentation& pred,
                                        const actprompt::Segmentation& gt, double tau) {
  using actprompt::Segment;
  auto iou = [](const Segment& x, const Segment& y) {
    const int inter = std::max(0, std::min(x.end, y.end) - std::max(x.begin, y.begin));
    const int uni = std::max(x.end, y.end) - std::min(x.begin, y.begin);
    return uni > 0 ? static_cast<double>(inter) / uni : 0.0;
  };
  std::vector<std::vector<int>> candidates(pred.size());
  std::vector<int> gt_degree(gt.size(), 0);
  for (size_t p = 0; p < pred.size(); ++p) {
    for (size_t g = 0; g < gt.size(); ++g) {
      if (pred[p].label == gt[g].label && iou(pred[p], gt[g]) >= tau) {
        candidates[p].push_back(static_cast<int>(g));
        gt_degree[g] += 1;
      }
    }
  }
  OptimalMatch result;
  for (const auto& c : candidates) {
    if (c.size() > 1) result.unambiguous = false;
  }
  for (int deg : gt_degree) {
    if (deg > 1) result.unambiguous = false;
  }
  std::vector<bool> used(gt.size(), false);
  std::function<void(size_t, int)> go = [&](size_t p, int tp) {
    if (p == pred.size()) {
      result.max_tp = std::max(result.max_tp, tp);
      return;
    }
    go(p + 1, tp);  // leave pred p unmatched
    for (int g : candidates[p]) {
      if (used[static_cast<size_t>(g)]) continue;
      used[static_cast<size_t>(g)] = true;
      go(p + 1, tp + 1);
      used[static_cast<size_t>(g)] = false;
    }
  };
  go(0, 0);
  return result;
}

// Run-length-encoding oracle used against extract_cut and
// frames_to_segments.
inline std::vector<std::pair<int, int>> rle_oracle(const std::vector<int>& labels) {
  std::vector<std::pair<int, int>> runs;  // (label, length)
  for (int label : labels) {
    if (!runs.empty() && runs.back().first == label) {
      runs.back().second += 1;
    } else {
      runs.emplace_back(label, 1);
    }
  }
  return runs;
}

inline actprompt::Mat random_mat(std::mt19937_64& rng, int rows, int cols, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  actprompt::Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = dist(rng);
  return m;
}

// Orthonormal rows via Gram-Schmidt on Gaussian draws; needs cols >= rows.
inline actprompt::Mat random_orthonormal_rows(std::mt19937_64& rng, int rows, int cols) {
  actprompt::Mat m = random_mat(rng, rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int p = 0; p < r; ++p) m.row(r) -= m.row(r).dot(m.row(p)) * m.row(p);
    m.row(r) /= m.row(r).norm();
  }
  return m;
}

}  // namespace testutil
