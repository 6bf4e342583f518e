#pragma once

#include <functional>
#include <vector>

#include "actprompt/linalg.hpp"

namespace actprompt::ag {

// Reverse-mode tape over double-precision Eigen matrices. Built per training
// step and discarded; parameters enter as leaves and collect gradients.
struct Var {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

class Tape {
public:
  Var leaf(const Mat& value, bool requires_grad);
  Var constant(const Mat& value) { return leaf(value, false); }

  const Mat& val(Var v) const { return nodes_[static_cast<size_t>(v.idx)].value; }
  const Mat& grad(Var v) const { return nodes_[static_cast<size_t>(v.idx)].grad; }

  // Seeds d(loss)/d(loss) = 1 on a 1x1 node and runs the tape backwards.
  void backward(Var scalar_loss);

  size_t size() const { return nodes_.size(); }

  // --- internal surface used by the op implementations ---
  using BackFn = std::function<void(Tape&, const Mat& gout)>;
  Var push(Mat value, bool requires_grad, BackFn back);
  void accumulate(Var v, const Mat& g);
  bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v.idx)].requires_grad; }

private:
  struct Node {
    Mat value;
    Mat grad;  // empty until touched
    bool requires_grad = false;
    BackFn back;  // null for leaves/constants
  };
  Mat& grad_ref(Var v);
  std::vector<Node> nodes_;
};

// Elementwise / broadcast arithmetic.
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var hadamard(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
Var mul_scalar(Tape& t, Var x, Var s);       // s is 1x1
Var add_rowvec(Tape& t, Var x, Var b);       // b is 1xD, added to every row
Var add_tiled(Tape& t, Var x, Var p);        // p tiled over consecutive row blocks

Var matmul(Tape& t, Var a, Var b);
Var transpose(Tape& t, Var a);

// Row plumbing.
Var rows(Tape& t, Var x, int first, int count);
Var select_rows(Tape& t, Var x, std::vector<int> indices);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var detach(Tape& t, Var x);

// Nonlinearities and reductions.
Var gelu(Tape& t, Var x);
Var layernorm(Tape& t, Var x, Var gamma, Var beta);  // per row, eps 1e-5
Var softmax_rows(Tape& t, Var x);
Var logv(Tape& t, Var x);                            // entries must be > 0
Var sum_all(Tape& t, Var x);                         // 1x1
Var mean_rows(Tape& t, Var x);                       // 1xD column means
Var normalize_rows(Tape& t, Var x);                  // rows scaled to unit norm

// Mean over rows [first, first+count) of each consecutive `block` rows.
Var mean_rows_per_block(Tape& t, Var x, int block, int first, int count);

// Fusion input assembly: for each of the m blocks emit
// [cnt; ord.row(i); sep; vis rows i*l .. i*l+l-1].
Var assemble_blocks(Tape& t, Var cnt, Var sep, Var ord, Var vis, int l);

// Batched multi-head self-attention over n_seq sequences of seq_len rows.
Var multihead_attention(Tape& t, Var x, int n_seq, int seq_len, int heads, bool causal,
                        Var wq, Var bq, Var wk, Var bk, Var wv, Var bv, Var wo, Var bo);

}  // namespace actprompt::ag
