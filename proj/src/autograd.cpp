#include "actprompt/autograd.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>

namespace actprompt::ag {

Var Tape::leaf(const Mat& value, bool requires_grad) {
  return push(value, requires_grad, nullptr);
}

Var Tape::push(Mat value, bool requires_grad, BackFn back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Mat& Tape::grad_ref(Var v) {
  Node& n = nodes_[static_cast<size_t>(v.idx)];
  if (n.grad.size() == 0) {
    n.grad = Mat::Zero(n.value.rows(), n.value.cols());
  }
  return n.grad;
}

void Tape::accumulate(Var v, const Mat& g) {
  if (!needs_grad(v)) return;
  grad_ref(v) += g;
}

void Tape::backward(Var scalar_loss) {
  const Mat& v = val(scalar_loss);
  if (v.rows() != 1 || v.cols() != 1) {
    throw std::logic_error("backward: loss must be a 1x1 node");
  }
  grad_ref(scalar_loss)(0, 0) += 1.0;
  for (int i = scalar_loss.idx; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (!n.requires_grad || !n.back || n.grad.size() == 0) continue;
    n.back(*this, n.grad);
  }
}

namespace {

bool any_grad(const Tape& t, std::initializer_list<Var> vars) {
  for (Var v : vars) {
    if (t.needs_grad(v)) return true;
  }
  return false;
}

void check_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::logic_error(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "add");
  return t.push(t.val(a) + t.val(b), any_grad(t, {a, b}), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Tape& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "sub");
  return t.push(t.val(a) - t.val(b), any_grad(t, {a, b}), [a, b](Tape& tp, const Mat& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var hadamard(Tape& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "hadamard");
  return t.push(t.val(a).cwiseProduct(t.val(b)), any_grad(t, {a, b}),
                [a, b](Tape& tp, const Mat& g) {
                  tp.accumulate(a, g.cwiseProduct(tp.val(b)));
                  tp.accumulate(b, g.cwiseProduct(tp.val(a)));
                });
}

Var scale(Tape& t, Var a, double c) {
  return t.push(t.val(a) * c, t.needs_grad(a),
                [a, c](Tape& tp, const Mat& g) { tp.accumulate(a, g * c); });
}

Var mul_scalar(Tape& t, Var x, Var s) {
  const Mat& sv = t.val(s);
  if (sv.rows() != 1 || sv.cols() != 1) throw std::logic_error("mul_scalar: s must be 1x1");
  return t.push(t.val(x) * sv(0, 0), any_grad(t, {x, s}), [x, s](Tape& tp, const Mat& g) {
    tp.accumulate(x, g * tp.val(s)(0, 0));
    Mat gs(1, 1);
    gs(0, 0) = g.cwiseProduct(tp.val(x)).sum();
    tp.accumulate(s, gs);
  });
}

Var add_rowvec(Tape& t, Var x, Var b) {
  const Mat& bv = t.val(b);
  if (bv.rows() != 1 || bv.cols() != t.val(x).cols()) {
    throw std::logic_error("add_rowvec: b must be 1 x cols(x)");
  }
  Mat y = t.val(x);
  y.rowwise() += bv.row(0);
  return t.push(std::move(y), any_grad(t, {x, b}), [x, b](Tape& tp, const Mat& g) {
    tp.accumulate(x, g);
    tp.accumulate(b, g.colwise().sum());
  });
}

Var add_tiled(Tape& t, Var x, Var p) {
  const Mat& xv = t.val(x);
  const Mat& pv = t.val(p);
  if (pv.cols() != xv.cols() || pv.rows() == 0 || xv.rows() % pv.rows() != 0) {
    throw std::logic_error("add_tiled: rows(x) must be a multiple of rows(p)");
  }
  const int block = static_cast<int>(pv.rows());
  const int reps = static_cast<int>(xv.rows()) / block;
  Mat y = xv;
  for (int r = 0; r < reps; ++r) y.middleRows(r * block, block) += pv;
  return t.push(std::move(y), any_grad(t, {x, p}),
                [x, p, block, reps](Tape& tp, const Mat& g) {
                  tp.accumulate(x, g);
                  if (tp.needs_grad(p)) {
                    Mat gp = Mat::Zero(block, g.cols());
                    for (int r = 0; r < reps; ++r) gp += g.middleRows(r * block, block);
                    tp.accumulate(p, gp);
                  }
                });
}

Var matmul(Tape& t, Var a, Var b) {
  if (t.val(a).cols() != t.val(b).rows()) throw std::logic_error("matmul: inner dims differ");
  return t.push(t.val(a) * t.val(b), any_grad(t, {a, b}), [a, b](Tape& tp, const Mat& g) {
    if (tp.needs_grad(a)) tp.accumulate(a, g * tp.val(b).transpose());
    if (tp.needs_grad(b)) tp.accumulate(b, tp.val(a).transpose() * g);
  });
}

Var transpose(Tape& t, Var a) {
  return t.push(t.val(a).transpose(), t.needs_grad(a),
                [a](Tape& tp, const Mat& g) { tp.accumulate(a, g.transpose()); });
}

Var rows(Tape& t, Var x, int first, int count) {
  const Mat& xv = t.val(x);
  if (first < 0 || count < 0 || first + count > xv.rows()) {
    throw std::logic_error("rows: slice out of range");
  }
  return t.push(xv.middleRows(first, count), t.needs_grad(x),
                [x, first, count](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(x)) return;
                  Mat gx = Mat::Zero(tp.val(x).rows(), tp.val(x).cols());
                  gx.middleRows(first, count) = g;
                  tp.accumulate(x, gx);
                });
}

Var select_rows(Tape& t, Var x, std::vector<int> indices) {
  const Mat& xv = t.val(x);
  Mat y(static_cast<Eigen::Index>(indices.size()), xv.cols());
  for (size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] < 0 || indices[i] >= xv.rows()) {
      throw std::logic_error("select_rows: index out of range");
    }
    y.row(static_cast<Eigen::Index>(i)) = xv.row(indices[i]);
  }
  auto idx = std::make_shared<std::vector<int>>(std::move(indices));
  return t.push(std::move(y), t.needs_grad(x), [x, idx](Tape& tp, const Mat& g) {
    if (!tp.needs_grad(x)) return;
    Mat gx = Mat::Zero(tp.val(x).rows(), tp.val(x).cols());
    for (size_t i = 0; i < idx->size(); ++i) {
      gx.row((*idx)[i]) += g.row(static_cast<Eigen::Index>(i));
    }
    tp.accumulate(x, gx);
  });
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw std::logic_error("concat_rows: no parts");
  Eigen::Index total = 0;
  const Eigen::Index cols = t.val(parts[0]).cols();
  bool rg = false;
  for (Var p : parts) {
    if (t.val(p).cols() != cols) throw std::logic_error("concat_rows: column mismatch");
    total += t.val(p).rows();
    rg = rg || t.needs_grad(p);
  }
  Mat y(total, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    y.middleRows(at, t.val(p).rows()) = t.val(p);
    at += t.val(p).rows();
  }
  auto parts_copy = std::make_shared<std::vector<Var>>(parts);
  return t.push(std::move(y), rg, [parts_copy](Tape& tp, const Mat& g) {
    Eigen::Index at = 0;
    for (Var p : *parts_copy) {
      tp.accumulate(p, g.middleRows(at, tp.val(p).rows()));
      at += tp.val(p).rows();
    }
  });
}

Var detach(Tape& t, Var x) { return t.constant(t.val(x)); }

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var gelu(Tape& t, Var x) {
  const Mat& xv = t.val(x);
  Mat y(xv.rows(), xv.cols());
  for (Eigen::Index i = 0; i < xv.size(); ++i) {
    const double v = xv(i);
    y(i) = 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  }
  return t.push(std::move(y), t.needs_grad(x), [x](Tape& tp, const Mat& g) {
    const Mat& xv = tp.val(x);
    Mat gx(xv.rows(), xv.cols());
    for (Eigen::Index i = 0; i < xv.size(); ++i) {
      const double v = xv(i);
      const double u = kGeluC * (v + kGeluA * v * v * v);
      const double th = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
      gx(i) = g(i) * (0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du);
    }
    tp.accumulate(x, gx);
  });
}

Var layernorm(Tape& t, Var x, Var gamma, Var beta) {
  const Mat& xv = t.val(x);
  const Mat& gv = t.val(gamma);
  const Mat& bv = t.val(beta);
  if (gv.rows() != 1 || bv.rows() != 1 || gv.cols() != xv.cols() || bv.cols() != xv.cols()) {
    throw std::logic_error("layernorm: gamma/beta must be 1 x cols(x)");
  }
  constexpr double eps = 1e-5;
  const Eigen::Index n = xv.rows(), d = xv.cols();
  auto xhat = std::make_shared<Mat>(n, d);
  auto inv_sigma = std::make_shared<Vec>(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const double mu = xv.row(r).mean();
    const double var = (xv.row(r).array() - mu).square().mean();
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)(r) = inv;
    xhat->row(r) = (xv.row(r).array() - mu) * inv;
  }
  Mat y = ((xhat->array().rowwise() * gv.row(0).array()).rowwise() + bv.row(0).array()).matrix();
  return t.push(std::move(y), any_grad(t, {x, gamma, beta}),
                [x, gamma, beta, xhat, inv_sigma](Tape& tp, const Mat& g) {
                  const Mat& gv = tp.val(gamma);
                  tp.accumulate(beta, g.colwise().sum());
                  tp.accumulate(gamma, g.cwiseProduct(*xhat).colwise().sum());
                  if (!tp.needs_grad(x)) return;
                  const Eigen::Index n = g.rows(), d = g.cols();
                  Mat gx(n, d);
                  for (Eigen::Index r = 0; r < n; ++r) {
                    Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gv.row(0));
                    const double m1 = dxhat.mean();
                    const double m2 = dxhat.cwiseProduct(xhat->row(r)).mean();
                    gx.row(r) = ((*inv_sigma)(r) *
                                 (dxhat.array() - m1 - xhat->row(r).array() * m2))
                                    .matrix();
                  }
                  tp.accumulate(x, gx);
                });
}

Var softmax_rows(Tape& t, Var x) {
  const Mat& xv = t.val(x);
  auto y = std::make_shared<Mat>(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double mx = xv.row(r).maxCoeff();
    Eigen::RowVectorXd e = (xv.row(r).array() - mx).exp().matrix();
    y->row(r) = e / e.sum();
  }
  return t.push(*y, t.needs_grad(x), [x, y](Tape& tp, const Mat& g) {
    Mat gx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double dot = g.row(r).cwiseProduct(y->row(r)).sum();
      gx.row(r) = (y->row(r).array() * (g.row(r).array() - dot)).matrix();
    }
    tp.accumulate(x, gx);
  });
}

Var logv(Tape& t, Var x) {
  return t.push(t.val(x).array().log().matrix(), t.needs_grad(x),
                [x](Tape& tp, const Mat& g) {
                  tp.accumulate(x, (g.array() / tp.val(x).array()).matrix());
                });
}

Var sum_all(Tape& t, Var x) {
  Mat y(1, 1);
  y(0, 0) = t.val(x).sum();
  return t.push(std::move(y), t.needs_grad(x), [x](Tape& tp, const Mat& g) {
    tp.accumulate(x, Mat::Constant(tp.val(x).rows(), tp.val(x).cols(), g(0, 0)));
  });
}

Var mean_rows(Tape& t, Var x) {
  const Mat& xv = t.val(x);
  Mat y = xv.colwise().mean();
  return t.push(std::move(y), t.needs_grad(x), [x](Tape& tp, const Mat& g) {
    const double inv = 1.0 / static_cast<double>(tp.val(x).rows());
    Mat gx = (inv * g).replicate(tp.val(x).rows(), 1);
    tp.accumulate(x, gx);
  });
}

Var normalize_rows(Tape& t, Var x) {
  const Mat& xv = t.val(x);
  auto y = std::make_shared<Mat>(xv.rows(), xv.cols());
  auto norms = std::make_shared<Vec>(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const double n = xv.row(r).norm();
    (*norms)(r) = n;
    y->row(r) = xv.row(r) / n;
  }
  return t.push(*y, t.needs_grad(x), [x, y, norms](Tape& tp, const Mat& g) {
    Mat gx(g.rows(), g.cols());
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      const double dot = g.row(r).cwiseProduct(y->row(r)).sum();
      gx.row(r) = (g.row(r) - dot * y->row(r)) / (*norms)(r);
    }
    tp.accumulate(x, gx);
  });
}

Var mean_rows_per_block(Tape& t, Var x, int block, int first, int count) {
  const Mat& xv = t.val(x);
  if (block <= 0 || xv.rows() % block != 0 || first < 0 || count <= 0 ||
      first + count > block) {
    throw std::logic_error("mean_rows_per_block: bad block layout");
  }
  const int m = static_cast<int>(xv.rows()) / block;
  Mat y(m, xv.cols());
  for (int i = 0; i < m; ++i) {
    y.row(i) = xv.middleRows(i * block + first, count).colwise().mean();
  }
  return t.push(std::move(y), t.needs_grad(x),
                [x, block, first, count, m](Tape& tp, const Mat& g) {
                  if (!tp.needs_grad(x)) return;
                  Mat gx = Mat::Zero(tp.val(x).rows(), tp.val(x).cols());
                  const double inv = 1.0 / count;
                  for (int i = 0; i < m; ++i) {
                    Eigen::RowVectorXd gr = inv * g.row(i);
                    gx.middleRows(i * block + first, count).rowwise() += gr;
                  }
                  tp.accumulate(x, gx);
                });
}

Var assemble_blocks(Tape& t, Var cnt, Var sep, Var ord, Var vis, int l) {
  const Mat& cv = t.val(cnt);
  const Mat& sv = t.val(sep);
  const Mat& ov = t.val(ord);
  const Mat& vv = t.val(vis);
  const Eigen::Index d = cv.cols();
  const Eigen::Index m = ov.rows();
  if (cv.rows() != 1 || sv.rows() != 1 || sv.cols() != d || ov.cols() != d ||
      vv.cols() != d || vv.rows() != m * l) {
    throw std::logic_error("assemble_blocks: inconsistent shapes");
  }
  const int block = 3 + l;
  Mat y(m * block, d);
  for (Eigen::Index i = 0; i < m; ++i) {
    y.row(i * block + 0) = cv.row(0);
    y.row(i * block + 1) = ov.row(i);
    y.row(i * block + 2) = sv.row(0);
    y.middleRows(i * block + 3, l) = vv.middleRows(i * l, l);
  }
  return t.push(std::move(y), any_grad(t, {cnt, sep, ord, vis}),
                [cnt, sep, ord, vis, l, block](Tape& tp, const Mat& g) {
                  const Eigen::Index m = tp.val(ord).rows();
                  const Eigen::Index d = g.cols();
                  Mat gc = Mat::Zero(1, d), gs = Mat::Zero(1, d);
                  Mat go = Mat::Zero(m, d), gv = Mat::Zero(m * l, d);
                  for (Eigen::Index i = 0; i < m; ++i) {
                    gc.row(0) += g.row(i * block + 0);
                    go.row(i) = g.row(i * block + 1);
                    gs.row(0) += g.row(i * block + 2);
                    gv.middleRows(i * l, l) = g.middleRows(i * block + 3, l);
                  }
                  tp.accumulate(cnt, gc);
                  tp.accumulate(ord, go);
                  tp.accumulate(sep, gs);
                  tp.accumulate(vis, gv);
                });
}

Var multihead_attention(Tape& t, Var x, int n_seq, int seq_len, int heads, bool causal,
                        Var wq, Var bq, Var wk, Var bk, Var wv, Var bv, Var wo, Var bo) {
  const Mat& xv = t.val(x);
  const Eigen::Index d = xv.cols();
  if (xv.rows() != static_cast<Eigen::Index>(n_seq) * seq_len) {
    throw std::logic_error("multihead_attention: rows != n_seq*seq_len");
  }
  if (d % heads != 0) throw std::logic_error("multihead_attention: heads must divide width");
  const Eigen::Index dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  auto q = std::make_shared<Mat>((xv * t.val(wq)).rowwise() + t.val(bq).row(0));
  auto k = std::make_shared<Mat>((xv * t.val(wk)).rowwise() + t.val(bk).row(0));
  auto v = std::make_shared<Mat>((xv * t.val(wv)).rowwise() + t.val(bv).row(0));
  auto attn = std::make_shared<std::vector<Mat>>();  // one S x S map per (seq, head)
  attn->reserve(static_cast<size_t>(n_seq) * heads);

  auto ctx = std::make_shared<Mat>(xv.rows(), d);
  for (int s = 0; s < n_seq; ++s) {
    for (int h = 0; h < heads; ++h) {
      const auto qh = q->block(s * seq_len, h * dh, seq_len, dh);
      const auto kh = k->block(s * seq_len, h * dh, seq_len, dh);
      const auto vh = v->block(s * seq_len, h * dh, seq_len, dh);
      Mat scores = qh * kh.transpose() * inv_sqrt_dh;
      if (causal) {
        for (int r = 0; r < seq_len; ++r) {
          for (int c = r + 1; c < seq_len; ++c) {
            scores(r, c) = -std::numeric_limits<double>::infinity();
          }
        }
      }
      Mat a(seq_len, seq_len);
      for (int r = 0; r < seq_len; ++r) {
        const double mx = scores.row(r).maxCoeff();
        Eigen::RowVectorXd e = (scores.row(r).array() - mx).exp().matrix();
        a.row(r) = e / e.sum();
      }
      ctx->block(s * seq_len, h * dh, seq_len, dh) = a * vh;
      attn->push_back(std::move(a));
    }
  }
  Mat y = (*ctx * t.val(wo)).rowwise() + t.val(bo).row(0);

  bool rg = any_grad(t, {x, wq, bq, wk, bk, wv, bv, wo, bo});
  return t.push(std::move(y), rg,
                [x, wq, bq, wk, bk, wv, bv, wo, bo, q, k, v, ctx, attn, n_seq, seq_len,
                 heads, dh, inv_sqrt_dh](Tape& tp, const Mat& g) {
                  const Mat& xv = tp.val(x);
                  tp.accumulate(wo, ctx->transpose() * g);
                  tp.accumulate(bo, g.colwise().sum());
                  Mat dctx = g * tp.val(wo).transpose();

                  Mat dq = Mat::Zero(q->rows(), q->cols());
                  Mat dk = Mat::Zero(k->rows(), k->cols());
                  Mat dv = Mat::Zero(v->rows(), v->cols());
                  for (int s = 0; s < n_seq; ++s) {
                    for (int h = 0; h < heads; ++h) {
                      const Mat& a = (*attn)[static_cast<size_t>(s) * heads + h];
                      const auto qh = q->block(s * seq_len, h * dh, seq_len, dh);
                      const auto kh = k->block(s * seq_len, h * dh, seq_len, dh);
                      const auto vh = v->block(s * seq_len, h * dh, seq_len, dh);
                      const auto dctxh = dctx.block(s * seq_len, h * dh, seq_len, dh);
                      Mat da = dctxh * vh.transpose();
                      dv.block(s * seq_len, h * dh, seq_len, dh) += a.transpose() * dctxh;
                      Mat ds(seq_len, seq_len);
                      for (int r = 0; r < seq_len; ++r) {
                        const double dot = da.row(r).cwiseProduct(a.row(r)).sum();
                        ds.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
                      }
                      dq.block(s * seq_len, h * dh, seq_len, dh) += ds * kh * inv_sqrt_dh;
                      dk.block(s * seq_len, h * dh, seq_len, dh) +=
                          ds.transpose() * qh * inv_sqrt_dh;
                    }
                  }
                  tp.accumulate(wq, xv.transpose() * dq);
                  tp.accumulate(bq, dq.colwise().sum());
                  tp.accumulate(wk, xv.transpose() * dk);
                  tp.accumulate(bk, dk.colwise().sum());
                  tp.accumulate(wv, xv.transpose() * dv);
                  tp.accumulate(bv, dv.colwise().sum());
                  if (tp.needs_grad(x)) {
                    Mat gx = dq * tp.val(wq).transpose() + dk * tp.val(wk).transpose() +
                             dv * tp.val(wv).transpose();
                    tp.accumulate(x, gx);
                  }
                });
}

}  // namespace actprompt::ag
