#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "mvhet/errors.hpp"
#include "mvhet/mat.hpp"
#include "mvhet/rng.hpp"

namespace mvhet {

class Tape;

// Lightweight handle into a Tape node. Valid only while its Tape lives.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  const Mat& val() const;
  const Mat& grad() const;
  int rows() const;
  int cols() const;
  double scalar() const;
};

// Reverse-mode tape. Operations append nodes in topological order; backward
// walks them once in reverse. One tape per forward/backward pass.
class Tape {
 public:
  Tensor leaf(Mat value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  Tensor constant(Mat value) { return leaf(std::move(value), false); }
  Tensor scalar_const(double v) { return leaf(Mat::scalar(v), false); }

  Tensor matmul(Tensor a, Tensor b) {
    check(a), check(b);
    Mat out = mvhet::matmul(v(a), v(b));
    return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, int self) {
      const Mat& go = t.g(self);
      if (t.rg(a)) t.accumulate(a, mvhet::matmul(go, mvhet::transpose(t.v(b))));
      if (t.rg(b)) t.accumulate(b, mvhet::matmul(mvhet::transpose(t.v(a)), go));
    });
  }

  Tensor add(Tensor a, Tensor b) {
    check(a), check(b);
    Mat out = mvhet::add(v(a), v(b));
    return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, int self) {
      const Mat& go = t.g(self);
      if (t.rg(a)) t.accumulate(a, go);
      if (t.rg(b)) t.accumulate(b, go);
    });
  }

  Tensor sub(Tensor a, Tensor b) {
    check(a), check(b);
    Mat out = mvhet::sub(v(a), v(b));
    return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, int self) {
      const Mat& go = t.g(self);
      if (t.rg(a)) t.accumulate(a, go);
      if (t.rg(b)) t.accumulate(b, mvhet::scale(go, -1.0));
    });
  }

  Tensor hadamard(Tensor a, Tensor b) {
    check(a), check(b);
    Mat out = mvhet::hadamard(v(a), v(b));
    return push(std::move(out), rg(a) || rg(b), [a, b](Tape& t, int self) {
      const Mat& go = t.g(self);
      if (t.rg(a)) t.accumulate(a, mvhet::hadamard(go, t.v(b)));
      if (t.rg(b)) t.accumulate(b, mvhet::hadamard(go, t.v(a)));
    });
  }

  Tensor scale(Tensor a, double c) {
    check(a);
    Mat out = mvhet::scale(v(a), c);
    return push(std::move(out), rg(a), [a, c](Tape& t, int self) {
      if (t.rg(a)) t.accumulate(a, mvhet::scale(t.g(self), c));
    });
  }

  // a: n x d, bias: 1 x d, broadcast over rows
  Tensor add_rowvec(Tensor a, Tensor bias) {
    check(a), check(bias);
    if (v(bias).rows() != 1 || v(bias).cols() != v(a).cols())
      throw Error(ErrorKind::ShapeMismatch, "add_rowvec: bias must be 1 x cols(a)");
    Mat out = v(a);
    for (int i = 0; i < out.rows(); ++i)
      for (int j = 0; j < out.cols(); ++j) out(i, j) += v(bias)(0, j);
    return push(std::move(out), rg(a) || rg(bias), [a, bias](Tape& t, int self) {
      const Mat& go = t.g(self);
      if (t.rg(a)) t.accumulate(a, go);
      if (t.rg(bias)) {
        Mat gb(1, go.cols());
        for (int i = 0; i < go.rows(); ++i)
          for (int j = 0; j < go.cols(); ++j) gb(0, j) += go(i, j);
        t.accumulate(bias, gb);
      }
    });
  }

  Tensor transpose(Tensor a) {
    check(a);
    Mat out = mvhet::transpose(v(a));
    return push(std::move(out), rg(a), [a](Tape& t, int self) {
      if (t.rg(a)) t.accumulate(a, mvhet::transpose(t.g(self)));
    });
  }

  Tensor relu(Tensor a) {
    check(a);
    Mat out = mvhet::relu(v(a));
    return push(std::move(out), rg(a), [a](Tape& t, int self) {
      if (!t.rg(a)) return;
      Mat ga = t.g(self);
      const Mat& x = t.v(a);
      for (std::size_t i = 0; i < ga.size(); ++i)
        if (x.data()[i] <= 0.0) ga.data()[i] = 0.0;
      t.accumulate(a, ga);
    });
  }

  Tensor sigmoid(Tensor a) {
    check(a);
    Mat out = v(a);
    for (double& x : out.data()) x = stable_sigmoid(x);
    return push(std::move(out), rg(a), [a](Tape& t, int self) {
      if (!t.rg(a)) return;
      Mat ga = t.g(self);
      const Mat& y = t.v(self);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.data()[i] *= y.data()[i] * (1.0 - y.data()[i]);
      t.accumulate(a, ga);
    });
  }

  Tensor tanh(Tensor a) {
    check(a);
    Mat out = v(a);
    for (double& x : out.data()) x = std::tanh(x);
    return push(std::move(out), rg(a), [a](Tape& t, int self) {
      if (!t.rg(a)) return;
      Mat ga = t.g(self);
      const Mat& y = t.v(self);
      for (std::size_t i = 0; i < ga.size(); ++i)
        ga.data()[i] *= 1.0 - y.data()[i] * y.data()[i];
      t.accumulate(a, ga);
    });
  }

  // Inverted dropout: kept entries scaled by 1/(1-p) in training, identity
  // otherwise. The mask is a pure function of (key, entry index).
  Tensor dropout(Tensor a, double p, bool training, std::uint64_t key) {
    check(a);
    if (p < 0.0 || p >= 1.0)
      throw Error(ErrorKind::InvalidProbability, "dropout: p=" + std::to_string(p));
    if (!training || p == 0.0) {
      Mat out = v(a);
      return push(std::move(out), rg(a), [a](Tape& t, int self) {
        if (t.rg(a)) t.accumulate(a, t.g(self));
      });
    }
    const double keep_scale = 1.0 / (1.0 - p);
    auto mult = std::make_shared<std::vector<double>>(v(a).size());
    for (std::size_t i = 0; i < mult->size(); ++i)
      (*mult)[i] = keyed_uniform(key, i) >= p ? keep_scale : 0.0;
    Mat out = v(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= (*mult)[i];
    return push(std::move(out), rg(a), [a, mult](Tape& t, int self) {
      if (!t.rg(a)) return;
      Mat ga = t.g(self);
      for (std::size_t i = 0; i < ga.size(); ++i) ga.data()[i] *= (*mult)[i];
      t.accumulate(a, ga);
    });
  }

  // Row i of the output is the mean of x-rows listed in adjacency row i;
  // rows with zero count are zero. Differentiable w.r.t. x only.
  Tensor spmm_mean(const Csr& adj, Tensor x, const std::vector<double>& norms) {
    check(x);
    if (adj.cols() != v(x).rows())
      throw Error(ErrorKind::ShapeMismatch, "spmm_mean: adjacency cols != x rows");
    if (static_cast<int>(norms.size()) != adj.rows())
      throw Error(ErrorKind::ShapeMismatch, "spmm_mean: norms size != adjacency rows");
    const int d = v(x).cols();
    Mat out(adj.rows(), d);
    for (int i = 0; i < adj.rows(); ++i) {
      if (norms[i] <= 0.0) continue;
      const double inv = 1.0 / norms[i];
      double* orow = out.row_ptr(i);
      for (int k = adj.row_begin(i); k < adj.row_end(i); ++k) {
        const double* xrow = v(x).row_ptr(adj.col_at(k));
        for (int j = 0; j < d; ++j) orow[j] += inv * xrow[j];
      }
    }
    const Csr* adj_ptr = &adj;
    auto counts = std::make_shared<std::vector<double>>(norms);
    return push(std::move(out), rg(x), [x, adj_ptr, counts](Tape& t, int self) {
      if (!t.rg(x)) return;
      const Mat& go = t.g(self);
      Mat gx(t.v(x).rows(), t.v(x).cols());
      for (int i = 0; i < adj_ptr->rows(); ++i) {
        if ((*counts)[i] <= 0.0) continue;
        const double inv = 1.0 / (*counts)[i];
        const double* grow = go.row_ptr(i);
        for (int k = adj_ptr->row_begin(i); k < adj_ptr->row_end(i); ++k) {
          double* gxrow = gx.row_ptr(adj_ptr->col_at(k));
          for (int j = 0; j < gx.cols(); ++j) gxrow[j] += inv * grow[j];
        }
      }
      t.accumulate(x, gx);
    });
  }

  // ||x||_F^2 as a 1x1 tensor.
  Tensor frobenius_sq(Tensor a) {
    check(a);
    double s = 0.0;
    for (double x : v(a).data()) s += x * x;
    return push(Mat::scalar(s), rg(a), [a](Tape& t, int self) {
      if (!t.rg(a)) return;
      t.accumulate(a, mvhet::scale(t.v(a), 2.0 * t.g(self)(0, 0)));
    });
  }

  // ||(W^T W) ⊙ (1 - I)||_1 as a 1x1 tensor.
  Tensor l1_offdiag_gram(Tensor w) {
    check(w);
    if (v(w).cols() < 1) throw Error(ErrorKind::ShapeMismatch, "l1_offdiag_gram: empty matrix");
    Mat gram = mvhet::matmul(mvhet::transpose(v(w)), v(w));
    double s = 0.0;
    for (int i = 0; i < gram.rows(); ++i)
      for (int j = 0; j < gram.cols(); ++j)
        if (i != j) s += std::abs(gram(i, j));
    auto gram_ptr = std::make_shared<Mat>(std::move(gram));
    return push(Mat::scalar(s), rg(w), [w, gram_ptr](Tape& t, int self) {
      if (!t.rg(w)) return;
      const Mat& gm = *gram_ptr;
      Mat sign(gm.rows(), gm.cols());
      for (int i = 0; i < gm.rows(); ++i)
        for (int j = 0; j < gm.cols(); ++j)
          if (i != j) sign(i, j) = gm(i, j) > 0.0 ? 1.0 : (gm(i, j) < 0.0 ? -1.0 : 0.0);
      // d/dW sum|G_ij| = W (S + S^T); S is symmetric here
      Mat gw = mvhet::matmul(t.v(w), mvhet::add(sign, mvhet::transpose(sign)));
      t.accumulate(w, mvhet::scale(gw, t.g(self)(0, 0)));
    });
  }

  // Mean over the selected rows of -sum_c y log softmax(logits).
  Tensor softmax_cross_entropy(Tensor logits, const Mat& one_hot, const std::vector<int>& rows) {
    check(logits);
    if (rows.empty()) throw Error(ErrorKind::EmptyMask, "softmax_cross_entropy: no rows selected");
    if (!v(logits).same_shape(one_hot))
      throw Error(ErrorKind::ShapeMismatch, "softmax_cross_entropy: logits vs targets");
    const Mat& z = v(logits);
    const int c = z.cols();
    auto probs = std::make_shared<Mat>(static_cast<int>(rows.size()), c);
    double loss = 0.0;
    for (std::size_t ri = 0; ri < rows.size(); ++ri) {
      const int i = rows[ri];
      if (i < 0 || i >= z.rows())
        throw Error(ErrorKind::IndexOutOfRange, "softmax_cross_entropy: row " + std::to_string(i));
      double mx = z(i, 0);
      for (int j = 1; j < c; ++j) mx = std::max(mx, z(i, j));
      double sum = 0.0;
      for (int j = 0; j < c; ++j) sum += std::exp(z(i, j) - mx);
      const double log_sum = std::log(sum) + mx;
      for (int j = 0; j < c; ++j) {
        (*probs)(static_cast<int>(ri), j) = std::exp(z(i, j) - log_sum);
        loss -= one_hot(i, j) * (z(i, j) - log_sum);
      }
    }
    loss /= static_cast<double>(rows.size());
    auto targets = std::make_shared<Mat>(one_hot);
    auto row_list = std::make_shared<std::vector<int>>(rows);
    return push(Mat::scalar(loss), rg(logits),
                [logits, probs, targets, row_list](Tape& t, int self) {
                  if (!t.rg(logits)) return;
                  const double gl = t.g(self)(0, 0) / static_cast<double>(row_list->size());
                  Mat gz(t.v(logits).rows(), t.v(logits).cols());
                  for (std::size_t ri = 0; ri < row_list->size(); ++ri) {
                    const int i = (*row_list)[ri];
                    for (int j = 0; j < gz.cols(); ++j)
                      gz(i, j) += gl * ((*probs)(static_cast<int>(ri), j) - (*targets)(i, j));
                  }
                  t.accumulate(logits, gz);
                });
  }

  // Sum over entries of -t log σ(s) - (1-t) log σ(-s), numerically stable.
  Tensor bce_with_logits(Tensor scores, const Mat& targets) {
    check(scores);
    if (!v(scores).same_shape(targets))
      throw Error(ErrorKind::ShapeMismatch, "bce_with_logits: scores vs targets");
    const Mat& s = v(scores);
    double loss = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double x = s.data()[i];
      const double t01 = targets.data()[i];
      loss += std::max(x, 0.0) - x * t01 + std::log1p(std::exp(-std::abs(x)));
    }
    auto tgt = std::make_shared<Mat>(targets);
    return push(Mat::scalar(loss), rg(scores), [scores, tgt](Tape& t, int self) {
      if (!t.rg(scores)) return;
      const double gl = t.g(self)(0, 0);
      Mat gs = t.v(scores);
      for (std::size_t i = 0; i < gs.size(); ++i)
        gs.data()[i] = gl * (stable_sigmoid(gs.data()[i]) - tgt->data()[i]);
      t.accumulate(scores, gs);
    });
  }

  Tensor gather_rows(Tensor a, const std::vector<int>& idx) {
    check(a);
    Mat out(static_cast<int>(idx.size()), v(a).cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= v(a).rows())
        throw Error(ErrorKind::IndexOutOfRange, "gather_rows: " + std::to_string(idx[i]));
      for (int j = 0; j < out.cols(); ++j) out(static_cast<int>(i), j) = v(a)(idx[i], j);
    }
    auto rows = std::make_shared<std::vector<int>>(idx);
    return push(std::move(out), rg(a), [a, rows](Tape& t, int self) {
      if (!t.rg(a)) return;
      const Mat& go = t.g(self);
      Mat ga(t.v(a).rows(), t.v(a).cols());
      for (std::size_t i = 0; i < rows->size(); ++i)
        for (int j = 0; j < ga.cols(); ++j) ga((*rows)[i], j) += go(static_cast<int>(i), j);
      t.accumulate(a, ga);
    });
  }

  // k x 1 tensor of row dot products a[p.first] . b[p.second].
  Tensor pairwise_dot(Tensor a, Tensor b, const std::vector<std::pair<int, int>>& pairs) {
    check(a), check(b);
    if (v(a).cols() != v(b).cols())
      throw Error(ErrorKind::ShapeMismatch, "pairwise_dot: width mismatch");
    Mat out(static_cast<int>(pairs.size()), 1);
    for (std::size_t k = 0; k < pairs.size(); ++k) {
      const auto& [i, j] = pairs[k];
      if (i < 0 || i >= v(a).rows() || j < 0 || j >= v(b).rows())
        throw Error(ErrorKind::IndexOutOfRange, "pairwise_dot: pair out of range");
      out(static_cast<int>(k), 0) = dot_rows(v(a), i, v(b), j);
    }
    auto ps = std::make_shared<std::vector<std::pair<int, int>>>(pairs);
    return push(std::move(out), rg(a) || rg(b), [a, b, ps](Tape& t, int self) {
      const Mat& go = t.g(self);
      const int d = t.v(a).cols();
      if (t.rg(a)) {
        Mat ga(t.v(a).rows(), d);
        for (std::size_t k = 0; k < ps->size(); ++k)
          for (int j = 0; j < d; ++j)
            ga((*ps)[k].first, j) += go(static_cast<int>(k), 0) * t.v(b)((*ps)[k].second, j);
        t.accumulate(a, ga);
      }
      if (t.rg(b)) {
        Mat gb(t.v(b).rows(), d);
        for (std::size_t k = 0; k < ps->size(); ++k)
          for (int j = 0; j < d; ++j)
            gb((*ps)[k].second, j) += go(static_cast<int>(k), 0) * t.v(a)((*ps)[k].first, j);
        t.accumulate(b, gb);
      }
    });
  }

  Tensor concat_cols(const std::vector<Tensor>& xs) {
    if (xs.empty()) throw Error(ErrorKind::EmptyViewSet, "concat_cols: nothing to concatenate");
    int rows = v(xs[0]).rows();
    int width = 0;
    bool any_rg = false;
    for (const Tensor& x : xs) {
      check(x);
      if (v(x).rows() != rows)
        throw Error(ErrorKind::RowCountMismatch, "concat_cols: row counts differ");
      width += v(x).cols();
      any_rg = any_rg || rg(x);
    }
    Mat out(rows, width);
    int off = 0;
    for (const Tensor& x : xs) {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < v(x).cols(); ++j) out(i, off + j) = v(x)(i, j);
      off += v(x).cols();
    }
    auto parts = std::make_shared<std::vector<Tensor>>(xs);
    return push(std::move(out), any_rg, [parts](Tape& t, int self) {
      const Mat& go = t.g(self);
      int off = 0;
      for (const Tensor& x : *parts) {
        const int w = t.v(x).cols();
        if (t.rg(x)) {
          Mat gx(go.rows(), w);
          for (int i = 0; i < go.rows(); ++i)
            for (int j = 0; j < w; ++j) gx(i, j) = go(i, off + j);
          t.accumulate(x, gx);
        }
        off += w;
      }
    });
  }

  // 1 x d row of column means.
  Tensor rows_mean(Tensor a) {
    check(a);
    const Mat& x = v(a);
    Mat out(1, x.cols());
    for (int i = 0; i < x.rows(); ++i)
      for (int j = 0; j < x.cols(); ++j) out(0, j) += x(i, j);
    const double inv = x.rows() > 0 ? 1.0 / x.rows() : 0.0;
    for (double& vv : out.data()) vv *= inv;
    return push(std::move(out), rg(a), [a, inv](Tape& t, int self) {
      if (!t.rg(a)) return;
      const Mat& go = t.g(self);
      Mat ga(t.v(a).rows(), t.v(a).cols());
      for (int i = 0; i < ga.rows(); ++i)
        for (int j = 0; j < ga.cols(); ++j) ga(i, j) = inv * go(0, j);
      t.accumulate(a, ga);
    });
  }

  Tensor softmax_rows(Tensor a) {
    check(a);
    Mat out = v(a);
    for (int i = 0; i < out.rows(); ++i) {
      double mx = out(i, 0);
      for (int j = 1; j < out.cols(); ++j) mx = std::max(mx, out(i, j));
      double sum = 0.0;
      for (int j = 0; j < out.cols(); ++j) {
        out(i, j) = std::exp(out(i, j) - mx);
        sum += out(i, j);
      }
      for (int j = 0; j < out.cols(); ++j) out(i, j) /= sum;
    }
    return push(std::move(out), rg(a), [a](Tape& t, int self) {
      if (!t.rg(a)) return;
      const Mat& go = t.g(self);
      const Mat& p = t.v(self);
      Mat ga(p.rows(), p.cols());
      for (int i = 0; i < p.rows(); ++i) {
        double dot = 0.0;
        for (int j = 0; j < p.cols(); ++j) dot += go(i, j) * p(i, j);
        for (int j = 0; j < p.cols(); ++j) ga(i, j) = p(i, j) * (go(i, j) - dot);
      }
      t.accumulate(a, ga);
    });
  }

  Tensor col(Tensor a, int j) {
    check(a);
    if (j < 0 || j >= v(a).cols())
      throw Error(ErrorKind::IndexOutOfRange, "col: " + std::to_string(j));
    Mat out(v(a).rows(), 1);
    for (int i = 0; i < out.rows(); ++i) out(i, 0) = v(a)(i, j);
    return push(std::move(out), rg(a), [a, j](Tape& t, int self) {
      if (!t.rg(a)) return;
      const Mat& go = t.g(self);
      Mat ga(t.v(a).rows(), t.v(a).cols());
      for (int i = 0; i < ga.rows(); ++i) ga(i, j) = go(i, 0);
      t.accumulate(a, ga);
    });
  }

  // x scaled by a 1x1 tensor, differentiable in both.
  Tensor mul_scalar(Tensor x, Tensor s) {
    check(x), check(s);
    if (v(s).rows() != 1 || v(s).cols() != 1)
      throw Error(ErrorKind::ShapeMismatch, "mul_scalar: scale must be 1x1");
    Mat out = mvhet::scale(v(x), v(s)(0, 0));
    return push(std::move(out), rg(x) || rg(s), [x, s](Tape& t, int self) {
      const Mat& go = t.g(self);
      if (t.rg(x)) t.accumulate(x, mvhet::scale(go, t.v(s)(0, 0)));
      if (t.rg(s)) {
        double d = 0.0;
        for (std::size_t i = 0; i < go.size(); ++i) d += go.data()[i] * t.v(x).data()[i];
        t.accumulate(s, Mat::scalar(d));
      }
    });
  }

  Tensor sum_all(Tensor a) {
    check(a);
    double s = 0.0;
    for (double x : v(a).data()) s += x;
    return push(Mat::scalar(s), rg(a), [a](Tape& t, int self) {
      if (!t.rg(a)) return;
      Mat ga(t.v(a).rows(), t.v(a).cols(), t.g(self)(0, 0));
      t.accumulate(a, ga);
    });
  }

  void backward(Tensor loss) {
    check(loss);
    if (v(loss).rows() != 1 || v(loss).cols() != 1)
      throw Error(ErrorKind::NotScalarLoss, "backward: loss must be 1x1");
    for (Node& n : nodes_) n.grad = Mat(n.val.rows(), n.val.cols());
    nodes_[loss.id].grad(0, 0) = 1.0;
    for (int id = loss.id; id >= 0; --id)
      if (nodes_[id].back && nodes_[id].requires_grad) nodes_[id].back(*this, id);
  }

  const Mat& v(Tensor x) const { return nodes_[x.id].val; }
  const Mat& v(int id) const { return nodes_[id].val; }
  const Mat& g(Tensor x) const { return nodes_[x.id].grad; }
  const Mat& g(int id) const { return nodes_[id].grad; }
  bool rg(Tensor x) const { return nodes_[x.id].requires_grad; }
  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  friend struct Tensor;
  struct Node {
    Mat val;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Tape&, int)> back;
  };

  static double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  }

  Tensor push(Mat val, bool requires_grad, std::function<void(Tape&, int)> back) {
    nodes_.push_back(Node{std::move(val), Mat(), requires_grad, std::move(back)});
    return Tensor{this, static_cast<int>(nodes_.size()) - 1};
  }

  void accumulate(Tensor x, const Mat& delta) {
    Mat& gx = nodes_[x.id].grad;
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data()[i] += delta.data()[i];
  }

  void check(Tensor x) const {
    if (x.tape != this || x.id < 0 || x.id >= size())
      throw Error(ErrorKind::IndexOutOfRange, "tensor does not belong to this tape");
  }

  std::vector<Node> nodes_;
};

inline const Mat& Tensor::val() const { return tape->v(*this); }
inline const Mat& Tensor::grad() const { return tape->g(*this); }
inline int Tensor::rows() const { return val().rows(); }
inline int Tensor::cols() const { return val().cols(); }
inline double Tensor::scalar() const { return val()(0, 0); }

}  // namespace mvhet
