#include "tgeacm/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "tgeacm/error.hpp"

namespace tgeacm::ad {

namespace {

std::string dims(const Mat& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void require_same_shape(const Mat& a, const Mat& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": " + dims(a) + " vs " + dims(b));
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Graph::param(const ParamStore& store, ParamId id) {
  if (store_ == nullptr) {
    store_ = &store;
    param_nodes_.assign(store.size(), -1);
  } else if (store_ != &store) {
    throw IntegrityError("graph already bound to a different parameter store");
  }
  int& cached = param_nodes_[id.index];
  if (cached >= 0) return Var{this, cached};
  Node n;
  n.ref = &store[id];
  n.requires_grad = mode_ == Mode::Record;
  n.param_index = id.index;
  nodes_.push_back(std::move(n));
  cached = static_cast<int>(nodes_.size() - 1);
  return Var{this, cached};
}

Var Graph::constant(Mat value) {
  Node n;
  n.own = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

const Mat& Graph::value(Var v) const {
  const Node& n = nodes_[v.id];
  return n.ref ? *n.ref : n.own;
}

Mat& Graph::grad_ref(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.size() == 0) {
    const Mat& val = n.ref ? *n.ref : n.own;
    n.grad = Mat::Zero(val.rows(), val.cols());
  }
  return n.grad;
}

Var Graph::emit(Mat value, std::initializer_list<Var> inputs, std::function<void(Graph&, int)> backward) {
  return emit(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Graph::emit(Mat value, const std::vector<Var>& inputs, std::function<void(Graph&, int)> backward) {
  Node n;
  n.own = std::move(value);
  if (mode_ == Mode::Record) {
    for (Var in : inputs) n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size() - 1)};
}

void Graph::backward(Var loss, Gradients& grads) {
  if (mode_ != Mode::Record) throw IntegrityError("backward() on an inference graph");
  const Mat& lv = value(loss);
  if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward() needs a scalar loss, got " + dims(lv));
  if (store_ && grads.size() != store_->size()) throw IntegrityError("gradient buffer does not match parameter store");
  grad_ref(loss)(0, 0) += 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.backward) {
      n.backward(*this, i);
    } else if (n.param_index != static_cast<std::size_t>(-1)) {
      grads.at(n.param_index) += n.grad;
    }
  }
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul: " + dims(A) + " * " + dims(B));
  return g.emit(A * B, {a, b}, [a, b](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    if (g.requires_grad(a)) g.grad_ref(a).noalias() += go * g.value(b).transpose();
    if (g.requires_grad(b)) g.grad_ref(b).noalias() += g.value(a).transpose() * go;
  });
}

Var add(Var a, Var b) {
  Graph& g = *a.graph;
  require_same_shape(g.value(a), g.value(b), "add");
  return g.emit(g.value(a) + g.value(b), {a, b}, [a, b](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    if (g.requires_grad(a)) g.grad_ref(a) += go;
    if (g.requires_grad(b)) g.grad_ref(b) += go;
  });
}

Var sub(Var a, Var b) {
  Graph& g = *a.graph;
  require_same_shape(g.value(a), g.value(b), "sub");
  return g.emit(g.value(a) - g.value(b), {a, b}, [a, b](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    if (g.requires_grad(a)) g.grad_ref(a) += go;
    if (g.requires_grad(b)) g.grad_ref(b) -= go;
  });
}

Var cmul(Var a, Var b) {
  Graph& g = *a.graph;
  require_same_shape(g.value(a), g.value(b), "cmul");
  return g.emit(g.value(a).cwiseProduct(g.value(b)), {a, b}, [a, b](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    if (g.requires_grad(a)) g.grad_ref(a) += go.cwiseProduct(g.value(b));
    if (g.requires_grad(b)) g.grad_ref(b) += go.cwiseProduct(g.value(a));
  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph;
  return g.emit(g.value(a) * s, {a}, [a, s](Graph& g, int self) { g.grad_ref(a) += g.grad(Var{&g, self}) * s; });
}

Var add_bias(Var a, Var bias) {
  Graph& g = *a.graph;
  const Mat& A = g.value(a);
  const Mat& b = g.value(bias);
  if (b.cols() != 1 || b.rows() != A.rows()) throw ShapeError("add_bias: " + dims(A) + " + " + dims(b));
  Mat out = A.colwise() + b.col(0);
  return g.emit(std::move(out), {a, bias}, [a, bias](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    if (g.requires_grad(a)) g.grad_ref(a) += go;
    if (g.requires_grad(bias)) g.grad_ref(bias) += go.rowwise().sum();
  });
}

Var sigmoid(Var a) {
  Graph& g = *a.graph;
  Mat out = g.value(a).unaryExpr([](double x) { return logistic(x); });
  return g.emit(std::move(out), {a}, [a](Graph& g, int self) {
    const Mat& y = g.value(Var{&g, self});
    g.grad_ref(a) += g.grad(Var{&g, self}).cwiseProduct(y.cwiseProduct((1.0 - y.array()).matrix()));
  });
}

Var tanh(Var a) {
  Graph& g = *a.graph;
  Mat out = g.value(a).array().tanh().matrix();
  return g.emit(std::move(out), {a}, [a](Graph& g, int self) {
    const Mat& y = g.value(Var{&g, self});
    g.grad_ref(a) += g.grad(Var{&g, self}).cwiseProduct((1.0 - y.array().square()).matrix());
  });
}

Var one_minus(Var a) {
  Graph& g = *a.graph;
  Mat out = (1.0 - g.value(a).array()).matrix();
  return g.emit(std::move(out), {a}, [a](Graph& g, int self) { g.grad_ref(a) -= g.grad(Var{&g, self}); });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  Graph& g = *parts.front().graph;
  Eigen::Index rows = 0;
  const Eigen::Index cols = g.value(parts.front()).cols();
  for (Var p : parts) {
    if (g.value(p).cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += g.value(p).rows();
  }
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (Var p : parts) {
    const Mat& v = g.value(p);
    out.middleRows(off, v.rows()) = v;
    off += v.rows();
  }
  auto backward = [parts](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    Eigen::Index off = 0;
    for (Var p : parts) {
      const Eigen::Index r = g.value(p).rows();
      if (g.requires_grad(p)) g.grad_ref(p) += go.middleRows(off, r);
      off += r;
    }
  };
  return g.emit(std::move(out), parts, backward);
}

Var blend(const Mat& mask_row, Var a, Var b) {
  Graph& g = *a.graph;
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  require_same_shape(A, B, "blend");
  if (mask_row.rows() != 1 || mask_row.cols() != A.cols()) throw ShapeError("blend: mask " + dims(mask_row));
  Mat out(A.rows(), A.cols());
  for (Eigen::Index c = 0; c < A.cols(); ++c) out.col(c) = mask_row(0, c) != 0.0 ? A.col(c) : B.col(c);
  return g.emit(std::move(out), {a, b}, [a, b, mask_row](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    for (Eigen::Index c = 0; c < go.cols(); ++c) {
      Var dst = mask_row(0, c) != 0.0 ? a : b;
      if (g.requires_grad(dst)) g.grad_ref(dst).col(c) += go.col(c);
    }
  });
}

Var stack_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  for (Var r : rows)
    if (r.graph->value(r).rows() != 1) throw ShapeError("stack_rows: inputs must be single rows");
  return concat_rows(rows);
}

Var masked_softmax_cols(Var scores, const Mat& mask) {
  Graph& g = *scores.graph;
  const Mat& S = g.value(scores);
  require_same_shape(S, mask, "masked_softmax_cols");
  Mat out = Mat::Zero(S.rows(), S.cols());
  for (Eigen::Index c = 0; c < S.cols(); ++c) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < S.rows(); ++r)
      if (mask(r, c) != 0.0) mx = std::max(mx, S(r, c));
    if (!std::isfinite(mx)) throw InvalidInput("softmax over a fully masked column");
    double z = 0.0;
    for (Eigen::Index r = 0; r < S.rows(); ++r)
      if (mask(r, c) != 0.0) z += (out(r, c) = std::exp(S(r, c) - mx));
    out.col(c) /= z;
  }
  return g.emit(std::move(out), {scores}, [scores](Graph& g, int self) {
    const Mat& y = g.value(Var{&g, self});
    const Mat& go = g.grad(Var{&g, self});
    Mat& gs = g.grad_ref(scores);
    for (Eigen::Index c = 0; c < y.cols(); ++c) {
      const double dot = y.col(c).dot(go.col(c));
      gs.col(c) += y.col(c).cwiseProduct((go.col(c).array() - dot).matrix());
    }
  });
}

Var weighted_sum(const std::vector<Var>& states, Var weights) {
  Graph& g = *weights.graph;
  const Mat& W = g.value(weights);
  if (static_cast<Eigen::Index>(states.size()) != W.rows()) throw ShapeError("weighted_sum: state count mismatch");
  const Mat& first = g.value(states.front());
  if (W.cols() != first.cols()) throw ShapeError("weighted_sum: batch mismatch");
  Mat out = Mat::Zero(first.rows(), first.cols());
  for (std::size_t t = 0; t < states.size(); ++t) {
    const Mat& h = g.value(states[t]);
    require_same_shape(h, first, "weighted_sum");
    out += h * W.row(static_cast<Eigen::Index>(t)).asDiagonal();
  }
  auto backward = [states, weights](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    const Mat& W = g.value(weights);
    const bool gw = g.requires_grad(weights);
    for (std::size_t t = 0; t < states.size(); ++t) {
      const auto row = static_cast<Eigen::Index>(t);
      if (g.requires_grad(states[t])) g.grad_ref(states[t]) += go * W.row(row).asDiagonal();
      if (gw) g.grad_ref(weights).row(row) += go.cwiseProduct(g.value(states[t])).colwise().sum();
    }
  };
  std::vector<Var> inputs = states;
  inputs.push_back(weights);
  return g.emit(std::move(out), inputs, backward);
}

Var lookup(Var table, const std::vector<int>& ids) {
  Graph& g = *table.graph;
  const Mat& E = g.value(table);
  Mat out(E.cols(), static_cast<Eigen::Index>(ids.size()));
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (ids[b] < 0 || ids[b] >= E.rows()) throw ShapeError("lookup: token id out of range");
    out.col(static_cast<Eigen::Index>(b)) = E.row(ids[b]).transpose();
  }
  return g.emit(std::move(out), {table}, [table, ids](Graph& g, int self) {
    const Mat& go = g.grad(Var{&g, self});
    Mat& gt = g.grad_ref(table);
    for (std::size_t b = 0; b < ids.size(); ++b) gt.row(ids[b]) += go.col(static_cast<Eigen::Index>(b)).transpose();
  });
}

Var softmax_xent(Var logits, const std::vector<int>& targets, const Eigen::RowVectorXd& col_weight) {
  Graph& g = *logits.graph;
  const Mat& Z = g.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != Z.cols() || col_weight.size() != Z.cols())
    throw ShapeError("softmax_xent: target/weight count does not match batch");
  Mat probs(Z.rows(), Z.cols());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < Z.cols(); ++c) {
    const double mx = Z.col(c).maxCoeff();
    probs.col(c) = (Z.col(c).array() - mx).exp().matrix();
    const double z = probs.col(c).sum();
    probs.col(c) /= z;
    if (col_weight(c) != 0.0) {
      const int t = targets[static_cast<std::size_t>(c)];
      if (t < 0 || t >= Z.rows()) throw ShapeError("softmax_xent: target id out of range");
      loss += col_weight(c) * -(Z(t, c) - mx - std::log(z));
    }
  }
  Mat out(1, 1);
  out(0, 0) = loss;
  return g.emit(std::move(out), {logits}, [logits, targets, col_weight, probs](Graph& g, int self) {
    const double go = g.grad(Var{&g, self})(0, 0);
    Mat& gz = g.grad_ref(logits);
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      if (col_weight(c) == 0.0) continue;
      const double w = go * col_weight(c);
      gz.col(c) += w * probs.col(c);
      gz(targets[static_cast<std::size_t>(c)], c) -= w;
    }
  });
}

Var sigmoid_xent(Var logits, const Mat& labels, EmotionXent mode, const Eigen::RowVectorXd& col_weight) {
  Graph& g = *logits.graph;
  const Mat& Z = g.value(logits);
  require_same_shape(Z, labels, "sigmoid_xent");
  if (col_weight.size() != Z.cols()) throw ShapeError("sigmoid_xent: weight count does not match batch");
  const bool binary = mode == EmotionXent::Binary;
  double loss = 0.0;
  for (Eigen::Index c = 0; c < Z.cols(); ++c)
    for (Eigen::Index k = 0; k < Z.rows(); ++k) {
      const double e = labels(k, c);
      double term = e * softplus(-Z(k, c));  // -e log s(z)
      if (binary) term += (1.0 - e) * softplus(Z(k, c));  // -(1-e) log(1 - s(z))
      loss += col_weight(c) * term;
    }
  Mat out(1, 1);
  out(0, 0) = loss;
  return g.emit(std::move(out), {logits}, [logits, labels, binary, col_weight](Graph& g, int self) {
    const double go = g.grad(Var{&g, self})(0, 0);
    const Mat& Z = g.value(logits);
    Mat& gz = g.grad_ref(logits);
    for (Eigen::Index c = 0; c < Z.cols(); ++c)
      for (Eigen::Index k = 0; k < Z.rows(); ++k) {
        const double s = logistic(Z(k, c));
        const double e = labels(k, c);
        // d/dz [e softplus(-z)] = -e (1 - s);  d/dz [(1-e) softplus(z)] = (1-e) s
        double d = -e * (1.0 - s);
        if (binary) d += (1.0 - e) * s;
        gz(k, c) += go * col_weight(c) * d;
      }
  });
}

Var bernoulli_kl(Var a, Var b, const Eigen::RowVectorXd& col_weight, bool stop_grad_b) {
  Graph& g = *a.graph;
  const Mat& A = g.value(a);
  const Mat& B = g.value(b);
  require_same_shape(A, B, "bernoulli_kl");
  if (col_weight.size() != A.cols()) throw ShapeError("bernoulli_kl: weight count does not match batch");
  double loss = 0.0;
  for (Eigen::Index c = 0; c < A.cols(); ++c)
    for (Eigen::Index j = 0; j < A.rows(); ++j) {
      const double x = A(j, c), y = B(j, c);
      const double p = logistic(x);
      // log p = -softplus(-x), log(1-p) = -softplus(x)
      const double kl = p * (softplus(-y) - softplus(-x)) + (1.0 - p) * (softplus(y) - softplus(x));
      loss += col_weight(c) * kl;
    }
  Mat out(1, 1);
  out(0, 0) = loss;
  return g.emit(std::move(out), {a, b}, [a, b, col_weight, stop_grad_b](Graph& g, int self) {
    const double go = g.grad(Var{&g, self})(0, 0);
    const Mat& A = g.value(a);
    const Mat& B = g.value(b);
    const bool ga = g.requires_grad(a);
    const bool gb = g.requires_grad(b) && !stop_grad_b;
    for (Eigen::Index c = 0; c < A.cols(); ++c)
      for (Eigen::Index j = 0; j < A.rows(); ++j) {
        const double p = logistic(A(j, c)), q = logistic(B(j, c));
        const double w = go * col_weight(c);
        // dKL/dx = p(1-p)(x - y);  dKL/dy = q - p
        if (ga) g.grad_ref(a)(j, c) += w * p * (1.0 - p) * (A(j, c) - B(j, c));
        if (gb) g.grad_ref(b)(j, c) += w * (q - p);
      }
  });
}

Var sum_all(Var a) {
  Graph& g = *a.graph;
  Mat out(1, 1);
  out(0, 0) = g.value(a).sum();
  return g.emit(std::move(out), {a}, [a](Graph& g, int self) {
    g.grad_ref(a).array() += g.grad(Var{&g, self})(0, 0);
  });
}

}  // namespace tgeacm::ad
