#pragma once

// Minimal reverse-mode automatic differentiation over dense column-batched
// matrices. A value of shape (n x B) holds one n-vector per batch column.
//
// A Graph records operations as they execute. In Record mode every node
// keeps a backward closure; backward() replays them in reverse and deposits
// parameter gradients into a Gradients buffer. Inference mode records
// nothing beyond the values.

#include <functional>
#include <vector>

#include "tgeacm/params.hpp"

namespace tgeacm::ad {

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;
};

enum class Mode { Record, Inference };

class Graph {
 public:
  explicit Graph(Mode mode = Mode::Record) : mode_(mode) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Mode mode() const { return mode_; }

  // Leaf bound to a stored parameter (no copy; the store must outlive the graph).
  Var param(const ParamStore& store, ParamId id);
  Var constant(Mat value);

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Seeds d(loss)/d(loss) = 1 for a 1x1 node and accumulates into grads.
  void backward(Var loss, Gradients& grads);

  std::size_t node_count() const { return nodes_.size(); }

  // Building blocks used by the op implementations.
  Var emit(Mat value, std::initializer_list<Var> inputs, std::function<void(Graph&, int)> backward);
  Var emit(Mat value, const std::vector<Var>& inputs, std::function<void(Graph&, int)> backward);
  Mat& grad_ref(Var v);

 private:
  struct Node {
    Mat own;
    const Mat* ref = nullptr;
    Mat grad;
    bool requires_grad = false;
    std::size_t param_index = static_cast<std::size_t>(-1);
    std::function<void(Graph&, int)> backward;
  };

  Mode mode_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;  // store index -> node id cache
  const ParamStore* store_ = nullptr;
};

// Elementwise / linear algebra.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);
Var scale(Var a, double s);
Var add_bias(Var a, Var bias);  // bias is (n x 1), broadcast across columns
Var sigmoid(Var a);
Var tanh(Var a);
Var one_minus(Var a);
Var concat_rows(const std::vector<Var>& parts);

// out = m .* a + (1 - m) .* b with m a constant (1 x B) row of 0/1.
Var blend(const Mat& mask_row, Var a, Var b);

// Stack T (1 x B) rows into a (T x B) matrix.
Var stack_rows(const std::vector<Var>& rows);

// Column-wise softmax over rows where mask(t, b) != 0; masked entries get
// exactly zero weight. Every column needs at least one unmasked entry.
Var masked_softmax_cols(Var scores, const Mat& mask);

// sum_t weights(t, :) .* states[t]  ->  (n x B)
Var weighted_sum(const std::vector<Var>& states, Var weights);

// Columns of an embedding table (rows = tokens) for the given ids -> (d x B).
Var lookup(Var table, const std::vector<int>& ids);

// Scalar losses (1 x 1). col_weight has one entry per column.
// sum_b w_b * -log softmax(logits(:, b))[target_b]
Var softmax_xent(Var logits, const std::vector<int>& targets, const Eigen::RowVectorXd& col_weight);

enum class EmotionXent { PositiveTerm, Binary };
// sum_b w_b * sum_k [ -e_kb log s(z_kb)  (- (1-e_kb) log(1 - s(z_kb)) in Binary mode) ]
Var sigmoid_xent(Var logits, const Mat& labels, EmotionXent mode, const Eigen::RowVectorXd& col_weight);

// sum_b w_b * sum_j KL(Bern(s(a_jb)) || Bern(s(b_jb))). With stop_grad_b the
// second argument receives no gradient.
Var bernoulli_kl(Var a, Var b, const Eigen::RowVectorXd& col_weight, bool stop_grad_b = false);

Var sum_all(Var a);

}  // namespace tgeacm::ad
