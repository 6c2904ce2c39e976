#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "jitterlab/rng.hpp"
#include "jitterlab/tensor.hpp"

namespace jitterlab {

// Reverse-mode tape over rank-1/2 tensors. Nodes are identified by index;
// construction order is the topological order used by backward(). A graph
// built with grad_enabled=false records no closures and allocates no
// gradients, which is what decoding and teacher forwards use.
class Graph {
 public:
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  int leaf(Tensor t, bool requires_grad = false);
  // Leaf whose value lives in external storage (model parameters); the
  // pointee must outlive the graph.
  int leaf_ref(const Tensor* t, bool requires_grad = true);

  const Tensor& val(int id) const { return nodes_[id].ext ? *nodes_[id].ext : nodes_[id].val; }
  Tensor& grad(int id);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  bool grad_enabled() const { return grad_enabled_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  int add(int a, int b);
  int add_bias(int a, int bias);  // [n,d] + [d]
  int mul(int a, int b);
  int scale(int a, double c);
  int matmul(int a, int b);     // [n,k] x [k,m]
  int matmul_nt(int a, int b);  // [n,k] x [m,k]^T
  int relu(int a);
  int embedding(int table, std::vector<int> ids);  // [V,d] gather -> [n,d]
  int layer_norm(int a, int gain, int bias);       // row-wise, eps 1e-5
  int softmax_rows(int a);
  int slice_rows(int a, int r0, int r1);
  int slice_cols(int a, int c0, int c1);
  int concat_rows(const std::vector<int>& parts);
  int concat_cols(const std::vector<int>& parts);
  int pad_cols(int a, int new_cols, real fill);
  // Inverted dropout; identity when rate <= 0. Mask draws consume `rng` at
  // call time, so node creation order fixes the random stream.
  int dropout(int a, double rate, Rng& rng);

  // Mean negative log-likelihood of `targets` under row-wise softmax(logits).
  int nll_rows(int logits, std::vector<int> targets);
  // Mean cross-entropy between softmax(teacher/T) and softmax(student/T),
  // scaled by T^2; the teacher side is a constant.
  int soft_ce_rows(int student_logits, Tensor teacher_logits, double temperature);

  // Seeds d(loss)/d(loss)=1 and walks the tape in reverse. NonScalarLoss if
  // the node is not a single element.
  void backward(int loss);

 private:
  struct Node {
    Tensor val;
    const Tensor* ext = nullptr;
    Tensor grad;
    bool grad_alloc = false;
    bool requires_grad = false;
    std::function<void()> back;
  };

  std::deque<Node> nodes_;
  bool grad_enabled_;

  int push(Tensor val, bool rg, std::function<void()> back);
  void accumulate(int id, const Tensor& delta);
};

}  // namespace jitterlab
