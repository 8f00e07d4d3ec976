#ifndef TAGGER_TAPE_HPP_
#define TAGGER_TAPE_HPP_

#include <functional>
#include <vector>

#include "tagger/tensor.hpp"

namespace tagger::ad {

// Handle into a Tape. Vars are only meaningful for the tape that created them.
struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Define-by-run reverse-mode tape. A fresh graph is recorded per forward pass,
// which makes backpropagation through a variable number of TAG iterations a
// plain reverse sweep. Operations are evaluated eagerly; each records the
// local gradient rule as a closure.
//
// Invariants: operation inputs always precede the operation (construction
// order is topological) and backward() visits each node exactly once.
class Tape {
 public:
  Tape();

  // Leaves. Parameters are leaves with requires_grad = true.
  Var leaf(Tensor value, bool requires_grad = false);
  Var scalar(double v) { return leaf(Tensor::scalar(v)); }

  // Elementwise binary with numpy-style right-aligned broadcasting.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);  // throws DomainError on an exact-zero divisor

  // Elementwise unary.
  Var neg(Var a);
  Var exp(Var a);
  Var log(Var a);  // throws DomainError on non-positive input
  Var sqrt(Var a);
  Var square(Var a);
  Var sigmoid(Var a);
  Var relu(Var a);
  Var softplus(Var a);
  Var scale(Var a, double c);
  Var add_const(Var a, double c);
  // max(|x|, floor) with the sign of x preserved; gradient passes only where
  // the clamp is inactive.
  Var clamp_away_from_zero(Var a, double floor);

  // a[R,M] x b[M,C] -> [R,C]; gradient rules dA = dC*B^T, dB = A^T*dC.
  Var matmul(Var a, Var b);

  // Reductions along one axis (negative axis counts from the back).
  Var reduce_sum(Var a, int axis, bool keepdims = true);
  Var reduce_mean(Var a, int axis, bool keepdims = true);
  Var sum_all(Var a);
  Var mean_all(Var a);

  // Structure.
  Var reshape(Var a, Shape dims);
  Var slice_last(Var a, std::size_t from, std::size_t to);  // half-open
  Var concat_last(const std::vector<Var>& parts);

  const Tensor& value(Var v) const;
  // Accumulated gradient; zeros if the node was never reached from the loss.
  Tensor grad(Var v) const;

  // Reverse sweep from a scalar loss. May be called once per tape.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily during backward
    bool requires_grad = false;
    std::function<void(Tape&, const Node&)> backprop;
  };

  Var push(Tensor value, bool requires_grad, std::function<void(Tape&, const Node&)> backprop);
  Tensor& grad_buffer(int id);
  const Node& node(Var v) const;
  bool needs_grad(Var v) const { return nodes_[std::size_t(v.id)].requires_grad; }
  void check(Var v) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;

  template <class FwdFn, class BackFn>
  Var unary_op(Var a, FwdFn fwd, BackFn back);
  template <class FwdFn, class BackAFn, class BackBFn>
  Var binary_op(Var a, Var b, FwdFn fwd, BackAFn back_a, BackBFn back_b);
};

// Composite graph builders (exact gradients by construction).
Var softmax_axis(Tape& t, Var x, int axis);
Var logsumexp(Tape& t, Var x, int axis, bool keepdims = true);
Var log_softmax_axis(Tape& t, Var x, int axis);
// Elementwise Gaussian density; differentiable wrt x, mean and var. var must
// be positive everywhere.
Var gauss_pdf(Tape& t, Var x, Var mean, Var var);
// Elementwise Gaussian log-density (stable path used by the mixture cost).
Var gauss_log_pdf(Tape& t, Var x, Var mean, Var var);
Var affine(Tape& t, Var x, Var w, Var b);

int normalize_axis(int axis, std::size_t ndim);

}  // namespace tagger::ad

#endif  // TAGGER_TAPE_HPP_
