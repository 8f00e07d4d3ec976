#ifndef TAGGER_TENSOR_HPP_
#define TAGGER_TENSOR_HPP_

#include <cstddef>
#include <string>
#include <vector>

#include "tagger/util.hpp"

namespace tagger::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& dims);
std::string shape_str(const Shape& dims);

// Dense n-dimensional double array, row-major. Plain storage; all math on
// tensors is recorded through the Tape so gradients stay available.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape dims) : dims_(std::move(dims)), values_(shape_size(dims_), 0.0) {}
  Tensor(Shape dims, double fill) : dims_(std::move(dims)), values_(shape_size(dims_), fill) {}
  Tensor(Shape dims, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, std::vector<double>{v}); }

  const Shape& dims() const { return dims_; }
  std::size_t ndim() const { return dims_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t i) const { return dims_[i]; }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  // Row-major accessors for the common ranks.
  double& at(std::size_t i, std::size_t j) { return values_[i * dims_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return values_[i * dims_[1] + j]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return values_[(i * dims_[1] + j) * dims_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return values_[(i * dims_[1] + j) * dims_[2] + k];
  }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  bool all_finite() const;
  double item() const;  // requires size() == 1

  void fill(double v);

 private:
  Shape dims_;
  std::vector<double> values_;
};

// Detached value-level helpers used for numerically inert bookkeeping
// (softmax max-subtraction, eval-time stats).
Tensor value_reduce_max(const Tensor& t, int axis);  // keepdims
double value_mean(const Tensor& t);

}  // namespace tagger::ad

#endif  // TAGGER_TENSOR_HPP_
