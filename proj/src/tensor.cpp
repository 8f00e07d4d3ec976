#include "tagger/tensor.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace tagger::ad {

std::size_t shape_size(const Shape& dims) {
  std::size_t n = 1;
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("zero-sized dimension in shape " + shape_str(dims));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& dims) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) out << ",";
    out << dims[i];
  }
  out << "]";
  return out.str();
}

Tensor::Tensor(Shape dims, std::vector<double> values)
    : dims_(std::move(dims)), values_(std::move(values)) {
  if (values_.size() != shape_size(dims_)) {
    throw ShapeError("value count " + std::to_string(values_.size()) + " does not match shape " +
                     shape_str(dims_));
  }
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(dims_));
  return values_[0];
}

void Tensor::fill(double v) {
  for (auto& x : values_) x = v;
}

Tensor value_reduce_max(const Tensor& t, int axis) {
  std::size_t nd = t.ndim();
  if (axis < 0) axis += int(nd);
  if (axis < 0 || std::size_t(axis) >= nd) {
    throw ShapeError("reduce_max: invalid axis for shape " + shape_str(t.dims()));
  }
  Shape out_dims = t.dims();
  out_dims[std::size_t(axis)] = 1;
  Tensor out(out_dims, -std::numeric_limits<double>::infinity());
  std::size_t n = t.dims()[std::size_t(axis)];
  std::size_t inner = 1;
  for (std::size_t d = std::size_t(axis) + 1; d < nd; ++d) inner *= t.dims()[d];
  std::size_t outer = t.size() / (n * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < n; ++j) {
      const double* src = t.data() + (o * n + j) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        if (src[i] > dst[i]) dst[i] = src[i];
      }
    }
  }
  return out;
}

double value_mean(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v;
  return s / double(t.size());
}

}  // namespace tagger::ad
