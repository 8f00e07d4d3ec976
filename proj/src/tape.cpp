#include "tagger/tape.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <utility>

namespace tagger::ad {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapConst = Eigen::Map<const EMat>;
using MapMut = Eigen::Map<EMat>;

// Right-aligned broadcast plan: per output dimension, the element stride into
// each operand (0 where the operand's dimension is 1 or absent).
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> stride_a;
  std::vector<std::size_t> stride_b;
  bool same_shape = false;
};

std::vector<std::size_t> aligned_strides(const Shape& s, const Shape& out) {
  std::size_t offset = out.size() - s.size();
  std::vector<std::size_t> full(s.size());
  std::size_t acc = 1;
  for (std::size_t d = s.size(); d-- > 0;) {
    full[d] = acc;
    acc *= s[d];
  }
  std::vector<std::size_t> strides(out.size(), 0);
  for (std::size_t d = 0; d < out.size(); ++d) {
    if (d < offset) continue;
    std::size_t sd = s[d - offset];
    strides[d] = (sd == 1) ? 0 : full[d - offset];
  }
  return strides;
}

BroadcastPlan make_plan(const Shape& a, const Shape& b) {
  BroadcastPlan p;
  if (a == b) {
    p.out = a;
    p.same_shape = true;
    return p;
  }
  std::size_t nd = std::max(a.size(), b.size());
  p.out.resize(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    std::size_t da = (d + a.size() >= nd) ? a[d + a.size() - nd] : 1;
    std::size_t db = (d + b.size() >= nd) ? b[d + b.size() - nd] : 1;
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    p.out[d] = std::max(da, db);
  }
  p.stride_a = aligned_strides(a, p.out);
  p.stride_b = aligned_strides(b, p.out);
  return p;
}

// Visits every output element with matching operand offsets. The innermost
// dimension runs as a tight loop; the odometer only advances the outer dims.
template <class Fn>
void broadcast_for_each(const BroadcastPlan& p, Fn&& fn) {
  std::size_t n = shape_size(p.out);
  std::size_t nd = p.out.size();
  if (nd == 0) {
    fn(std::size_t(0), std::size_t(0), std::size_t(0));
    return;
  }
  std::size_t last = p.out[nd - 1];
  std::size_t sa_last = p.stride_a[nd - 1];
  std::size_t sb_last = p.stride_b[nd - 1];
  std::vector<std::size_t> idx(nd, 0);
  std::size_t ai = 0, bi = 0;
  for (std::size_t oi = 0; oi < n; oi += last) {
    if (sa_last == 1 && sb_last == 1) {
      for (std::size_t i = 0; i < last; ++i) fn(oi + i, ai + i, bi + i);
    } else if (sa_last == 1 && sb_last == 0) {
      for (std::size_t i = 0; i < last; ++i) fn(oi + i, ai + i, bi);
    } else if (sa_last == 0 && sb_last == 1) {
      for (std::size_t i = 0; i < last; ++i) fn(oi + i, ai, bi + i);
    } else {
      for (std::size_t i = 0; i < last; ++i) fn(oi + i, ai, bi);
    }
    for (std::size_t d = nd - 1; d-- > 0;) {
      ++idx[d];
      ai += p.stride_a[d];
      bi += p.stride_b[d];
      if (idx[d] < p.out[d]) break;
      ai -= p.stride_a[d] * p.out[d];
      bi -= p.stride_b[d] * p.out[d];
      idx[d] = 0;
    }
  }
}

struct AxisSplit {
  std::size_t outer;
  std::size_t n;
  std::size_t inner;
};

AxisSplit axis_split(const Shape& dims, int axis) {
  AxisSplit s{1, dims[std::size_t(axis)], 1};
  for (std::size_t d = std::size_t(axis) + 1; d < dims.size(); ++d) s.inner *= dims[d];
  for (std::size_t d = 0; d < std::size_t(axis); ++d) s.outer *= dims[d];
  return s;
}

}  // namespace

int normalize_axis(int axis, std::size_t ndim) {
  int a = axis;
  if (a < 0) a += int(ndim);
  if (a < 0 || std::size_t(a) >= ndim) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(ndim));
  }
  return a;
}

Tape::Tape() { nodes_.reserve(256); }

void Tape::check(Var v) const {
  if (!v.valid() || std::size_t(v.id) >= nodes_.size()) {
    throw ContractError("invalid Var handle");
  }
}

const Tape::Node& Tape::node(Var v) const {
  check(v);
  return nodes_[std::size_t(v.id)];
}

const Tensor& Tape::value(Var v) const { return node(v).value; }

Tensor Tape::grad(Var v) const {
  const Node& n = node(v);
  if (n.grad.empty()) return Tensor(n.value.dims(), 0.0);
  return n.grad;
}

Var Tape::push(Tensor value, bool requires_grad,
               std::function<void(Tape&, const Node&)> backprop) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{int(nodes_.size()) - 1};
}

Tensor& Tape::grad_buffer(int id) {
  Node& n = nodes_[std::size_t(id)];
  if (n.grad.empty()) n.grad = Tensor(n.value.dims(), 0.0);
  return n.grad;
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  return push(std::move(value), requires_grad, nullptr);
}

void Tape::backward(Var loss) {
  check(loss);
  if (backward_done_) throw ContractError("backward() already ran on this tape");
  backward_done_ = true;
  if (value(loss).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        shape_str(value(loss).dims()));
  }
  grad_buffer(loss.id)[0] = 1.0;
  for (std::size_t i = std::size_t(loss.id) + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, n);
  }
}

// ---------------------------------------------------------------------------
// Unary ops.

template <class FwdFn, class BackFn>
Var Tape::unary_op(Var a, FwdFn fwd, BackFn back) {
  const Tensor& av = value(a);
  Tensor out(av.dims());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  bool req = needs_grad(a);
  int aid = a.id;
  std::function<void(Tape&, const Node&)> bp;
  if (req) {
    bp = [aid, back](Tape& t, const Node& n) {
      const Tensor& av2 = t.nodes_[std::size_t(aid)].value;
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < av2.size(); ++i) ga[i] += n.grad[i] * back(av2[i], n.value[i]);
    };
  }
  return push(std::move(out), req, std::move(bp));
}

Var Tape::neg(Var a) {
  return unary_op(
      a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var Tape::exp(Var a) {
  return unary_op(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var Tape::log(Var a) {
  const Tensor& av = value(a);
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw DomainError("log of non-positive value " + std::to_string(av[i]));
    }
  }
  return unary_op(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var Tape::sqrt(Var a) {
  const Tensor& av = value(a);
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (av[i] < 0.0) throw DomainError("sqrt of negative value " + std::to_string(av[i]));
  }
  return unary_op(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Var Tape::square(Var a) {
  return unary_op(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var Tape::sigmoid(Var a) {
  return unary_op(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var Tape::relu(Var a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var Tape::softplus(Var a) {
  return unary_op(
      a,
      [](double x) { return std::log1p(std::exp(-std::abs(x))) + (x > 0.0 ? x : 0.0); },
      [](double x, double) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
      });
}

Var Tape::scale(Var a, double c) {
  return unary_op(
      a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var Tape::add_const(Var a, double c) {
  return unary_op(
      a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var Tape::clamp_away_from_zero(Var a, double floor) {
  return unary_op(
      a,
      [floor](double x) {
        if (std::abs(x) >= floor) return x;
        return x >= 0.0 ? floor : -floor;
      },
      [floor](double x, double) { return std::abs(x) >= floor ? 1.0 : 0.0; });
}

// ---------------------------------------------------------------------------
// Binary ops with broadcasting.

template <class FwdFn, class BackAFn, class BackBFn>
Var Tape::binary_op(Var a, Var b, FwdFn fwd, BackAFn back_a, BackBFn back_b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  BroadcastPlan plan = make_plan(av.dims(), bv.dims());
  Tensor out(plan.out);
  if (plan.same_shape) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    broadcast_for_each(plan,
                       [&](std::size_t oi, std::size_t ai, std::size_t bi) {
                         out[oi] = fwd(av[ai], bv[bi]);
                       });
  }
  bool ra = needs_grad(a), rb = needs_grad(b);
  bool req = ra || rb;
  int aid = a.id, bid = b.id;
  std::function<void(Tape&, const Node&)> bp;
  if (req) {
    bp = [aid, bid, ra, rb, plan, back_a, back_b](Tape& t, const Node& n) {
      const Tensor& av2 = t.nodes_[std::size_t(aid)].value;
      const Tensor& bv2 = t.nodes_[std::size_t(bid)].value;
      Tensor* ga = ra ? &t.grad_buffer(aid) : nullptr;
      Tensor* gb = rb ? &t.grad_buffer(bid) : nullptr;
      if (plan.same_shape) {
        if (ga && gb) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double g = n.grad[i];
            (*ga)[i] += g * back_a(av2[i], bv2[i]);
            (*gb)[i] += g * back_b(av2[i], bv2[i]);
          }
        } else if (ga) {
          for (std::size_t i = 0; i < n.grad.size(); ++i) {
            (*ga)[i] += n.grad[i] * back_a(av2[i], bv2[i]);
          }
        } else {
          for (std::size_t i = 0; i < n.grad.size(); ++i) {
            (*gb)[i] += n.grad[i] * back_b(av2[i], bv2[i]);
          }
        }
      } else if (ga && gb) {
        broadcast_for_each(plan, [&](std::size_t oi, std::size_t ai, std::size_t bi) {
          double g = n.grad[oi];
          (*ga)[ai] += g * back_a(av2[ai], bv2[bi]);
          (*gb)[bi] += g * back_b(av2[ai], bv2[bi]);
        });
      } else if (ga) {
        broadcast_for_each(plan, [&](std::size_t oi, std::size_t ai, std::size_t bi) {
          (*ga)[ai] += n.grad[oi] * back_a(av2[ai], bv2[bi]);
        });
      } else {
        broadcast_for_each(plan, [&](std::size_t oi, std::size_t ai, std::size_t bi) {
          (*gb)[bi] += n.grad[oi] * back_b(av2[ai], bv2[bi]);
        });
      }
    };
  }
  return push(std::move(out), req, std::move(bp));
}

Var Tape::add(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var Tape::sub(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var Tape::mul(Var a, Var b) {
  return binary_op(
      a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var Tape::div(Var a, Var b) {
  const Tensor& bv = value(b);
  for (std::size_t i = 0; i < bv.size(); ++i) {
    if (bv[i] == 0.0) throw DomainError("division by zero");
  }
  return binary_op(
      a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

// ---------------------------------------------------------------------------
// Matrix product.

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = value(a);
  const Tensor& bv = value(b);
  if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0)) {
    throw ShapeError("matmul shapes " + shape_str(av.dims()) + " x " + shape_str(bv.dims()));
  }
  std::size_t r = av.dim(0), m = av.dim(1), c = bv.dim(1);
  Tensor out({r, c});
  {
    MapConst ma(av.data(), Eigen::Index(r), Eigen::Index(m));
    MapConst mb(bv.data(), Eigen::Index(m), Eigen::Index(c));
    MapMut mo(out.data(), Eigen::Index(r), Eigen::Index(c));
    mo.noalias() = ma * mb;
  }
  bool ra = needs_grad(a), rb = needs_grad(b);
  bool req = ra || rb;
  int aid = a.id, bid = b.id;
  std::function<void(Tape&, const Node&)> bp;
  if (req) {
    bp = [aid, bid, ra, rb, r, m, c](Tape& t, const Node& n) {
      MapConst go(n.grad.data(), Eigen::Index(r), Eigen::Index(c));
      const Tensor& av2 = t.nodes_[std::size_t(aid)].value;
      const Tensor& bv2 = t.nodes_[std::size_t(bid)].value;
      if (ra) {
        MapMut ga(t.grad_buffer(aid).data(), Eigen::Index(r), Eigen::Index(m));
        MapConst mb(bv2.data(), Eigen::Index(m), Eigen::Index(c));
        ga.noalias() += go * mb.transpose();
      }
      if (rb) {
        MapMut gb(t.grad_buffer(bid).data(), Eigen::Index(m), Eigen::Index(c));
        MapConst ma(av2.data(), Eigen::Index(r), Eigen::Index(m));
        gb.noalias() += ma.transpose() * go;
      }
    };
  }
  return push(std::move(out), req, std::move(bp));
}

// ---------------------------------------------------------------------------
// Reductions.

Var Tape::reduce_sum(Var a, int axis, bool keepdims) {
  const Tensor& av = value(a);
  int ax = normalize_axis(axis, av.ndim());
  AxisSplit s = axis_split(av.dims(), ax);
  Shape out_dims = av.dims();
  if (keepdims) {
    out_dims[std::size_t(ax)] = 1;
  } else {
    out_dims.erase(out_dims.begin() + ax);
    if (out_dims.empty()) out_dims = {1};
  }
  Tensor out(out_dims, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t j = 0; j < s.n; ++j) {
      const double* src = av.data() + (o * s.n + j) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  }
  bool req = needs_grad(a);
  int aid = a.id;
  std::function<void(Tape&, const Node&)> bp;
  if (req) {
    bp = [aid, s](Tape& t, const Node& n) {
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t j = 0; j < s.n; ++j) {
          double* dst = ga.data() + (o * s.n + j) * s.inner;
          const double* src = n.grad.data() + o * s.inner;
          for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
      }
    };
  }
  return push(std::move(out), req, std::move(bp));
}

Var Tape::reduce_mean(Var a, int axis, bool keepdims) {
  const Tensor& av = value(a);
  int ax = normalize_axis(axis, av.ndim());
  double inv = 1.0 / double(av.dims()[std::size_t(ax)]);
  return scale(reduce_sum(a, ax, keepdims), inv);
}

Var Tape::sum_all(Var a) {
  const Tensor& av = value(a);
  double acc = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i];
  bool req = needs_grad(a);
  int aid = a.id;
  std::function<void(Tape&, const Node&)> bp;
  if (req) {
    bp = [aid](Tape& t, const Node& n) {
      Tensor& ga = t.grad_buffer(aid);
      double g = n.grad[0];
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
    };
  }
  return push(Tensor::scalar(acc), req, std::move(bp));
}

Var Tape::mean_all(Var a) { return scale(sum_all(a), 1.0 / double(value(a).size())); }

// ---------------------------------------------------------------------------
// Structure.

Var Tape::reshape(Var a, Shape dims) {
  const Tensor& av = value(a);
  if (shape_size(dims) != av.size()) {
    throw ShapeError("reshape " + shape_str(av.dims()) + " -> " + shape_str(dims));
  }
  Tensor out(dims, av.values());
  bool req = needs_grad(a);
  int aid = a.id;
  std::function<void(Tape&, const Node&)> bp;
  if (req) {
    bp = [aid](Tape& t, const Node& n) {
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += n.grad[i];
    };
  }
  return push(std::move(out), req, std::move(bp));
}

Var Tape::slice_last(Var a, std::size_t from, std::size_t to) {
  const Tensor& av = value(a);
  if (av.ndim() == 0) throw ShapeError("slice_last on scalar");
  std::size_t last = av.dims().back();
  if (from >= to || to > last) {
    throw ShapeError("slice_last [" + std::to_string(from) + "," + std::to_string(to) +
                     ") on last dim " + std::to_string(last));
  }
  Shape out_dims = av.dims();
  out_dims.back() = to - from;
  std::size_t rows = av.size() / last;
  std::size_t width = to - from;
  Tensor out(out_dims);
  for (std::size_t rrow = 0; rrow < rows; ++rrow) {
    const double* src = av.data() + rrow * last + from;
    double* dst = out.data() + rrow * width;
    for (std::size_t i = 0; i < width; ++i) dst[i] = src[i];
  }
  bool req = needs_grad(a);
  int aid = a.id;
  std::function<void(Tape&, const Node&)> bp;
  if (req) {
    bp = [aid, rows, last, from, width](Tape& t, const Node& n) {
      Tensor& ga = t.grad_buffer(aid);
      for (std::size_t rrow = 0; rrow < rows; ++rrow) {
        double* dst = ga.data() + rrow * last + from;
        const double* src = n.grad.data() + rrow * width;
        for (std::size_t i = 0; i < width; ++i) dst[i] += src[i];
      }
    };
  }
  return push(std::move(out), req, std::move(bp));
}

Var Tape::concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_last of zero tensors");
  Shape lead = value(parts[0]).dims();
  lead.pop_back();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  bool req = false;
  for (Var p : parts) {
    const Tensor& pv = value(p);
    Shape plead = pv.dims();
    if (plead.empty()) throw ShapeError("concat_last on scalar");
    std::size_t w = plead.back();
    plead.pop_back();
    if (plead != lead) {
      throw ShapeError("concat_last leading dims mismatch: " + shape_str(value(parts[0]).dims()) +
                       " vs " + shape_str(pv.dims()));
    }
    widths.push_back(w);
    total += w;
    req = req || needs_grad(p);
  }
  Shape out_dims = lead;
  out_dims.push_back(total);
  Tensor out(out_dims);
  std::size_t rows = out.size() / total;
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const Tensor& pv = value(parts[p]);
    for (std::size_t rrow = 0; rrow < rows; ++rrow) {
      const double* src = pv.data() + rrow * widths[p];
      double* dst = out.data() + rrow * total + offset;
      for (std::size_t i = 0; i < widths[p]; ++i) dst[i] = src[i];
    }
    offset += widths[p];
  }
  std::vector<int> ids;
  std::vector<bool> reqs;
  for (Var p : parts) {
    ids.push_back(p.id);
    reqs.push_back(needs_grad(p));
  }
  std::function<void(Tape&, const Node&)> bp;
  if (req) {
    bp = [ids, reqs, widths, rows, total](Tape& t, const Node& n) {
      std::size_t off = 0;
      for (std::size_t p = 0; p < ids.size(); ++p) {
        if (reqs[p]) {
          Tensor& ga = t.grad_buffer(ids[p]);
          for (std::size_t rrow = 0; rrow < rows; ++rrow) {
            double* dst = ga.data() + rrow * widths[p];
            const double* src = n.grad.data() + rrow * total + off;
            for (std::size_t i = 0; i < widths[p]; ++i) dst[i] += src[i];
          }
        }
        off += widths[p];
      }
    };
  }
  return push(std::move(out), req, std::move(bp));
}

// ---------------------------------------------------------------------------
// Composites.

Var softmax_axis(Tape& t, Var x, int axis) {
  // Max-subtraction keeps the exponentials bounded; the shift is treated as a
  // constant, which leaves both the value and the gradient exact.
  Tensor mx = value_reduce_max(t.value(x), axis);
  Var e = t.exp(t.sub(x, t.leaf(std::move(mx))));
  Var s = t.reduce_sum(e, axis, true);
  return t.div(e, s);
}

Var logsumexp(Tape& t, Var x, int axis, bool keepdims) {
  Tensor mx = value_reduce_max(t.value(x), axis);
  Var shift = t.leaf(mx);
  Var e = t.exp(t.sub(x, shift));
  Var s = t.reduce_sum(e, axis, true);
  Var out = t.add(t.log(s), shift);
  if (!keepdims) {
    Shape dims = t.value(out).dims();
    int ax = normalize_axis(axis, dims.size());
    dims.erase(dims.begin() + ax);
    if (dims.empty()) dims = {1};
    out = t.reshape(out, dims);
  }
  return out;
}

Var log_softmax_axis(Tape& t, Var x, int axis) { return t.sub(x, logsumexp(t, x, axis, true)); }

Var gauss_log_pdf(Tape& t, Var x, Var mean, Var var) {
  const Tensor& vv = t.value(var);
  for (std::size_t i = 0; i < vv.size(); ++i) {
    if (!(vv[i] > 0.0)) throw DomainError("gauss_pdf: non-positive variance");
  }
  Var d2 = t.square(t.sub(x, mean));
  Var log_norm = t.scale(t.log(t.scale(var, 2.0 * M_PI)), 0.5);
  return t.sub(t.neg(t.div(d2, t.scale(var, 2.0))), log_norm);
}

Var gauss_pdf(Tape& t, Var x, Var mean, Var var) {
  return t.exp(gauss_log_pdf(t, x, mean, var));
}

Var affine(Tape& t, Var x, Var w, Var b) { return t.add(t.matmul(x, w), b); }

}  // namespace tagger::ad
