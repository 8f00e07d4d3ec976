#include "tagger/tag.hpp"

#include <cassert>
#include <cmath>

namespace tagger::tag {

using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

DataMode parse_data_mode(const std::string& s) {
  if (s == "continuous") return DataMode::kContinuous;
  if (s == "binary") return DataMode::kBinary;
  throw ConfigError("unknown data mode '" + s + "' (expected continuous|binary)");
}

std::string data_mode_name(DataMode m) {
  return m == DataMode::kContinuous ? "continuous" : "binary";
}

void CorruptionSpec::validate() const {
  if (mode == DataMode::kContinuous) {
    if (!(sigma > 0.0)) throw DomainError("gaussian corruption needs sigma > 0");
  } else {
    if (!(beta > 0.0 && beta < 0.5)) throw DomainError("bitflip corruption needs 0 < beta < 0.5");
  }
}

bool mask_simplex_ok(const Tensor& m, double tol) {
  if (m.ndim() != 3) return false;
  std::size_t b = m.dim(0), k = m.dim(1), n = m.dim(2);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t j = 0; j < n; ++j) {
      double sum = 0.0;
      for (std::size_t g = 0; g < k; ++g) {
        double v = m.at(bi, g, j);
        if (v < 0.0 || !std::isfinite(v)) return false;
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol) return false;
    }
  }
  return true;
}

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec, Rng& rng) {
  spec.validate();
  Tensor out(x.dims());
  if (spec.mode == DataMode::kContinuous) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + spec.sigma * rng.gaussian();
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) {
      double v = x[i];
      if (v != 0.0 && v != 1.0) {
        throw DomainError("bitflip corruption needs binary input, got " + std::to_string(v));
      }
      out[i] = rng.bernoulli(spec.beta) ? 1.0 - v : v;
    }
  }
  return out;
}

GroupState init_state(std::size_t batch, std::size_t groups, std::size_t elements,
                      double data_mean, Rng& rng) {
  if (groups < 1) throw ContractError("init_state needs at least one group");
  GroupState s;
  s.iteration = 0;
  s.z = Tensor({batch, groups, elements}, data_mean);
  Tensor logits({batch, groups, elements});
  for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = rng.gaussian();
  s.m = value_softmax_groups(logits);
  return s;
}

Tensor value_softmax_groups(const Tensor& logits) {
  if (logits.ndim() != 3) {
    throw ShapeError("group softmax expects [B,K,N], got " + ad::shape_str(logits.dims()));
  }
  std::size_t b = logits.dim(0), k = logits.dim(1), n = logits.dim(2);
  Tensor out(logits.dims());
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t j = 0; j < n; ++j) {
      double mx = logits.at(bi, 0, j);
      for (std::size_t g = 1; g < k; ++g) mx = std::max(mx, logits.at(bi, g, j));
      double sum = 0.0;
      for (std::size_t g = 0; g < k; ++g) {
        double e = std::exp(logits.at(bi, g, j) - mx);
        out.at(bi, g, j) = e;
        sum += e;
      }
      for (std::size_t g = 0; g < k; ++g) out.at(bi, g, j) /= sum;
    }
  }
  return out;
}

Tensor mixture_reconstruction(const Tensor& m, const Tensor& z) {
  if (m.ndim() != 3 || !m.same_shape(z)) {
    throw ShapeError("mixture_reconstruction expects matching [B,K,N] tensors");
  }
  std::size_t b = m.dim(0), k = m.dim(1), n = m.dim(2);
  Tensor out({b, n}, 0.0);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t g = 0; g < k; ++g) {
      for (std::size_t j = 0; j < n; ++j) {
        out.at(bi, j) += m.at(bi, g, j) * z.at(bi, g, j);
      }
    }
  }
  return out;
}

Tensor ablate_group(const Tensor& m_logits, std::size_t k) {
  if (m_logits.ndim() != 3) {
    throw ShapeError("ablate_group expects [B,K,N], got " + ad::shape_str(m_logits.dims()));
  }
  if (k >= m_logits.dim(1)) {
    throw ContractError("ablate_group: group index " + std::to_string(k) + " out of range");
  }
  Tensor logits = m_logits;
  std::size_t b = logits.dim(0), groups = logits.dim(1), n = logits.dim(2);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t j = 0; j < n; ++j) logits.at(bi, k, j) = -1e9;
  }
  (void)groups;
  return value_softmax_groups(logits);
}

Var group_likelihood_continuous(Tape& t, Var x_tilde, Var z, Var v, double sigma) {
  const Tensor& vv = t.value(v);
  for (std::size_t i = 0; i < vv.size(); ++i) {
    if (!(vv[i] > 0.0)) throw DomainError("group likelihood needs v > 0");
  }
  if (sigma < 0.0) throw DomainError("group likelihood needs sigma >= 0");
  Var total_var = t.add_const(v, sigma * sigma);
  return ad::gauss_pdf(t, x_tilde, z, total_var);
}

BinaryLikelihood group_likelihood_binary(Tape& t, Var x_tilde, Var z_prob, double beta) {
  BinaryLikelihood out;
  out.xi = t.add_const(t.scale(z_prob, 1.0 - 2.0 * beta), beta);
  // zhat = x~ xi + (1 - x~)(1 - xi) = (2 x~ - 1) xi + (1 - x~)
  const Tensor& xv = t.value(x_tilde);
  Tensor sign(xv.dims());
  Tensor one_minus(xv.dims());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    sign[i] = 2.0 * xv[i] - 1.0;
    one_minus[i] = 1.0 - xv[i];
  }
  out.zhat = t.add(t.mul(t.leaf(std::move(sign)), out.xi), t.leaf(std::move(one_minus)));
  return out;
}

Var delta_z_continuous(Tape& t, Var x_tilde, Var z, Var m, Var zhat) {
  return t.mul(t.mul(t.sub(x_tilde, z), m), zhat);
}

Var delta_z_binary(Tape& t, Var x_tilde, Var m, Var xi) {
  Var weighted = t.reduce_sum(t.mul(xi, m), 1, true);  // [B,1,N]
  const Tensor& xv = t.value(x_tilde);
  Tensor shift(xv.dims());
  for (std::size_t i = 0; i < xv.size(); ++i) shift[i] = xv[i] - 1.0;
  Var denom = t.add(weighted, t.leaf(std::move(shift)));
  return t.div(m, t.clamp_away_from_zero(denom, kDeltaZDenomFloor));
}

Var likelihood_ratio(Tape& t, Var zhat) {
  const Tensor& zv = t.value(zhat);
  if (zv.ndim() != 3) {
    throw ShapeError("likelihood_ratio expects [B,K,N], got " + ad::shape_str(zv.dims()));
  }
  for (std::size_t i = 0; i < zv.size(); ++i) {
    if (zv[i] < 0.0) throw DomainError("likelihood_ratio needs zhat >= 0");
  }
  Var sums = t.reduce_sum(zhat, 1, true);  // [B,1,N]
  const Tensor& sv = t.value(sums);
  bool has_zero = false;
  for (std::size_t i = 0; i < sv.size(); ++i) {
    if (sv[i] == 0.0) {
      has_zero = true;
      break;
    }
  }
  if (!has_zero) return t.div(zhat, sums);
  // All-zero columns fall back to uniform 1/K: bump those columns only.
  std::size_t k = zv.dim(1);
  Tensor bump_num(zv.dims(), 0.0);
  Tensor bump_den(sv.dims(), 0.0);
  for (std::size_t bi = 0; bi < zv.dim(0); ++bi) {
    for (std::size_t j = 0; j < zv.dim(2); ++j) {
      if (sv[bi * zv.dim(2) + j] == 0.0) {
        bump_den[bi * zv.dim(2) + j] = 1.0;
        for (std::size_t g = 0; g < k; ++g) bump_num.at(bi, g, j) = 1.0 / double(k);
      }
    }
  }
  return t.div(t.add(zhat, t.leaf(std::move(bump_num))), t.add(sums, t.leaf(std::move(bump_den))));
}

namespace {

// Per-element per-group log likelihood of x under the group estimate.
Var group_log_likelihood(Tape& t, Var x, Var z, Var v, DataMode mode) {
  if (mode == DataMode::kContinuous) {
    return ad::gauss_log_pdf(t, x, z, v);
  }
  // z is pre-sigmoid: log q(x | g) = -softplus((1 - 2x) z).
  const Tensor& xv = t.value(x);
  Tensor sign(xv.dims());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    double val = xv[i];
    if (val != 0.0 && val != 1.0) {
      throw DomainError("binary mixture cost needs x in {0,1}, got " + std::to_string(val));
    }
    sign[i] = 1.0 - 2.0 * val;
  }
  return t.neg(t.softplus(t.mul(t.leaf(std::move(sign)), z)));
}

}  // namespace

Var mixture_cost_logm(Tape& t, Var x, Var z, Var log_m, Var v, DataMode mode) {
  Var loglik = group_log_likelihood(t, x, z, v, mode);
  Var per_element = ad::logsumexp(t, t.add(log_m, loglik), 1, true);  // [B,1,N]
  return t.neg(t.mean_all(per_element));
}

Var mixture_cost(Tape& t, Var x, Var z, Var m, Var v, DataMode mode) {
  return mixture_cost_logm(t, x, z, t.log(m), v, mode);
}

namespace {

Tensor reshape_row_block(const Tensor& x) {
  if (x.ndim() != 2) throw ShapeError("expected [B,N] input, got " + ad::shape_str(x.dims()));
  return Tensor({x.dim(0), 1, x.dim(1)}, x.values());
}

}  // namespace

Trajectory tagger_forward_from(Tape& t, const Tensor& x, const Tensor& x_tilde,
                               const GroupState& state0, const ForwardConfig& cfg,
                               const ParametricMapping& mapping, Var v) {
  if (cfg.iterations < 1) throw ContractError("tagger_forward needs T >= 1");
  if (cfg.groups < 1) throw ContractError("tagger_forward needs K >= 1");
  const DataMode mode = cfg.corruption.mode;
  const std::size_t batch = x.dim(0), elements = x.dim(1);
  const std::size_t groups = cfg.groups;
  if (state0.z.dims() != Shape{batch, groups, elements}) {
    throw ShapeError("initial state shape " + ad::shape_str(state0.z.dims()) +
                     " does not match input " + ad::shape_str(x.dims()));
  }

  double sigma = cfg.corruption.sigma;
  double beta = cfg.corruption.beta;
  if (!cfg.training && !cfg.eval_noise_in_likelihood) {
    sigma = 0.0;
    beta = 0.0;
  }

  Trajectory traj;
  traj.x_tilde = x_tilde;
  traj.states.push_back(state0);

  Var xt = t.leaf(reshape_row_block(x_tilde));  // [B,1,N]
  Var xc = t.leaf(reshape_row_block(x));        // clean input: reaches the cost only
  Var z = t.leaf(state0.z);
  Var m = t.leaf(state0.m);

  std::vector<Var> cost_terms;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Var delta_z, lm;
    if (mode == DataMode::kContinuous) {
      Var total_var = t.add_const(v, sigma * sigma);
      Var log_zhat = ad::gauss_log_pdf(t, xt, z, total_var);
      Var zhat = t.exp(log_zhat);
      delta_z = delta_z_continuous(t, xt, z, m, zhat);
      // L(m) normalizes zhat over groups; softmax of log zhat is the same
      // quantity and never underflows, with uniform output where all group
      // densities vanish.
      lm = ad::softmax_axis(t, log_zhat, 1);
    } else {
      BinaryLikelihood lik = group_likelihood_binary(t, xt, z, beta);
      delta_z = delta_z_binary(t, xt, m, lik.xi);
      lm = t.div(lik.zhat, t.reduce_sum(lik.zhat, 1, true));
    }

    MappingOutput out = mapping(t, z, m, delta_z, lm);

    Var m_next = ad::softmax_axis(t, out.m_logits, 1);
    Var log_m_next = ad::log_softmax_axis(t, out.m_logits, 1);
    Var cost_i = mixture_cost_logm(t, xc, mode == DataMode::kBinary ? out.z_raw : out.z_state,
                                   log_m_next, v, mode);
    Var recon = t.reduce_sum(t.mul(m_next, out.z_state), 1, false);  // [B,N]

    z = out.z_state;
    m = m_next;

    GroupState s;
    s.z = t.value(z);
    s.m = t.value(m);
    s.iteration = iter + 1;
    assert(mask_simplex_ok(s.m) && "group masks must stay on the simplex");
    traj.states.push_back(std::move(s));
    traj.m_logits.push_back(t.value(out.m_logits));
    traj.recon.push_back(t.value(recon));
    traj.costs.push_back(t.value(cost_i).item());
    cost_terms.push_back(cost_i);

    if (cfg.keep_vars) {
      IterationVars iv;
      iv.z = z;
      iv.z_raw = out.z_raw;
      iv.m = m;
      iv.m_logits = out.m_logits;
      iv.log_m = log_m_next;
      iv.top = out.top;
      iv.cost = cost_i;
      traj.vars.push_back(iv);
    }
  }

  Var total = cost_terms[0];
  for (std::size_t i = 1; i < cost_terms.size(); ++i) total = t.add(total, cost_terms[i]);
  traj.cost_var = t.scale(total, 1.0 / double(cfg.iterations));
  traj.total_cost = t.value(traj.cost_var).item();
  return traj;
}

Trajectory tagger_forward(Tape& t, const Tensor& x, const ForwardConfig& cfg,
                          const ParametricMapping& mapping, Var v, Rng& rng) {
  Tensor x_tilde = cfg.training ? corrupt(x, cfg.corruption, rng) : x;
  GroupState state0 = init_state(x.dim(0), cfg.groups, x.dim(1), cfg.data_mean, rng);
  return tagger_forward_from(t, x, x_tilde, state0, cfg, mapping, v);
}

}  // namespace tagger::tag
