#include "tagger/nn.hpp"

#include <cmath>

namespace tagger::ad {

NormMode parse_norm_mode(const std::string& s) {
  if (s == "batch") return NormMode::kBatch;
  if (s == "layer") return NormMode::kLayer;
  throw ConfigError("unknown normalization mode '" + s + "' (expected batch|layer)");
}

std::string norm_mode_name(NormMode m) { return m == NormMode::kBatch ? "batch" : "layer"; }

Var normalize_layer(Tape& t, Var x, NormMode mode, RunningStats* stats, bool training) {
  const Tensor& xv = t.value(x);
  if (xv.ndim() != 2) {
    throw ShapeError("normalize_layer expects [rows, width], got " + shape_str(xv.dims()));
  }
  std::size_t rows = xv.dim(0), width = xv.dim(1);

  if (mode == NormMode::kLayer) {
    Var mu = t.reduce_mean(x, 1, true);
    Var centered = t.sub(x, mu);
    Var var = t.reduce_mean(t.square(centered), 1, true);
    return t.div(centered, t.sqrt(t.add_const(var, kNormEps)));
  }

  if (training) {
    if (rows < 2) {
      throw ContractError("batch normalization needs batch size >= 2 during training");
    }
    Var mu = t.reduce_mean(x, 0, true);
    Var centered = t.sub(x, mu);
    Var var = t.reduce_mean(t.square(centered), 0, true);
    if (stats != nullptr) {
      if (stats->mean.size() != width) {
        throw ShapeError("running stats width " + std::to_string(stats->mean.size()) +
                         " does not match activation width " + std::to_string(width));
      }
      const Tensor& mv = t.value(mu);
      const Tensor& vv = t.value(var);
      for (std::size_t i = 0; i < width; ++i) {
        stats->mean[i] = kNormMomentum * stats->mean[i] + (1.0 - kNormMomentum) * mv[i];
        stats->var[i] = kNormMomentum * stats->var[i] + (1.0 - kNormMomentum) * vv[i];
      }
    }
    return t.div(centered, t.sqrt(t.add_const(var, kNormEps)));
  }

  if (stats == nullptr) {
    throw ContractError("batch normalization at evaluation needs running stats");
  }
  Tensor denom({1, width});
  for (std::size_t i = 0; i < width; ++i) {
    denom[i] = std::sqrt(std::max(stats->var[i], 0.0) + kNormEps);
  }
  Tensor mean({1, width});
  for (std::size_t i = 0; i < width; ++i) mean[i] = stats->mean[i];
  return t.div(t.sub(x, t.leaf(std::move(mean))), t.leaf(std::move(denom)));
}

Tensor& ParamBank::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  index_[name] = items_.size();
  items_.emplace_back(name, std::move(t));
  return items_.back().second;
}

Tensor& ParamBank::at(const std::string& name) {
  Tensor* t = find(name);
  if (!t) throw ContractError("unknown parameter: " + name);
  return *t;
}

const Tensor& ParamBank::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) throw ContractError("unknown parameter: " + name);
  return *t;
}

Tensor* ParamBank::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second].second;
}

const Tensor* ParamBank::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &items_[it->second].second;
}

void ParamBank::clear() {
  items_.clear();
  index_.clear();
}

Var BoundParams::operator[](const std::string& name) const {
  auto it = vars.find(name);
  if (it == vars.end()) throw ContractError("parameter not bound: " + name);
  return it->second;
}

BoundParams bind_params(Tape& t, const ParamBank& bank) {
  BoundParams bound;
  bound.tape = &t;
  for (const auto& [name, tensor] : bank.items()) {
    bound.vars[name] = t.leaf(tensor, /*requires_grad=*/true);
  }
  return bound;
}

std::vector<std::pair<std::string, Tensor>> collect_grads(const Tape& t, const ParamBank& bank,
                                                          const BoundParams& bound) {
  std::vector<std::pair<std::string, Tensor>> grads;
  grads.reserve(bank.size());
  for (const auto& [name, tensor] : bank.items()) {
    grads.emplace_back(name, t.grad(bound[name]));
  }
  return grads;
}

Tensor gaussian_tensor(Rng& rng, Shape dims, double stddev) {
  Tensor t(std::move(dims));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = stddev * rng.gaussian();
  return t;
}

}  // namespace tagger::ad
