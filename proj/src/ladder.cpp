#include "tagger/ladder.hpp"

#include <cmath>

namespace tagger {

using ad::BoundParams;
using ad::NormMode;
using ad::ParamBank;
using ad::RunningStats;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

void LadderConfig::validate() const {
  if (input_dim < 1) throw ConfigError("ladder config needs input_dim >= 1");
  if (hidden_width < 1) throw ConfigError("ladder config needs hidden_width >= 1");
  for (std::size_t s : layer_sizes) {
    if (s < 1) throw ConfigError("ladder layer sizes must be >= 1");
  }
}

std::vector<std::size_t> LadderConfig::level_widths() const {
  std::vector<std::size_t> widths{hidden_width};
  widths.insert(widths.end(), layer_sizes.begin(), layer_sizes.end());
  return widths;
}

namespace {

RunningStats fresh_stats(std::size_t width) {
  RunningStats s;
  s.mean = Tensor({1, width}, 0.0);
  s.var = Tensor({1, width}, 1.0);
  return s;
}

const char* kCombParamNames[10] = {"a1", "a2", "a3", "a4", "a5", "a6", "a7", "a8", "a9", "a10"};
// Vanilla combinator init: mu(u) = 0 and gate = sigmoid(u). The linear gate
// term a9 starts at 1 so every decoder level passes top-down gradient from
// the first step; with a9 = 0 the gate would be a constant 0.5 and all
// levels above the bottom would start dead.
const double kCombInit[10] = {0, 1, 0, 0, 0, 0, 1, 0, 1, 0};

}  // namespace

TaggerParams TaggerParams::init(const LadderConfig& config, Rng& rng) {
  config.validate();
  TaggerParams model;
  model.config = config;
  ParamBank& p = model.params;

  const std::size_t n = config.input_dim;
  const std::size_t h = config.hidden_width;
  const std::vector<std::size_t> widths = config.level_widths();
  const std::size_t depth = config.depth();

  p.add("W_h", ad::gaussian_tensor(rng, {4 * n, h}, std::sqrt(2.0 / double(4 * n))));
  p.add("inproj/gamma", Tensor({1, h}, 1.0));
  p.add("inproj/beta", Tensor({1, h}, 0.0));
  model.stats.emplace("inproj", fresh_stats(h));

  for (std::size_t l = 1; l <= depth; ++l) {
    std::string base = "enc" + std::to_string(l);
    p.add(base + "/W",
          ad::gaussian_tensor(rng, {widths[l - 1], widths[l]}, std::sqrt(2.0 / double(widths[l - 1]))));
    p.add(base + "/gamma", Tensor({1, widths[l]}, 1.0));
    p.add(base + "/beta", Tensor({1, widths[l]}, 0.0));
    model.stats.emplace(base, fresh_stats(widths[l]));
  }

  for (std::size_t l = depth; l + 1 > 0; --l) {
    std::string base = "dec" + std::to_string(l);
    if (l < depth) {
      p.add(base + "/V",
            ad::gaussian_tensor(rng, {widths[l + 1], widths[l]}, std::sqrt(2.0 / double(widths[l + 1]))));
    }
    for (int a = 0; a < 10; ++a) {
      p.add(base + "/" + kCombParamNames[a], Tensor({1, widths[l]}, kCombInit[a]));
    }
    model.stats.emplace(base, fresh_stats(widths[l]));
    if (l == 0) break;
  }

  p.add("W_u", ad::gaussian_tensor(rng, {h, 2 * n}, std::sqrt(1.0 / double(h))));
  p.add("b_u", Tensor({1, 2 * n}, 0.0));
  p.add("log_v", Tensor({1}, std::log(kInitialVariance)));
  return model;
}

void TaggerParams::add_class_head(Rng& rng) {
  if (config.class_count < 1) {
    throw ContractError("class head requested but class_count is 0");
  }
  if (has_class_head()) throw ContractError("class head already initialized");
  std::size_t top = config.top_width();
  std::size_t head = config.head_width > 0 ? config.head_width : top;
  std::size_t out = config.class_count + 1;  // + 'no class'
  params.add("head1/W", ad::gaussian_tensor(rng, {top, head}, std::sqrt(2.0 / double(top))));
  params.add("head1/gamma", Tensor({1, head}, 1.0));
  params.add("head1/beta", Tensor({1, head}, 0.0));
  stats.emplace("head1", fresh_stats(head));
  params.add("head2/W", ad::gaussian_tensor(rng, {head, out}, std::sqrt(1.0 / double(head))));
  params.add("head2/b", Tensor({1, out}, 0.0));
}

bool TaggerParams::has_class_head() const { return params.contains("head1/W"); }

RunningStats* TaggerParams::stats_for(const std::string& site) {
  auto it = stats.find(site);
  if (it == stats.end()) throw ContractError("unknown normalization site: " + site);
  return &it->second;
}

std::size_t TaggerParams::parameter_count() const {
  std::size_t count = 0;
  for (const auto& [name, tensor] : params.items()) count += tensor.size();
  return count;
}

namespace {

// normalize -> scale/shift -> relu, the activation block used everywhere.
Var norm_act(Tape& t, TaggerParams& model, const BoundParams& p, Var pre,
             const std::string& site, bool training) {
  Var n = ad::normalize_layer(t, pre, model.config.norm, model.stats_for(site), training);
  return t.relu(t.add(t.mul(n, p[site + "/gamma"]), p[site + "/beta"]));
}

// Elementwise vanilla combinator with the gate wrapped in a sigmoid:
//   mu(u) = a1 sigmoid(a2 u + a3) + a4 u + a5
//   g(u)  = sigmoid(a6 sigmoid(a7 u + a8) + a9 u + a10)
//   out   = (lat - mu) g + mu
Var combinator(Tape& t, const BoundParams& p, const std::string& base, Var lat, Var u) {
  auto a = [&](int i) { return p[base + "/" + kCombParamNames[i - 1]]; };
  Var mu = t.add(t.add(t.mul(a(1), t.sigmoid(t.add(t.mul(a(2), u), a(3)))), t.mul(a(4), u)), a(5));
  Var gate = t.sigmoid(
      t.add(t.add(t.mul(a(6), t.sigmoid(t.add(t.mul(a(7), u), a(8)))), t.mul(a(9), u)), a(10)));
  return t.add(t.mul(t.sub(lat, mu), gate), mu);
}

}  // namespace

Var input_projection(Tape& t, const BoundParams& p, TaggerParams& model, Var z, Var m,
                     Var delta_z, Var lm, bool training) {
  const Tensor& zv = t.value(z);
  if (zv.ndim() != 3) {
    throw ShapeError("input_projection expects [B,K,N], got " + ad::shape_str(zv.dims()));
  }
  std::size_t batch = zv.dim(0), groups = zv.dim(1), n = zv.dim(2);
  if (n != model.config.input_dim) {
    throw ShapeError("input width " + std::to_string(n) + " does not match configured " +
                     std::to_string(model.config.input_dim));
  }
  Var cat = t.concat_last({z, m, delta_z, lm});           // [B,K,4N]
  Var flat = t.reshape(cat, {batch * groups, 4 * n});     // groups fold into the batch
  Var pre = t.matmul(flat, p["W_h"]);
  return norm_act(t, model, p, pre, "inproj", training);
}

LadderOut ladder_forward(Tape& t, const BoundParams& p, TaggerParams& model, Var h,
                         bool training) {
  const std::size_t depth = model.config.depth();

  // Encoder. lateral[l] is the normalized pre-activation at level l; the
  // level-0 lateral is the input itself.
  std::vector<Var> lateral(depth + 1);
  lateral[0] = h;
  Var enc = h;
  for (std::size_t l = 1; l <= depth; ++l) {
    std::string site = "enc" + std::to_string(l);
    Var pre = t.matmul(enc, p[site + "/W"]);
    Var n = ad::normalize_layer(t, pre, model.config.norm, model.stats_for(site), training);
    lateral[l] = n;
    enc = t.relu(t.add(t.mul(n, p[site + "/gamma"]), p[site + "/beta"]));
  }
  Var top = enc;

  // Decoder, top-down.
  Var zhat;
  for (std::size_t l = depth; l + 1 > 0; --l) {
    std::string site = "dec" + std::to_string(l);
    Var u;
    if (l == depth) {
      u = ad::normalize_layer(t, top, model.config.norm, model.stats_for(site), training);
    } else {
      Var pre = t.matmul(zhat, p[site + "/V"]);
      u = ad::normalize_layer(t, pre, model.config.norm, model.stats_for(site), training);
    }
    zhat = combinator(t, p, site, lateral[l], u);
    if (l == 0) break;
  }

  LadderOut out;
  out.u = zhat;
  out.top = top;
  return out;
}

OutputProjection output_projection(Tape& t, const BoundParams& p, Var u, std::size_t batch,
                                   std::size_t groups, tag::DataMode mode) {
  const Tensor& uv = t.value(u);
  if (uv.ndim() != 2 || uv.dim(0) != batch * groups) {
    throw ShapeError("output_projection expects [B*K, H], got " + ad::shape_str(uv.dims()));
  }
  Var out = ad::affine(t, u, p["W_u"], p["b_u"]);  // [R, 2N]
  std::size_t n2 = t.value(out).dim(1);
  std::size_t n = n2 / 2;
  Var grouped = t.reshape(out, {batch, groups, n2});
  OutputProjection proj;
  proj.z_raw = t.slice_last(grouped, 0, n);
  proj.m_logits = t.slice_last(grouped, n, n2);
  proj.z_state = mode == tag::DataMode::kBinary ? t.sigmoid(proj.z_raw) : proj.z_raw;
  return proj;
}

Var class_head(Tape& t, const BoundParams& p, TaggerParams& model, Var top, std::size_t batch,
               std::size_t groups, bool training) {
  if (!model.has_class_head()) {
    throw ContractError("class head is not initialized on this model");
  }
  Var h1 = norm_act(t, model, p, t.matmul(top, p["head1/W"]), "head1", training);
  Var logits = ad::affine(t, h1, p["head2/W"], p["head2/b"]);
  std::size_t out = model.config.class_count + 1;
  Var grouped = t.reshape(logits, {batch, groups, out});
  return ad::softmax_axis(t, grouped, 2);
}

Var combine_class_predictions(Tape& t, Var per_group) {
  const Tensor& pv = t.value(per_group);
  if (pv.ndim() != 3 || pv.dim(2) < 2) {
    throw ShapeError("combine_class_predictions expects [B,K,C+1], got " +
                     ad::shape_str(pv.dims()));
  }
  std::size_t classes = pv.dim(2) - 1;
  Var true_classes = t.slice_last(per_group, 0, classes);    // drop 'no class'
  Var summed = t.reduce_sum(true_classes, 1, false);         // [B, C]
  Var mass = t.reduce_sum(summed, 1, true);                  // [B, 1]
  const Tensor& mv = t.value(mass);
  bool degenerate = false;
  for (std::size_t i = 0; i < mv.size(); ++i) {
    if (mv[i] < 1e-12) {
      degenerate = true;
      break;
    }
  }
  if (!degenerate) return t.div(summed, mass);
  Tensor bump_num({mv.size(), classes}, 0.0);
  Tensor bump_den({mv.size(), std::size_t(1)}, 0.0);
  for (std::size_t i = 0; i < mv.size(); ++i) {
    if (mv[i] < 1e-12) {
      bump_den[i] = 1.0;
      for (std::size_t c = 0; c < classes; ++c) bump_num.at(i, c) = 1.0 / double(classes);
    }
  }
  return t.div(t.add(summed, t.leaf(std::move(bump_num))),
               t.add(mass, t.leaf(std::move(bump_den))));
}

tag::ParametricMapping make_mapping(const BoundParams& p, TaggerParams& model, std::size_t batch,
                                    std::size_t groups, bool training) {
  return [&p, &model, batch, groups, training](Tape& tape, Var z, Var m, Var delta_z,
                                               Var lm) -> tag::MappingOutput {
    Var h = input_projection(tape, p, model, z, m, delta_z, lm, training);
    LadderOut ladder = ladder_forward(tape, p, model, h, training);
    OutputProjection proj =
        output_projection(tape, p, ladder.u, batch, groups, model.config.mode);
    tag::MappingOutput out;
    out.z_state = proj.z_state;
    out.z_raw = proj.z_raw;
    out.m_logits = proj.m_logits;
    out.top = ladder.top;
    return out;
  };
}

Var bind_variance(Tape& t, const BoundParams& p) { return t.exp(p["log_v"]); }

}  // namespace tagger
