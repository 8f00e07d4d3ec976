#include "tagger/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "tagger/util.hpp"

namespace tagger::eval {

using ad::Tensor;

std::vector<int> segmentation_from_masks_row(const Tensor& m, std::size_t example) {
  if (m.ndim() != 3) throw ShapeError("masks must be [B,K,N], got " + ad::shape_str(m.dims()));
  std::size_t k = m.dim(1), n = m.dim(2);
  std::vector<int> labels(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    double best = m.at(example, 0, j);
    int arg = 0;
    for (std::size_t g = 1; g < k; ++g) {
      double v = m.at(example, g, j);
      if (v > best) {  // strict: ties stay with the smaller index
        best = v;
        arg = int(g);
      }
    }
    labels[j] = arg;
  }
  return labels;
}

std::vector<std::vector<int>> segmentation_from_masks(const Tensor& m) {
  std::vector<std::vector<int>> out;
  for (std::size_t b = 0; b < m.dim(0); ++b) out.push_back(segmentation_from_masks_row(m, b));
  return out;
}

namespace {

// Contingency counts with dense re-indexed labels.
struct Contingency {
  std::size_t n = 0;
  std::vector<std::size_t> a;               // row marginals
  std::vector<std::size_t> b;               // column marginals
  std::vector<std::vector<std::size_t>> counts;
};

Contingency contingency(const std::vector<int>& u, const std::vector<int>& v) {
  std::map<int, std::size_t> umap, vmap;
  for (int label : u) umap.emplace(label, umap.size());
  for (int label : v) vmap.emplace(label, vmap.size());
  Contingency c;
  c.n = u.size();
  c.a.assign(umap.size(), 0);
  c.b.assign(vmap.size(), 0);
  c.counts.assign(umap.size(), std::vector<std::size_t>(vmap.size(), 0));
  for (std::size_t i = 0; i < u.size(); ++i) {
    std::size_t r = umap[u[i]], s = vmap[v[i]];
    ++c.a[r];
    ++c.b[s];
    ++c.counts[r][s];
  }
  return c;
}

double entropy(const std::vector<std::size_t>& marginals, std::size_t n) {
  double h = 0.0;
  for (std::size_t count : marginals) {
    if (count == 0) continue;
    double p = double(count) / double(n);
    h -= p * std::log(p);
  }
  return h;
}

double mutual_information(const Contingency& c) {
  double mi = 0.0;
  for (std::size_t i = 0; i < c.a.size(); ++i) {
    for (std::size_t j = 0; j < c.b.size(); ++j) {
      std::size_t nij = c.counts[i][j];
      if (nij == 0) continue;
      mi += (double(nij) / double(c.n)) *
            std::log(double(c.n) * double(nij) / (double(c.a[i]) * double(c.b[j])));
    }
  }
  return mi;
}

// E[MI] under the hypergeometric (fixed-marginal permutation) model,
// Vinh et al. 2010.
double expected_mi(const Contingency& c) {
  const double n = double(c.n);
  const double lg_n = std::lgamma(n + 1.0);
  double emi = 0.0;
  for (std::size_t i = 0; i < c.a.size(); ++i) {
    const double ai = double(c.a[i]);
    for (std::size_t j = 0; j < c.b.size(); ++j) {
      const double bj = double(c.b[j]);
      std::size_t lo = c.a[i] + c.b[j] > c.n ? c.a[i] + c.b[j] - c.n : 1;
      std::size_t hi = std::min(c.a[i], c.b[j]);
      for (std::size_t nij = lo; nij <= hi; ++nij) {
        const double x = double(nij);
        double log_prob = std::lgamma(ai + 1.0) + std::lgamma(bj + 1.0) +
                          std::lgamma(n - ai + 1.0) + std::lgamma(n - bj + 1.0) - lg_n -
                          std::lgamma(x + 1.0) - std::lgamma(ai - x + 1.0) -
                          std::lgamma(bj - x + 1.0) - std::lgamma(n - ai - bj + x + 1.0);
        emi += (x / n) * std::log(n * x / (ai * bj)) * std::exp(log_prob);
      }
    }
  }
  return emi;
}

}  // namespace

double ami(const std::vector<int>& u, const std::vector<int>& v) {
  if (u.size() != v.size()) throw ContractError("ami: partitions must have equal length");
  if (u.empty()) throw ContractError("ami: empty partitions");
  Contingency c = contingency(u, v);
  if (c.a.size() == 1 && c.b.size() == 1) return 1.0;  // identical single-cluster partitions
  double mi = mutual_information(c);
  double emi = expected_mi(c);
  double denom = std::max(entropy(c.a, c.n), entropy(c.b, c.n)) - emi;
  if (std::abs(denom) < 1e-12) return 0.0;
  return (mi - emi) / denom;
}

double ami_masked(const std::vector<int>& truth, const std::vector<int>& pred,
                  const std::uint8_t* ignore) {
  if (truth.size() != pred.size()) throw ContractError("ami: partitions must have equal length");
  std::vector<int> t, p;
  t.reserve(truth.size());
  p.reserve(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (ignore != nullptr && ignore[i]) continue;
    t.push_back(truth[i]);
    p.push_back(pred[i]);
  }
  if (t.empty()) return std::numeric_limits<double>::quiet_NaN();
  return ami(t, p);
}

namespace {

struct AmiStats {
  double sum = 0.0;
  std::size_t scored = 0;
};

AmiStats ami_stats(const Tensor& m, const data::DatasetBundle& bundle,
                   std::size_t first_example) {
  std::size_t batch = m.dim(0), n = m.dim(2);
  if (n != bundle.pixels()) throw ContractError("mask width does not match dataset");
  AmiStats stats;
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<int> pred = segmentation_from_masks_row(m, b);
    const std::uint8_t* truth_row = bundle.label_row(first_example + b);
    std::vector<int> truth(truth_row, truth_row + n);
    double score = ami_masked(truth, pred, bundle.ignore_row(first_example + b));
    if (std::isnan(score)) continue;
    stats.sum += score;
    ++stats.scored;
  }
  return stats;
}

}  // namespace

double mean_ami(const Tensor& m, const data::DatasetBundle& bundle, std::size_t first_example) {
  AmiStats stats = ami_stats(m, bundle, first_example);
  return stats.scored == 0 ? std::numeric_limits<double>::quiet_NaN()
                           : stats.sum / double(stats.scored);
}

double topk_error(const Tensor& predictions, const std::vector<std::vector<int>>& truth_sets,
                  int k) {
  if (predictions.ndim() != 2) {
    throw ShapeError("predictions must be [B,C], got " + ad::shape_str(predictions.dims()));
  }
  if (truth_sets.size() != predictions.dim(0)) {
    throw ContractError("truth set count does not match prediction rows");
  }
  std::size_t classes = predictions.dim(1);
  std::size_t instances = 0, missed = 0;
  std::vector<int> order(classes);
  for (std::size_t b = 0; b < truth_sets.size(); ++b) {
    const auto& truth = truth_sets[b];
    if (truth.empty()) throw DataError("empty truth set at example " + std::to_string(b));
    if (truth.size() > 2) throw DataError("truth sets carry at most two classes");
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int x, int y) {
      double px = predictions.at(b, std::size_t(x)), py = predictions.at(b, std::size_t(y));
      if (px != py) return px > py;
      return x < y;  // ties toward the smaller class index
    });
    for (int cls : truth) {
      if (cls < 0 || std::size_t(cls) >= classes) {
        throw DataError("truth class " + std::to_string(cls) + " out of range");
      }
      ++instances;
      bool hit = false;
      for (int r = 0; r < k && std::size_t(r) < classes; ++r) {
        if (order[std::size_t(r)] == cls) {
          hit = true;
          break;
        }
      }
      if (!hit) ++missed;
    }
  }
  return double(missed) / double(instances);
}

std::string EvalReport::to_tsv() const {
  std::ostringstream out;
  out.precision(17);
  out << "iteration\tdenoising_cost\n";
  for (std::size_t i = 0; i < cost_per_iteration.size(); ++i) {
    out << (i + 1) << "\t" << cost_per_iteration[i] << "\n";
  }
  if (has_ami) out << "ami\t" << ami << "\n";
  if (has_top_error) out << "top" << top_k << "_error\t" << top_error << "\n";
  return out.str();
}

EvalReport evaluate_model(TaggerParams& model, const tag::CorruptionSpec& corruption,
                          const data::DatasetBundle& bundle, const EvalOptions& opts) {
  bundle.validate();
  if (opts.iterations < 1) throw ContractError("evaluation needs at least one iteration");
  const std::size_t count = bundle.count();
  const std::size_t batch = std::min<std::size_t>(opts.batch_size, count);
  const std::size_t batches = (count + batch - 1) / batch;

  struct Slot {
    std::vector<double> costs;
    double ami_sum = 0.0;
    std::size_t ami_count = 0;
    std::size_t examples = 0;
    bool simplex_ok = true;
    std::vector<std::vector<int>> truths;
    Tensor preds;
  };
  std::vector<Slot> slots(batches);

  const bool want_classes = opts.with_classes && model.has_class_head() && bundle.has_classes;
  const bool want_ami = opts.with_ami;

  parallel_for(batches, [&](std::size_t bi) {
    std::size_t from = bi * batch;
    std::size_t to = std::min(count, from + batch);
    data::DatasetBundle part = bundle.slice(from, to);

    ad::Tape tape;
    ad::BoundParams bound = bind_params(tape, model.params);
    tag::ParametricMapping mapping =
        make_mapping(bound, model, part.count(), opts.groups, /*training=*/false);
    ad::Var v;
    if (model.config.mode == tag::DataMode::kContinuous) v = bind_variance(tape, bound);

    tag::ForwardConfig fwd;
    fwd.groups = opts.groups;
    fwd.iterations = opts.iterations;
    fwd.corruption = corruption;
    fwd.data_mean = model.data_mean;
    fwd.training = false;
    fwd.eval_noise_in_likelihood = opts.eval_noise_in_likelihood;
    fwd.keep_vars = want_classes;

    Rng rng(opts.rng_seed ^ bi);
    tag::Trajectory traj = tagger_forward(tape, part.inputs, fwd, mapping, v, rng);

    Slot& slot = slots[bi];
    slot.examples = part.count();
    slot.costs = traj.costs;
    for (const auto& state : traj.states) {
      if (state.iteration > 0 && !tag::mask_simplex_ok(state.m)) slot.simplex_ok = false;
    }
    if (want_ami) {
      AmiStats stats = ami_stats(traj.states.back().m, bundle, from);
      slot.ami_sum = stats.sum;
      slot.ami_count = stats.scored;
    }
    if (want_classes) {
      ad::Var per_group = class_head(tape, bound, model, traj.vars.back().top, part.count(),
                                     opts.groups, /*training=*/false);
      ad::Var combined = combine_class_predictions(tape, per_group);
      slot.preds = tape.value(combined);
      for (std::size_t i = 0; i < part.count(); ++i) {
        std::vector<int> truth;
        for (std::uint8_t c : part.classes[i]) {
          if (c == data::kNoClass) continue;
          if (std::find(truth.begin(), truth.end(), int(c)) == truth.end()) truth.push_back(c);
        }
        slot.truths.push_back(std::move(truth));
      }
    }
  });

  EvalReport report;
  report.example_count = count;
  report.cost_per_iteration.assign(std::size_t(opts.iterations), 0.0);
  double ami_total = 0.0;
  std::size_t ami_examples = 0;
  for (const Slot& slot : slots) {
    if (!slot.simplex_ok) report.simplex_ok = false;
    for (std::size_t i = 0; i < slot.costs.size(); ++i) {
      report.cost_per_iteration[i] += slot.costs[i] * double(slot.examples) / double(count);
    }
    ami_total += slot.ami_sum;
    ami_examples += slot.ami_count;
  }
  if (want_ami && ami_examples > 0) {
    report.has_ami = true;
    report.ami = ami_total / double(ami_examples);
  }
  if (want_classes) {
    std::size_t classes = model.config.class_count;
    Tensor preds({count, classes});
    std::vector<std::vector<int>> truths;
    std::size_t row = 0;
    int max_truth = 1;
    for (const Slot& slot : slots) {
      for (std::size_t i = 0; i < slot.truths.size(); ++i) {
        for (std::size_t c = 0; c < classes; ++c) preds.at(row, c) = slot.preds.at(i, c);
        max_truth = std::max(max_truth, int(slot.truths[i].size()));
        truths.push_back(slot.truths[i]);
        ++row;
      }
    }
    report.top_k = bundle.dataset == "tmnist2" ? 2 : max_truth;
    report.top_error = topk_error(preds, truths, report.top_k);
    report.has_top_error = true;
  }
  return report;
}

}  // namespace tagger::eval
