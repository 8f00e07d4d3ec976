#include "tagger/train.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"
#include "tagger/util.hpp"

namespace tagger::train {

using ad::ParamBank;
using ad::Tensor;
using ad::Var;
using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration.

void TrainConfig::validate() const {
  if (groups < 1) throw ConfigError("config: groups must be >= 1");
  if (t_train < 1 || t_eval < 1) throw ConfigError("config: iteration counts must be >= 1");
  if (batch_size < 1) throw ConfigError("config: batch_size must be >= 1");
  if (norm == ad::NormMode::kBatch && batch_size < 2) {
    throw ConfigError("config: batch normalization needs batch_size >= 2");
  }
  if (epochs_unsup < 0 || epochs_class < 0) throw ConfigError("config: negative epoch count");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (hidden_width < 1) throw ConfigError("config: hidden_width must be >= 1");
  for (std::size_t s : layers) {
    if (s < 1) throw ConfigError("config: layer sizes must be >= 1");
  }
  if (mode) {
    tag::CorruptionSpec spec = corruption();
    spec.validate();
  }
}

tag::CorruptionSpec TrainConfig::corruption() const {
  tag::CorruptionSpec spec;
  spec.mode = mode.value_or(tag::DataMode::kBinary);
  spec.sigma = sigma;
  spec.beta = beta;
  return spec;
}

LadderConfig TrainConfig::ladder_config(std::size_t input_dim, bool with_head) const {
  LadderConfig cfg;
  cfg.input_dim = input_dim;
  cfg.hidden_width = hidden_width;
  cfg.layer_sizes = layers;
  cfg.norm = norm;
  cfg.mode = mode.value_or(tag::DataMode::kBinary);
  cfg.class_count = with_head || class_count > 0 ? class_count : 0;
  cfg.head_width = head_width;
  return cfg;
}

namespace {

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    out.push_back(std::stoul(item));
  }
  return out;
}

std::string size_list_to_text(const std::vector<std::size_t>& sizes) {
  std::ostringstream out;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    if (i) out << ",";
    out << sizes[i];
  }
  return out.str();
}

bool parse_bool(const std::string& value, const std::string& key) {
  if (value == "1" || value == "true") return true;
  if (value == "0" || value == "false") return false;
  throw ConfigError("config: boolean key '" + key + "' expects 0/1/true/false, got '" + value +
                    "'");
}

}  // namespace

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig config;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // Trim.
    auto is_space = [](unsigned char c) { return std::isspace(c); };
    while (!line.empty() && is_space(line.back())) line.pop_back();
    std::size_t start = 0;
    while (start < line.size() && is_space(line[start])) ++start;
    line.erase(0, start);
    if (line.empty()) continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && is_space(key.back())) key.pop_back();
    std::size_t vs = 0;
    while (vs < value.size() && is_space(value[vs])) ++vs;
    value.erase(0, vs);

    try {
      if (key == "mode") {
        config.mode = tag::parse_data_mode(value);
      } else if (key == "groups") {
        config.groups = std::stoul(value);
      } else if (key == "t_train") {
        config.t_train = std::stoi(value);
      } else if (key == "t_eval") {
        config.t_eval = std::stoi(value);
      } else if (key == "sigma") {
        config.sigma = std::stod(value);
      } else if (key == "beta") {
        config.beta = std::stod(value);
      } else if (key == "batch_size") {
        config.batch_size = std::stoul(value);
      } else if (key == "epochs_unsup") {
        config.epochs_unsup = std::stoi(value);
      } else if (key == "epochs_class") {
        config.epochs_class = std::stoi(value);
      } else if (key == "lr") {
        config.lr = std::stod(value);
      } else if (key == "adam_beta1") {
        config.adam_beta1 = std::stod(value);
      } else if (key == "adam_beta2") {
        config.adam_beta2 = std::stod(value);
      } else if (key == "adam_eps") {
        config.adam_eps = std::stod(value);
      } else if (key == "hidden_width") {
        config.hidden_width = std::stoul(value);
      } else if (key == "layers") {
        config.layers = parse_size_list(value);
      } else if (key == "norm") {
        config.norm = ad::parse_norm_mode(value);
      } else if (key == "seed") {
        config.seed = std::stoull(value);
      } else if (key == "class_count") {
        config.class_count = std::stoul(value);
      } else if (key == "head_width") {
        config.head_width = std::stoul(value);
      } else if (key == "class_weight") {
        config.class_weight = std::stod(value);
      } else if (key == "class_all_iterations") {
        config.class_all_iterations = parse_bool(value, key);
      } else if (key == "eval_noise_in_likelihood") {
        config.eval_noise_in_likelihood = parse_bool(value, key);
      } else {
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                          "'");
      }
    } catch (const std::invalid_argument&) {
      throw ConfigError("config line " + std::to_string(line_no) + ": bad value for '" + key +
                        "'");
    } catch (const std::out_of_range&) {
      throw ConfigError("config line " + std::to_string(line_no) + ": value out of range for '" +
                        key + "'");
    }
  }
  config.validate();
  return config;
}

TrainConfig load_config(const std::string& path) { return parse_config_text(read_file(path)); }

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream out;
  out.precision(17);
  if (c.mode) out << "mode=" << tag::data_mode_name(*c.mode) << "\n";
  out << "groups=" << c.groups << "\n";
  out << "t_train=" << c.t_train << "\n";
  out << "t_eval=" << c.t_eval << "\n";
  out << "sigma=" << c.sigma << "\n";
  out << "beta=" << c.beta << "\n";
  out << "batch_size=" << c.batch_size << "\n";
  out << "epochs_unsup=" << c.epochs_unsup << "\n";
  out << "epochs_class=" << c.epochs_class << "\n";
  out << "lr=" << c.lr << "\n";
  out << "adam_beta1=" << c.adam_beta1 << "\n";
  out << "adam_beta2=" << c.adam_beta2 << "\n";
  out << "adam_eps=" << c.adam_eps << "\n";
  out << "hidden_width=" << c.hidden_width << "\n";
  out << "layers=" << size_list_to_text(c.layers) << "\n";
  out << "norm=" << ad::norm_mode_name(c.norm) << "\n";
  out << "seed=" << c.seed << "\n";
  out << "class_count=" << c.class_count << "\n";
  out << "head_width=" << c.head_width << "\n";
  out << "class_weight=" << c.class_weight << "\n";
  out << "class_all_iterations=" << (c.class_all_iterations ? 1 : 0) << "\n";
  out << "eval_noise_in_likelihood=" << (c.eval_noise_in_likelihood ? 1 : 0) << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// ADAM.

void OptimizerState::ensure(const ParamBank& params) {
  for (const auto& [name, tensor] : params.items()) {
    if (!m.contains(name)) m.add(name, Tensor(tensor.dims(), 0.0));
    if (!v.contains(name)) v.add(name, Tensor(tensor.dims(), 0.0));
  }
}

void adam_step(ParamBank& params, const std::vector<std::pair<std::string, Tensor>>& grads,
               OptimizerState& state, double lr, double beta1, double beta2, double eps) {
  for (const auto& [name, grad] : grads) {
    if (!grad.all_finite()) {
      throw NumericError("non-finite gradient for parameter '" + name + "'");
    }
  }
  state.ensure(params);
  state.step += 1;
  const double bias1 = 1.0 - std::pow(beta1, double(state.step));
  const double bias2 = 1.0 - std::pow(beta2, double(state.step));
  for (const auto& [name, grad] : grads) {
    Tensor& p = params.at(name);
    Tensor& m1 = state.m.at(name);
    Tensor& m2 = state.v.at(name);
    if (!p.same_shape(grad)) {
      throw ShapeError("gradient shape mismatch for parameter '" + name + "'");
    }
    for (std::size_t i = 0; i < p.size(); ++i) {
      double g = grad[i];
      m1[i] = beta1 * m1[i] + (1.0 - beta1) * g;
      m2[i] = beta2 * m2[i] + (1.0 - beta2) * g * g;
      double mhat = m1[i] / bias1;
      double vhat = m2[i] / bias2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints.

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  data::Container c;
  for (const auto& [name, tensor] : checkpoint.model.params.items()) {
    c.add_f64("param/" + name, tensor);
  }
  for (const auto& [name, tensor] : checkpoint.opt.m.items()) c.add_f64("adam/m/" + name, tensor);
  for (const auto& [name, tensor] : checkpoint.opt.v.items()) c.add_f64("adam/v/" + name, tensor);
  c.add_f64("adam/step", Tensor::scalar(double(checkpoint.opt.step)));
  for (const auto& [site, stats] : checkpoint.model.stats) {
    c.add_f64("stats/" + site + "/mean", stats.mean);
    c.add_f64("stats/" + site + "/var", stats.var);
  }
  json meta;
  meta["kind"] = "tagger-checkpoint";
  meta["config"] = config_to_text(checkpoint.config);
  meta["input_dim"] = checkpoint.model.config.input_dim;
  meta["data_mean"] = checkpoint.model.data_mean;
  meta["has_class_head"] = checkpoint.model.has_class_head();
  c.metadata = meta.dump();
  c.write(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  data::Container c = data::Container::read(path);
  json meta = json::parse(c.metadata);
  if (!meta.contains("kind") || meta["kind"] != "tagger-checkpoint") {
    throw FormatError("not a tagger checkpoint: " + path);
  }
  Checkpoint ck;
  ck.config = parse_config_text(meta.at("config").get<std::string>());
  if (!ck.config.mode) throw FormatError("checkpoint config does not pin the data mode");
  std::size_t input_dim = meta.at("input_dim").get<std::size_t>();
  bool has_head = meta.at("has_class_head").get<bool>();

  // Rebuild the parameter structure, then overwrite every tensor from the
  // container so the round trip is bitwise.
  Rng scratch(0);
  ck.model = TaggerParams::init(ck.config.ladder_config(input_dim, has_head), scratch);
  if (has_head) ck.model.add_class_head(scratch);
  ck.model.data_mean = meta.at("data_mean").get<double>();

  for (auto& [name, tensor] : ck.model.params.items()) {
    const Tensor& stored = c.require_f64("param/" + name);
    if (!stored.same_shape(tensor)) {
      throw FormatError("checkpoint parameter '" + name + "' has shape " +
                        ad::shape_str(stored.dims()) + ", expected " +
                        ad::shape_str(tensor.dims()));
    }
    tensor = stored;
  }
  for (auto& [site, stats] : ck.model.stats) {
    stats.mean = c.require_f64("stats/" + site + "/mean");
    stats.var = c.require_f64("stats/" + site + "/var");
  }
  ck.opt.ensure(ck.model.params);
  for (auto& [name, tensor] : ck.opt.m.items()) tensor = c.require_f64("adam/m/" + name);
  for (auto& [name, tensor] : ck.opt.v.items()) tensor = c.require_f64("adam/v/" + name);
  ck.opt.step = (long long)(c.require_f64("adam/step").item());
  return ck;
}

// ---------------------------------------------------------------------------
// Training.

namespace {

Tensor gather_rows(const data::DatasetBundle& bundle, const std::vector<std::size_t>& order,
                   std::size_t from, std::size_t to) {
  std::size_t n = bundle.pixels();
  Tensor out({to - from, n});
  for (std::size_t i = from; i < to; ++i) {
    const double* src = bundle.inputs.data() + order[i] * n;
    std::copy(src, src + n, out.data() + (i - from) * n);
  }
  return out;
}

void shuffle_indices(std::vector<std::size_t>& indices, Rng& rng) {
  for (std::size_t i = indices.size(); i > 1; --i) {
    std::size_t j = rng.uniform_int(i);
    std::swap(indices[i - 1], indices[j]);
  }
}

struct ClassBatch {
  Tensor targets;  // [B, C]
  Tensor weights;  // [B, 1]; 1 for labeled rows
  std::size_t labeled = 0;
};

ClassBatch build_class_batch(const data::DatasetBundle& bundle,
                             const std::vector<std::size_t>& order, std::size_t from,
                             std::size_t to, const std::vector<bool>& labeled,
                             std::size_t classes) {
  ClassBatch out;
  out.targets = Tensor({to - from, classes}, 0.0);
  out.weights = Tensor({to - from, std::size_t(1)}, 0.0);
  for (std::size_t i = from; i < to; ++i) {
    std::size_t example = order[i];
    if (!labeled[example]) continue;
    const auto& pair = bundle.classes[example];
    std::uint8_t a = pair[0], b = pair[1];
    if (a == data::kNoClass) throw DataError("labeled example has no class label");
    if (a >= classes || (b != data::kNoClass && b >= classes)) {
      throw DataError("class label out of range at example " + std::to_string(example));
    }
    std::size_t row = i - from;
    if (b == data::kNoClass || b == a) {
      out.targets.at(row, a) = 1.0;
    } else {
      out.targets.at(row, a) = 0.5;
      out.targets.at(row, b) = 0.5;
    }
    out.weights.at(row, 0) = 1.0;
    ++out.labeled;
  }
  return out;
}

struct EpochLoop {
  const TrainConfig& config;
  const data::DatasetBundle& train_data;
  const data::DatasetBundle* val;
  Checkpoint& ck;
  Rng& rng;
  std::vector<EpochMetrics>& metrics;
  const EpochSink& on_epoch;
  int epoch_counter = 0;

  // Runs one training phase. When `labeled` is non-null the classification
  // cost is added for flagged examples.
  void run_phase(int epochs, const std::vector<bool>* labeled) {
    const std::size_t count = train_data.count();
    const std::size_t batch = std::min<std::size_t>(config.batch_size, count);
    std::vector<std::size_t> order(count);
    for (std::size_t i = 0; i < count; ++i) order[i] = i;

    tag::ForwardConfig fwd;
    fwd.groups = config.groups;
    fwd.iterations = config.t_train;
    fwd.corruption = config.corruption();
    fwd.data_mean = ck.model.data_mean;
    fwd.training = true;
    fwd.keep_vars = labeled != nullptr;

    for (int e = 0; e < epochs; ++e) {
      shuffle_indices(order, rng);
      double cost_sum = 0.0;
      std::size_t cost_examples = 0;
      for (std::size_t from = 0; from < count; from += batch) {
        std::size_t to = std::min(count, from + batch);
        Tensor x = gather_rows(train_data, order, from, to);

        ad::Tape tape;
        ad::BoundParams bound = bind_params(tape, ck.model.params);
        tag::ParametricMapping mapping =
            make_mapping(bound, ck.model, to - from, config.groups, /*training=*/true);
        Var v;
        if (ck.model.config.mode == tag::DataMode::kContinuous) v = bind_variance(tape, bound);

        tag::Trajectory traj = tagger_forward(tape, x, fwd, mapping, v, rng);
        Var loss = traj.cost_var;

        if (labeled != nullptr) {
          ClassBatch cb = build_class_batch(train_data, order, from, to, *labeled,
                                            config.class_count);
          if (cb.labeled > 0 && config.class_weight != 0.0) {
            Var ce = class_cost(tape, bound, traj, cb, to - from);
            loss = tape.add(loss, tape.scale(ce, config.class_weight));
          }
        }

        double cost_value = tape.value(loss).item();
        if (!std::isfinite(cost_value)) {
          throw NumericError("training cost diverged (non-finite) at step " +
                             std::to_string(ck.opt.step + 1));
        }
        tape.backward(loss);
        auto grads = collect_grads(tape, ck.model.params, bound);
        adam_step(ck.model.params, grads, ck.opt, config.lr, config.adam_beta1,
                  config.adam_beta2, config.adam_eps);

        cost_sum += traj.total_cost * double(to - from);
        cost_examples += to - from;
      }

      EpochMetrics em;
      em.epoch = ++epoch_counter;
      em.train_cost = cost_sum / double(cost_examples);
      if (val != nullptr) {
        eval::EvalOptions opts;
        opts.groups = config.groups;
        opts.iterations = config.t_eval;
        opts.batch_size = config.batch_size;
        opts.eval_noise_in_likelihood = config.eval_noise_in_likelihood;
        opts.with_ami = false;
        opts.with_classes = false;
        opts.rng_seed = eval_seed(config.seed);
        eval::EvalReport report =
            eval::evaluate_model(ck.model, config.corruption(), *val, opts);
        em.has_val = true;
        em.val_costs = report.cost_per_iteration;
      }
      metrics.push_back(em);
      if (on_epoch) on_epoch(ck, em);
    }
  }

  Var class_cost(ad::Tape& tape, const ad::BoundParams& bound, const tag::Trajectory& traj,
                 const ClassBatch& cb, std::size_t batch_rows) {
    std::vector<Var> terms;
    std::size_t first = config.class_all_iterations ? 0 : traj.vars.size() - 1;
    for (std::size_t i = first; i < traj.vars.size(); ++i) {
      Var per_group = class_head(tape, bound, ck.model, traj.vars[i].top, batch_rows,
                                 config.groups, /*training=*/true);
      Var combined = combine_class_predictions(tape, per_group);
      Var log_pred = tape.log(tape.add_const(combined, 1e-30));
      Var ce_rows = tape.neg(tape.reduce_sum(tape.mul(tape.leaf(cb.targets), log_pred), 1, true));
      Var weighted = tape.mul(ce_rows, tape.leaf(cb.weights));
      terms.push_back(tape.scale(tape.sum_all(weighted), 1.0 / double(cb.labeled)));
    }
    Var total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = tape.add(total, terms[i]);
    return tape.scale(total, 1.0 / double(terms.size()));
  }
};

TrainConfig resolve_config(const TrainConfig& config, const data::DatasetBundle& train_data) {
  TrainConfig resolved = config;
  if (!resolved.mode) {
    resolved.mode = train_data.mode;
  } else if (*resolved.mode != train_data.mode) {
    throw ConfigError("config mode '" + tag::data_mode_name(*resolved.mode) +
                      "' conflicts with dataset mode '" + tag::data_mode_name(train_data.mode) +
                      "'");
  }
  resolved.validate();
  return resolved;
}

Checkpoint fresh_checkpoint(const TrainConfig& config, const data::DatasetBundle& train_data,
                            Rng& rng) {
  Checkpoint ck;
  ck.config = config;
  ck.model = TaggerParams::init(config.ladder_config(train_data.pixels(), false), rng);
  ck.model.data_mean = train_data.data_mean;
  ck.opt.ensure(ck.model.params);
  return ck;
}

Checkpoint resume_checkpoint(const TrainConfig& config, const Checkpoint& resume,
                             const data::DatasetBundle& train_data) {
  if (resume.model.config.input_dim != train_data.pixels()) {
    throw ConfigError("checkpoint input width " +
                      std::to_string(resume.model.config.input_dim) +
                      " conflicts with dataset width " + std::to_string(train_data.pixels()));
  }
  if (resume.config.groups != config.groups) {
    throw ConfigError("checkpoint groups=" + std::to_string(resume.config.groups) +
                      " conflicts with config groups=" + std::to_string(config.groups));
  }
  if (resume.config.mode != config.mode) {
    throw ConfigError("checkpoint data mode conflicts with config");
  }
  Checkpoint ck = resume;
  ck.config = config;
  return ck;
}

}  // namespace

std::uint64_t eval_seed(std::uint64_t train_seed) {
  Rng rng(train_seed ^ 0x6576616c5f736565ull);  // "eval_see"
  return rng.next_u64();
}

TrainResult train_unsupervised(const TrainConfig& config_in,
                               const data::DatasetBundle& train_data,
                               const data::DatasetBundle* val, const Checkpoint* resume,
                               const EpochSink& on_epoch) {
  train_data.validate();
  TrainConfig config = resolve_config(config_in, train_data);
  Rng rng(config.seed);
  TrainResult result;
  result.checkpoint = resume ? resume_checkpoint(config, *resume, train_data)
                             : fresh_checkpoint(config, train_data, rng);
  EpochLoop loop{config, train_data, val, result.checkpoint, rng, result.metrics, on_epoch};
  loop.run_phase(config.epochs_unsup, nullptr);
  return result;
}

TrainResult train_semisupervised(const TrainConfig& config_in,
                                 const data::DatasetBundle& train_data,
                                 const std::vector<std::size_t>& labeled_indices,
                                 const data::DatasetBundle* val, const Checkpoint* resume,
                                 const EpochSink& on_epoch) {
  train_data.validate();
  if (labeled_indices.empty()) {
    throw DataError("semi-supervised training needs a non-empty labeled set");
  }
  if (!train_data.has_classes) {
    throw DataError("semi-supervised training needs class labels in the dataset");
  }
  TrainConfig config = resolve_config(config_in, train_data);
  if (config.class_count < 1) throw ConfigError("semi-supervised training needs class_count >= 1");

  std::vector<bool> labeled(train_data.count(), false);
  for (std::size_t idx : labeled_indices) {
    if (idx >= train_data.count()) {
      throw DataError("labeled index " + std::to_string(idx) + " out of range");
    }
    labeled[idx] = true;
  }

  Rng rng(config.seed);
  TrainResult result;
  result.checkpoint = resume ? resume_checkpoint(config, *resume, train_data)
                             : fresh_checkpoint(config, train_data, rng);
  EpochLoop loop{config, train_data, val, result.checkpoint, rng, result.metrics, on_epoch};
  loop.run_phase(config.epochs_unsup, nullptr);
  if (!result.checkpoint.model.has_class_head()) {
    result.checkpoint.model.add_class_head(rng);
    result.checkpoint.opt.ensure(result.checkpoint.model.params);
  }
  loop.run_phase(config.epochs_class, &labeled);
  return result;
}

std::string metrics_tsv(const std::vector<EpochMetrics>& metrics, int t_eval) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch\ttrain_cost";
  for (int i = 1; i <= t_eval; ++i) out << "\tval_cost_iter" << i;
  out << "\n";
  for (const auto& em : metrics) {
    out << em.epoch << "\t" << em.train_cost;
    for (int i = 0; i < t_eval; ++i) {
      out << "\t";
      if (em.has_val && std::size_t(i) < em.val_costs.size()) out << em.val_costs[std::size_t(i)];
    }
    out << "\n";
  }
  return out.str();
}

}  // namespace tagger::train
