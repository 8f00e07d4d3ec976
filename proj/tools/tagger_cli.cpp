// Command-line entry point: dataset generation, training, evaluation and
// visualization as reproducible runs. Exit codes: 0 success, 2 usage/config
// error, 3 numeric failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tagger/data.hpp"
#include "tagger/eval.hpp"
#include "tagger/image.hpp"
#include "tagger/train.hpp"
#include "tagger/util.hpp"

namespace fs = std::filesystem;
using namespace tagger;
using json = nlohmann::json;

namespace {

// Sidecar metadata for every artifact; the only place timestamps appear, so
// primary artifacts stay byte-identical across reruns.
void write_manifest(const std::string& artifact, const std::string& command,
                    const std::string& config_path, const std::string& config_content,
                    std::uint64_t seed, const std::vector<std::string>& inputs) {
  json m;
  m["command"] = command;
  m["config_path"] = config_path;
  m["config_sha1"] = git_blob_sha1(config_content);
  m["seed"] = seed;
  m["inputs"] = inputs;
  m["artifact"] = artifact;
  m["created_utc"] = utc_timestamp();
  write_file(artifact + ".manifest.json", m.dump(2) + "\n");
}

struct GenerateArgs {
  std::string dataset;
  std::size_t count = 0;
  std::uint64_t seed = 1;
  std::string mnist_dir;
  std::string out;
};

void save_split(const data::DatasetBundle& bundle, const std::string& path,
                const GenerateArgs& args) {
  data::save_bundle(path, bundle);
  write_manifest(path, "generate", "", args.dataset, args.seed, {});
  std::cout << "wrote " << path << " (" << bundle.count() << " examples, mean "
            << bundle.data_mean << ")\n";
}

data::DatasetBundle resliced(const data::DatasetBundle& bundle, std::size_t from,
                             std::size_t to) {
  data::DatasetBundle part = bundle.slice(from, to);
  part.data_mean = ad::value_mean(part.inputs);
  return part;
}

int run_generate(const GenerateArgs& args) {
  if (args.dataset == "shapes") {
    if (args.count > 0) {
      save_split(data::generate_shapes(args.count, args.seed), args.out, args);
    } else {
      data::DatasetBundle all = data::generate_shapes(70000, args.seed);
      save_split(resliced(all, 0, 60000), args.out + ".train", args);
      save_split(resliced(all, 60000, 70000), args.out + ".test", args);
    }
    return 0;
  }
  if (args.mnist_dir.empty()) {
    throw ConfigError("--mnist-dir is required for " + args.dataset +
                      " (IDX digit files are not bundled)");
  }
  int digits = args.dataset == "tmnist2" ? 2 : 1;
  auto train_images = data::load_idx_images(args.mnist_dir + "/train-images-idx3-ubyte");
  auto train_labels = data::load_idx_labels(args.mnist_dir + "/train-labels-idx1-ubyte");
  if (args.count > 0) {
    save_split(
        data::generate_textured_mnist(args.count, digits, train_images, train_labels, args.seed),
        args.out, args);
    return 0;
  }
  data::DatasetBundle pool =
      data::generate_textured_mnist(60000, digits, train_images, train_labels, args.seed);
  save_split(resliced(pool, 0, 50000), args.out + ".train", args);
  save_split(resliced(pool, 50000, 60000), args.out + ".val", args);
  auto test_images = data::load_idx_images(args.mnist_dir + "/t10k-images-idx3-ubyte");
  auto test_labels = data::load_idx_labels(args.mnist_dir + "/t10k-labels-idx1-ubyte");
  save_split(data::generate_textured_mnist(10000, digits, test_images, test_labels, args.seed),
             args.out + ".test", args);
  return 0;
}

struct TrainArgs {
  std::string config_path;
  std::string data_path;
  std::string val_path;
  std::string labels = "none";
  std::string resume_path;
  std::string out;
};

std::vector<std::size_t> parse_label_indices(const std::string& path) {
  std::vector<std::size_t> indices;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::size_t value;
    while (ls >> value) indices.push_back(value);
  }
  if (indices.empty()) throw DataError("label index file is empty: " + path);
  return indices;
}

int run_train(const TrainArgs& args) {
  std::string config_text = read_file(args.config_path);
  train::TrainConfig config = train::parse_config_text(config_text);
  data::DatasetBundle train_set = data::load_bundle(args.data_path);
  std::optional<data::DatasetBundle> val_set;
  if (!args.val_path.empty()) val_set = data::load_bundle(args.val_path);

  std::optional<train::Checkpoint> resume;
  if (!args.resume_path.empty()) resume = train::load_checkpoint(args.resume_path);

  std::string metrics_path = args.out + ".metrics.tsv";
  std::vector<train::EpochMetrics> rows;
  auto sink = [&](const train::Checkpoint& ck, const train::EpochMetrics& em) {
    train::save_checkpoint(args.out, ck);
    rows.push_back(em);
    write_file(metrics_path, train::metrics_tsv(rows, config.t_eval));
    std::cout << "epoch " << em.epoch << " train_cost " << em.train_cost;
    if (em.has_val && !em.val_costs.empty()) {
      std::cout << " val_cost_final " << em.val_costs.back();
    }
    std::cout << std::endl;
  };

  train::TrainResult result;
  if (args.labels == "none") {
    result = train::train_unsupervised(config, train_set, val_set ? &*val_set : nullptr,
                                       resume ? &*resume : nullptr, sink);
  } else {
    std::vector<std::size_t> labeled = parse_label_indices(args.labels);
    result = train::train_semisupervised(config, train_set, labeled,
                                         val_set ? &*val_set : nullptr,
                                         resume ? &*resume : nullptr, sink);
  }
  // Zero-epoch configs still produce a checkpoint.
  train::save_checkpoint(args.out, result.checkpoint);
  write_file(metrics_path, train::metrics_tsv(result.metrics, config.t_eval));

  std::vector<std::string> inputs{args.data_path};
  if (!args.val_path.empty()) inputs.push_back(args.val_path);
  write_manifest(args.out, "train", args.config_path, config_text, config.seed, inputs);
  write_manifest(metrics_path, "train", args.config_path, config_text, config.seed, inputs);
  std::cout << "wrote " << args.out << " (step " << result.checkpoint.opt.step << ")\n";
  return 0;
}

struct EvalArgs {
  std::string checkpoint_path;
  std::string data_path;
  int iterations = 0;
  std::size_t groups = 0;
  std::string report_path;
};

bool has_ground_truth(const data::DatasetBundle& bundle) {
  for (std::uint8_t l : bundle.labels) {
    if (l != 0) return true;
  }
  return false;
}

int run_eval(const EvalArgs& args) {
  train::Checkpoint ck = train::load_checkpoint(args.checkpoint_path);
  data::DatasetBundle bundle = data::load_bundle(args.data_path);

  eval::EvalOptions opts;
  opts.groups = args.groups > 0 ? args.groups : ck.config.groups;
  opts.iterations = args.iterations > 0 ? args.iterations : ck.config.t_eval;
  opts.batch_size = ck.config.batch_size;
  opts.eval_noise_in_likelihood = ck.config.eval_noise_in_likelihood;
  opts.rng_seed = train::eval_seed(ck.config.seed);
  opts.with_ami = has_ground_truth(bundle);
  if (!opts.with_ami) {
    std::cout << "# AMI skipped: dataset carries no ground-truth labels\n";
  }
  eval::EvalReport report = eval::evaluate_model(ck.model, ck.config.corruption(), bundle, opts);
  std::string tsv = report.to_tsv();
  std::cout << tsv;
  if (!report.simplex_ok) throw NumericError("emitted masks left the simplex");
  if (!args.report_path.empty()) {
    write_file(args.report_path, tsv);
    write_manifest(args.report_path, "eval", "", config_to_text(ck.config), ck.config.seed,
                   {args.checkpoint_path, args.data_path});
  }
  return 0;
}

struct VisualizeArgs {
  std::string checkpoint_path;
  std::string data_path;
  std::size_t example_index = 0;
  int iterations = 0;
  int ablate_group = -1;
  std::string out_dir;
  bool ppm = false;
};

void write_image(const vis::ImageRgb& img, const std::string& stem, bool ppm) {
  if (ppm) {
    vis::write_ppm(stem + ".ppm", img);
  } else {
    vis::write_png(stem + ".png", img);
  }
}

int run_visualize(const VisualizeArgs& args) {
  train::Checkpoint ck = train::load_checkpoint(args.checkpoint_path);
  data::DatasetBundle bundle = data::load_bundle(args.data_path);
  if (args.example_index >= bundle.count()) {
    throw ConfigError("--example-index " + std::to_string(args.example_index) +
                      " out of range (dataset has " + std::to_string(bundle.count()) +
                      " examples)");
  }
  std::size_t groups = ck.config.groups;
  int iterations = args.iterations > 0 ? args.iterations : ck.config.t_eval;
  if (args.ablate_group >= 0 && std::size_t(args.ablate_group) >= groups) {
    throw ConfigError("--ablate-group out of range");
  }
  fs::create_directories(args.out_dir);

  data::DatasetBundle one = bundle.slice(args.example_index, args.example_index + 1);
  ad::Tape tape;
  ad::BoundParams bound = bind_params(tape, ck.model.params);
  auto mapping = make_mapping(bound, ck.model, 1, groups, /*training=*/false);
  ad::Var v;
  if (ck.model.config.mode == tag::DataMode::kContinuous) v = bind_variance(tape, bound);
  tag::ForwardConfig fwd;
  fwd.groups = groups;
  fwd.iterations = iterations;
  fwd.corruption = ck.config.corruption();
  fwd.data_mean = ck.model.data_mean;
  fwd.training = false;
  fwd.eval_noise_in_likelihood = ck.config.eval_noise_in_likelihood;
  Rng rng(train::eval_seed(ck.config.seed) ^ args.example_index);
  tag::Trajectory traj = tag::tagger_forward(tape, one.inputs, fwd, mapping, v, rng);

  for (int i = 1; i <= iterations; ++i) {
    vis::ImageRgb img = vis::render_iteration(traj.states[std::size_t(i)],
                                              traj.recon[std::size_t(i - 1)], 0, bundle.height,
                                              bundle.width);
    write_image(img, args.out_dir + "/iter_" + std::to_string(i), args.ppm);
  }
  if (args.ablate_group >= 0) {
    std::size_t k = std::size_t(args.ablate_group);
    ad::Tensor ablated_m = tag::ablate_group(traj.m_logits.back(), k);
    const ad::Tensor& z_last = traj.states.back().z;
    ad::Tensor recon = tag::mixture_reconstruction(ablated_m, z_last);
    if (!recon.all_finite()) throw NumericError("ablated reconstruction is not finite");
    vis::ImageRgb img = vis::render_panels(ablated_m, z_last, recon, 0, bundle.height,
                                           bundle.width);
    write_image(img, args.out_dir + "/ablate_g" + std::to_string(k), args.ppm);
  }
  write_manifest(args.out_dir + "/run", "visualize", "", config_to_text(ck.config),
                 ck.config.seed, {args.checkpoint_path, args.data_path});
  std::cout << "wrote " << iterations << " iteration panels to " << args.out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Tagger: iterative amortized grouping"};
  app.require_subcommand(1);

  GenerateArgs gen;
  CLI::App* generate = app.add_subcommand("generate", "generate a dataset container");
  generate->add_option("--dataset", gen.dataset, "shapes|tmnist1|tmnist2")
      ->required()
      ->check(CLI::IsMember({"shapes", "tmnist1", "tmnist2"}));
  generate->add_option("--count", gen.count, "example count (omit for the paper splits)");
  generate->add_option("--seed", gen.seed, "generator seed");
  generate->add_option("--mnist-dir", gen.mnist_dir, "directory with MNIST IDX files");
  generate->add_option("--out", gen.out, "output path (stem when --count omitted)")->required();

  TrainArgs tr;
  CLI::App* train_cmd = app.add_subcommand("train", "train a Tagger model");
  train_cmd->add_option("--config", tr.config_path, "key=value config file")->required();
  train_cmd->add_option("--data", tr.data_path, "training data container")->required();
  train_cmd->add_option("--val", tr.val_path, "validation data container");
  train_cmd->add_option("--labels", tr.labels,
                        "'none' or a file of labeled example indices (semi-supervised)");
  train_cmd->add_option("--resume", tr.resume_path, "checkpoint to continue from");
  train_cmd->add_option("--out", tr.out, "checkpoint output path")->required();

  EvalArgs ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", ev.checkpoint_path, "trained checkpoint")->required();
  eval_cmd->add_option("--data", ev.data_path, "evaluation data container")->required();
  eval_cmd->add_option("--iterations", ev.iterations, "evaluation iterations (default: config)");
  eval_cmd->add_option("--groups", ev.groups, "evaluation group count (default: config)");
  eval_cmd->add_option("--report", ev.report_path, "also write the TSV report here");

  VisualizeArgs viz;
  CLI::App* viz_cmd = app.add_subcommand("visualize", "render per-iteration panels");
  viz_cmd->add_option("--checkpoint", viz.checkpoint_path, "trained checkpoint")->required();
  viz_cmd->add_option("--data", viz.data_path, "data container")->required();
  viz_cmd->add_option("--example-index", viz.example_index, "example to render");
  viz_cmd->add_option("--iterations", viz.iterations, "iterations (default: config)");
  viz_cmd->add_option("--ablate-group", viz.ablate_group,
                      "suppress this group at the last iteration and render the filled-in q(x)");
  viz_cmd->add_option("--out-dir", viz.out_dir, "output directory")->required();
  viz_cmd->add_flag("--ppm", viz.ppm, "write PPM instead of PNG");

  try {
    app.parse(argc, argv);
    if (generate->parsed()) return run_generate(gen);
    if (train_cmd->parsed()) return run_train(tr);
    if (eval_cmd->parsed()) return run_eval(ev);
    if (viz_cmd->parsed()) return run_visualize(viz);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
