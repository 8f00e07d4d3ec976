#ifndef TAGGER_EVAL_HPP_
#define TAGGER_EVAL_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "tagger/data.hpp"
#include "tagger/ladder.hpp"
#include "tagger/tag.hpp"

namespace tagger::eval {

// Hardened segmentation: label(j) = argmax_k m[k,j], ties toward smaller k.
std::vector<int> segmentation_from_masks_row(const ad::Tensor& m, std::size_t example);
std::vector<std::vector<int>> segmentation_from_masks(const ad::Tensor& m);

// Adjusted mutual information with the hypergeometric expected-MI model and
// max-entropy normalization. Both label vectors must have equal length.
// Identical single-cluster pairs score 1; other degenerate denominators 0.
double ami(const std::vector<int>& u, const std::vector<int>& v);

// Drops elements whose ignore flag is set, then scores the rest.
double ami_masked(const std::vector<int>& truth, const std::vector<int>& pred,
                  const std::uint8_t* ignore);

// Mean AMI over a batch of mask tensors against per-pixel ground truth.
// Examples with no scoreable pixels are skipped.
double mean_ami(const ad::Tensor& m, const data::DatasetBundle& bundle, std::size_t first_example);

// Fraction of truth-class instances missing from the k highest-probability
// classes (ties toward smaller class index). Reproduces the documented chance
// levels exactly: top-1 on one-digit data gives 90%, top-2 on distinct-pair
// data gives 80%.
double topk_error(const ad::Tensor& predictions, const std::vector<std::vector<int>>& truth_sets,
                  int k);

struct EvalOptions {
  std::size_t groups = 4;  // may differ from the training K
  int iterations = 5;      // T_eval
  std::size_t batch_size = 100;
  bool eval_noise_in_likelihood = true;
  bool with_ami = true;
  bool with_classes = true;
  std::uint64_t rng_seed = 0;
};

struct EvalReport {
  std::vector<double> cost_per_iteration;  // C_i averaged over the dataset
  bool has_ami = false;
  double ami = 0.0;
  bool has_top_error = false;
  double top_error = 0.0;
  int top_k = 0;
  std::size_t example_count = 0;
  bool simplex_ok = true;  // every emitted mask satisfied the Eq. 3 conditions

  std::string to_tsv() const;
};

// Clean-input evaluation of a trained model: per-iteration denoising cost,
// AMI of the final-iteration masks (when ground truth is present), and top-k
// classification error (when the model has a class head and the data carries
// class labels).
EvalReport evaluate_model(TaggerParams& model, const tag::CorruptionSpec& corruption,
                          const data::DatasetBundle& bundle, const EvalOptions& opts);

}  // namespace tagger::eval

#endif  // TAGGER_EVAL_HPP_
