#ifndef TAGGER_TAG_HPP_
#define TAGGER_TAG_HPP_

#include <functional>
#include <vector>

#include "tagger/nn.hpp"
#include "tagger/rng.hpp"
#include "tagger/tape.hpp"

namespace tagger::tag {

enum class DataMode { kContinuous, kBinary };

DataMode parse_data_mode(const std::string& s);
std::string data_mode_name(DataMode m);

// Input corruption: additive Gaussian noise for continuous data, bit flips
// for binary data. The same sigma/beta also parameterize the per-group
// likelihood terms inside the iteration.
struct CorruptionSpec {
  DataMode mode = DataMode::kBinary;
  double sigma = 0.2;  // gaussian std-dev (continuous)
  double beta = 0.2;   // flip probability (binary)

  void validate() const;
};

// Per-iteration group estimates. z holds the group reconstruction in input
// space: the Gaussian mean in continuous mode, the Bernoulli probability in
// binary mode. m is the per-element categorical posterior over groups.
struct GroupState {
  ad::Tensor z;  // [B,K,N]
  ad::Tensor m;  // [B,K,N], non-negative, sums to 1 over the group axis
  int iteration = 0;
};

bool mask_simplex_ok(const ad::Tensor& m, double tol = 1e-6);

// Graph handles for one iteration; valid only while the recording tape lives.
struct IterationVars {
  ad::Var z;         // state-space z
  ad::Var z_raw;     // pre-sigmoid network output (== z in continuous mode)
  ad::Var m;
  ad::Var m_logits;
  ad::Var log_m;
  ad::Var top;       // top encoder representation fed to the class head
  ad::Var cost;      // scalar C_i
};

// Record of a full T-iteration forward run.
struct Trajectory {
  std::vector<GroupState> states;        // T+1 entries including the init state
  std::vector<ad::Tensor> m_logits;      // T entries, for ablation at any iteration
  std::vector<ad::Tensor> recon;         // T entries, sum_k m_k z_k, [B,N]
  std::vector<double> costs;             // T entries, C_i per iteration
  double total_cost = 0.0;               // mean of costs
  ad::Tensor x_tilde;                    // the corrupted input actually used

  ad::Var cost_var;                      // scalar graph handle for backward()
  std::vector<IterationVars> vars;       // populated when keep_vars is set
};

// The parametric mapping supplied by the ladder module. Receives the four
// per-group inputs (each [B,K,N]) and produces the next z (state space and
// pre-sigmoid), group logits, and the top encoder representation.
struct MappingOutput {
  ad::Var z_state;
  ad::Var z_raw;
  ad::Var m_logits;
  ad::Var top;
};
using ParametricMapping = std::function<MappingOutput(ad::Tape&, ad::Var z, ad::Var m,
                                                      ad::Var delta_z, ad::Var lm)>;

struct ForwardConfig {
  std::size_t groups = 4;  // K
  int iterations = 3;      // T
  CorruptionSpec corruption;
  double data_mean = 0.5;
  bool training = true;  // corrupt the input; false evaluates on clean input
  // Keep sigma/beta in the likelihood terms when evaluating on clean input.
  bool eval_noise_in_likelihood = true;
  bool keep_vars = false;
};

// --- Elementary operations -------------------------------------------------

ad::Tensor corrupt(const ad::Tensor& x, const CorruptionSpec& spec, Rng& rng);

GroupState init_state(std::size_t batch, std::size_t groups, std::size_t elements,
                      double data_mean, Rng& rng);

// zhat = N(x_tilde; z, (v + sigma^2) I), elementwise. x_tilde broadcasts over
// the group axis.
ad::Var group_likelihood_continuous(ad::Tape& t, ad::Var x_tilde, ad::Var z, ad::Var v,
                                    double sigma);

struct BinaryLikelihood {
  ad::Var xi;    // q(x_tilde = 1 | group) = z(1-2beta) + beta
  ad::Var zhat;  // likelihood of the observed x_tilde under each group
};
BinaryLikelihood group_likelihood_binary(ad::Tape& t, ad::Var x_tilde, ad::Var z_prob,
                                         double beta);

// delta z = (x_tilde - z) * m * zhat.
ad::Var delta_z_continuous(ad::Tape& t, ad::Var x_tilde, ad::Var z, ad::Var m, ad::Var zhat);

// delta z = m / (sum_h xi_h m_h - 1 + x_tilde); the denominator stays in
// (beta, 1-beta) for beta > 0 and is clamped at 1e-9 in magnitude against
// float underflow.
ad::Var delta_z_binary(ad::Tape& t, ad::Var x_tilde, ad::Var m, ad::Var xi);

inline constexpr double kDeltaZDenomFloor = 1e-9;

// L(m): per-element normalization of zhat over groups. Columns whose group
// likelihoods are all zero fall back to uniform 1/K.
ad::Var likelihood_ratio(ad::Tape& t, ad::Var zhat);

// Negative log likelihood of the clean input under the group mixture,
// averaged over batch and elements. Continuous mode reads z as Gaussian
// means with variance v; binary mode reads z as pre-sigmoid logits of the
// per-group Bernoulli probability.
ad::Var mixture_cost(ad::Tape& t, ad::Var x, ad::Var z, ad::Var m, ad::Var v, DataMode mode);
// Stable internal form taking log m directly.
ad::Var mixture_cost_logm(ad::Tape& t, ad::Var x, ad::Var z, ad::Var log_m, ad::Var v,
                          DataMode mode);

// Suppresses group k before the final softmax: its logits drop to -1e9 and
// the surviving groups renormalize.
ad::Tensor ablate_group(const ad::Tensor& m_logits, std::size_t k);

ad::Tensor value_softmax_groups(const ad::Tensor& logits);  // softmax over axis 1 of [B,K,N]

// sum_k m_k z_k, the mixture estimate of the clean input.
ad::Tensor mixture_reconstruction(const ad::Tensor& m, const ad::Tensor& z);

// --- Forward runs ------------------------------------------------------------

// Corrupts (training) or passes through (evaluation), draws the initial
// state, and runs T iterations. v is the scalar group variance (continuous
// mode; pass an invalid Var in binary mode).
Trajectory tagger_forward(ad::Tape& t, const ad::Tensor& x, const ForwardConfig& cfg,
                          const ParametricMapping& mapping, ad::Var v, Rng& rng);

// Deterministic core used by gradient checks: the corrupted input and the
// initial state are supplied by the caller.
Trajectory tagger_forward_from(ad::Tape& t, const ad::Tensor& x, const ad::Tensor& x_tilde,
                               const GroupState& state0, const ForwardConfig& cfg,
                               const ParametricMapping& mapping, ad::Var v);

}  // namespace tagger::tag

#endif  // TAGGER_TAG_HPP_
