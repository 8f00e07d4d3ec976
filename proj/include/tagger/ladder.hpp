#ifndef TAGGER_LADDER_HPP_
#define TAGGER_LADDER_HPP_

#include <map>
#include <string>
#include <vector>

#include "tagger/nn.hpp"
#include "tagger/tag.hpp"

namespace tagger {

// Sizes and switches of the parametric mapping. layer_sizes are the encoder
// widths above the projected input of width hidden_width; an empty list
// degenerates to a single combinator on the projection itself.
struct LadderConfig {
  std::size_t input_dim = 0;     // N
  std::size_t hidden_width = 0;  // H
  std::vector<std::size_t> layer_sizes;
  ad::NormMode norm = ad::NormMode::kLayer;
  tag::DataMode mode = tag::DataMode::kBinary;
  std::size_t class_count = 0;  // 0 disables the classification head
  std::size_t head_width = 0;   // 0 defaults to the top encoder width

  void validate() const;
  std::size_t depth() const { return layer_sizes.size(); }
  // Widths per ladder level, level 0 = the projected input.
  std::vector<std::size_t> level_widths() const;
  std::size_t top_width() const { return level_widths().back(); }
};

// All trainable weights plus batch-norm running statistics. The same
// parameters serve every group and every iteration; nothing here depends on
// K or T.
struct TaggerParams {
  LadderConfig config;
  ad::ParamBank params;
  std::map<std::string, ad::RunningStats> stats;  // ordered for reproducible checkpoints
  double data_mean = 0.5;

  static TaggerParams init(const LadderConfig& config, Rng& rng);
  // Adds the two fresh classification layers (semi-supervised phase 2).
  void add_class_head(Rng& rng);
  bool has_class_head() const;

  ad::RunningStats* stats_for(const std::string& site);
  std::size_t parameter_count() const;
};

// [z, m, dz, L(m)] (each [B,K,N]) -> concatenated, projected, normalized and
// rectified hidden representation h of shape [B*K, H].
ad::Var input_projection(ad::Tape& t, const ad::BoundParams& p, TaggerParams& model, ad::Var z,
                         ad::Var m, ad::Var delta_z, ad::Var lm, bool training);

struct LadderOut {
  ad::Var u;    // bottom reconstruction, [R, H]
  ad::Var top;  // top encoder representation, [R, top_width]
};

// Encoder up, decoder down with the sigmoid-gated vanilla combinator at every
// level. No injected noise and no per-layer denoising costs.
LadderOut ladder_forward(ad::Tape& t, const ad::BoundParams& p, TaggerParams& model, ad::Var h,
                         bool training);

struct OutputProjection {
  ad::Var z_state;   // next z in input space (sigmoid applied in binary mode)
  ad::Var z_raw;     // linear output before the mode activation
  ad::Var m_logits;  // group logits; softmax over groups happens downstream
};

OutputProjection output_projection(ad::Tape& t, const ad::BoundParams& p, ad::Var u,
                                   std::size_t batch, std::size_t groups, tag::DataMode mode);

// Two fresh layers on the top encoder representation; per-group softmax over
// C true classes plus one 'no class' neuron. Returns [B,K,C+1].
ad::Var class_head(ad::Tape& t, const ad::BoundParams& p, TaggerParams& model, ad::Var top,
                   std::size_t batch, std::size_t groups, bool training);

// Drops the no-class column, sums over groups and renormalizes each row to a
// distribution over the C classes. Rows with vanishing mass become uniform.
ad::Var combine_class_predictions(ad::Tape& t, ad::Var per_group);

// The whole mapping packaged for the TAG loop.
tag::ParametricMapping make_mapping(const ad::BoundParams& p, TaggerParams& model,
                                    std::size_t batch, std::size_t groups, bool training);

// Scalar group variance v = exp(log_v) bound on the tape (continuous mode).
ad::Var bind_variance(ad::Tape& t, const ad::BoundParams& p);

inline constexpr double kInitialVariance = 0.25;

}  // namespace tagger

#endif  // TAGGER_LADDER_HPP_
