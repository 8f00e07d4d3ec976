#ifndef TAGGER_NN_HPP_
#define TAGGER_NN_HPP_

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "tagger/rng.hpp"
#include "tagger/tape.hpp"

namespace tagger::ad {

enum class NormMode { kBatch, kLayer };

NormMode parse_norm_mode(const std::string& s);
std::string norm_mode_name(NormMode m);

// Batch-mode running statistics, updated with momentum 0.99 during training
// and used verbatim at evaluation. Layer mode carries no state.
struct RunningStats {
  Tensor mean;  // [1, width]
  Tensor var;   // [1, width]
};

inline constexpr double kNormEps = 1e-6;
inline constexpr double kNormMomentum = 0.99;

// Zero-mean unit-variance normalization of a [rows, width] activation.
//   batch: per feature over rows; training batches need rows >= 2 and update
//          `stats`; evaluation reads `stats` and ignores batch composition.
//   layer: per row over features; stateless.
// The variance estimate is floored by kNormEps inside the square root, which
// subsumes the documented 1e-12 clamp.
Var normalize_layer(Tape& t, Var x, NormMode mode, RunningStats* stats, bool training);

// Ordered name -> tensor map. Insertion order is stable so checkpoints and
// optimizer sweeps are deterministic.
class ParamBank {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::size_t size() const { return items_.size(); }
  void clear();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Parameter leaves recorded on a tape for one forward pass.
struct BoundParams {
  Tape* tape = nullptr;
  std::unordered_map<std::string, Var> vars;

  Var operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars.count(name) > 0; }
};

BoundParams bind_params(Tape& t, const ParamBank& bank);

// Gradients for every parameter in `bank` after backward(); zeros where the
// loss never reached the parameter.
std::vector<std::pair<std::string, Tensor>> collect_grads(const Tape& t, const ParamBank& bank,
                                                          const BoundParams& bound);

Tensor gaussian_tensor(Rng& rng, Shape dims, double stddev);

}  // namespace tagger::ad

#endif  // TAGGER_NN_HPP_
