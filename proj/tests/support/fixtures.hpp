#ifndef TAGGER_TESTS_FIXTURES_HPP_
#define TAGGER_TESTS_FIXTURES_HPP_

#include <string>
#include <utility>
#include <vector>

#include "tagger/data.hpp"
#include "tagger/ladder.hpp"
#include "tagger/rng.hpp"
#include "tagger/tag.hpp"

namespace testsupport {

// A complete Tagger forward run frozen to one corrupted input and one initial
// state, so finite differences see a deterministic function of the parameters.
struct FrozenForward {
  tagger::TaggerParams* model = nullptr;
  tagger::ad::Tensor x;
  tagger::ad::Tensor x_tilde;
  tagger::tag::GroupState state0;
  tagger::tag::ForwardConfig cfg;

  tagger::tag::Trajectory run(tagger::ad::Tape& tape) const {
    tagger::ad::BoundParams bound = bind_params(tape, model->params);
    auto mapping = make_mapping(bound, *model, x.dim(0), cfg.groups, cfg.training);
    tagger::ad::Var v;
    if (model->config.mode == tagger::tag::DataMode::kContinuous) {
      v = tagger::bind_variance(tape, bound);
    }
    return tagger::tag::tagger_forward_from(tape, x, x_tilde, state0, cfg, mapping, v);
  }

  double loss() const {
    tagger::ad::Tape tape;
    return run(tape).total_cost;
  }

  std::vector<std::pair<std::string, tagger::ad::Tensor>> grads() const {
    tagger::ad::Tape tape;
    tagger::ad::BoundParams bound = bind_params(tape, model->params);
    auto mapping = make_mapping(bound, *model, x.dim(0), cfg.groups, cfg.training);
    tagger::ad::Var v;
    if (model->config.mode == tagger::tag::DataMode::kContinuous) {
      v = tagger::bind_variance(tape, bound);
    }
    auto traj = tagger::tag::tagger_forward_from(tape, x, x_tilde, state0, cfg, mapping, v);
    tape.backward(traj.cost_var);
    return collect_grads(tape, model->params, bound);
  }
};

// Builds a small model plus frozen inputs for gradient checks and property
// tests. Binary mode draws x from {0,1}; continuous mode from [0,1].
inline FrozenForward make_frozen(tagger::TaggerParams& model, std::size_t batch,
                                 std::size_t groups, int iterations, std::uint64_t seed,
                                 bool training = true) {
  using tagger::tag::DataMode;
  tagger::Rng rng(seed);
  std::size_t n = model.config.input_dim;
  FrozenForward f;
  f.model = &model;
  f.cfg.groups = groups;
  f.cfg.iterations = iterations;
  f.cfg.corruption.mode = model.config.mode;
  f.cfg.corruption.sigma = 0.2;
  f.cfg.corruption.beta = 0.2;
  f.cfg.training = training;
  f.cfg.data_mean = 0.4;

  f.x = tagger::ad::Tensor({batch, n});
  if (model.config.mode == DataMode::kBinary) {
    for (std::size_t i = 0; i < f.x.size(); ++i) f.x[i] = rng.bernoulli(0.4) ? 1.0 : 0.0;
  } else {
    for (std::size_t i = 0; i < f.x.size(); ++i) f.x[i] = rng.uniform();
  }
  f.x_tilde = training ? corrupt(f.x, f.cfg.corruption, rng) : f.x;
  f.state0 = tagger::tag::init_state(batch, groups, n, f.cfg.data_mean, rng);
  return f;
}

inline tagger::TaggerParams make_tiny_model(std::size_t input_dim, tagger::tag::DataMode mode,
                                            std::size_t hidden,
                                            std::vector<std::size_t> layers,
                                            tagger::ad::NormMode norm, std::uint64_t seed,
                                            std::size_t class_count = 0) {
  tagger::LadderConfig config;
  config.input_dim = input_dim;
  config.hidden_width = hidden;
  config.layer_sizes = std::move(layers);
  config.norm = norm;
  config.mode = mode;
  config.class_count = class_count;
  tagger::Rng rng(seed);
  return tagger::TaggerParams::init(config, rng);
}

// --- Synthetic digit fixtures -------------------------------------------------

// 5x7 glyph bitmaps for 0-9, scaled x3 and jittered, used when real MNIST IDX
// files are not available.
inline const char* digit_glyph(int digit) {
  static const char* glyphs[10] = {
      "01110 10001 10011 10101 11001 10001 01110",  // 0
      "00100 01100 00100 00100 00100 00100 01110",  // 1
      "01110 10001 00001 00010 00100 01000 11111",  // 2
      "11111 00010 00100 00010 00001 10001 01110",  // 3
      "00010 00110 01010 10010 11111 00010 00010",  // 4
      "11111 10000 11110 00001 00001 10001 01110",  // 5
      "00110 01000 10000 11110 10001 10001 01110",  // 6
      "11111 00001 00010 00100 01000 01000 01000",  // 7
      "01110 10001 10001 01110 10001 10001 01110",  // 8
      "01110 10001 10001 01111 00001 00010 01100",  // 9
  };
  return glyphs[digit];
}

struct SyntheticDigits {
  tagger::data::IdxImages images;
  std::vector<std::uint8_t> labels;
};

inline SyntheticDigits synthetic_digits(std::size_t count, std::uint64_t seed) {
  tagger::Rng rng(seed);
  SyntheticDigits out;
  out.images.count = count;
  out.images.rows = 28;
  out.images.cols = 28;
  out.images.pixels.assign(count * 28 * 28, 0);
  for (std::size_t i = 0; i < count; ++i) {
    int digit = int(rng.uniform_int(10));
    out.labels.push_back(std::uint8_t(digit));
    const char* glyph = digit_glyph(digit);
    // 5x7 glyph, x3 scale -> 15x21; jitter keeps it inside the 28x28 frame.
    int ox = 6 + int(rng.uniform_int(5)) - 2;
    int oy = 3 + int(rng.uniform_int(5)) - 2;
    std::uint8_t* img = out.images.pixels.data() + i * 28 * 28;
    int col = 0, row = 0;
    for (const char* p = glyph; *p; ++p) {
      if (*p == ' ') {
        ++row;
        col = 0;
        continue;
      }
      if (*p == '1') {
        for (int dy = 0; dy < 3; ++dy) {
          for (int dx = 0; dx < 3; ++dx) {
            int y = oy + row * 3 + dy, x = ox + col * 3 + dx;
            if (y >= 0 && y < 28 && x >= 0 && x < 28) img[y * 28 + x] = 255;
          }
        }
      }
      ++col;
    }
  }
  return out;
}

}  // namespace testsupport

#endif  // TAGGER_TESTS_FIXTURES_HPP_
