#ifndef TAGGER_DATA_HPP_
#define TAGGER_DATA_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tagger/rng.hpp"
#include "tagger/tag.hpp"
#include "tagger/tensor.hpp"

namespace tagger::data {

inline constexpr std::uint8_t kNoClass = 255;

// One generated dataset: inputs plus per-pixel ground-truth group labels,
// ignore flags and optional class labels.
struct DatasetBundle {
  ad::Tensor inputs;                  // [B, N], values in [0,1] ({0,1} binary)
  std::vector<std::uint8_t> labels;   // B*N, 0 = background, 1..S = instance
  std::vector<std::uint8_t> ignore;   // B*N, 1 = excluded from scoring
  std::vector<std::array<std::uint8_t, 2>> classes;  // per example; kNoClass padding
  bool has_classes = false;

  std::string dataset;  // shapes | tmnist1 | tmnist2
  tag::DataMode mode = tag::DataMode::kBinary;
  std::size_t height = 0, width = 0;
  std::uint64_t seed = 0;
  double data_mean = 0.0;

  std::size_t count() const { return inputs.empty() ? 0 : inputs.dim(0); }
  std::size_t pixels() const { return inputs.empty() ? 0 : inputs.dim(1); }
  const std::uint8_t* label_row(std::size_t i) const { return labels.data() + i * pixels(); }
  const std::uint8_t* ignore_row(std::size_t i) const { return ignore.data() + i * pixels(); }
  // Row view of one example as a [1, N] tensor.
  ad::Tensor example(std::size_t i) const;
  DatasetBundle slice(std::size_t from, std::size_t to) const;
  void validate() const;
};

// --- Shapes ------------------------------------------------------------------

inline constexpr std::size_t kShapesSide = 20;
inline constexpr std::size_t kSpriteSide = 8;

// Fixed 8x8 sprite masks: square, triangle-up, triangle-down. Frozen against
// docs/sprites.txt by a golden-file test.
std::array<std::array<std::uint8_t, kSpriteSide * kSpriteSide>, 3> shape_sprites();
std::string sprite_doc_text();

// 20x20 binary images with three sprites at uniform positions; labels mark
// the topmost sprite, ignore marks background and multi-coverage pixels.
DatasetBundle generate_shapes(std::size_t count, std::uint64_t seed);

// --- IDX ---------------------------------------------------------------------

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // count*rows*cols
};

IdxImages load_idx_images(const std::string& path);
std::vector<std::uint8_t> load_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

// --- Textured MNIST ------------------------------------------------------------

struct TextureBank {
  struct Entry {
    double frequency;    // cycles per pixel
    double orientation;  // radians
  };
  std::vector<Entry> entries;

  // 0.5 + 0.5 sin(2 pi f (x cos t + y sin t) + phase), x = column, y = row.
  static double eval(const Entry& entry, double x, double y, double phase);
  double value(std::size_t index, double x, double y, double phase) const;
};

// 5 frequencies x 4 orientations = 20 sinusoidal textures.
TextureBank texture_bank();

// 28x28 images: background texture plus `digits` (1 or 2) textured MNIST
// digit masks; the two-digit variant shifts them (-2,-2) and (+2,+2) and the
// later digit occludes.
DatasetBundle generate_textured_mnist(std::size_t count, int digits, const IdxImages& images,
                                      const std::vector<std::uint8_t>& labels,
                                      std::uint64_t seed);

// --- TAGD container -----------------------------------------------------------

// Binary tensor container: magic "TAGD", version 1, little-endian throughout,
// u8 and f64 entries, trailing length-prefixed UTF-8 metadata.
class Container {
 public:
  void add_f64(const std::string& name, const ad::Tensor& tensor);
  void add_u8(const std::string& name, ad::Shape dims, std::vector<std::uint8_t> data);

  const ad::Tensor* find_f64(const std::string& name) const;
  const std::vector<std::uint8_t>* find_u8(const std::string& name) const;
  ad::Shape dims_of(const std::string& name) const;
  const ad::Tensor& require_f64(const std::string& name) const;
  const std::vector<std::uint8_t>& require_u8(const std::string& name) const;

  std::vector<std::string> names() const;
  std::size_t entry_count() const { return entries_.size(); }

  std::string metadata;

  void write(const std::string& path) const;
  std::string serialize() const;
  static Container read(const std::string& path);
  static Container parse(const std::string& bytes);

 private:
  struct Entry {
    std::string name;
    std::uint8_t dtype = 0;  // 0 = u8, 1 = f64
    ad::Shape dims;
    std::vector<std::uint8_t> u8;
    ad::Tensor f64;
  };
  std::vector<Entry> entries_;
  const Entry* find(const std::string& name) const;
};

Container to_container(const DatasetBundle& bundle);
DatasetBundle bundle_from_container(const Container& container);
DatasetBundle load_bundle(const std::string& path);
void save_bundle(const std::string& path, const DatasetBundle& bundle);

}  // namespace tagger::data

#endif  // TAGGER_DATA_HPP_
