#include "tagger/data.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tagger/util.hpp"

namespace tagger::data {

using ad::Shape;
using ad::Tensor;
using json = nlohmann::json;

ad::Tensor DatasetBundle::example(std::size_t i) const {
  if (i >= count()) throw ContractError("example index " + std::to_string(i) + " out of range");
  std::size_t n = pixels();
  std::vector<double> row(inputs.data() + i * n, inputs.data() + (i + 1) * n);
  return Tensor({1, n}, std::move(row));
}

DatasetBundle DatasetBundle::slice(std::size_t from, std::size_t to) const {
  if (from >= to || to > count()) throw ContractError("bad slice range");
  DatasetBundle out = *this;
  std::size_t n = pixels();
  out.inputs = Tensor({to - from, n},
                      std::vector<double>(inputs.data() + from * n, inputs.data() + to * n));
  out.labels.assign(labels.begin() + from * n, labels.begin() + to * n);
  out.ignore.assign(ignore.begin() + from * n, ignore.begin() + to * n);
  if (has_classes) {
    out.classes.assign(classes.begin() + from, classes.begin() + to);
  }
  return out;
}

void DatasetBundle::validate() const {
  std::size_t n = count() * pixels();
  if (labels.size() != n || ignore.size() != n) {
    throw DataError("bundle label/ignore size does not match inputs");
  }
  if (has_classes && classes.size() != count()) {
    throw DataError("bundle class labels do not match example count");
  }
}

// ---------------------------------------------------------------------------
// Shapes.

std::array<std::array<std::uint8_t, kSpriteSide * kSpriteSide>, 3> shape_sprites() {
  std::array<std::array<std::uint8_t, kSpriteSide * kSpriteSide>, 3> sprites{};
  auto& square = sprites[0];
  auto& tri_up = sprites[1];
  auto& tri_down = sprites[2];
  for (std::size_t r = 0; r < kSpriteSide; ++r) {
    for (std::size_t c = 0; c < kSpriteSide; ++c) {
      square[r * kSpriteSide + c] = 1;
      bool up = std::abs(double(c) - 3.5) <= (double(r) + 1.0) / 2.0;
      tri_up[r * kSpriteSide + c] = up ? 1 : 0;
      tri_down[(kSpriteSide - 1 - r) * kSpriteSide + c] = up ? 1 : 0;
    }
  }
  return sprites;
}

std::string sprite_doc_text() {
  static const char* names[3] = {"square", "triangle-up", "triangle-down"};
  auto sprites = shape_sprites();
  std::ostringstream out;
  out << "Sprite bitmaps used by the Shapes generator (8x8, # = filled).\n";
  for (int s = 0; s < 3; ++s) {
    out << "\n" << names[s] << "\n";
    for (std::size_t r = 0; r < kSpriteSide; ++r) {
      for (std::size_t c = 0; c < kSpriteSide; ++c) {
        out << (sprites[std::size_t(s)][r * kSpriteSide + c] ? '#' : '.');
      }
      out << "\n";
    }
  }
  return out.str();
}

DatasetBundle generate_shapes(std::size_t count, std::uint64_t seed) {
  if (count < 1) throw ContractError("generate_shapes needs count >= 1");
  const std::size_t side = kShapesSide;
  const std::size_t n = side * side;
  const std::size_t placements = side - kSpriteSide + 1;  // sprite stays fully inside
  const auto sprites = shape_sprites();

  DatasetBundle bundle;
  bundle.dataset = "shapes";
  bundle.mode = tag::DataMode::kBinary;
  bundle.height = side;
  bundle.width = side;
  bundle.seed = seed;
  bundle.inputs = Tensor({count, n});
  bundle.labels.assign(count * n, 0);
  bundle.ignore.assign(count * n, 0);

  std::vector<std::uint8_t> coverage(n);
  for (std::size_t i = 0; i < count; ++i) {
    // Independent per-example stream so generation order never matters.
    Rng rng(seed ^ std::uint64_t(i));
    std::fill(coverage.begin(), coverage.end(), 0);
    std::uint8_t* label_row = bundle.labels.data() + i * n;
    std::uint8_t* ignore_row = bundle.ignore.data() + i * n;
    double* input_row = bundle.inputs.data() + i * n;
    for (std::size_t sprite = 0; sprite < 3; ++sprite) {
      std::size_t type = rng.uniform_int(3);
      std::size_t top = rng.uniform_int(placements);
      std::size_t left = rng.uniform_int(placements);
      const auto& mask = sprites[type];
      for (std::size_t r = 0; r < kSpriteSide; ++r) {
        for (std::size_t c = 0; c < kSpriteSide; ++c) {
          if (!mask[r * kSpriteSide + c]) continue;
          std::size_t px = (top + r) * side + (left + c);
          input_row[px] = 1.0;
          label_row[px] = std::uint8_t(sprite + 1);  // later sprites occlude
          ++coverage[px];
        }
      }
    }
    for (std::size_t px = 0; px < n; ++px) {
      ignore_row[px] = (coverage[px] == 0 || coverage[px] >= 2) ? 1 : 0;
    }
  }
  bundle.data_mean = ad::value_mean(bundle.inputs);
  return bundle;
}

// ---------------------------------------------------------------------------
// IDX files (big-endian, standard MNIST magic numbers).

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803u;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801u;

std::uint32_t read_u32_be(const std::string& bytes, std::size_t offset) {
  if (offset + 4 > bytes.size()) {
    throw FormatError("IDX file truncated at offset " + std::to_string(offset));
  }
  const auto* p = reinterpret_cast<const std::uint8_t*>(bytes.data() + offset);
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

void append_u32_be(std::string& out, std::uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char(v >> 16));
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}

}  // namespace

IdxImages load_idx_images(const std::string& path) {
  std::string bytes = read_file(path);
  std::uint32_t magic = read_u32_be(bytes, 0);
  if (magic != kIdxImagesMagic) {
    std::ostringstream msg;
    msg << "bad IDX image magic 0x" << std::hex << magic << " at offset 0 in " << path;
    throw FormatError(msg.str());
  }
  IdxImages images;
  images.count = read_u32_be(bytes, 4);
  images.rows = read_u32_be(bytes, 8);
  images.cols = read_u32_be(bytes, 12);
  std::size_t need = 16 + images.count * images.rows * images.cols;
  if (bytes.size() < need) {
    throw FormatError("IDX file truncated at offset " + std::to_string(bytes.size()) +
                      " (expected " + std::to_string(need) + " bytes): " + path);
  }
  images.pixels.assign(bytes.begin() + 16, bytes.begin() + std::ptrdiff_t(need));
  return images;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  std::string bytes = read_file(path);
  std::uint32_t magic = read_u32_be(bytes, 0);
  if (magic != kIdxLabelsMagic) {
    std::ostringstream msg;
    msg << "bad IDX label magic 0x" << std::hex << magic << " at offset 0 in " << path;
    throw FormatError(msg.str());
  }
  std::size_t count = read_u32_be(bytes, 4);
  std::size_t need = 8 + count;
  if (bytes.size() < need) {
    throw FormatError("IDX file truncated at offset " + std::to_string(bytes.size()) +
                      " (expected " + std::to_string(need) + " bytes): " + path);
  }
  std::vector<std::uint8_t> labels(bytes.begin() + 8, bytes.begin() + std::ptrdiff_t(need));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] > 9) {
      throw FormatError("IDX label " + std::to_string(labels[i]) + " out of range at index " +
                        std::to_string(i));
    }
  }
  return labels;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    throw DataError("IDX image buffer does not match dimensions");
  }
  std::string out;
  append_u32_be(out, kIdxImagesMagic);
  append_u32_be(out, std::uint32_t(images.count));
  append_u32_be(out, std::uint32_t(images.rows));
  append_u32_be(out, std::uint32_t(images.cols));
  out.append(images.pixels.begin(), images.pixels.end());
  write_file(path, out);
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::string out;
  append_u32_be(out, kIdxLabelsMagic);
  append_u32_be(out, std::uint32_t(labels.size()));
  out.append(labels.begin(), labels.end());
  write_file(path, out);
}

// ---------------------------------------------------------------------------
// Textures and TexturedMNIST.

double TextureBank::eval(const Entry& e, double x, double y, double phase) {
  double along = x * std::cos(e.orientation) + y * std::sin(e.orientation);
  return 0.5 + 0.5 * std::sin(2.0 * M_PI * e.frequency * along + phase);
}

double TextureBank::value(std::size_t index, double x, double y, double phase) const {
  return eval(entries.at(index), x, y, phase);
}

TextureBank texture_bank() {
  static const double freqs[5] = {0.08, 0.12, 0.16, 0.20, 0.24};
  static const double thetas[4] = {0.0, M_PI / 4.0, M_PI / 2.0, 3.0 * M_PI / 4.0};
  TextureBank bank;
  for (double f : freqs) {
    for (double th : thetas) bank.entries.push_back({f, th});
  }
  return bank;
}

DatasetBundle generate_textured_mnist(std::size_t count, int digits, const IdxImages& images,
                                      const std::vector<std::uint8_t>& labels,
                                      std::uint64_t seed) {
  if (digits != 1 && digits != 2) throw ContractError("textured MNIST supports 1 or 2 digits");
  if (count < 1) throw ContractError("generate_textured_mnist needs count >= 1");
  if (images.count == 0 || images.rows != 28 || images.cols != 28) {
    throw DataError("textured MNIST needs 28x28 IDX digit images");
  }
  if (labels.size() != images.count) {
    throw DataError("IDX label count does not match image count");
  }
  const std::size_t side = 28;
  const std::size_t n = side * side;
  const TextureBank bank = texture_bank();
  const std::size_t bank_size = bank.entries.size();

  DatasetBundle bundle;
  bundle.dataset = digits == 2 ? "tmnist2" : "tmnist1";
  bundle.mode = tag::DataMode::kContinuous;
  bundle.height = side;
  bundle.width = side;
  bundle.seed = seed;
  bundle.inputs = Tensor({count, n});
  bundle.labels.assign(count * n, 0);
  bundle.ignore.assign(count * n, 0);
  bundle.has_classes = true;
  bundle.classes.assign(count, {kNoClass, kNoClass});

  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(seed ^ std::uint64_t(i));
    double* input_row = bundle.inputs.data() + i * n;
    std::uint8_t* label_row = bundle.labels.data() + i * n;

    std::size_t bg = rng.uniform_int(bank_size);
    double bg_phase = rng.uniform(0.0, 2.0 * M_PI);
    for (std::size_t r = 0; r < side; ++r) {
      for (std::size_t c = 0; c < side; ++c) {
        input_row[r * side + c] = bank.value(bg, double(c), double(r), bg_phase);
      }
    }

    for (int d = 0; d < digits; ++d) {
      std::size_t digit_index = rng.uniform_int(images.count);
      // Digit texture from a different bank index than the background.
      std::size_t tex = rng.uniform_int(bank_size - 1);
      if (tex >= bg) ++tex;
      double phase = rng.uniform(0.0, 2.0 * M_PI);
      int shift = digits == 2 ? (d == 0 ? -2 : 2) : 0;
      const std::uint8_t* mnist = images.pixels.data() + digit_index * n;
      for (std::size_t r = 0; r < side; ++r) {
        for (std::size_t c = 0; c < side; ++c) {
          int sr = int(r) - shift, sc = int(c) - shift;
          if (sr < 0 || sr >= int(side) || sc < 0 || sc >= int(side)) continue;
          // Digit region: intensity above 0.5 on the [0,1] scale.
          if (double(mnist[std::size_t(sr) * side + std::size_t(sc)]) / 255.0 <= 0.5) continue;
          input_row[r * side + c] = bank.value(tex, double(c), double(r), phase);
          label_row[r * side + c] = std::uint8_t(d + 1);
        }
      }
      bundle.classes[i][std::size_t(d)] = labels[digit_index];
    }
  }
  bundle.data_mean = ad::value_mean(bundle.inputs);
  return bundle;
}

// ---------------------------------------------------------------------------
// TAGD container.

namespace {

constexpr char kMagic[4] = {'T', 'A', 'G', 'D'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void append_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

template <class T>
T read_le(const std::string& bytes, std::size_t& offset) {
  if (offset + sizeof(T) > bytes.size()) {
    throw FormatError("container truncated at offset " + std::to_string(offset));
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= T(std::uint8_t(bytes[offset + i])) << (8 * i);
  }
  offset += sizeof(T);
  return v;
}

}  // namespace

void Container::add_f64(const std::string& name, const Tensor& tensor) {
  if (find(name)) throw ContractError("duplicate container entry: " + name);
  Entry e;
  e.name = name;
  e.dtype = 1;
  e.dims = tensor.dims();
  e.f64 = tensor;
  entries_.push_back(std::move(e));
}

void Container::add_u8(const std::string& name, Shape dims, std::vector<std::uint8_t> bytes) {
  if (find(name)) throw ContractError("duplicate container entry: " + name);
  if (ad::shape_size(dims) != bytes.size()) {
    throw ShapeError("u8 entry size does not match shape " + ad::shape_str(dims));
  }
  Entry e;
  e.name = name;
  e.dtype = 0;
  e.dims = std::move(dims);
  e.u8 = std::move(bytes);
  entries_.push_back(std::move(e));
}

const Container::Entry* Container::find(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const Tensor* Container::find_f64(const std::string& name) const {
  const Entry* e = find(name);
  return (e && e->dtype == 1) ? &e->f64 : nullptr;
}

const std::vector<std::uint8_t>* Container::find_u8(const std::string& name) const {
  const Entry* e = find(name);
  return (e && e->dtype == 0) ? &e->u8 : nullptr;
}

Shape Container::dims_of(const std::string& name) const {
  const Entry* e = find(name);
  if (!e) throw FormatError("container entry not found: " + name);
  return e->dims;
}

const Tensor& Container::require_f64(const std::string& name) const {
  const Tensor* t = find_f64(name);
  if (!t) throw FormatError("container is missing f64 entry '" + name + "'");
  return *t;
}

const std::vector<std::uint8_t>& Container::require_u8(const std::string& name) const {
  const std::vector<std::uint8_t>* v = find_u8(name);
  if (!v) throw FormatError("container is missing u8 entry '" + name + "'");
  return *v;
}

std::vector<std::string> Container::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::string Container::serialize() const {
  std::string out;
  out.append(kMagic, 4);
  append_le<std::uint32_t>(out, kVersion);
  append_le<std::uint32_t>(out, std::uint32_t(entries_.size()));
  for (const auto& e : entries_) {
    if (e.name.size() > 0xFFFF) throw ContractError("container entry name too long");
    for (char ch : e.name) {
      if (std::uint8_t(ch) > 127) throw ContractError("container entry name must be ASCII");
    }
    append_le<std::uint16_t>(out, std::uint16_t(e.name.size()));
    out.append(e.name);
    out.push_back(char(e.dtype));
    out.push_back(char(e.dims.size()));
    for (std::size_t d : e.dims) append_le<std::uint64_t>(out, std::uint64_t(d));
    if (e.dtype == 0) {
      out.append(e.u8.begin(), e.u8.end());
    } else {
      // Doubles as little-endian IEEE-754 bytes.
      for (double v : e.f64.values()) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        append_le<std::uint64_t>(out, bits);
      }
    }
  }
  append_le<std::uint32_t>(out, std::uint32_t(metadata.size()));
  out.append(metadata);
  return out;
}

void Container::write(const std::string& path) const { write_file(path, serialize()); }

Container Container::parse(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("not a TAGD container (bad magic at offset 0)");
  }
  std::size_t offset = 4;
  std::uint32_t version = read_le<std::uint32_t>(bytes, offset);
  if (version != kVersion) {
    throw FormatError("unsupported TAGD container version " + std::to_string(version));
  }
  std::uint32_t count = read_le<std::uint32_t>(bytes, offset);
  Container c;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint16_t name_len = read_le<std::uint16_t>(bytes, offset);
    if (offset + name_len > bytes.size()) {
      throw FormatError("container truncated in entry name at offset " + std::to_string(offset));
    }
    Entry e;
    e.name.assign(bytes, offset, name_len);
    offset += name_len;
    e.dtype = std::uint8_t(read_le<std::uint8_t>(bytes, offset));
    std::uint8_t ndim = read_le<std::uint8_t>(bytes, offset);
    for (std::uint8_t d = 0; d < ndim; ++d) {
      e.dims.push_back(std::size_t(read_le<std::uint64_t>(bytes, offset)));
    }
    std::size_t elems = ad::shape_size(e.dims);
    if (e.dtype == 0) {
      if (offset + elems > bytes.size()) {
        throw FormatError("container truncated in entry '" + e.name + "' at offset " +
                          std::to_string(offset));
      }
      e.u8.assign(bytes.begin() + std::ptrdiff_t(offset),
                  bytes.begin() + std::ptrdiff_t(offset + elems));
      offset += elems;
    } else if (e.dtype == 1) {
      std::vector<double> vals(elems);
      for (std::size_t v = 0; v < elems; ++v) {
        std::uint64_t bits = read_le<std::uint64_t>(bytes, offset);
        std::memcpy(&vals[v], &bits, 8);
      }
      e.f64 = Tensor(e.dims, std::move(vals));
    } else {
      throw FormatError("unknown dtype " + std::to_string(e.dtype) + " in entry '" + e.name +
                        "'");
    }
    c.entries_.push_back(std::move(e));
  }
  std::uint32_t meta_len = read_le<std::uint32_t>(bytes, offset);
  if (offset + meta_len > bytes.size()) {
    throw FormatError("container truncated in metadata at offset " + std::to_string(offset));
  }
  c.metadata.assign(bytes, offset, meta_len);
  return c;
}

Container Container::read(const std::string& path) { return parse(read_file(path)); }

Container to_container(const DatasetBundle& bundle) {
  bundle.validate();
  Container c;
  c.add_f64("inputs", bundle.inputs);
  c.add_u8("labels", {bundle.count(), bundle.pixels()}, bundle.labels);
  c.add_u8("ignore", {bundle.count(), bundle.pixels()}, bundle.ignore);
  if (bundle.has_classes) {
    std::vector<std::uint8_t> flat;
    flat.reserve(bundle.classes.size() * 2);
    for (const auto& pair : bundle.classes) {
      flat.push_back(pair[0]);
      flat.push_back(pair[1]);
    }
    c.add_u8("classes", {bundle.count(), 2}, std::move(flat));
  }
  json meta;
  meta["dataset"] = bundle.dataset;
  meta["mode"] = tag::data_mode_name(bundle.mode);
  meta["height"] = bundle.height;
  meta["width"] = bundle.width;
  meta["seed"] = bundle.seed;
  meta["data_mean"] = bundle.data_mean;
  c.metadata = meta.dump();
  return c;
}

DatasetBundle bundle_from_container(const Container& c) {
  DatasetBundle bundle;
  bundle.inputs = c.require_f64("inputs");
  if (bundle.inputs.ndim() != 2) throw FormatError("bundle inputs must be [B,N]");
  bundle.labels = c.require_u8("labels");
  bundle.ignore = c.require_u8("ignore");
  if (const auto* classes = c.find_u8("classes")) {
    bundle.has_classes = true;
    bundle.classes.resize(classes->size() / 2);
    for (std::size_t i = 0; i < bundle.classes.size(); ++i) {
      bundle.classes[i] = {(*classes)[2 * i], (*classes)[2 * i + 1]};
    }
  }
  json meta = json::parse(c.metadata);
  bundle.dataset = meta.at("dataset").get<std::string>();
  bundle.mode = tag::parse_data_mode(meta.at("mode").get<std::string>());
  bundle.height = meta.at("height").get<std::size_t>();
  bundle.width = meta.at("width").get<std::size_t>();
  bundle.seed = meta.at("seed").get<std::uint64_t>();
  bundle.data_mean = meta.at("data_mean").get<double>();
  bundle.validate();
  return bundle;
}

DatasetBundle load_bundle(const std::string& path) {
  return bundle_from_container(Container::read(path));
}

void save_bundle(const std::string& path, const DatasetBundle& bundle) {
  to_container(bundle).write(path);
}

}  // namespace tagger::data
