#include "tagger/image.hpp"

#include <algorithm>
#include <cmath>

#include "tagger/eval.hpp"
#include "tagger/util.hpp"

namespace tagger::vis {

void ImageRgb::set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g,
                   std::uint8_t b) {
  std::size_t i = 3 * (y * width + x);
  pixels[i] = r;
  pixels[i + 1] = g;
  pixels[i + 2] = b;
}

namespace {

std::uint32_t crc32(const std::uint8_t* data, std::size_t len, std::uint32_t crc = 0) {
  static std::uint32_t table[256];
  static bool ready = false;
  if (!ready) {
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      table[i] = c;
    }
    ready = true;
  }
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFF] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

std::uint32_t adler32(const std::uint8_t* data, std::size_t len) {
  std::uint32_t a = 1, b = 0;
  for (std::size_t i = 0; i < len; ++i) {
    a = (a + data[i]) % 65521u;
    b = (b + a) % 65521u;
  }
  return (b << 16) | a;
}

void append_u32_be(std::string& out, std::uint32_t v) {
  out.push_back(char(v >> 24));
  out.push_back(char(v >> 16));
  out.push_back(char(v >> 8));
  out.push_back(char(v));
}

void append_chunk(std::string& out, const char type[4], const std::string& payload) {
  append_u32_be(out, std::uint32_t(payload.size()));
  std::string body(type, 4);
  body += payload;
  out.append(body);
  append_u32_be(out, crc32(reinterpret_cast<const std::uint8_t*>(body.data()), body.size()));
}

// zlib stream with store-mode deflate blocks only.
std::string zlib_store(const std::string& raw) {
  std::string out;
  out.push_back(char(0x78));
  out.push_back(char(0x01));
  std::size_t offset = 0;
  do {
    std::size_t take = std::min<std::size_t>(raw.size() - offset, 65535);
    bool final = offset + take == raw.size();
    out.push_back(char(final ? 1 : 0));
    out.push_back(char(take & 0xFF));
    out.push_back(char((take >> 8) & 0xFF));
    out.push_back(char(~take & 0xFF));
    out.push_back(char((~take >> 8) & 0xFF));
    out.append(raw, offset, take);
    offset += take;
  } while (offset < raw.size());
  append_u32_be(out, adler32(reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()));
  return out;
}

std::string png_encode(std::size_t width, std::size_t height, int color_type,
                       const std::vector<std::uint8_t>& pixels) {
  std::size_t channels = color_type == 2 ? 3 : 1;
  if (pixels.size() != width * height * channels) {
    throw ShapeError("pixel buffer does not match image dimensions");
  }
  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  append_u32_be(ihdr, std::uint32_t(width));
  append_u32_be(ihdr, std::uint32_t(height));
  ihdr.push_back(char(8));           // bit depth
  ihdr.push_back(char(color_type));  // 0 = gray, 2 = rgb
  ihdr.push_back(char(0));
  ihdr.push_back(char(0));
  ihdr.push_back(char(0));  // no interlace
  append_chunk(out, "IHDR", ihdr);

  std::string raw;
  raw.reserve(height * (1 + width * channels));
  for (std::size_t y = 0; y < height; ++y) {
    raw.push_back(char(0));  // filter: none
    raw.append(reinterpret_cast<const char*>(pixels.data() + y * width * channels),
               width * channels);
  }
  append_chunk(out, "IDAT", zlib_store(raw));
  append_chunk(out, "IEND", "");
  return out;
}

std::uint8_t to_byte(double v) {
  double c = std::clamp(v, 0.0, 1.0);
  return std::uint8_t(std::lround(c * 255.0));
}

}  // namespace

std::string png_bytes_rgb(const ImageRgb& img) {
  return png_encode(img.width, img.height, 2, img.pixels);
}

std::string png_bytes_gray(std::size_t width, std::size_t height,
                           const std::vector<std::uint8_t>& pixels) {
  return png_encode(width, height, 0, pixels);
}

void write_png(const std::string& path, const ImageRgb& img) {
  write_file(path, png_bytes_rgb(img));
}

std::string ppm_bytes_rgb(const ImageRgb& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n255\n";
  out.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  return out;
}

void write_ppm(const std::string& path, const ImageRgb& img) {
  write_file(path, ppm_bytes_rgb(img));
}

const std::array<Rgb, 4> kGroupPalette = {{{231, 76, 60},   // red
                                           {46, 204, 113},  // green
                                           {52, 152, 219},  // blue
                                           {241, 196, 15}}};  // yellow

namespace {

constexpr std::size_t kGutter = 2;

void blit_gray(ImageRgb& img, std::size_t x0, const double* values, std::size_t height,
               std::size_t width, std::size_t scale) {
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      std::uint8_t v = to_byte(values[y * width + x]);
      for (std::size_t dy = 0; dy < scale; ++dy) {
        for (std::size_t dx = 0; dx < scale; ++dx) {
          img.set(x0 + x * scale + dx, y * scale + dy, v, v, v);
        }
      }
    }
  }
}

}  // namespace

ImageRgb render_panels(const ad::Tensor& m, const ad::Tensor& z, const ad::Tensor& recon,
                       std::size_t example, std::size_t height, std::size_t width,
                       std::size_t scale) {
  if (m.ndim() != 3 || !m.same_shape(z)) {
    throw ShapeError("render_panels expects matching [B,K,N] masks and reconstructions");
  }
  std::size_t groups = m.dim(1);
  std::size_t n = m.dim(2);
  if (n != height * width) throw ShapeError("panel geometry does not match tensor width");
  std::size_t panels = 2 * groups + 2;
  ImageRgb img(panels * width * scale + (panels - 1) * kGutter, height * scale);
  std::fill(img.pixels.begin(), img.pixels.end(), std::uint8_t(255));

  std::size_t x0 = 0;
  std::size_t stride = width * scale + kGutter;
  for (std::size_t g = 0; g < groups; ++g, x0 += stride) {
    blit_gray(img, x0, m.data() + (example * groups + g) * n, height, width, scale);
  }
  for (std::size_t g = 0; g < groups; ++g, x0 += stride) {
    blit_gray(img, x0, z.data() + (example * groups + g) * n, height, width, scale);
  }

  std::vector<int> seg = eval::segmentation_from_masks_row(m, example);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      Rgb c = kGroupPalette[std::size_t(seg[y * width + x]) % kGroupPalette.size()];
      for (std::size_t dy = 0; dy < scale; ++dy) {
        for (std::size_t dx = 0; dx < scale; ++dx) {
          img.set(x0 + x * scale + dx, y * scale + dy, c.r, c.g, c.b);
        }
      }
    }
  }
  x0 += stride;
  blit_gray(img, x0, recon.data() + example * n, height, width, scale);
  return img;
}

ImageRgb render_iteration(const tag::GroupState& state, const ad::Tensor& recon,
                          std::size_t example, std::size_t height, std::size_t width,
                          std::size_t scale) {
  return render_panels(state.m, state.z, recon, example, height, width, scale);
}

}  // namespace tagger::vis
