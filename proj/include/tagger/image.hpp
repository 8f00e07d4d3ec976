#ifndef TAGGER_IMAGE_HPP_
#define TAGGER_IMAGE_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "tagger/tag.hpp"
#include "tagger/tensor.hpp"

namespace tagger::vis {

struct ImageRgb {
  std::size_t width = 0, height = 0;
  std::vector<std::uint8_t> pixels;  // 3 bytes per pixel, row-major

  ImageRgb() = default;
  ImageRgb(std::size_t w, std::size_t h) : width(w), height(h), pixels(3 * w * h, 0) {}
  void set(std::size_t x, std::size_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

// Self-contained PNG encoder: 8-bit RGB/grayscale, store-mode deflate, no
// interlace, no external compression library.
std::string png_bytes_rgb(const ImageRgb& img);
std::string png_bytes_gray(std::size_t width, std::size_t height,
                           const std::vector<std::uint8_t>& pixels);
void write_png(const std::string& path, const ImageRgb& img);

// Binary PPM (P6) fallback for zero-dependency viewers.
std::string ppm_bytes_rgb(const ImageRgb& img);
void write_ppm(const std::string& path, const ImageRgb& img);

struct Rgb {
  std::uint8_t r, g, b;
};

// Fixed group palette; group k maps to entry k mod 4.
extern const std::array<Rgb, 4> kGroupPalette;

// One row of panels for one example at one iteration:
// [m_1..m_K | z_1..z_K | argmax segmentation | q(x)], each panel height x width
// pixels upscaled by `scale` with white gutters. Values are clamped to [0,1]
// for display.
ImageRgb render_iteration(const tag::GroupState& state, const ad::Tensor& recon,
                          std::size_t example, std::size_t height, std::size_t width,
                          std::size_t scale = 4);

// Same layout with externally supplied masks (used for ablation panels).
ImageRgb render_panels(const ad::Tensor& m, const ad::Tensor& z, const ad::Tensor& recon,
                       std::size_t example, std::size_t height, std::size_t width,
                       std::size_t scale = 4);

}  // namespace tagger::vis

#endif  // TAGGER_IMAGE_HPP_
