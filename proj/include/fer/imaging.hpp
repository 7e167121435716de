#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace fer::imaging {

// Grayscale raster, row-major, top-left origin. Carries either 8-bit-sourced
// samples in [0, 255] or normalized samples in [0, 1]; which one is a caller
// contract, not a type distinction.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> samples;  // width * height values

  Image() = default;
  Image(int w, int h) : width(w), height(h), samples(static_cast<std::size_t>(w) * h, 0.0) {}
  Image(int w, int h, std::vector<double> s) : width(w), height(h), samples(std::move(s)) {}

  double at(int x, int y) const { return samples[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return samples[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
};

// Sobel gradient magnitudes; same dimensions as the source image.
struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<double> magnitudes;

  double at(int x, int y) const { return magnitudes[static_cast<std::size_t>(y) * width + x]; }
};

// Largest response a single Sobel axis can produce on 8-bit input (4 * 255).
// Edge maps are divided by this before entering the hand classifier.
inline constexpr double kEdgeInputDivisor = 1020.0;

// Full-range magnitude bound for 8-bit input, 4 * 255 * sqrt(2), used when
// exporting edge maps as 8-bit PGM.
inline constexpr double kEdgeMagnitudeRange = 1442.5;

// Binary PGM (P5) decode. Accepts '#' comment lines in the header; maxval
// must be <= 255. Throws std::runtime_error on malformed header, truncated
// raster, or unsupported maxval.
Image load_pgm(const std::vector<std::uint8_t>& bytes);
Image load_pgm_file(const std::string& path);

// Binary PGM (P5) encode of an 8-bit-range image. Samples are rounded half-up
// and clamped to [0, 255].
std::vector<std::uint8_t> write_pgm(const Image& img);
void write_pgm_file(const Image& img, const std::string& path);

// Bilinear resize with corner-aligned sample mapping for output dimensions
// above 1; a 1-wide/high output samples the source center. Resizing to the
// source dimensions is the identity.
Image resize_bilinear(const Image& img, int out_w, int out_h);

// 3x3 Sobel gradients (correlation convention, no kernel flip) with replicate
// padding; magnitude is sqrt(gx^2 + gy^2).
//   gx kernel: [[-1,0,1],[-2,0,2],[-1,0,1]]   gy kernel: its transpose
EdgeMap sobel_edges(const Image& img);

// Divides 8-bit-range samples by 255. No clamping; out-of-range input is the
// caller's responsibility.
Image normalize(const Image& img);

// Scales magnitudes by 1/1020 to the hand classifier's input range.
EdgeMap normalize_edges(const EdgeMap& edges);

// 8-bit view of an edge map for PGM export: magnitude * 255 / 1442.5,
// rounded half-up.
Image edge_export_image(const EdgeMap& edges);

}  // namespace fer::imaging
