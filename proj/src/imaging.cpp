#include "fer/imaging.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "fer/kernels.hpp"

namespace fer::imaging {

namespace {

bool is_pgm_space(std::uint8_t c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Advances past whitespace and '#' comment lines inside the PGM header.
void skip_header_fill(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    if (is_pgm_space(bytes[pos])) {
      ++pos;
    } else if (bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
}

int parse_header_int(const std::vector<std::uint8_t>& bytes, std::size_t& pos, const char* field) {
  skip_header_fill(bytes, pos);
  if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9') {
    throw std::runtime_error(std::string("malformed PGM header: expected ") + field);
  }
  long value = 0;
  while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
    value = value * 10 + (bytes[pos] - '0');
    if (value > 1 << 30) throw std::runtime_error(std::string("malformed PGM header: ") + field + " out of range");
    ++pos;
  }
  return static_cast<int>(value);
}

}  // namespace

Image load_pgm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw std::runtime_error("malformed PGM header: magic is not P5");
  }
  std::size_t pos = 2;
  const int width = parse_header_int(bytes, pos, "width");
  const int height = parse_header_int(bytes, pos, "height");
  const int maxval = parse_header_int(bytes, pos, "maxval");
  if (width < 1 || height < 1) throw std::runtime_error("malformed PGM header: zero dimension");
  if (maxval > 255) throw std::runtime_error("unsupported PGM maxval " + std::to_string(maxval));
  if (maxval < 1) throw std::runtime_error("malformed PGM header: maxval out of range");
  if (pos >= bytes.size() || !is_pgm_space(bytes[pos])) {
    throw std::runtime_error("malformed PGM header: missing raster separator");
  }
  ++pos;  // single whitespace byte before the raster

  const std::size_t expected = static_cast<std::size_t>(width) * height;
  if (bytes.size() - pos < expected) {
    throw std::runtime_error("truncated PGM raster: expected " + std::to_string(expected) +
                             " bytes, got " + std::to_string(bytes.size() - pos));
  }
  Image img(width, height);
  for (std::size_t i = 0; i < expected; ++i) img.samples[i] = static_cast<double>(bytes[pos + i]);
  return img;
}

Image load_pgm_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return load_pgm(bytes);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::vector<std::uint8_t> write_pgm(const Image& img) {
  char header[64];
  const int n = std::snprintf(header, sizeof header, "P5\n%d %d\n255\n", img.width, img.height);
  std::vector<std::uint8_t> out(header, header + n);
  out.reserve(out.size() + img.pixel_count());
  for (double s : img.samples) {
    double v = std::floor(s + 0.5);
    if (v < 0.0) v = 0.0;
    if (v > 255.0) v = 255.0;
    out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

void write_pgm_file(const Image& img, const std::string& path) {
  const auto bytes = write_pgm(img);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw std::runtime_error("resize target dimension must be positive");
  Image out(out_w, out_h);
  const double sx = out_w > 1 ? static_cast<double>(img.width - 1) / (out_w - 1) : 0.0;
  const double sy = out_h > 1 ? static_cast<double>(img.height - 1) / (out_h - 1) : 0.0;
  const double cx = out_w > 1 ? 0.0 : (img.width - 1) / 2.0;
  const double cy = out_h > 1 ? 0.0 : (img.height - 1) / 2.0;
  for (int y = 0; y < out_h; ++y) {
    const double fy = cy + sy * y;
    const int y0 = static_cast<int>(fy);
    const int y1 = y0 + 1 < img.height ? y0 + 1 : y0;
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = cx + sx * x;
      const int x0 = static_cast<int>(fx);
      const int x1 = x0 + 1 < img.width ? x0 + 1 : x0;
      const double wx = fx - x0;
      const double top = img.at(x0, y0) * (1.0 - wx) + img.at(x1, y0) * wx;
      const double bottom = img.at(x0, y1) * (1.0 - wx) + img.at(x1, y1) * wx;
      out.at(x, y) = top * (1.0 - wy) + bottom * wy;
    }
  }
  return out;
}

EdgeMap sobel_edges(const Image& img) {
  if (img.width < 1 || img.height < 1) throw std::runtime_error("sobel_edges needs a non-empty image");
  EdgeMap edges;
  edges.width = img.width;
  edges.height = img.height;
  edges.magnitudes.resize(img.pixel_count());
  kernels::sobel_magnitude(img.samples.data(), img.height, img.width, edges.magnitudes.data());
  return edges;
}

Image normalize(const Image& img) {
  Image out(img.width, img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) out.samples[i] = img.samples[i] / 255.0;
  return out;
}

EdgeMap normalize_edges(const EdgeMap& edges) {
  EdgeMap out = edges;
  for (double& m : out.magnitudes) m /= kEdgeInputDivisor;
  return out;
}

Image edge_export_image(const EdgeMap& edges) {
  Image out(edges.width, edges.height);
  const double scale = 255.0 / kEdgeMagnitudeRange;
  for (std::size_t i = 0; i < edges.magnitudes.size(); ++i) out.samples[i] = edges.magnitudes[i] * scale;
  return out;
}

}  // namespace fer::imaging
