#pragma once

/// \file maot/imaging.hpp
/// \brief Grayscale image I/O (PGM, PNG), density preparation and
/// transport-based comparison products.
///
/// Field node (i, j) corresponds to image row i and column j.

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <png.h>

#include "maot/grid_field.hpp"
#include "maot/ma_core.hpp"

namespace maot {

class IoError : public Error {
 public:
  using Error::Error;
};

/// Row-major intensities in [0,1].
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double value = 0.0) : width(w), height(h), pixels(w * h, value) {}

  double operator()(std::size_t row, std::size_t col) const { return pixels[row * width + col]; }
  double& operator()(std::size_t row, std::size_t col) { return pixels[row * width + col]; }
};

inline double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

namespace detail {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace detail

/// Reads binary (P5) or ASCII (P2) PGM with maxval up to 65535.
inline GrayImage read_pgm(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  std::size_t pos = 0;
  auto bad = [&](const std::string& why) { return IoError("bad PGM '" + path.string() + "': " + why); };
  auto next_token = [&]() {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok += static_cast<char>(bytes[pos++]);
    if (tok.empty()) throw bad("truncated header");
    return tok;
  };
  auto next_uint = [&]() {
    const std::string t = next_token();
    if (!std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
      throw bad("expected integer, got '" + t + "'");
    return std::stoul(t);
  };

  const std::string magic = next_token();
  if (magic != "P2" && magic != "P5") throw bad("unsupported magic '" + magic + "'");
  const std::size_t w = next_uint(), h = next_uint(), maxval = next_uint();
  if (w == 0 || h == 0) throw bad("zero dimension");
  if (maxval == 0 || maxval > 65535) throw bad("maxval out of range");

  GrayImage img(w, h);
  if (magic == "P2") {
    for (double& p : img.pixels) p = static_cast<double>(next_uint()) / static_cast<double>(maxval);
    return img;
  }
  ++pos;  // single whitespace after maxval
  const std::size_t bpp = maxval < 256 ? 1 : 2;
  if (bytes.size() < pos + w * h * bpp) throw bad("truncated pixel data");
  for (std::size_t k = 0; k < w * h; ++k) {
    const std::size_t v = bpp == 1 ? bytes[pos + k]
                                   : (static_cast<std::size_t>(bytes[pos + 2 * k]) << 8) | bytes[pos + 2 * k + 1];
    img.pixels[k] = std::min(1.0, static_cast<double>(v) / static_cast<double>(maxval));
  }
  return img;
}

/// Writes an 8-bit binary PGM.
inline void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (double p : img.pixels) out.put(static_cast<char>(detail::to_byte(p)));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace detail

/// Reads any PNG, converting color to luma and scaling 16-bit samples.
inline GrayImage read_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw IoError("cannot read PNG '" + path.string() + "': " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG '" + path.string() + "': " + image.message);
  }
  GrayImage img(image.width, image.height);
  for (std::size_t k = 0; k < img.pixels.size(); ++k)
    img.pixels[k] = std::clamp(luma(buf[3 * k] / 255.0, buf[3 * k + 1] / 255.0, buf[3 * k + 2] / 255.0), 0.0, 1.0);
  return img;
}

/// Writes an 8-bit grayscale PNG.
inline void write_png(const std::filesystem::path& path, const GrayImage& img) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(img.pixels.size());
  for (std::size_t k = 0; k < buf.size(); ++k) buf[k] = detail::to_byte(img.pixels[k]);
  if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr))
    throw IoError("cannot write PNG '" + path.string() + "': " + image.message);
}

/// Dispatches on the file signature.
inline GrayImage read_image(const std::filesystem::path& path) {
  const auto bytes = detail::read_file(path);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G')
    return read_png(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '2' || bytes[1] == '5')) return read_pgm(path);
  throw IoError("unrecognized image format '" + path.string() + "' (expected PGM or PNG)");
}

/// Writes PNG for a .png extension, PGM otherwise.
inline void write_image(const std::filesystem::path& path, const GrayImage& img) {
  if (path.extension() == ".png")
    write_png(path, img);
  else
    write_pgm(path, img);
}

/// Bilinear resampling onto an n x n grid with pixel-center alignment and
/// clamped borders.
inline ScalarField resample(const GrayImage& img, std::size_t n) {
  if (img.width == 0 || img.height == 0) throw Error("resample: empty image");
  const PeriodicGrid grid(n);
  ScalarField out(grid);
  auto src = [](std::size_t k, std::size_t n_out, std::size_t n_in) {
    const double s = (static_cast<double>(k) + 0.5) * static_cast<double>(n_in) / static_cast<double>(n_out) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(n_in - 1));
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double sy = src(i, n, img.height);
    const auto y0 = static_cast<std::size_t>(std::floor(sy));
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double ty = sy - static_cast<double>(y0);
    for (std::size_t j = 0; j < n; ++j) {
      const double sx = src(j, n, img.width);
      const auto x0 = static_cast<std::size_t>(std::floor(sx));
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double tx = sx - static_cast<double>(x0);
      out(i, j) = (1 - ty) * ((1 - tx) * img(y0, x0) + tx * img(y0, x1)) +
                  ty * ((1 - tx) * img(y1, x0) + tx * img(y1, x1));
    }
  }
  return out;
}

/// Resamples to n x n and applies the affine map a*I + b with min = floor and
/// mean = 1. A constant image yields the uniform density, with a warning.
inline ScalarField to_density(const GrayImage& img, std::size_t n, double floor,
                              std::string* warning = nullptr) {
  if (n < 8 || !is_power_of_two(n)) throw Error("to_density: n must be a power of two >= 8");
  if (!(floor > 0.0 && floor < 1.0)) throw Error("to_density: floor must lie in (0, 1)");
  ScalarField d = resample(img, n);
  const double mu = mean(d);
  const double lo = *std::min_element(d.values().begin(), d.values().end());
  if (mu - lo <= 1e-12 * std::max(1.0, std::abs(mu))) {
    if (warning) *warning = mu == 0.0 ? "image is constant zero; using the uniform density" : "image is constant; using the uniform density";
    return ScalarField(d.grid(), 1.0);
  }
  const double a = (1.0 - floor) / (mu - lo);
  const double b = floor - a * lo;
  for (double& v : d.values()) v = a * v + b;
  d += 1.0 - mean(d);  // remove rounding in the mean
  return d;
}

/// d(f, g) = int |grad u|^2 f dx by Simpson quadrature and fourth-order gradients.
inline double transport_distance(const ScalarField& u, const ScalarField& f) {
  u.check_same_grid(f);
  const ScalarField u1 = diff_first(u, Axis::x1, 4), u2 = diff_first(u, Axis::x2, 4);
  ScalarField integrand(u.grid());
  for (std::size_t k = 0; k < integrand.size(); ++k) integrand[k] = (u1[k] * u1[k] + u2[k] * u2[k]) * f[k];
  return simpson_average(integrand);
}

/// div(grad u) = Laplacian of u, fourth order.
inline ScalarField divergence_map(const ScalarField& u) {
  return diff_second(u, SecondAxis::x1x1, 4) + diff_second(u, SecondAxis::x2x2, 4);
}

/// Affine map [lo, hi] -> [0, 1]; a degenerate range renders mid-gray.
inline GrayImage render(const ScalarField& f, double lo, double hi) {
  const std::size_t n = f.grid().n();
  GrayImage img(n, n);
  const double span = hi - lo;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      img(i, j) = span > 1e-14 * std::max(1.0, std::abs(hi)) ? (f(i, j) - lo) / span : 0.5;
  return img;
}

inline GrayImage render(const ScalarField& f) {
  const auto [lo, hi] = std::minmax_element(f.values().begin(), f.values().end());
  return render(f, *lo, *hi);
}

struct WarpFrames {
  GrayImage source;               ///< f
  GrayImage target;               ///< g
  std::vector<GrayImage> frames;  ///< ftilde_0 (= g), ftilde_1, ...
};

/// Renders the normalized pushforward of every iterate with a common
/// intensity range so frames are comparable.
inline WarpFrames warp_sequence(const SolveReport& report, const ScalarField& f, const ScalarField& g) {
  if (report.ftilde_history.empty())
    throw Error("warp_sequence: run_newton was called without keep_history");
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  auto extend = [&](const ScalarField& s) {
    const auto [a, b] = std::minmax_element(s.values().begin(), s.values().end());
    lo = std::min(lo, *a);
    hi = std::max(hi, *b);
  };
  extend(f);
  extend(g);
  for (const auto& s : report.ftilde_history) extend(s);
  WarpFrames out{render(f, lo, hi), render(g, lo, hi), {}};
  for (const auto& s : report.ftilde_history) out.frames.push_back(render(s, lo, hi));
  return out;
}

struct TransportResult {
  ScalarField u;
  double distance = 0.0;
  ScalarField divergence;
  SolveReport report;
};

/// Transports the source density f onto the target g and derives the
/// comparison products.
inline TransportResult register_densities(const ScalarField& f, const ScalarField& g, const NewtonConfig& cfg) {
  const DensityPair pair = DensityPair::make(f, g);
  NewtonResult res = run_newton(pair, cfg);
  TransportResult out{res.u, transport_distance(res.u, pair.f), divergence_map(res.u), std::move(res.report)};
  return out;
}

/// A disc added to a phantom: center and radius in unit coordinates.
struct Lesion {
  double row = 0.5, col = 0.5, radius = 0.05, intensity = 0.35;
};

/// Smooth synthetic "brain" slice: an elliptic head with darker ventricles,
/// plus optional bright disc lesions. Edges are smoothed over `edge` (unit
/// coordinates) so the resulting densities stay well resolved.
inline GrayImage make_phantom(std::size_t size, const std::vector<Lesion>& lesions = {}, double edge = 0.02) {
  GrayImage img(size, size);
  auto smooth_inside = [edge](double signed_dist) { return 0.5 * (1.0 - std::tanh(signed_dist / edge)); };
  for (std::size_t r = 0; r < size; ++r)
    for (std::size_t c = 0; c < size; ++c) {
      const double y = (static_cast<double>(r) + 0.5) / static_cast<double>(size);
      const double x = (static_cast<double>(c) + 0.5) / static_cast<double>(size);
      const double head = std::hypot((x - 0.5) / 0.36, (y - 0.5) / 0.42) - 1.0;
      const double vl = std::hypot((x - 0.44) / 0.05, (y - 0.48) / 0.12) - 1.0;
      const double vr = std::hypot((x - 0.56) / 0.05, (y - 0.48) / 0.12) - 1.0;
      double v = 0.15 + 0.45 * smooth_inside(head * 0.4);
      v -= 0.2 * smooth_inside(vl * 0.05) + 0.2 * smooth_inside(vr * 0.05);
      for (const Lesion& l : lesions) v += l.intensity * smooth_inside(std::hypot(x - l.col, y - l.row) - l.radius);
      img(r, c) = std::clamp(v, 0.0, 1.0);
    }
  return img;
}

}  // namespace maot
