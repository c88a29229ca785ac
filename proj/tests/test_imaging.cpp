#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <png.h>

#include "fixtures.hpp"
#include "maot/imaging.hpp"

using namespace maot;
using fixture::pi;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    path_ = fs::temp_directory_path() / ("maot_test_" + std::string(info->test_suite_name()) + "_" + info->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out << bytes;
}

GrayImage ramp(std::size_t w, std::size_t h) {
  GrayImage img(w, h);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) img(r, c) = static_cast<double>((r * w + c) % 256) / 255.0;
  return img;
}

NewtonConfig register_config() {
  NewtonConfig c;
  c.tol = 1e-6;
  c.max_iter = 20;
  c.sample_mode = SampleMode::bilinear;
  return c;
}

}  // namespace

TEST(Pgm, BinaryRoundTrip) {
  TempDir dir;
  const GrayImage img = ramp(7, 5);
  write_pgm(dir / "a.pgm", img);
  const GrayImage back = read_image(dir / "a.pgm");
  ASSERT_EQ(back.width, 7u);
  ASSERT_EQ(back.height, 5u);
  for (std::size_t k = 0; k < img.pixels.size(); ++k) EXPECT_DOUBLE_EQ(back.pixels[k], img.pixels[k]);
}

TEST(Pgm, AsciiWithCommentsAndSmallMaxval) {
  TempDir dir;
  write_bytes(dir / "a.pgm", "P2\n# comment line\n3 2 # trailing\n15\n0 5 15\n# mid\n3 7 1\n");
  const GrayImage img = read_pgm(dir / "a.pgm");
  ASSERT_EQ(img.width, 3u);
  ASSERT_EQ(img.height, 2u);
  EXPECT_DOUBLE_EQ(img(0, 1), 5.0 / 15.0);
  EXPECT_DOUBLE_EQ(img(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(img(1, 1), 7.0 / 15.0);
}

TEST(Pgm, SixteenBitBigEndian) {
  TempDir dir;
  std::string bytes = "P5 2 1 65535\n";
  bytes += {static_cast<char>(0x80), static_cast<char>(0x00), static_cast<char>(0xff), static_cast<char>(0xff)};
  write_bytes(dir / "a.pgm", bytes);
  const GrayImage img = read_image(dir / "a.pgm");
  EXPECT_DOUBLE_EQ(img(0, 0), 32768.0 / 65535.0);
  EXPECT_DOUBLE_EQ(img(0, 1), 1.0);
}

TEST(Pgm, MalformedFilesThrowIoError) {
  TempDir dir;
  write_bytes(dir / "trunc.pgm", "P5 4 4 255\nabc");
  write_bytes(dir / "magic.pgm", "P6 1 1 255\nxyz");
  write_bytes(dir / "maxval.pgm", "P2 1 1 70000\n1");
  write_bytes(dir / "junk.img", "hello world");
  EXPECT_THROW(read_pgm(dir / "trunc.pgm"), IoError);
  EXPECT_THROW(read_pgm(dir / "magic.pgm"), IoError);
  EXPECT_THROW(read_pgm(dir / "maxval.pgm"), IoError);
  EXPECT_THROW(read_image(dir / "junk.img"), IoError);
  EXPECT_THROW(read_image(dir / "missing.pgm"), IoError);
}

TEST(Png, GrayRoundTrip) {
  TempDir dir;
  const GrayImage img = ramp(9, 4);
  write_image(dir / "a.png", img);
  const GrayImage back = read_image(dir / "a.png");
  ASSERT_EQ(back.width, 9u);
  ASSERT_EQ(back.height, 4u);
  for (std::size_t k = 0; k < img.pixels.size(); ++k) EXPECT_NEAR(back.pixels[k], img.pixels[k], 1e-12);
}

TEST(Png, ColorIsConvertedToLuma) {
  TempDir dir;
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = 3;
  image.height = 1;
  image.format = PNG_FORMAT_RGB;
  const png_byte rgb[9] = {255, 0, 0, 0, 255, 0, 0, 0, 255};
  const std::string path = (dir / "c.png").string();
  ASSERT_NE(png_image_write_to_file(&image, path.c_str(), 0, rgb, 0, nullptr), 0);
  const GrayImage img = read_image(path);
  EXPECT_NEAR(img(0, 0), 0.299, 1e-12);
  EXPECT_NEAR(img(0, 1), 0.587, 1e-12);
  EXPECT_NEAR(img(0, 2), 0.114, 1e-12);
}

TEST(Png, CorruptFileThrowsIoError) {
  TempDir dir;
  write_bytes(dir / "bad.png", std::string("\x89PNG\r\n\x1a\n", 8) + "garbage");
  EXPECT_THROW(read_image(dir / "bad.png"), IoError);
}

TEST(ToDensity, UniformImageGivesUniformDensity) {
  std::string warning;
  const ScalarField d = to_density(GrayImage(20, 20, 0.4), 16, 0.1, &warning);
  EXPECT_EQ(max_abs(d - ScalarField(d.grid(), 1.0)), 0.0);
  EXPECT_NE(warning.find("constant"), std::string::npos);
}

TEST(ToDensity, TwoLevelCheckerboard) {
  // 8x8 blocks of 0 and 1 at the target size: mean 1/2, min 0, so
  // a = (1 - floor) / (1/2) and the levels are floor and 2 - floor.
  GrayImage img(8, 8);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) img(r, c) = (r + c) % 2 == 0 ? 0.0 : 1.0;
  const double floor = 0.1;
  const ScalarField d = to_density(img, 8, floor);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(d(r, c), (r + c) % 2 == 0 ? floor : 2 - floor, 1e-14);
}

TEST(ToDensity, FloorAndUnitMean) {
  const ScalarField d = to_density(make_phantom(100, {{0.3, 0.6, 0.05}}), 64, 0.2);
  EXPECT_NEAR(mean(d), 1.0, 1e-14);
  EXPECT_NEAR(*std::min_element(d.values().begin(), d.values().end()), 0.2, 1e-12);
  EXPECT_THROW(to_density(GrayImage(4, 4, 0.5), 12, 0.1), Error);
  EXPECT_THROW(to_density(GrayImage(4, 4, 0.5), 16, 1.0), Error);
}

TEST(Resample, IdentityAtSameSizeAndBilinearBetween) {
  const GrayImage img = ramp(8, 8);
  const ScalarField same = resample(img, 8);
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_DOUBLE_EQ(same(r, c), img(r, c));
  // Upsampling a linear ramp reproduces it away from the clamped border.
  GrayImage lin(4, 1);
  for (std::size_t c = 0; c < 4; ++c) lin(0, c) = static_cast<double>(c);
  const ScalarField up = resample(lin, 8);
  EXPECT_NEAR(up(0, 1), 0.25, 1e-14);
  EXPECT_NEAR(up(0, 4), 1.75, 1e-14);
  EXPECT_NEAR(up(0, 0), 0.0, 1e-14);
}

TEST(TransportDistance, KnownValues) {
  const PeriodicGrid g(64);
  const ScalarField one(g, 1.0);
  EXPECT_LE(transport_distance(ScalarField(g, 0.7), one), 1e-25);
  const double eps = 0.02;
  const ScalarField u =
      ScalarField::from_function(g, [&](double x, double) { return eps / (2 * pi) * std::sin(2 * pi * x); });
  // Fourth-order gradients: relative error about 2 (2 pi h)^4 / 30.
  EXPECT_NEAR(transport_distance(u, one), eps * eps / 2, 1e-5 * eps * eps);
  EXPECT_NEAR(transport_distance(u + ScalarField(g, 3.0), one), transport_distance(u, one), 1e-10 * eps * eps);
  EXPECT_NEAR(transport_distance(u, one * 2.0), 2 * transport_distance(u, one), 1e-10 * eps * eps);
}

TEST(DivergenceMap, Eigenfunction) {
  const PeriodicGrid g(64);
  const ScalarField u =
      ScalarField::from_function(g, [](double x, double) { return std::sin(2 * pi * x) / (4 * pi * pi); });
  const ScalarField div = divergence_map(u);
  const ScalarField ref = ScalarField::from_function(g, [](double x, double) { return -std::sin(2 * pi * x); });
  EXPECT_LE(max_abs(div - ref), 1e-5);
  EXPECT_NEAR(mean(divergence_map(fixture::random_field(g, 9))), 0.0, 1e-10);
}

TEST(Render, RangeAndDegenerate) {
  const PeriodicGrid g(8);
  const ScalarField f = fixture::random_field(g, 2);
  const GrayImage img = render(f);
  EXPECT_EQ(*std::min_element(img.pixels.begin(), img.pixels.end()), 0.0);
  EXPECT_EQ(*std::max_element(img.pixels.begin(), img.pixels.end()), 1.0);
  for (double p : render(ScalarField(g, 3.0)).pixels) EXPECT_EQ(p, 0.5);
}

TEST(WarpSequence, FirstFrameIsTarget) {
  const PeriodicGrid g(32);
  const ScalarField f = to_density(make_phantom(64, {{0.5, 0.5, 0.1}}), 32, 0.2);
  const ScalarField t = to_density(make_phantom(64), 32, 0.2);
  NewtonConfig cfg = register_config();
  cfg.keep_history = true;
  const auto res = register_densities(f, t, cfg);
  const WarpFrames w = warp_sequence(res.report, f, t);
  ASSERT_EQ(w.frames.size(), res.report.records.size());
  for (std::size_t k = 0; k < w.target.pixels.size(); ++k) EXPECT_NEAR(w.frames[0].pixels[k], w.target.pixels[k], 1e-12);
  // The last frame is closer to the source than the first.
  double first = 0, last = 0;
  for (std::size_t k = 0; k < w.source.pixels.size(); ++k) {
    first += std::abs(w.frames.front().pixels[k] - w.source.pixels[k]);
    last += std::abs(w.frames.back().pixels[k] - w.source.pixels[k]);
  }
  EXPECT_LT(last, 0.01 * first);
  NewtonConfig no_hist = register_config();
  EXPECT_THROW(warp_sequence(register_densities(f, t, no_hist).report, f, t), Error);
}

TEST(WarpSequence, ConstantPairGivesIdenticalFrames) {
  const PeriodicGrid g(16);
  const ScalarField one(g, 1.0);
  NewtonConfig cfg = register_config();
  cfg.keep_history = true;
  const auto res = register_densities(one, one, cfg);
  EXPECT_TRUE(res.report.converged);
  const WarpFrames w = warp_sequence(res.report, one, one);
  for (const auto& fr : w.frames) EXPECT_EQ(fr.pixels, w.target.pixels);
}

TEST(RegisterDensities, IdenticalImagesHaveZeroDistance) {
  const ScalarField d = to_density(make_phantom(64, {{0.3, 0.6, 0.05}}), 32, 0.1);
  const auto res = register_densities(d, d, register_config());
  EXPECT_TRUE(res.report.converged);
  EXPECT_LE(res.distance, 1e-20);
  EXPECT_LE(max_abs(res.divergence), 1e-12);
}

TEST(RegisterDensities, NestedLesionsIncreaseDistance) {
  const std::size_t n = 64;
  const ScalarField healthy = to_density(make_phantom(128), n, 0.1);
  const Lesion base{0.3, 0.62, 0.0};
  double previous = 0;
  // Larger discs shift the image mean enough that the affine density map
  // changes contrast at the head boundary, which then dominates the map.
  for (double radius : {0.02, 0.035, 0.05}) {
    Lesion l = base;
    l.radius = radius;
    const auto res = register_densities(to_density(make_phantom(128, {l}), n, 0.1), healthy, register_config());
    EXPECT_TRUE(res.report.converged) << radius;
    EXPECT_GT(res.distance, previous) << radius;
    previous = res.distance;

    // The strongest local expansion or contraction sits inside the lesion.
    const auto& div = res.divergence;
    std::size_t best = 0;
    for (std::size_t k = 0; k < div.size(); ++k)
      if (std::abs(div[k]) > std::abs(div[best])) best = k;
    const PeriodicGrid& g = div.grid();
    const double row = g.coord(best / n) + 0.5 * g.h(), col = g.coord(best % n) + 0.5 * g.h();
    EXPECT_LE(std::hypot(row - l.row, col - l.col), radius + g.h()) << radius;
  }
}

TEST(Phantom, ShapeAndLesionBrightness) {
  const GrayImage plain = make_phantom(64);
  const GrayImage lesion = make_phantom(64, {{0.25, 0.5, 0.06, 0.3}});
  EXPECT_EQ(plain.width, 64u);
  for (double p : lesion.pixels) {
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
  EXPECT_NEAR(lesion(16, 32) - plain(16, 32), 0.3, 0.02);
  EXPECT_NEAR(lesion(48, 5), plain(48, 5), 1e-6);
  // Background darker than tissue.
  EXPECT_LT(plain(0, 0), plain(40, 20));
}
