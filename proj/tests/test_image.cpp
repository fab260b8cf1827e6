#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "pupiltrack/image.hpp"
#include "pupiltrack/pgm.hpp"
#include "pupiltrack/synth.hpp"
#include "test_util.hpp"

using namespace pupiltrack;

namespace {

void write_bytes(const std::filesystem::path& path, const std::string& header,
                 const std::vector<std::uint8_t>& payload) {
  std::ofstream out(path, std::ios::binary);
  out << header;
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("GrayImage enforces its invariants", "[image]") {
  CHECK_THROWS_AS(GrayImage(0, 4), std::invalid_argument);
  CHECK_THROWS_AS(GrayImage(4, 0), std::invalid_argument);
  CHECK_THROWS_AS(GrayImage(2, 2, std::vector<std::uint8_t>{1, 2, 3}),
                  std::invalid_argument);
  const GrayImage img(3, 2, std::vector<std::uint8_t>{1, 2, 3, 4, 5, 6});
  CHECK(img(0, 0) == 1);
  CHECK(img(2, 1) == 6);
  CHECK(img.at_clamped(-5, 0) == 1);
  CHECK(img.at_clamped(99, 99) == 6);
}

TEST_CASE("load_pgm parses the P5 format", "[image]") {
  testutil::TempDir tmp;
  const auto path = tmp.path / "small.pgm";
  write_bytes(path, "P5\n2 2\n255\n", {0, 128, 255, 7});
  const GrayImage img = load_pgm(path);
  REQUIRE(img.width() == 2);
  REQUIRE(img.height() == 2);
  CHECK(img(0, 0) == 0);
  CHECK(img(1, 0) == 128);
  CHECK(img(0, 1) == 255);
  CHECK(img(1, 1) == 7);
}

TEST_CASE("load_pgm reports each failure mode distinctly", "[image]") {
  testutil::TempDir tmp;

  try {
    load_pgm(tmp.path / "does_not_exist.pgm");
    FAIL("expected PgmError");
  } catch (const PgmError& e) {
    CHECK(e.kind() == PgmError::Kind::open_failed);
  }

  const auto p6 = tmp.path / "color.pgm";
  write_bytes(p6, "P6\n1 1\n255\n", {1, 2, 3});
  try {
    load_pgm(p6);
    FAIL("expected PgmError");
  } catch (const PgmError& e) {
    CHECK(e.kind() == PgmError::Kind::bad_magic);
  }

  const auto wide = tmp.path / "wide.pgm";
  write_bytes(wide, "P5\n1 1\n256\n", {1, 1});
  try {
    load_pgm(wide);
    FAIL("expected PgmError");
  } catch (const PgmError& e) {
    CHECK(e.kind() == PgmError::Kind::bad_maxval);
  }

  const auto cut = tmp.path / "cut.pgm";
  write_bytes(cut, "P5\n2 2\n255\n", {9, 9});
  try {
    load_pgm(cut);
    FAIL("expected PgmError");
  } catch (const PgmError& e) {
    CHECK(e.kind() == PgmError::Kind::truncated);
  }

  const auto junk = tmp.path / "junk.pgm";
  write_bytes(junk, "P5\nx 2\n255\n", {9, 9});
  try {
    load_pgm(junk);
    FAIL("expected PgmError");
  } catch (const PgmError& e) {
    CHECK(e.kind() == PgmError::Kind::bad_header);
  }
}

TEST_CASE("save_pgm emits exact P5 bytes", "[image]") {
  testutil::TempDir tmp;
  const auto path = tmp.path / "one.pgm";
  save_pgm(GrayImage(1, 1, std::vector<std::uint8_t>{42}), path);
  const auto bytes = read_bytes(path);
  const std::string expect = "P5\n1 1\n255\n";
  REQUIRE(bytes.size() == expect.size() + 1);
  CHECK(std::string(bytes.begin(), bytes.begin() + expect.size()) == expect);
  CHECK(bytes.back() == 42);
}

TEST_CASE("save_pgm rejects unwritable destinations", "[image]") {
  testutil::TempDir tmp;
  const auto bad = tmp.path / "no_such_dir" / "img.pgm";
  try {
    save_pgm(GrayImage(1, 1), bad);
    FAIL("expected PgmError");
  } catch (const PgmError& e) {
    CHECK(e.kind() == PgmError::Kind::write_failed);
  }
}

TEST_CASE("PGM round-trip is the identity", "[image]") {
  testutil::TempDir tmp;
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> dim(1, 40);
  std::uniform_int_distribution<int> value(0, 255);
  for (int trial = 0; trial < 10; ++trial) {
    GrayImage img(dim(rng), dim(rng));
    for (auto& px : img.pixels()) px = static_cast<std::uint8_t>(value(rng));
    const auto path = tmp.path / ("rt_" + std::to_string(trial) + ".pgm");
    save_pgm(img, path);
    CHECK(load_pgm(path) == img);
  }
}

TEST_CASE("generator truth follows the configured trajectory", "[image]") {
  SynthConfig cfg;
  cfg.width = 640;
  cfg.height = 480;
  cfg.initial_center = {100.0, 120.0};
  cfg.pupil_radius = 20.0;

  SECTION("zero velocity repeats the initial center") {
    cfg.frame_count = 5;
    const auto [frames, truth] = generate_sequence(cfg);
    REQUIRE(frames.size() == 5);
    REQUIRE(truth.centers.size() == 5);
    for (const auto& c : truth.centers) {
      CHECK(c.x == 100.0);
      CHECK(c.y == 120.0);
    }
  }

  SECTION("unit x velocity advances one pixel per frame") {
    cfg.frame_count = 11;
    cfg.velocity = {1.0, 0.0};
    const auto truth = generate_sequence(cfg).second;
    CHECK(truth.centers[10].x == 110.0);
    CHECK(truth.centers[10].y == 120.0);
  }
}

TEST_CASE("noise-free pupil pixels carry the pupil intensity", "[image]") {
  SynthConfig cfg;
  cfg.width = 320;
  cfg.height = 240;
  cfg.frame_count = 1;
  cfg.initial_center = {100.4, 120.3};
  cfg.pupil_radius = 15.0;
  const auto frames = generate_sequence(cfg).first;
  CHECK(frames[0](100, 120) == cfg.pupil_intensity);
}

TEST_CASE("trajectory leaving the frame is a configuration error", "[image]") {
  SynthConfig cfg;
  cfg.width = 200;
  cfg.height = 200;
  cfg.frame_count = 50;
  cfg.initial_center = {100.0, 100.0};
  cfg.velocity = {3.0, 0.0};
  cfg.pupil_radius = 20.0;
  CHECK_THROWS_AS(generate_sequence(cfg), std::invalid_argument);
}

TEST_CASE("generation is reproducible for a fixed seed", "[image]") {
  SynthConfig cfg;
  cfg.width = 160;
  cfg.height = 120;
  cfg.frame_count = 3;
  cfg.initial_center = {80.0, 60.0};
  cfg.pupil_radius = 12.0;
  cfg.noise_sigma = 6.0;
  cfg.specular_spot_count = 2;
  cfg.eyelash_streak_count = 2;
  cfg.seed = 99;
  const auto a = generate_sequence(cfg);
  const auto b = generate_sequence(cfg);
  REQUIRE(a.first.size() == b.first.size());
  for (std::size_t k = 0; k < a.first.size(); ++k) {
    CHECK(a.first[k] == b.first[k]);
  }
}

TEST_CASE("pupil interior is darker than its surroundings", "[image]") {
  SynthConfig cfg;
  cfg.width = 200;
  cfg.height = 160;
  cfg.frame_count = 4;
  cfg.initial_center = {90.0, 80.0};
  cfg.velocity = {1.5, 0.5};
  cfg.pupil_radius = 14.0;
  cfg.specular_spot_count = 2;
  cfg.eyelash_streak_count = 2;
  cfg.seed = 3;
  const auto [frames, truth] = generate_sequence(cfg);
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& img = frames[k];
    const auto& center = truth.centers[k];
    double inside = 0.0;
    double outside = 0.0;
    long n_inside = 0;
    long n_outside = 0;
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const double dx = x - center.x;
        const double dy = y - center.y;
        if (dx * dx + dy * dy <= cfg.pupil_radius * cfg.pupil_radius) {
          inside += img(x, y);
          ++n_inside;
        } else {
          outside += img(x, y);
          ++n_outside;
        }
      }
    }
    CHECK(inside / n_inside < outside / n_outside);
  }
}
