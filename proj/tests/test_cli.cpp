#include <catch2/catch_amalgamated.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "pupiltrack/pgm.hpp"
#include "pupiltrack/pipeline.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PUPILTRACK_BIN) + " " + args +
                          " > /dev/null 2> /dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

const char* kSmallConfig = R"(
[input]
type = synth

[synth]
width = 320
height = 240
frames = 8
center_x = 130
center_y = 120
velocity_x = 0.8
pupil_radius = 16

[pipeline]
mode = detect
seed = 4
timing = off

[localizer]
rho = 0.02
)";

}  // namespace

TEST_CASE("synth subcommand materializes frames and ground truth", "[cli]") {
  testutil::TempDir tmp;
  const auto cfg = tmp.path / "synth.cfg";
  write_file(cfg, kSmallConfig);
  const auto frames_dir = tmp.path / "frames";

  REQUIRE(run_cli("synth --config " + cfg.string() + " --out-dir " +
                  frames_dir.string()) == 0);
  CHECK(fs::exists(frames_dir / "frame_0000.pgm"));
  CHECK(fs::exists(frames_dir / "frame_0007.pgm"));
  CHECK(fs::exists(frames_dir / "truth.csv"));
  const pupiltrack::GrayImage img = pupiltrack::load_pgm(frames_dir / "frame_0000.pgm");
  CHECK(img.width() == 320);
  CHECK(img.height() == 240);
}

TEST_CASE("run subcommand processes a frames directory end to end", "[cli]") {
  testutil::TempDir tmp;
  const auto synth_cfg = tmp.path / "synth.cfg";
  write_file(synth_cfg, kSmallConfig);
  const auto frames_dir = tmp.path / "frames";
  REQUIRE(run_cli("synth --config " + synth_cfg.string() + " --out-dir " +
                  frames_dir.string()) == 0);

  const auto run_cfg = tmp.path / "run.cfg";
  write_file(run_cfg, std::string("[input]\ntype = frames\nframes_dir = ") +
                          frames_dir.string() +
                          "\n[pipeline]\nmode = detect\ntiming = off\n"
                          "[localizer]\nrho = 0.02\n");
  const auto out_dir = tmp.path / "out";
  REQUIRE(run_cli("run --config " + run_cfg.string() + " --out-dir " +
                  out_dir.string()) == 0);
  CHECK(fs::exists(out_dir / "trajectory.csv"));
  CHECK(fs::exists(out_dir / "plot_x.dat"));
  CHECK(fs::exists(out_dir / "plot_y.dat"));
  CHECK(fs::exists(out_dir / "metrics.txt"));

  // The materialized truth.csv re-attaches ground truth to the run.
  const auto traj = pupiltrack::read_trajectory_csv(out_dir / "trajectory.csv");
  REQUIRE(traj.records.size() == 8);
  CHECK(traj.records[0].truth.has_value());

  // metrics recomputes the report from the CSV alone.
  CHECK(run_cli("metrics --csv " + (out_dir / "trajectory.csv").string()) == 0);
}

TEST_CASE("run subcommand honors the seed and mode overrides", "[cli]") {
  testutil::TempDir tmp;
  const auto cfg = tmp.path / "run.cfg";
  write_file(cfg, kSmallConfig);
  const auto out_a = tmp.path / "a";
  const auto out_b = tmp.path / "b";
  REQUIRE(run_cli("run --config " + cfg.string() + " --seed 12 --out-dir " +
                  out_a.string()) == 0);
  REQUIRE(run_cli("run --config " + cfg.string() + " --seed 12 --out-dir " +
                  out_b.string()) == 0);
  std::ifstream a(out_a / "trajectory.csv");
  std::ifstream b(out_b / "trajectory.csv");
  const std::string text_a{std::istreambuf_iterator<char>(a),
                           std::istreambuf_iterator<char>()};
  const std::string text_b{std::istreambuf_iterator<char>(b),
                           std::istreambuf_iterator<char>()};
  CHECK(text_a == text_b);
}

TEST_CASE("configuration problems exit with code 1", "[cli]") {
  testutil::TempDir tmp;
  CHECK(run_cli("run --config " + (tmp.path / "missing.cfg").string()) == 1);

  const auto bad_key = tmp.path / "bad_key.cfg";
  write_file(bad_key, "[pipeline]\nnot_a_key = 1\n");
  CHECK(run_cli("run --config " + bad_key.string()) == 1);

  const auto bad_value = tmp.path / "bad_value.cfg";
  write_file(bad_value, "[synth]\npupil_intensity = 200\niris_intensity = 90\n");
  CHECK(run_cli("run --config " + bad_value.string()) == 1);

  CHECK(run_cli("run") == 1);            // missing required --config
  CHECK(run_cli("no_such_command") == 1);
}

TEST_CASE("processing problems exit with code 2", "[cli]") {
  testutil::TempDir tmp;
  const auto empty_dir = tmp.path / "empty";
  fs::create_directories(empty_dir);
  const auto cfg = tmp.path / "empty.cfg";
  write_file(cfg, "[input]\ntype = frames\nframes_dir = " + empty_dir.string() + "\n");
  CHECK(run_cli("run --config " + cfg.string()) == 2);

  CHECK(run_cli("metrics --csv " + (tmp.path / "missing.csv").string()) == 2);
}
