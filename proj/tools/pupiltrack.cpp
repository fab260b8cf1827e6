#include <CLI11.hpp>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "pupiltrack/config.hpp"
#include "pupiltrack/pgm.hpp"
#include "pupiltrack/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfigError = 1;
constexpr int kExitProcessingError = 2;

struct RunOptions {
  std::string config_path;
  std::string mode;
  std::string out_dir;
  std::int64_t seed = -1;
};

int run_command(const RunOptions& opt) {
  pupiltrack::PipelineConfig cfg;
  try {
    cfg = pupiltrack::load_pipeline_config(opt.config_path);
    if (opt.mode == "detect") cfg.mode = pupiltrack::Mode::detect;
    if (opt.mode == "track") cfg.mode = pupiltrack::Mode::track;
    if (!opt.out_dir.empty()) cfg.out_dir = opt.out_dir;
    if (opt.seed >= 0) cfg.apply_master_seed(static_cast<std::uint32_t>(opt.seed));
    cfg.validate();
  } catch (const pupiltrack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    const pupiltrack::RunOutput output = pupiltrack::run(cfg);

    fs::create_directories(cfg.out_dir);
    pupiltrack::write_csv(output.trajectory, cfg.out_dir / "trajectory.csv");
    pupiltrack::write_plot_data(output.trajectory, cfg.out_dir / "plot");
    const std::string report = pupiltrack::format_metrics(output.metrics);
    {
      std::ofstream metrics_out(cfg.out_dir / "metrics.txt");
      metrics_out << report;
    }
    std::cout << report;
    if (output.calibration) {
      const auto& calib = *output.calibration;
      std::cout << "tracker_b: " << calib.b << "\n"
                << "tracker_q_diag: " << calib.Q.diagonal().transpose() << "\n"
                << "tracker_r_diag: " << calib.R.diagonal().transpose() << "\n";
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "processing error: " << e.what() << "\n";
    return kExitProcessingError;
  }
}

int synth_command(const std::string& config_path, const std::string& out_dir) {
  pupiltrack::SynthConfig synth;
  try {
    const pupiltrack::PipelineConfig cfg =
        pupiltrack::load_pipeline_config(config_path);
    synth = cfg.synth;
    pupiltrack::validate_config(synth);
  } catch (const pupiltrack::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }

  try {
    const auto [frames, truth] = pupiltrack::generate_sequence(synth);
    fs::create_directories(out_dir);
    for (std::size_t k = 0; k < frames.size(); ++k) {
      pupiltrack::save_pgm(frames[k],
                           fs::path(out_dir) /
                               pupiltrack::frame_file_name(static_cast<int>(k)));
    }
    std::ofstream truth_out(fs::path(out_dir) / "truth.csv");
    if (!truth_out) throw pupiltrack::ProcessingError("cannot write truth.csv");
    truth_out << "frame,x,y\n";
    for (std::size_t k = 0; k < truth.centers.size(); ++k) {
      truth_out << k << ',' << pupiltrack::detail::format6(truth.centers[k].x)
                << ',' << pupiltrack::detail::format6(truth.centers[k].y) << "\n";
    }
    std::cout << "wrote " << frames.size() << " frames to " << out_dir << "\n";
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "processing error: " << e.what() << "\n";
    return kExitProcessingError;
  }
}

int metrics_command(const std::string& csv_path) {
  try {
    const pupiltrack::Trajectory traj = pupiltrack::read_trajectory_csv(csv_path);
    std::cout << pupiltrack::format_metrics(pupiltrack::compute_metrics(traj));
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "processing error: " << e.what() << "\n";
    return kExitProcessingError;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pupiltrack: pupil localization and tracking on grayscale sequences"};
  app.require_subcommand(1);

  RunOptions run_opt;
  CLI::App* run_cmd = app.add_subcommand("run", "process a sequence and emit trajectory, plots and metrics");
  run_cmd->add_option("--config", run_opt.config_path, "configuration file")->required();
  run_cmd->add_option("--mode", run_opt.mode, "override pipeline.mode")
      ->check(CLI::IsMember({"detect", "track"}));
  run_cmd->add_option("--out-dir", run_opt.out_dir, "override output.dir");
  run_cmd->add_option("--seed", run_opt.seed, "override pipeline.seed");

  std::string synth_config;
  std::string synth_out;
  CLI::App* synth_cmd = app.add_subcommand("synth", "materialize a synthetic sequence as PGM frames");
  synth_cmd->add_option("--config", synth_config, "configuration file")->required();
  synth_cmd->add_option("--out-dir", synth_out, "destination directory")->required();

  std::string metrics_csv;
  CLI::App* metrics_cmd = app.add_subcommand("metrics", "recompute the report from a trajectory CSV");
  metrics_cmd->add_option("--csv", metrics_csv, "trajectory CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  if (run_cmd->parsed()) return run_command(run_opt);
  if (synth_cmd->parsed()) return synth_command(synth_config, synth_out);
  if (metrics_cmd->parsed()) return metrics_command(metrics_csv);
  return kExitConfigError;
}
