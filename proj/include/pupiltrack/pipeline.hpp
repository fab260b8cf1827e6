#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pupiltrack/config.hpp"
#include "pupiltrack/estimation.hpp"
#include "pupiltrack/localizer.hpp"
#include "pupiltrack/morphology.hpp"
#include "pupiltrack/pgm.hpp"
#include "pupiltrack/synth.hpp"

namespace pupiltrack {

class ProcessingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FrameRecord {
  int frame = 0;
  std::optional<PointXY> detection;  // absent on a miss
  std::optional<PointXY> tracked;    // absent in detect mode / before init
  std::optional<PointXY> truth;      // absent for real sequences
  std::optional<double> ms;          // detect-stage wall clock
};

struct Trajectory {
  std::vector<FrameRecord> records;
};

struct AxisErrors {
  double mae_x = 0.0;
  double mae_y = 0.0;
  double rmse_x = 0.0;
  double rmse_y = 0.0;
  int count = 0;
};

struct MetricsReport {
  int frames = 0;
  int misses = 0;
  std::optional<AxisErrors> detection;
  std::optional<AxisErrors> tracking;
  std::optional<double> mean_ms;
  std::optional<double> p95_ms;
};

/// Noise parameters actually used by the tracking pass.
struct TrackerCalibration {
  double b = 0.0;
  Eigen::Matrix4d Q = Eigen::Matrix4d::Zero();
  Eigen::Matrix2d R = Eigen::Matrix2d::Zero();
};

struct RunOutput {
  Trajectory trajectory;
  MetricsReport metrics;
  std::optional<TrackerCalibration> calibration;  // track mode only
};

namespace detail {

// Values cross the CSV boundary at 6 decimals; metrics are computed on the
// same rounded values so that a report recomputed from the file matches.
inline double round6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return std::strtod(buf, nullptr);
}

inline std::string format6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

struct ValidRun {
  std::size_t start = 0;
  std::size_t length = 0;
};

inline ValidRun longest_valid_run(const std::vector<std::optional<PointXY>>& detections) {
  ValidRun best;
  std::size_t start = 0;
  std::size_t length = 0;
  for (std::size_t i = 0; i <= detections.size(); ++i) {
    if (i < detections.size() && detections[i].has_value()) {
      if (length == 0) start = i;
      ++length;
    } else {
      if (length > best.length) best = {start, length};
      length = 0;
    }
  }
  return best;
}

}  // namespace detail

struct DetectorConfig {
  PreprocessConfig pre;
  CoarseConfig coarse;
  caa::Config caa;
};

/// Full single-frame detection: preprocess, coarse localize, refine.
/// Returns nullopt when the frame has no usable dark region.
inline std::optional<RefinedResult> detect_pupil(const GrayImage& frame,
                                                 const DetectorConfig& cfg) {
  const GrayImage cleaned = preprocess(frame, cfg.pre);
  const std::optional<CoarseResult> coarse = coarse_localize(cleaned, cfg.coarse);
  if (!coarse) return std::nullopt;
  return refine_localize(cleaned, *coarse, cfg.caa);
}

/// Computes the error/miss/timing report for a trajectory. All values pass
/// through 6-decimal rounding first (see round6).
inline MetricsReport compute_metrics(const Trajectory& traj) {
  MetricsReport report;
  report.frames = static_cast<int>(traj.records.size());

  auto accumulate = [](const std::vector<std::array<double, 4>>& diffs) {
    AxisErrors err;
    err.count = static_cast<int>(diffs.size());
    for (const auto& d : diffs) {
      err.mae_x += std::abs(d[0] - d[2]);
      err.mae_y += std::abs(d[1] - d[3]);
      err.rmse_x += (d[0] - d[2]) * (d[0] - d[2]);
      err.rmse_y += (d[1] - d[3]) * (d[1] - d[3]);
    }
    err.mae_x /= err.count;
    err.mae_y /= err.count;
    err.rmse_x = std::sqrt(err.rmse_x / err.count);
    err.rmse_y = std::sqrt(err.rmse_y / err.count);
    return err;
  };

  std::vector<std::array<double, 4>> det_diffs;
  std::vector<std::array<double, 4>> trk_diffs;
  std::vector<double> times;
  for (const FrameRecord& rec : traj.records) {
    if (!rec.detection) ++report.misses;
    if (rec.truth && rec.detection) {
      det_diffs.push_back({detail::round6(rec.detection->x),
                           detail::round6(rec.detection->y),
                           detail::round6(rec.truth->x),
                           detail::round6(rec.truth->y)});
    }
    if (rec.truth && rec.tracked) {
      trk_diffs.push_back({detail::round6(rec.tracked->x),
                           detail::round6(rec.tracked->y),
                           detail::round6(rec.truth->x),
                           detail::round6(rec.truth->y)});
    }
    if (rec.ms) times.push_back(detail::round6(*rec.ms));
  }
  if (!det_diffs.empty()) report.detection = accumulate(det_diffs);
  if (!trk_diffs.empty()) report.tracking = accumulate(trk_diffs);
  if (!times.empty()) {
    double sum = 0.0;
    for (double t : times) sum += t;
    report.mean_ms = sum / static_cast<double>(times.size());
    std::sort(times.begin(), times.end());
    const std::size_t idx =
        std::min(times.size() - 1,
                 static_cast<std::size_t>(
                     std::ceil(0.95 * static_cast<double>(times.size()))) -
                     1);
    report.p95_ms = times[idx];
  }
  return report;
}

inline std::string format_metrics(const MetricsReport& report) {
  std::ostringstream out;
  out << "frames: " << report.frames << "\n";
  out << "misses: " << report.misses << "\n";
  auto emit = [&out](const char* prefix, const AxisErrors& err) {
    out << prefix << "_frames: " << err.count << "\n";
    out << prefix << "_mae_x: " << detail::format6(err.mae_x) << "\n";
    out << prefix << "_mae_y: " << detail::format6(err.mae_y) << "\n";
    out << prefix << "_rmse_x: " << detail::format6(err.rmse_x) << "\n";
    out << prefix << "_rmse_y: " << detail::format6(err.rmse_y) << "\n";
  };
  if (report.detection) emit("detection", *report.detection);
  if (report.tracking) emit("tracking", *report.tracking);
  if (report.mean_ms) out << "mean_ms: " << detail::format6(*report.mean_ms) << "\n";
  if (report.p95_ms) out << "p95_ms: " << detail::format6(*report.p95_ms) << "\n";
  return out.str();
}

inline const char* kTrajectoryCsvHeader = "frame,x_det,y_det,miss,x_trk,y_trk,x_gt,y_gt,ms";

/// Writes the trajectory as CSV. Absent fields are empty; values carry six
/// decimals with '.' as the decimal point regardless of locale.
inline void write_csv(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ProcessingError("cannot open CSV for writing: " + path.string());
  out << kTrajectoryCsvHeader << "\n";
  for (const FrameRecord& rec : traj.records) {
    auto field = [](const std::optional<PointXY>& p, bool x_axis) {
      return p ? detail::format6(x_axis ? p->x : p->y) : std::string();
    };
    out << rec.frame << ',' << field(rec.detection, true) << ','
        << field(rec.detection, false) << ',' << (rec.detection ? 0 : 1) << ','
        << field(rec.tracked, true) << ',' << field(rec.tracked, false) << ','
        << field(rec.truth, true) << ',' << field(rec.truth, false) << ','
        << (rec.ms ? detail::format6(*rec.ms) : std::string()) << "\n";
  }
  if (!out) throw ProcessingError("CSV write failed: " + path.string());
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ProcessingError("cannot open CSV: " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::trimmed(line) != kTrajectoryCsvHeader) {
    throw ProcessingError("unrecognized CSV header in " + path.string());
  }
  Trajectory traj;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trimmed(line).empty()) continue;
    std::vector<std::string> fields;
    std::string item;
    std::stringstream ss(line);
    while (std::getline(ss, item, ',')) fields.push_back(item);
    while (fields.size() < 9) fields.emplace_back();
    if (fields.size() != 9) {
      throw ProcessingError(path.string() + " line " + std::to_string(line_no) +
                            ": expected 9 CSV fields");
    }
    auto number = [&](const std::string& s) -> std::optional<double> {
      if (detail::trimmed(s).empty()) return std::nullopt;
      return std::strtod(s.c_str(), nullptr);
    };
    auto point = [&](const std::string& sx,
                     const std::string& sy) -> std::optional<PointXY> {
      const auto x = number(sx);
      const auto y = number(sy);
      if (!x || !y) return std::nullopt;
      return PointXY{*x, *y};
    };
    FrameRecord rec;
    rec.frame = static_cast<int>(number(fields[0]).value_or(0));
    rec.detection = point(fields[1], fields[2]);
    rec.tracked = point(fields[4], fields[5]);
    rec.truth = point(fields[6], fields[7]);
    rec.ms = number(fields[8]);
    traj.records.push_back(rec);
  }
  return traj;
}

/// Emits plot-ready whitespace-separated series files <prefix>_x.dat and
/// <prefix>_y.dat (frame index, then truth / detection / tracked columns for
/// whichever series exist; missing samples print as nan).
inline void write_plot_data(const Trajectory& traj,
                            const std::filesystem::path& prefix) {
  const bool has_truth = std::any_of(traj.records.begin(), traj.records.end(),
                                     [](const auto& r) { return r.truth.has_value(); });
  const bool has_tracked = std::any_of(traj.records.begin(), traj.records.end(),
                                       [](const auto& r) { return r.tracked.has_value(); });
  for (const bool x_axis : {true, false}) {
    const std::filesystem::path path =
        prefix.string() + (x_axis ? "_x.dat" : "_y.dat");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ProcessingError("cannot open plot file: " + path.string());
    out << "# frame";
    if (has_truth) out << " truth";
    out << " detection";
    if (has_tracked) out << " tracked";
    out << "\n";
    auto cell = [&](const std::optional<PointXY>& p) {
      return p ? detail::format6(x_axis ? p->x : p->y) : std::string("nan");
    };
    for (const FrameRecord& rec : traj.records) {
      out << rec.frame;
      if (has_truth) out << ' ' << cell(rec.truth);
      out << ' ' << cell(rec.detection);
      if (has_tracked) out << ' ' << cell(rec.tracked);
      out << "\n";
    }
    if (!out) throw ProcessingError("plot write failed: " + path.string());
  }
}

namespace detail {

struct LoadedSequence {
  std::vector<GrayImage> frames;
  std::optional<GroundTruth> truth;
};

inline std::optional<GroundTruth> load_truth_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  std::string line;
  if (!std::getline(in, line) || trimmed(line) != "frame,x,y") return std::nullopt;
  GroundTruth truth;
  while (std::getline(in, line)) {
    if (trimmed(line).empty()) continue;
    std::stringstream ss(line);
    std::string frame_s, x_s, y_s;
    if (!std::getline(ss, frame_s, ',') || !std::getline(ss, x_s, ',') ||
        !std::getline(ss, y_s, ',')) {
      return std::nullopt;
    }
    truth.centers.push_back(
        {std::strtod(x_s.c_str(), nullptr), std::strtod(y_s.c_str(), nullptr)});
  }
  return truth;
}

inline LoadedSequence load_input(const PipelineConfig& cfg) {
  LoadedSequence seq;
  if (cfg.input_type == InputType::synth) {
    auto [frames, truth] = generate_sequence(cfg.synth);
    seq.frames = std::move(frames);
    seq.truth = std::move(truth);
    return seq;
  }
  std::vector<std::filesystem::path> paths;
  for (const auto& entry : std::filesystem::directory_iterator(cfg.frames_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".pgm") {
      paths.push_back(entry.path());
    }
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) seq.frames.push_back(load_pgm(p));
  // A truth.csv alongside the frames (as written by `pupiltrack synth`)
  // re-attaches ground truth to materialized sequences.
  seq.truth = load_truth_csv(cfg.frames_dir / "truth.csv");
  if (seq.truth && seq.truth->centers.size() != seq.frames.size()) {
    throw ProcessingError("truth.csv entry count does not match frame count");
  }
  return seq;
}

}  // namespace detail

/// Processes a sequence end to end: detection on every frame, optional
/// calibration (b fit, EM noise estimation) and tracking, then metrics.
inline RunOutput run(const PipelineConfig& cfg) {
  detail::LoadedSequence input = detail::load_input(cfg);
  if (input.frames.empty()) {
    throw ProcessingError("input contains zero frames");
  }
  const std::size_t n = input.frames.size();

  const DetectorConfig detector{cfg.pre, cfg.coarse, cfg.caa};
  std::vector<std::optional<PointXY>> detections(n);
  Trajectory traj;
  traj.records.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const std::optional<RefinedResult> refined =
        detect_pupil(input.frames[k], detector);
    const auto stop = std::chrono::steady_clock::now();

    FrameRecord& rec = traj.records[k];
    rec.frame = static_cast<int>(k);
    if (refined) {
      detections[k] = refined->center;
      rec.detection = refined->center;
    }
    if (cfg.timing) {
      rec.ms = std::chrono::duration<double, std::milli>(stop - start).count();
    }
    if (input.truth) rec.truth = input.truth->centers[k];
  }

  std::optional<TrackerCalibration> calibration;
  if (cfg.mode == Mode::track) {
    const detail::ValidRun segment = detail::longest_valid_run(detections);
    const TrackerConfig& tr = cfg.tracker;

    TrackerCalibration calib;
    calib.Q = tr.q_diag.asDiagonal();
    calib.R = tr.r_diag.asDiagonal();

    // b: least-squares fit on a prefix tracked with b = 0, unless pinned.
    if (tr.b) {
      calib.b = *tr.b;
    } else {
      if (segment.length < 2) {
        throw ProcessingError("cannot fit b: fewer than 2 consecutive detections");
      }
      const std::size_t length =
          std::min<std::size_t>(segment.length, std::max(2, tr.calibration_frames));
      const DynamicsModel dyn(tr.period, calib.Q);
      ObservationModel obs;
      obs.R = calib.R;
      std::vector<Eigen::Vector4d> states;
      std::vector<Eigen::Vector2d> measured;
      states.reserve(length);
      measured.reserve(length);
      Eigen::Vector2d first(detections[segment.start]->x, detections[segment.start]->y);
      obs.c_prev = first;
      TrackState state = make_initial_state(first, tr.p0_diag);
      states.push_back(state.s);
      measured.push_back(first);
      for (std::size_t i = 1; i < length; ++i) {
        const PointXY p = *detections[segment.start + i];
        Measurement meas{Eigen::Vector2d(p.x, p.y), true};
        state = step_frame(state, meas, dyn, obs, GateConfig{false, 0.0});
        states.push_back(state.s);
        measured.push_back(meas.c);
      }
      calib.b = fit_b(states, measured, tr.b_max);
    }

    if (tr.noise_em) {
      if (segment.length < 10) {
        throw ProcessingError(
            "cannot run EM: need >= 10 consecutive detections, have " +
            std::to_string(segment.length));
      }
      std::vector<Eigen::Vector2d> measured;
      measured.reserve(segment.length);
      for (std::size_t i = 0; i < segment.length; ++i) {
        const PointXY p = *detections[segment.start + i];
        measured.emplace_back(p.x, p.y);
      }
      const DynamicsModel dyn(tr.period, calib.Q);
      ObservationModel obs;
      obs.b = calib.b;
      obs.R = calib.R;
      const EmResult em = em_fit(measured, dyn, obs, tr.em_iterations, tr.p0_diag);
      calib.Q = em.Q;
      calib.R = em.R;
    }

    // Tracking pass over the full sequence.
    const DynamicsModel dyn(tr.period, calib.Q);
    ObservationModel obs;
    obs.b = calib.b;
    obs.R = calib.R;
    bool initialized = false;
    TrackState state;
    for (std::size_t k = 0; k < n; ++k) {
      if (!initialized) {
        if (detections[k]) {
          const Eigen::Vector2d c(detections[k]->x, detections[k]->y);
          state = make_initial_state(c, tr.p0_diag);
          obs.c_prev = c;
          initialized = true;
          traj.records[k].tracked = PointXY{state.s(0), state.s(2)};
        }
        continue;
      }
      Measurement meas;
      if (detections[k]) {
        meas.c = Eigen::Vector2d(detections[k]->x, detections[k]->y);
        meas.valid = true;
      }
      state = step_frame(state, meas, dyn, obs, tr.gate);
      traj.records[k].tracked = PointXY{state.s(0), state.s(2)};
    }
    calibration = calib;
  }

  RunOutput out;
  out.trajectory = std::move(traj);
  out.metrics = compute_metrics(out.trajectory);
  out.calibration = calibration;
  return out;
}

}  // namespace pupiltrack
