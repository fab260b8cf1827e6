#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "pupiltrack/caa.hpp"
#include "pupiltrack/ekf.hpp"
#include "pupiltrack/localizer.hpp"
#include "pupiltrack/morphology.hpp"
#include "pupiltrack/synth.hpp"

namespace pupiltrack {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class InputType { synth, frames };
enum class Mode { detect, track };

struct TrackerConfig {
  double period = 1.0;                     // sampling period T
  std::optional<double> b;                 // nullopt = fit from calibration
  double b_max = 0.1;                      // search bound for the fit
  bool noise_em = true;                    // EM-estimated Q/R
  Eigen::Vector4d q_diag{0.1, 0.1, 0.1, 0.1};  // fixed Q, or EM initializer
  Eigen::Vector2d r_diag{1.0, 1.0};            // fixed R, or EM initializer
  int em_iterations = 20;
  int calibration_frames = 50;
  GateConfig gate;
  Eigen::Vector4d p0_diag{4.0, 25.0, 4.0, 25.0};
};

struct PipelineConfig {
  InputType input_type = InputType::synth;
  std::filesystem::path frames_dir;
  SynthConfig synth;
  Mode mode = Mode::detect;
  std::uint32_t seed = 0;
  bool timing = true;  // record per-frame milliseconds in the trajectory
  PreprocessConfig pre;
  CoarseConfig coarse;
  caa::Config caa;
  TrackerConfig tracker;
  std::filesystem::path out_dir = "out";

  bool synth_seed_explicit = false;
  bool caa_seed_explicit = false;

  /// Derives module seeds from the master seed unless the config pinned them.
  void apply_master_seed(std::uint32_t master) {
    seed = master;
    if (!synth_seed_explicit) synth.seed = master;
    if (!caa_seed_explicit) caa.seed = master + 1;
  }

  /// Semantic validation; throws ConfigError so the CLI can distinguish
  /// configuration problems (exit 1) from processing failures (exit 2).
  void validate() const {
    try {
      if (input_type == InputType::synth) {
        validate_config(synth);
      } else {
        if (frames_dir.empty()) {
          throw std::invalid_argument("input.frames_dir is required for type = frames");
        }
        if (!std::filesystem::is_directory(frames_dir)) {
          throw std::invalid_argument("input.frames_dir does not exist: " +
                                      frames_dir.string());
        }
      }
      coarse.validate();
      caa.validate();
      if (pre.close_radius < 0 || pre.open_radius < 0) {
        throw std::invalid_argument("morphology radii must be >= 0");
      }
      if (tracker.period <= 0.0) {
        throw std::invalid_argument("tracker.period must be > 0");
      }
      if (tracker.b_max <= 0.0) {
        throw std::invalid_argument("tracker.b_max must be > 0");
      }
      if (tracker.em_iterations < 1) {
        throw std::invalid_argument("tracker.em_iterations must be >= 1");
      }
      if (tracker.calibration_frames < 2) {
        throw std::invalid_argument("tracker.calibration_frames must be >= 2");
      }
      if (tracker.q_diag.minCoeff() < 0.0 || tracker.r_diag.minCoeff() < 0.0 ||
          tracker.p0_diag.minCoeff() < 0.0) {
        throw std::invalid_argument("tracker covariance diagonals must be >= 0");
      }
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
};

namespace detail {

inline std::string trimmed(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

/// Flat "key = value" file with [section] headers and '#' comment lines.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in) {
    KeyValueFile file;
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const std::string text = trimmed(line);
      if (text.empty() || text[0] == '#') continue;
      if (text.front() == '[') {
        if (text.back() != ']' || text.size() < 3) {
          throw ConfigError("config line " + std::to_string(line_no) +
                            ": malformed section header '" + text + "'");
        }
        section = trimmed(text.substr(1, text.size() - 2));
        continue;
      }
      const auto eq = text.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": expected 'key = value', got '" + text + "'");
      }
      const std::string key = trimmed(text.substr(0, eq));
      const std::string value = trimmed(text.substr(eq + 1));
      if (key.empty()) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": empty key");
      }
      if (section.empty()) {
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": key '" + key + "' outside any [section]");
      }
      file.values_[section + "." + key] = value;
    }
    return file;
  }

  std::optional<std::string> get(const std::string& key) const {
    consumed_.insert(key);
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
  }

  double get_double(const std::string& key, double fallback) const {
    const auto raw = get(key);
    if (!raw) return fallback;
    try {
      std::size_t pos = 0;
      const double value = std::stod(*raw, &pos);
      if (pos != raw->size()) throw std::invalid_argument("trailing characters");
      return value;
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "': invalid number '" + *raw + "'");
    }
  }

  int get_int(const std::string& key, int fallback) const {
    const double value = get_double(key, fallback);
    const int as_int = static_cast<int>(value);
    if (value != as_int) {
      throw ConfigError("config key '" + key + "': expected an integer");
    }
    return as_int;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto raw = get(key);
    if (!raw) return fallback;
    std::string v = *raw;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
    if (v == "off" || v == "false" || v == "no" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected on/off, got '" + *raw + "'");
  }

  std::vector<double> get_doubles(const std::string& key, std::size_t count,
                                  const std::vector<double>& fallback) const {
    const auto raw = get(key);
    if (!raw) return fallback;
    std::vector<double> out;
    std::string item;
    std::stringstream ss(*raw);
    while (std::getline(ss, item, ',')) {
      item = trimmed(item);
      if (item.empty()) continue;
      try {
        out.push_back(std::stod(item));
      } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': invalid number '" + item + "'");
      }
    }
    if (out.size() != count) {
      throw ConfigError("config key '" + key + "': expected " +
                        std::to_string(count) + " comma-separated values");
    }
    return out;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  void reject_unknown_keys() const {
    for (const auto& [key, value] : values_) {
      if (!consumed_.count(key)) {
        throw ConfigError("unknown config key '" + key + "'");
      }
    }
  }

 private:
  std::map<std::string, std::string> values_;
  mutable std::set<std::string> consumed_;
};

}  // namespace detail

inline PipelineConfig parse_pipeline_config(std::istream& in) {
  const auto kv = detail::KeyValueFile::parse(in);
  PipelineConfig cfg;

  const std::string input_type = kv.get_string("input.type", "synth");
  if (input_type == "synth") {
    cfg.input_type = InputType::synth;
  } else if (input_type == "frames") {
    cfg.input_type = InputType::frames;
  } else {
    throw ConfigError("input.type must be 'synth' or 'frames', got '" +
                      input_type + "'");
  }
  cfg.frames_dir = kv.get_string("input.frames_dir", "");

  SynthConfig& sy = cfg.synth;
  sy.width = kv.get_int("synth.width", sy.width);
  sy.height = kv.get_int("synth.height", sy.height);
  sy.frame_count = kv.get_int("synth.frames", sy.frame_count);
  sy.pupil_radius = kv.get_double("synth.pupil_radius", sy.pupil_radius);
  sy.iris_radius = kv.get_double("synth.iris_radius", sy.iris_radius);
  sy.pupil_intensity = kv.get_int("synth.pupil_intensity", sy.pupil_intensity);
  sy.iris_intensity = kv.get_int("synth.iris_intensity", sy.iris_intensity);
  sy.background_intensity =
      kv.get_int("synth.background_intensity", sy.background_intensity);
  sy.initial_center.x = kv.get_double("synth.center_x", sy.initial_center.x);
  sy.initial_center.y = kv.get_double("synth.center_y", sy.initial_center.y);
  sy.velocity.x = kv.get_double("synth.velocity_x", sy.velocity.x);
  sy.velocity.y = kv.get_double("synth.velocity_y", sy.velocity.y);
  sy.noise_sigma = kv.get_double("synth.noise_sigma", sy.noise_sigma);
  sy.specular_spot_count = kv.get_int("synth.specular_spots", sy.specular_spot_count);
  sy.specular_spot_radius =
      kv.get_double("synth.specular_spot_radius", sy.specular_spot_radius);
  sy.eyelash_streak_count =
      kv.get_int("synth.eyelash_streaks", sy.eyelash_streak_count);
  cfg.synth_seed_explicit = kv.has("synth.seed");
  sy.seed = static_cast<std::uint32_t>(kv.get_double("synth.seed", sy.seed));

  const std::string mode = kv.get_string("pipeline.mode", "detect");
  if (mode == "detect") {
    cfg.mode = Mode::detect;
  } else if (mode == "track") {
    cfg.mode = Mode::track;
  } else {
    throw ConfigError("pipeline.mode must be 'detect' or 'track', got '" + mode + "'");
  }
  cfg.timing = kv.get_bool("pipeline.timing", cfg.timing);
  const std::uint32_t master =
      static_cast<std::uint32_t>(kv.get_double("pipeline.seed", 0));

  cfg.pre.close_radius = kv.get_int("morphology.close_radius", cfg.pre.close_radius);
  cfg.pre.open_radius = kv.get_int("morphology.open_radius", cfg.pre.open_radius);
  const std::string shape = kv.get_string("morphology.shape", "disk");
  if (shape == "disk") {
    cfg.pre.shape = StructuringElement::Shape::disk;
  } else if (shape == "square") {
    cfg.pre.shape = StructuringElement::Shape::square;
  } else {
    throw ConfigError("morphology.shape must be 'disk' or 'square', got '" + shape + "'");
  }

  cfg.coarse.dark_fraction = kv.get_double("localizer.rho", cfg.coarse.dark_fraction);
  cfg.coarse.margin = kv.get_int("localizer.margin", cfg.coarse.margin);
  cfg.coarse.min_region_pixels =
      kv.get_int("localizer.min_region", cfg.coarse.min_region_pixels);

  cfg.caa.initial_cluster_count =
      kv.get_int("caa.initial_clusters", cfg.caa.initial_cluster_count);
  cfg.caa.max_iterations = kv.get_int("caa.max_iterations", cfg.caa.max_iterations);
  cfg.caa.convergence_epsilon =
      kv.get_double("caa.convergence_epsilon", cfg.caa.convergence_epsilon);
  cfg.caa.alpha_eta0 = kv.get_double("caa.eta0", cfg.caa.alpha_eta0);
  cfg.caa.alpha_tau = kv.get_double("caa.tau", cfg.caa.alpha_tau);
  cfg.caa.cardinality_epsilon =
      kv.get_double("caa.cardinality_epsilon", cfg.caa.cardinality_epsilon);
  cfg.caa_seed_explicit = kv.has("caa.seed");
  cfg.caa.seed = static_cast<std::uint32_t>(kv.get_double("caa.seed", cfg.caa.seed));

  TrackerConfig& tr = cfg.tracker;
  tr.period = kv.get_double("tracker.period", tr.period);
  const std::string b_value = kv.get_string("tracker.b", "fit");
  if (b_value == "fit") {
    tr.b = std::nullopt;
  } else {
    try {
      tr.b = std::stod(b_value);
    } catch (const std::exception&) {
      throw ConfigError("tracker.b must be 'fit' or a number, got '" + b_value + "'");
    }
    if (*tr.b < 0.0) throw ConfigError("tracker.b must be >= 0");
  }
  tr.b_max = kv.get_double("tracker.b_max", tr.b_max);
  const std::string noise = kv.get_string("tracker.noise", "em");
  if (noise == "em") {
    tr.noise_em = true;
  } else if (noise == "fixed") {
    tr.noise_em = false;
  } else {
    throw ConfigError("tracker.noise must be 'em' or 'fixed', got '" + noise + "'");
  }
  {
    const auto q = kv.get_doubles("tracker.q_diag", 4,
                                  {tr.q_diag(0), tr.q_diag(1), tr.q_diag(2), tr.q_diag(3)});
    tr.q_diag = Eigen::Vector4d(q[0], q[1], q[2], q[3]);
    const auto r = kv.get_doubles("tracker.r_diag", 2, {tr.r_diag(0), tr.r_diag(1)});
    tr.r_diag = Eigen::Vector2d(r[0], r[1]);
    const auto p0 = kv.get_doubles("tracker.init_p_diag", 4,
                                   {tr.p0_diag(0), tr.p0_diag(1), tr.p0_diag(2), tr.p0_diag(3)});
    tr.p0_diag = Eigen::Vector4d(p0[0], p0[1], p0[2], p0[3]);
  }
  tr.em_iterations = kv.get_int("tracker.em_iterations", tr.em_iterations);
  tr.calibration_frames =
      kv.get_int("tracker.calibration_frames", tr.calibration_frames);
  tr.gate.enabled = kv.get_bool("tracker.gate", tr.gate.enabled);
  tr.gate.threshold = kv.get_double("tracker.gate_threshold", tr.gate.threshold);

  cfg.out_dir = kv.get_string("output.dir", cfg.out_dir.string());

  kv.reject_unknown_keys();
  cfg.apply_master_seed(master);
  return cfg;
}

inline PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw ConfigError("cannot open config file: " + path.string());
  }
  try {
    return parse_pipeline_config(in);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace pupiltrack
