#pragma once

#include "fracheat/fractional_ops.hpp"
#include "fracheat/kernels.hpp"
#include "fracheat/memory.hpp"
#include "fracheat/spectral.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fracheat::mild {

/// Prescribed right-hand side h(x, t) replacing the reaction u^p (linear problem).
using PrescribedSource = std::function<double(std::span<const double> x, double t)>;

struct ProblemSpec {
  kernels::KernelParams params = kernels::KernelParams::make(0.5, 1);
  double p = 2.0;
  memory::MemoryData memory;

  double length = 20.0; ///< box side L
  int n_x = 128;        ///< points per axis (1: space-homogeneous run)
  double dt0 = 1e-4;
  double t_max = 1.0;

  int picard_max_iter = 60;
  double picard_tol = 1e-10; ///< relative to the current sup norm

  double blowup_threshold = 1e4;
  double dt_floor = 1e-13;

  // Step-size control.
  double dt_max = 0.05;
  double dt_growth = 1.1;
  double dt_grade = 0.05;      ///< dt <= grade * t
  double dt_rate = 0.02;       ///< dt <= rate * sup^{-(p-1)/sigma} when p > 1
  double collapse_frac = 1e-3; ///< blow-up needs dt <= collapse_frac * t

  double tail_rel = 1e-6;      ///< history-tail bound relative to the solution scale
  double coarsen_ratio = 0.0;  ///< merge panels older than ratio * width (0: never)
  int exact_panels = 6;        ///< newest panels integrated with exact kernel moments
  int quad_points = 4;         ///< Gauss-Legendre points on older panels

  PrescribedSource source;     ///< set: solve the linear problem with this right-hand side

  /// Throws std::invalid_argument / InvalidHistory naming the offending field.
  void validate() const;
};

enum class RunStatus { completed_horizon, blowup_detected, step_failure };
std::string to_string(RunStatus s);

struct Trajectory {
  std::shared_ptr<const spectral::BoxGrid> grid;
  kernels::KernelParams params;
  double p = 1.0;
  memory::MemoryData memory;
  bool linear = false;

  std::vector<double> times;
  std::vector<std::vector<double>> slices;
  std::vector<double> sup_norms;
  std::vector<double> dts;
  std::vector<int> picard_iters;
  RunStatus status = RunStatus::completed_horizon;
  std::string message;
  double forcing_error = 0.0; ///< largest history-tail error bar used

  /// View of the run as a space-time field (shares nothing; copies the slices).
  ops::SpaceTimeField field() const;
  double initial_scale() const { return sup_norms.empty() ? 0.0 : sup_norms.front(); }
};

/// Marches the mild representation u = R_- f + R_+ u^p forward in time.
Trajectory mild_march(const ProblemSpec& spec);

struct ResidualSample {
  std::vector<double> x;
  double t = 0.0;
};

struct ResidualReport {
  double max_relative = 0.0;
  std::vector<double> relative; ///< per sample
  std::vector<double> snapped_times;
};

/// |M u - u^p| / max_x u^p at the sampled points (times snap to the nearest stored time).
ResidualReport residual_check(const Trajectory& traj, std::span<const ResidualSample> samples);

/// Writes meta.json, times.csv, supnorm.csv and slices/*.bin into `dir`.
/// `provenance` lines are embedded as '#' comments in every CSV and as "config" in meta.json.
void write_run_dir(const Trajectory& traj, const ProblemSpec& spec,
                   const std::filesystem::path& dir, const std::vector<std::string>& provenance);

} // namespace fracheat::mild
