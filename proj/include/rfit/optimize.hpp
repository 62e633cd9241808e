#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/SparseCore>

#include "rfit/common.hpp"
#include "rfit/geometry.hpp"
#include "rfit/objective.hpp"

namespace rfit {

struct OptimizerConfig {
  double learning_rate = 1e-3;
  double reg_weight = 0.0;         // lambda
  int max_iterations = 100;
  double tol_abs = 0.0;            // converged when loss <= tol_abs
  double tol_rel = 1e-6;           // ... or loss <= tol_rel * initial loss
  double divergence_factor = 1e6;  // diverged when loss > factor * initial loss
  std::uint64_t seed = 0;
  double rx_fraction = 1.0;        // minibatch share of receive elements
  double bin_fraction = 1.0;       // minibatch share of bin blocks
  bool redraw_phases = true;       // fresh Airy phases each iteration
  std::vector<bool> active;        // per parameter; empty = all active

  void validate(int n) const;
};

/// theta - eta * (g + lambda * L theta) on the active parameters. Returns
/// nullopt when the gradient is not finite.
std::optional<VecX> sgd_step(const VecX& theta, const VecX& gradient,
                             const Eigen::SparseMatrix<double>* laplacian,
                             const OptimizerConfig& config);

enum class FitStatus { kRunning, kConverged, kMaxIterations, kDiverged, kError };
std::string to_string(FitStatus s);
FitStatus fit_status_from_string(const std::string& s);

struct FitIteration {
  int iteration = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
  double reg_energy = 0.0;
  VecX theta;
};

struct FitTrace {
  std::vector<std::string> names;
  std::vector<FitIteration> iterations;
  FitStatus status = FitStatus::kRunning;
  std::string message;
  double initial_loss = 0.0;

  const VecX& final_theta() const { return iterations.back().theta; }
};

/// Loss mask for one minibatch draw (bins x rx), or an all-ones mask when both
/// fractions are 1. Bin blocks are aligned to the coarsest pooling scale.
MatX minibatch_mask(Eigen::Index bins, Eigen::Index rx, int n_scales, double rx_fraction,
                    double bin_fraction, std::uint64_t seed);

/// Called after each recorded iteration with the trace so far and the next
/// iterate. The next iterate is also given when the run stops at its
/// iteration budget, and is empty when the run cannot continue.
using FitCallback = std::function<void(const FitTrace&, const std::optional<VecX>& next)>;

/// Resume point: the iterate to continue from and the trace recorded so far.
struct FitCheckpoint {
  FitTrace trace;
  VecX next_theta;
};

/// Gradient descent on the objective from theta0 (or a checkpoint).
FitTrace fit(const Objective& objective, const VecX& theta0, const OptimizerConfig& config,
             const LaplacianMatrix* laplacian = nullptr, const FitCallback& callback = {},
             const FitCheckpoint* resume = nullptr);

}  // namespace rfit
