#pragma once

#include <vector>

#include "rfit/common.hpp"

namespace rfit {

/// How complex entries are compared.
enum class LossDomain {
  kMagnitude,  // |sim| vs |obs| per entry
  kComplex,    // full complex difference (phase sensitive)
};

struct LossConfig {
  int n_scales = 4;
  std::vector<double> weights;  // one per scale; empty = equal weights summing to 1
  LossDomain domain = LossDomain::kMagnitude;
  bool pool_columns = false;    // also pool along columns (2-D spectra)
  bool normalize = false;       // divide by the observation's mean power

  void validate() const;
  std::vector<double> scale_weights() const;
};

/// One 2x average-pooling step along rows (and columns when requested). An odd
/// trailing entry is averaged on its own.
MatXc average_pool(const MatXc& x, bool pool_columns);
/// Adjoint of average_pool for an input of the given shape.
MatXc average_pool_adjoint(const MatXc& g, Eigen::Index rows, Eigen::Index cols, bool pool_columns);
MatX average_pool(const MatX& x, bool pool_columns);

struct LossValue {
  double value = 0.0;
  /// dL = Re(sum conj(G) dSim); zero where the mask is zero.
  MatXc gradient;
};

/// Weighted sum over scales of the (masked) mean squared error between pooled
/// simulation and observation. `mask` (0/1, same shape) selects entries; a
/// pooled entry is counted with the mean of its mask values.
LossValue multiscale_mse(const MatXc& sim, const MatXc& obs, const LossConfig& config,
                         const MatX* mask = nullptr, bool want_gradient = true);

/// Real-valued convenience overload (spectra).
LossValue multiscale_mse(const MatX& sim, const MatX& obs, const LossConfig& config,
                         const MatX* mask = nullptr, bool want_gradient = true);

}  // namespace rfit
