#include "rfit/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace rfit {

void OptimizerConfig::validate(int n) const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw InputError("learning rate must be positive");
  if (!(reg_weight >= 0.0)) throw InputError("regularization weight must be non-negative");
  if (max_iterations < 0) throw InputError("max iterations must be non-negative");
  if (!(rx_fraction > 0.0 && rx_fraction <= 1.0) || !(bin_fraction > 0.0 && bin_fraction <= 1.0))
    throw InputError("minibatch fractions must lie in (0, 1]");
  if (!active.empty() && static_cast<int>(active.size()) != n)
    throw InputError("active-parameter mask size does not match the layout");
}

std::optional<VecX> sgd_step(const VecX& theta, const VecX& gradient,
                             const Eigen::SparseMatrix<double>* laplacian,
                             const OptimizerConfig& config) {
  if (gradient.size() != theta.size()) throw InputError("gradient and theta sizes differ");
  if (!gradient.allFinite()) return std::nullopt;
  VecX step = gradient;
  if (laplacian && config.reg_weight > 0.0) {
    if (laplacian->rows() != theta.size() || laplacian->cols() != theta.size())
      throw InputError("Laplacian size does not match theta");
    step += config.reg_weight * ((*laplacian) * theta);
  }
  if (!config.active.empty()) {
    for (Eigen::Index i = 0; i < step.size(); ++i)
      if (!config.active[static_cast<std::size_t>(i)]) step[i] = 0.0;
  }
  return VecX(theta - config.learning_rate * step);
}

std::string to_string(FitStatus s) {
  switch (s) {
    case FitStatus::kRunning: return "running";
    case FitStatus::kConverged: return "converged";
    case FitStatus::kMaxIterations: return "max_iter";
    case FitStatus::kDiverged: return "diverged";
    case FitStatus::kError: return "error";
  }
  return "?";
}

FitStatus fit_status_from_string(const std::string& s) {
  for (FitStatus f : {FitStatus::kRunning, FitStatus::kConverged, FitStatus::kMaxIterations,
                      FitStatus::kDiverged, FitStatus::kError})
    if (to_string(f) == s) return f;
  throw InputError("unknown fit status '" + s + "'");
}

MatX minibatch_mask(Eigen::Index bins, Eigen::Index rx, int n_scales, double rx_fraction,
                    double bin_fraction, std::uint64_t seed) {
  MatX mask = MatX::Ones(bins, rx);
  if (rx_fraction >= 1.0 && bin_fraction >= 1.0) return mask;
  std::mt19937_64 rng(mix_seed(seed, 0xBA7C));
  auto choose = [&](Eigen::Index count, double fraction) {
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), 0);
    const auto keep = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(fraction * count)));
    // Partial Fisher-Yates with raw engine output for portability.
    for (Eigen::Index i = 0; i < keep; ++i) {
      const auto j = i + static_cast<Eigen::Index>(rng() % static_cast<std::uint64_t>(count - i));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    std::vector<bool> sel(static_cast<std::size_t>(count), false);
    for (Eigen::Index i = 0; i < keep; ++i) sel[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])] = true;
    return sel;
  };
  const Eigen::Index block = Eigen::Index(1) << std::max(0, n_scales - 1);
  const Eigen::Index blocks = (bins + block - 1) / block;
  const auto rx_sel = choose(rx, rx_fraction);
  const auto bin_sel = choose(blocks, bin_fraction);
  for (Eigen::Index r = 0; r < rx; ++r) {
    for (Eigen::Index b = 0; b < bins; ++b) {
      const bool on = rx_sel[static_cast<std::size_t>(r)] && bin_sel[static_cast<std::size_t>(b / block)];
      mask(b, r) = on ? 1.0 : 0.0;
    }
  }
  return mask;
}

FitTrace fit(const Objective& objective, const VecX& theta0, const OptimizerConfig& config,
             const LaplacianMatrix* laplacian, const FitCallback& callback,
             const FitCheckpoint* resume) {
  const ParamLayout& layout = objective.layout();
  config.validate(layout.size());
  if (theta0.size() != layout.size()) throw InputError("initial theta does not match the layout");
  Eigen::SparseMatrix<double> lap;
  if (laplacian) lap = laplacian->embed(layout);

  FitTrace trace;
  VecX theta = theta0;
  int start = 0;
  if (resume) {
    trace = resume->trace;
    theta = resume->next_theta;
    start = trace.iterations.empty() ? 0 : trace.iterations.back().iteration + 1;
    trace.status = FitStatus::kRunning;
  }
  trace.names = layout.names();
  const bool minibatch = is_profile(objective.target()) &&
                         (config.rx_fraction < 1.0 || config.bin_fraction < 1.0);

  for (int it = start;; ++it) {
    Objective::Result r;
    MatX mask;
    if (minibatch) {
      mask = minibatch_mask(objective.observation().rows(), objective.observation().cols(),
                            objective.loss_config().n_scales, config.rx_fraction,
                            config.bin_fraction, mix_seed(config.seed, static_cast<std::uint64_t>(it)));
    }
    const std::uint64_t phase_seed =
        objective.target() == TargetKind::kAiry && config.redraw_phases ? static_cast<std::uint64_t>(it) : 0;
    try {
      r = objective.evaluate(theta, true, minibatch ? &mask : nullptr, phase_seed);
    } catch (const Error& e) {
      trace.status = FitStatus::kError;
      trace.message = e.what();
      if (callback) callback(trace, std::nullopt);
      return trace;
    }
    FitIteration rec;
    rec.iteration = it;
    rec.loss = r.loss;
    rec.grad_norm = r.gradient.norm();
    rec.reg_energy = laplacian ? laplacian->energy(theta, layout) : 0.0;
    rec.theta = theta;
    if (trace.iterations.empty()) trace.initial_loss = r.loss;
    trace.iterations.push_back(rec);

    std::optional<VecX> next;
    if (!std::isfinite(r.loss) || r.loss > config.divergence_factor * trace.initial_loss) {
      trace.status = FitStatus::kDiverged;
      trace.message = "loss exceeded the divergence bound";
    } else if (r.loss <= config.tol_abs || r.loss <= config.tol_rel * trace.initial_loss) {
      trace.status = FitStatus::kConverged;
    } else {
      next = sgd_step(theta, r.gradient, laplacian ? &lap : nullptr, config);
      if (!next) {
        trace.status = FitStatus::kDiverged;
        trace.message = "non-finite gradient";
      } else {
        try {
          objective.scene().params.unpack(*next).validate();
        } catch (const InputError& e) {
          trace.status = FitStatus::kDiverged;
          trace.message = std::string("step left the valid parameter range: ") + e.what();
          next.reset();
        }
      }
    }
    // At the budget the pending step is still reported so a resume continues from it.
    if (next && it >= config.max_iterations) trace.status = FitStatus::kMaxIterations;
    if (callback) callback(trace, next);
    if (trace.status != FitStatus::kRunning) return trace;
    theta = *next;
  }
}

}  // namespace rfit
