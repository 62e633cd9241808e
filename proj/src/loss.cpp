#include "rfit/loss.hpp"

#include <cmath>
#include <sstream>

namespace rfit {

void LossConfig::validate() const {
  if (n_scales < 1) throw InputError("loss n_scales must be at least 1");
  if (!weights.empty()) {
    if (static_cast<int>(weights.size()) != n_scales)
      throw InputError("loss weights must have one entry per scale");
    bool positive = false;
    for (double w : weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("loss weights must be non-negative");
      positive = positive || w > 0.0;
    }
    if (!positive) throw InputError("at least one loss weight must be positive");
  }
}

std::vector<double> LossConfig::scale_weights() const {
  if (!weights.empty()) return weights;
  return std::vector<double>(static_cast<std::size_t>(n_scales), 1.0 / n_scales);
}

namespace {

template <typename Mat>
Mat pool_rows(const Mat& x) {
  const Eigen::Index r = x.rows();
  const Eigen::Index out = (r + 1) / 2;
  Mat y(out, x.cols());
  for (Eigen::Index i = 0; i < out; ++i) {
    if (2 * i + 1 < r) y.row(i) = 0.5 * (x.row(2 * i) + x.row(2 * i + 1));
    else y.row(i) = x.row(2 * i);
  }
  return y;
}

template <typename Mat>
Mat pool_rows_adjoint(const Mat& g, Eigen::Index rows) {
  Mat x = Mat::Zero(rows, g.cols());
  for (Eigen::Index i = 0; i < g.rows(); ++i) {
    if (2 * i + 1 < rows) {
      x.row(2 * i) = 0.5 * g.row(i);
      x.row(2 * i + 1) = 0.5 * g.row(i);
    } else {
      x.row(2 * i) = g.row(i);
    }
  }
  return x;
}

}  // namespace

MatXc average_pool(const MatXc& x, bool pool_columns) {
  MatXc y = pool_rows(x);
  if (pool_columns) y = pool_rows(MatXc(y.transpose())).transpose();
  return y;
}

MatX average_pool(const MatX& x, bool pool_columns) {
  MatX y = pool_rows(x);
  if (pool_columns) y = pool_rows(MatX(y.transpose())).transpose();
  return y;
}

MatXc average_pool_adjoint(const MatXc& g, Eigen::Index rows, Eigen::Index cols, bool pool_columns) {
  MatXc h = g;
  if (pool_columns) h = pool_rows_adjoint(MatXc(h.transpose()), cols).transpose();
  return pool_rows_adjoint(h, rows);
}

LossValue multiscale_mse(const MatXc& sim, const MatXc& obs, const LossConfig& config,
                         const MatX* mask, bool want_gradient) {
  config.validate();
  if (sim.rows() != obs.rows() || sim.cols() != obs.cols()) {
    std::ostringstream os;
    os << "shape mismatch: simulation is " << sim.rows() << "x" << sim.cols()
       << " but observation is " << obs.rows() << "x" << obs.cols();
    throw InputError(os.str());
  }
  if (mask && (mask->rows() != sim.rows() || mask->cols() != sim.cols()))
    throw InputError("loss mask shape does not match the simulation");
  if (sim.size() == 0) throw InputError("empty simulation");

  const bool magnitude = config.domain == LossDomain::kMagnitude;
  MatXc a = sim, b = obs;
  if (magnitude) {
    a = sim.cwiseAbs().cast<Complex>();
    b = obs.cwiseAbs().cast<Complex>();
  }
  MatX m = mask ? *mask : MatX::Ones(sim.rows(), sim.cols());
  const auto weights = config.scale_weights();

  // Pyramid of shapes so the adjoint can walk back up.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  LossValue out;
  MatXc grad_a = MatXc::Zero(a.rows(), a.cols());
  MatXc pa = a, pb = b;
  MatX pm = m;
  for (int s = 0; s < config.n_scales; ++s) {
    if (s > 0) {
      shapes.emplace_back(pa.rows(), pa.cols());
      pa = average_pool(pa, config.pool_columns);
      pb = average_pool(pb, config.pool_columns);
      pm = average_pool(pm, config.pool_columns);
    }
    const double w = weights[static_cast<std::size_t>(s)];
    const double count = pm.sum();
    if (w == 0.0 || count <= 0.0) continue;
    const MatXc d = pa - pb;
    out.value += w * (pm.array() * d.cwiseAbs2().array()).sum() / count;
    if (want_gradient) {
      MatXc g = (2.0 * w / count) * (pm.cast<Complex>().array() * d.array()).matrix();
      for (int k = s - 1; k >= 0; --k) {
        const auto [r, c] = shapes[static_cast<std::size_t>(k)];
        g = average_pool_adjoint(g, r, c, config.pool_columns);
      }
      grad_a += g;
    }
  }
  if (config.normalize) {
    const double power = b.cwiseAbs2().mean();
    if (power > 0.0) {
      out.value /= power;
      grad_a /= power;
    }
  }
  if (want_gradient) {
    if (magnitude) {
      out.gradient = MatXc::Zero(sim.rows(), sim.cols());
      for (Eigen::Index j = 0; j < sim.cols(); ++j) {
        for (Eigen::Index i = 0; i < sim.rows(); ++i) {
          const double mag = std::abs(sim(i, j));
          if (mag > 0.0) out.gradient(i, j) = grad_a(i, j).real() * sim(i, j) / mag;
        }
      }
    } else {
      out.gradient = grad_a;
    }
  }
  return out;
}

LossValue multiscale_mse(const MatX& sim, const MatX& obs, const LossConfig& config,
                         const MatX* mask, bool want_gradient) {
  LossConfig c = config;
  c.domain = LossDomain::kComplex;
  return multiscale_mse(MatXc(sim.cast<Complex>()), MatXc(obs.cast<Complex>()), c, mask,
                        want_gradient);
}

}  // namespace rfit
