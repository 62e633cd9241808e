#include "rfit/objective.hpp"

#include <cmath>
#include <sstream>

namespace rfit {

std::string to_string(TargetKind k) {
  switch (k) {
    case TargetKind::kProfileExact: return "exact";
    case TargetKind::kProfileSurrogate: return "surrogate";
    case TargetKind::kBeamform: return "beamform";
    case TargetKind::kAiry: return "airy";
  }
  return "?";
}

TargetKind target_kind_from_string(const std::string& name) {
  if (name == "exact") return TargetKind::kProfileExact;
  if (name == "surrogate") return TargetKind::kProfileSurrogate;
  if (name == "beamform") return TargetKind::kBeamform;
  if (name == "airy") return TargetKind::kAiry;
  if (name == "music")
    throw InputError("the MUSIC pseudospectrum is not differentiable; use beamform or airy as a fit target");
  throw InputError("unknown loss target '" + name + "' (expected exact, surrogate, beamform or airy)");
}

bool is_profile(TargetKind k) {
  return k == TargetKind::kProfileExact || k == TargetKind::kProfileSurrogate;
}

LossDomain default_domain(TargetKind k) {
  return k == TargetKind::kProfileExact ? LossDomain::kComplex : LossDomain::kMagnitude;
}

namespace {

ArrayGeometry scene_array(const Scene& scene) {
  return ArrayGeometry::from_positions(scene.rx_positions, scene.wavelength());
}

double airy_radius(const PipelineConfig& p, const ArrayGeometry& array) {
  const double r = p.surrogate.airy_radius > 0.0 ? p.surrogate.airy_radius : array.half_aperture();
  if (!(r > 0.0))
    throw InputError("Airy surrogate needs surrogate.airy_radius > 0 or an array with more than one element");
  return r;
}

MatXc steering_matrix(const ArrayGeometry& array, const AngleGrid& grid) {
  const Eigen::Index na = grid.az_count(), ne = grid.el_count();
  MatXc a(array.size(), na * ne);
  for (Eigen::Index e = 0; e < ne; ++e)
    for (Eigen::Index z = 0; z < na; ++z)
      a.col(z + na * e) = steering_vector(array, grid.azimuth[z], grid.elevation[e]);
  return a;
}

struct Forward {
  Scene scene;
  std::optional<World> world;
  CirSample cir;
  MatXc values;
  // Profile targets: per rx, path ids in tap order and the profile Jacobian.
  std::vector<std::vector<std::size_t>> rx_paths;
  std::vector<ProfileJacobian> profile_jac;
  // Beamform: snapshot and per-cell beam outputs.
  VecXc snapshot;
  VecXc beam;
  // Airy: path ids (rx 0), unit directions, phases, coherent fields.
  std::vector<std::size_t> airy_paths;
  std::vector<Vec3> airy_dirs;
  VecX airy_phase;
  VecXc airy_field;
};

}  // namespace

Objective::Objective(Scene scene, PipelineConfig pipeline, TargetKind target, LossConfig loss,
                     MatXc observation)
    : scene_(std::move(scene)),
      pipeline_(std::move(pipeline)),
      target_(target),
      loss_(std::move(loss)),
      observation_(std::move(observation)) {
  scene_.validate();
  pipeline_.radar.validate();
  pipeline_.surrogate.validate();
  pipeline_.boundary.validate();
  loss_.validate();
  if (pipeline_.max_order < 0 || pipeline_.max_order > kMaxReflectionOrder)
    throw InputError("unsupported reflection order " + std::to_string(pipeline_.max_order));
  if (pipeline_.min_order < 0 || pipeline_.min_order > pipeline_.max_order)
    throw InputError("min_order must lie in [0, max_order]");
  layout_ = scene_.params.layout();
  array_ = scene_array(scene_);
  if (target_ == TargetKind::kBeamform) steering_ = steering_matrix(array_, pipeline_.grid);
  if (target_ == TargetKind::kAiry) airy_radius(pipeline_, array_);
  Eigen::Index rows, cols;
  if (is_profile(target_)) {
    rows = pipeline_.radar.bins;
    cols = static_cast<Eigen::Index>(scene_.rx_positions.size());
  } else {
    pipeline_.grid.validate();
    rows = pipeline_.grid.az_count();
    cols = pipeline_.grid.el_count();
  }
  if (observation_.rows() != rows || observation_.cols() != cols) {
    std::ostringstream os;
    os << "observation shape " << observation_.rows() << "x" << observation_.cols()
       << " does not match the " << to_string(target_) << " pipeline output " << rows << "x" << cols;
    throw InputError(os.str());
  }
}

namespace {

Forward run_forward(const Scene& base, const VecX& theta, const PipelineConfig& p, TargetKind target,
                    const ArrayGeometry& array, const MatXc& steering, bool keep_jacobians,
                    std::uint64_t phase_seed) {
  Forward f;
  f.scene = base.with_params(base.params.unpack(theta));
  f.scene.validate();
  f.world.emplace(f.scene);
  f.cir = trace_paths(*f.world, p.max_order);
  if (p.min_order > 0) std::erase_if(f.cir.paths, [&](const PropagationPath& q) { return q.order < p.min_order; });
  const int nrx = f.cir.rx_count;
  if (is_profile(target)) {
    f.values = MatXc::Zero(p.radar.bins, nrx);
    f.rx_paths.resize(static_cast<std::size_t>(nrx));
    f.profile_jac.resize(static_cast<std::size_t>(nrx));
    for (std::size_t i = 0; i < f.cir.paths.size(); ++i)
      f.rx_paths[static_cast<std::size_t>(f.cir.paths[i].rx_index)].push_back(i);
    for (int r = 0; r < nrx; ++r) {
      std::vector<Tap> taps;
      for (std::size_t i : f.rx_paths[static_cast<std::size_t>(r)]) taps.push_back(f.cir.paths[i].tap());
      if (taps.empty()) continue;
      ProfileJacobian* pj = keep_jacobians ? &f.profile_jac[static_cast<std::size_t>(r)] : nullptr;
      const RangeProfile prof = target == TargetKind::kProfileExact
                                    ? range_profile_exact(taps, p.radar, pj)
                                    : range_profile_surrogate(taps, p.radar, p.surrogate, pj);
      f.values.col(r) = prof.values;
    }
  } else if (target == TargetKind::kBeamform) {
    f.snapshot = VecXc::Zero(nrx);
    for (const auto& path : f.cir.paths) f.snapshot[path.rx_index] += path.tap().amplitude;
    f.beam = steering.adjoint() * f.snapshot;  // conj(y)
    f.beam = f.beam.conjugate().eval();
    const Eigen::Index na = p.grid.az_count(), ne = p.grid.el_count();
    f.values = MatXc::Zero(na, ne);
    for (Eigen::Index e = 0; e < ne; ++e)
      for (Eigen::Index z = 0; z < na; ++z) f.values(z, e) = std::norm(f.beam[z + na * e]);
  } else {
    const double kr = kTwoPi / array.wavelength * airy_radius(p, array);
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& r : f.scene.rx_positions) centroid += r;
    centroid /= static_cast<double>(f.scene.rx_positions.size());
    for (std::size_t i = 0; i < f.cir.paths.size(); ++i) {
      if (f.cir.paths[i].rx_index != 0) continue;
      f.airy_paths.push_back(i);
      f.airy_dirs.push_back((f.cir.paths[i].last_interaction() - centroid).normalized());
    }
    f.airy_phase = airy_phases(f.airy_paths.size(), mix_seed(p.surrogate.seed, phase_seed));
    const Eigen::Index na = p.grid.az_count(), ne = p.grid.el_count();
    f.values = MatXc::Zero(na, ne);
    f.airy_field = VecXc::Zero(na * ne);
    for (Eigen::Index e = 0; e < ne; ++e) {
      for (Eigen::Index z = 0; z < na; ++z) {
        const Vec3 u = direction_from_angles(p.grid.azimuth[z], p.grid.elevation[e]);
        Complex field(0.0, 0.0);
        for (std::size_t i = 0; i < f.airy_dirs.size(); ++i) {
          const double x = kr * f.airy_dirs[i].cross(u).norm();
          field += std::polar(p.surrogate.field_scale * airy_pattern(x),
                              f.airy_phase[static_cast<Eigen::Index>(i)]);
        }
        f.airy_field[z + na * e] = field;
        f.values(z, e) = std::norm(field);
      }
    }
  }
  return f;
}

}  // namespace

Simulation Objective::simulate(const VecX& theta, std::uint64_t phase_seed) const {
  Forward f = run_forward(scene_, theta, pipeline_, target_, array_, steering_, false, phase_seed);
  return Simulation{std::move(f.cir), std::move(f.values)};
}

Objective::Result Objective::evaluate(const VecX& theta, bool want_gradient, const MatX* mask,
                                      std::uint64_t phase_seed) const {
  if (theta.size() != layout_.size()) throw InputError("parameter vector size does not match the layout");
  Forward f = run_forward(scene_, theta, pipeline_, target_, array_, steering_, want_gradient, phase_seed);
  LossConfig lc = loss_;
  lc.pool_columns = !is_profile(target_);
  const LossValue lv = multiscale_mse(f.values, observation_, lc, mask, want_gradient);

  Result res;
  res.loss = lv.value;
  res.path_count = static_cast<int>(f.cir.paths.size());
  const int n = layout_.size();
  res.gradient = VecX::Zero(n);
  res.interior_gradient = VecX::Zero(n);
  if (!std::isfinite(res.loss)) throw NumericalError("loss is not finite");
  const World& world = *f.world;
  const auto jac = interior_jacobians(world, f.cir);
  for (const auto& j : jac) {
    res.boundary_affected = res.boundary_affected || j.boundary_affected;
    res.singular = res.singular || j.singular;
  }
  if (!want_gradient) return res;

  // Adjoint weights dL/dtau, dL/dalpha, dL/dphi per path.
  const std::size_t np = f.cir.paths.size();
  VecX w_tau = VecX::Zero(static_cast<Eigen::Index>(np));
  VecX w_alpha = w_tau, w_phi = w_tau;
  if (is_profile(target_)) {
    for (int r = 0; r < f.cir.rx_count; ++r) {
      const auto& ids = f.rx_paths[static_cast<std::size_t>(r)];
      const ProfileJacobian& pj = f.profile_jac[static_cast<std::size_t>(r)];
      const VecXc g = lv.gradient.col(r);
      for (std::size_t t = 0; t < ids.size(); ++t) {
        const auto ti = static_cast<Eigen::Index>(t);
        const Tap tap = f.cir.paths[ids[t]].tap();
        const auto pi = static_cast<Eigen::Index>(ids[t]);
        w_tau[pi] = g.dot(pj.d_delay.col(ti)).real();
        w_alpha[pi] = g.dot(pj.d_alpha(ti, tap)).real();
        w_phi[pi] = g.dot(pj.d_phase(ti, tap)).real();
      }
    }
  } else if (target_ == TargetKind::kBeamform) {
    const Eigen::Index cells = f.beam.size();
    const Eigen::Index na = pipeline_.grid.az_count();
    VecXc weights(cells);
    for (Eigen::Index c = 0; c < cells; ++c) {
      const double gp = lv.gradient(c % na, c / na).real();
      weights[c] = 2.0 * gp * std::conj(f.beam[c]);
    }
    const VecXc h = steering_ * weights;  // per element
    for (std::size_t i = 0; i < np; ++i) {
      const PropagationPath& p = f.cir.paths[i];
      const Complex c = p.tap().amplitude;
      const Complex hp = h[p.rx_index];
      const auto pi = static_cast<Eigen::Index>(i);
      w_alpha[pi] = (std::conj(hp) * std::polar(1.0, p.phase)).real();
      w_phi[pi] = (std::conj(hp) * Complex(0.0, 1.0) * c).real();
    }
  } else {
    // Airy: only arrival directions move.
    const double kr = kTwoPi / array_.wavelength * airy_radius(pipeline_, array_);
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& r : f.scene.rx_positions) centroid += r;
    centroid /= static_cast<double>(f.scene.rx_positions.size());
    const Eigen::Index na = pipeline_.grid.az_count(), ne = pipeline_.grid.el_count();
    for (std::size_t k = 0; k < f.airy_paths.size(); ++k) {
      const std::size_t pid = f.airy_paths[k];
      const PropagationPath& p = f.cir.paths[pid];
      const Mat3X& jl = jac[pid].vertex_jacobians[p.vertices.size() - 2];
      if (jl.cwiseAbs().maxCoeff() == 0.0) continue;
      const Vec3& d = f.airy_dirs[k];
      RowVecX wd = RowVecX::Zero(3);
      const Complex rot = std::polar(pipeline_.surrogate.field_scale, f.airy_phase[static_cast<Eigen::Index>(k)]);
      for (Eigen::Index e = 0; e < ne; ++e) {
        for (Eigen::Index z = 0; z < na; ++z) {
          const Vec3 u = direction_from_angles(pipeline_.grid.azimuth[z], pipeline_.grid.elevation[e]);
          const Vec3 cr = d.cross(u);
          const double s = cr.norm();
          if (s < 1e-15) continue;
          const double x = kr * s;
          const double amp = x < 1e-8 ? 1.0 : 2.0 * std::cyl_bessel_j(1.0, x) / x;
          const double da = airy_amplitude_derivative(x);
          const double gs = lv.gradient(z, e).real();
          const double dl_dx = gs * 2.0 * (std::conj(f.airy_field[z + na * e]) * rot * (2.0 * amp * da)).real();
          wd += dl_dx * kr * (cr / s).transpose() * (-skew(u));
        }
      }
      const double dist = (p.last_interaction() - centroid).norm();
      const Mat3 proj = (Mat3::Identity() - d * d.transpose()) / dist;
      res.interior_gradient += (wd * proj * jl).transpose();
    }
  }

  for (std::size_t i = 0; i < np; ++i) {
    const auto pi = static_cast<Eigen::Index>(i);
    res.interior_gradient += (w_tau[pi] * jac[i].d_delay + w_alpha[pi] * jac[i].d_amplitude +
                              w_phi[pi] * jac[i].d_phase)
                                 .transpose();
  }
  res.gradient = res.interior_gradient;
  if (pipeline_.include_boundary && scene_.aperture_radius > 0.0) {
    const auto dv = visibility_gradients(world, f.cir, jac, pipeline_.boundary);
    for (std::size_t i = 0; i < np; ++i) {
      const PropagationPath& p = f.cir.paths[i];
      const double wa = w_alpha[static_cast<Eigen::Index>(i)];
      if (wa == 0.0) continue;
      res.gradient += (wa * p.amplitude / p.visibility * dv[i]).transpose();
    }
  }
  if (!res.gradient.allFinite()) throw NumericalError("gradient is not finite");
  return res;
}

std::vector<bool> Objective::boundary_flags(const Result& r) const {
  std::vector<bool> flags(static_cast<std::size_t>(layout_.size()), false);
  if (!r.boundary_affected) return flags;
  for (int i = 0; i < layout_.size(); ++i) flags[static_cast<std::size_t>(i)] = layout_.is_geometric(i);
  return flags;
}

MatXc simulate_target(const Scene& scene, const PipelineConfig& pipeline, TargetKind target,
                      std::uint64_t phase_seed) {
  const ArrayGeometry array = scene_array(scene);
  MatXc steering;
  if (target == TargetKind::kBeamform) steering = steering_matrix(array, pipeline.grid);
  return run_forward(scene, scene.params.pack(), pipeline, target, array, steering, false, phase_seed).values;
}

VecX total_gradient(const Objective& objective, const VecX& theta) {
  return objective.evaluate(theta, true).gradient;
}

}  // namespace rfit
