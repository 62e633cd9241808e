#pragma once

#include <functional>
#include <type_traits>
#include <random>

#include "rfit/geometry.hpp"
#include "rfit/objective.hpp"

namespace rfit::test {

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline Vec3 random_vec(std::mt19937_64& rng, double scale) {
  return {uniform(rng, -scale, scale), uniform(rng, -scale, scale), uniform(rng, -scale, scale)};
}

/// Central difference of a vector-valued function along one coordinate.
inline VecX central_diff(const std::function<VecX(const VecX&)>& f, const VecX& x, int i, double h) {
  VecX a = x, b = x;
  a[i] += h;
  b[i] -= h;
  return (f(a) - f(b)) / (2.0 * h);
}

inline double central_diff(const std::function<double(const VecX&)>& f, const VecX& x, int i, double h) {
  VecX a = x, b = x;
  a[i] += h;
  b[i] -= h;
  return (f(a) - f(b)) / (2.0 * h);
}

/// Fourth-order central difference of a scalar function of one variable.
template <typename F>
auto central_diff5(const F& f, double x, double h) {
  using R = std::decay_t<decltype(f(x))>;
  return R((f(x - 2 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2 * h)) / (12.0 * h));
}

/// Monostatic-ish plate scene: tx at the origin, a few rx along x, plate near z = d.
inline Scene plate_scene(double distance = 1.0, int rx_count = 2, double rho = 0.8) {
  Scene s;
  s.materials = {{"metal", rho}};
  s.target = make_plate(Vec3(0, 0, distance), Vec3(0.02, 0.01, -1.0), 0.4, 0.4, 0);
  s.params.material_names = {"metal"};
  s.params.pivot = Vec3(0, 0, distance);
  s.tx_position = Vec3::Zero();
  for (int i = 0; i < rx_count; ++i) s.rx_positions.push_back(Vec3(0.01 + 0.02 * i, 0, 0));
  return s;
}

/// Target plate whose top edge grazes the tx -> rx line; a static wall gives a
/// second, unobstructed path.
inline Scene occlusion_scene(double aperture = 0.01) {
  Scene s;
  s.materials = {{"metal", 0.9}};
  s.target = make_plate(Vec3(1, 0, -0.15), Vec3(1, 0, 0), 0.3, 0.3, 0);
  s.static_meshes = {make_plate(Vec3(1, 1, 0), Vec3(0, -1, 0), 2.0, 1.0, 0)};
  s.params.material_names = {"metal"};
  s.tx_position = Vec3::Zero();
  s.rx_positions = {Vec3(2, 0, 0)};
  s.aperture_radius = aperture;
  return s;
}

inline LossConfig loss_for(TargetKind target) {
  LossConfig c;
  c.domain = default_domain(target);
  c.pool_columns = !is_profile(target);
  c.normalize = true;
  return c;
}

}  // namespace rfit::test
