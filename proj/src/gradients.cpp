#include "rfit/gradients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

namespace rfit {

// ---------------------------------------------------------------------------
// Jets

JetPlane plane_through(const Jet3& a, const Jet3& b, const Jet3& c) {
  const Vec3 ab = b.value - a.value;
  const Vec3 ac = c.value - a.value;
  const Vec3 m = ab.cross(ac);
  const double len = m.norm();
  if (!(len > 0.0)) throw NumericalError("degenerate reflecting triangle");
  const Mat3X dm = -skew(ac) * (b.d - a.d) + skew(ab) * (c.d - a.d);
  JetPlane p;
  p.normal = m / len;
  p.d_normal = (Mat3::Identity() - p.normal * p.normal.transpose()) * dm / len;
  p.offset = p.normal.dot(a.value);
  p.d_offset = a.value.transpose() * p.d_normal + p.normal.transpose() * a.d;
  return p;
}

Jet3 mirror_point(const Jet3& p, const JetPlane& plane) {
  const double s = plane.normal.dot(p.value) - plane.offset;
  const RowVecX ds = p.value.transpose() * plane.d_normal + plane.normal.transpose() * p.d - plane.d_offset;
  Jet3 out;
  out.value = p.value - 2.0 * s * plane.normal;
  out.d = p.d - 2.0 * plane.normal * ds - 2.0 * s * plane.d_normal;
  return out;
}

Jet3 intersect_line_plane(const Jet3& a, const Jet3& b, const JetPlane& plane) {
  const Vec3 ba = b.value - a.value;
  const double num = plane.offset - plane.normal.dot(a.value);
  const double den = plane.normal.dot(ba);
  if (std::abs(den) < 1e-300) throw NumericalError("line parallel to reflecting plane");
  const RowVecX dnum = plane.d_offset - a.value.transpose() * plane.d_normal - plane.normal.transpose() * a.d;
  const RowVecX dden = ba.transpose() * plane.d_normal + plane.normal.transpose() * (b.d - a.d);
  const double t = num / den;
  const RowVecX dt = (dnum * den - num * dden) / (den * den);
  Jet3 out;
  out.value = a.value + t * ba;
  out.d = a.d + ba * dt + t * (b.d - a.d);
  return out;
}

std::array<Jet3, 3> triangle_jets(const World& world, int triangle) {
  const WorldTriangle& tri = world.triangle(triangle);
  const int n = world.params().layout().size();
  std::array<Jet3, 3> out{Jet3::constant(tri.v0, n), Jet3::constant(tri.v1, n),
                          Jet3::constant(tri.v2, n)};
  if (tri.mesh == 0) {
    const Eigen::Vector3i idx = world.scene().target.triangle(tri.local);
    for (int k = 0; k < 3; ++k) {
      vertex_jacobian(world.scene().target, world.params(), idx[k]).accumulate(out[static_cast<std::size_t>(k)].d);
    }
  }
  return out;
}

namespace {

Mat3X vertex_jets_for_edge(const World& world, const WorldEdge& e, int which) {
  const int n = world.params().layout().size();
  Mat3X d = Mat3X::Zero(3, n);
  if (e.mesh == 0) {
    vertex_jacobian(world.scene().target, world.params(), which == 0 ? e.v0 : e.v1).accumulate(d);
  }
  return d;
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  return segment_segment_distance(p, p, a, b);
}

bool coplanar_triangles(const WorldTriangle& a, const WorldTriangle& b) {
  return std::abs(a.normal.dot(b.normal)) > 1.0 - 1e-12 && std::abs(a.signed_distance(b.v0)) < 1e-9 &&
         std::abs(a.signed_distance(b.v1)) < 1e-9 && std::abs(a.signed_distance(b.v2)) < 1e-9;
}

std::uint64_t path_key(const PropagationPath& p) {
  std::vector<std::int64_t> ids(p.triangles.begin(), p.triangles.end());
  ids.push_back(p.order);
  ids.push_back(p.rx_index);
  return fnv1a(ids.data(), ids.size() * sizeof(std::int64_t));
}

}  // namespace

// ---------------------------------------------------------------------------
// Interior term

bool path_near_boundary(const World& world, const PropagationPath& path, double margin) {
  if (path.visibility < 1.0) return true;
  const auto& chain = path.vertices;
  const std::size_t n = chain.size();
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const bool a_bounce = i > 0;
    const bool b_bounce = i + 1 < n - 1;
    auto near = world.triangles_near_segment(chain[i], chain[i + 1], margin, a_bounce);
    for (int id : near) {
      const WorldTriangle& tri = world.triangle(id);
      if (b_bounce && std::abs(tri.signed_distance(chain[i + 1])) < 1e-9) continue;
      return true;
    }
  }
  for (std::size_t k = 0; k < path.triangles.size(); ++k) {
    const int id = path.triangles[k];
    const Vec3& x = chain[k + 1];
    for (int eid : world.triangle_edges(id)) {
      if (eid < 0) continue;
      const WorldEdge& e = world.edges()[static_cast<std::size_t>(eid)];
      const int other = e.tri0 == id ? e.tri1 : e.tri0;
      const bool open = other < 0 || !coplanar_triangles(world.triangle(id), world.triangle(other));
      if (open && point_segment_distance(x, e.p0, e.p1) < margin) return true;
    }
  }
  return false;
}

PathJacobian interior_path_jacobian(const World& world, const PropagationPath& path) {
  const Scene& scene = world.scene();
  const SceneParams& params = world.params();
  const ParamLayout layout = params.layout();
  const int n = layout.size();
  const int order = path.order;
  if (order < 0 || order > kMaxReflectionOrder || static_cast<int>(path.vertices.size()) != order + 2) {
    throw InputError("malformed propagation path");
  }

  std::vector<Jet3> chain;
  const Jet3 tx = Jet3::constant(path.vertices.front(), n);
  const Jet3 rx = Jet3::constant(path.vertices.back(), n);
  std::vector<JetPlane> planes;
  for (int id : path.triangles) {
    const auto v = triangle_jets(world, id);
    planes.push_back(plane_through(v[0], v[1], v[2]));
  }
  chain.push_back(tx);
  if (order == 1) {
    const Jet3 image = mirror_point(tx, planes[0]);
    chain.push_back(intersect_line_plane(rx, image, planes[0]));
  } else if (order == 2) {
    const Jet3 img1 = mirror_point(tx, planes[0]);
    const Jet3 img2 = mirror_point(img1, planes[1]);
    const Jet3 x2 = intersect_line_plane(rx, img2, planes[1]);
    const Jet3 x1 = intersect_line_plane(x2, img1, planes[0]);
    chain.push_back(x1);
    chain.push_back(x2);
  }
  chain.push_back(rx);

  PathJacobian j;
  j.d_length = RowVecX::Zero(n);
  for (std::size_t k = 0; k + 1 < chain.size(); ++k) {
    const Vec3 seg = chain[k + 1].value - chain[k].value;
    const double len = seg.norm();
    if (!(len > 0.0)) throw NumericalError("zero-length path segment");
    const Vec3 u = seg / len;
    j.d_length += u.transpose() * (chain[k + 1].d - chain[k].d);
    if (k + 1 < chain.size() - 1) {
      const double c = std::abs(u.dot(planes[k].normal));
      if (c < kGrazingCosine) j.singular = true;
    }
  }
  if (j.singular) {
    log::warn("grazing incidence on path (rx " + std::to_string(path.rx_index) +
              ", order " + std::to_string(order) + "); derivative entries are unreliable");
  }

  const double length = path.length;
  j.d_delay = j.d_length / scene.speed_of_light;
  j.d_phase = kTwoPi * scene.carrier_hz * j.d_delay;
  j.d_amplitude = -path.amplitude / length * j.d_length;
  if (params.has_material_scalars()) {
    const double base = scene.wavelength() / (4.0 * kPi * length) * path.visibility;
    for (std::size_t b = 0; b < path.triangles.size(); ++b) {
      double others = base;
      for (std::size_t o = 0; o < path.triangles.size(); ++o) {
        if (o == b) continue;
        others *= scene.reflection_coefficient(world.triangle(path.triangles[o]).material, params);
      }
      const int m = world.triangle(path.triangles[b]).material;
      j.d_amplitude[layout.material_begin() + m] += others;
    }
  }
  for (const Jet3& c : chain) j.vertex_jacobians.push_back(c.d);
  j.boundary_affected = path_near_boundary(world, path, scene.aperture_radius + kBoundaryMargin);
  if (!j.d_delay.allFinite() || !j.d_amplitude.allFinite()) {
    throw NumericalError("non-finite path Jacobian");
  }
  return j;
}

std::vector<PathJacobian> interior_jacobians(const World& world, const CirSample& sample) {
  std::vector<PathJacobian> out(sample.paths.size());
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(sample.paths.size(), 64));
  parallel_chunks(sample.paths.size(), chunks, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) out[i] = interior_path_jacobian(world, sample.paths[i]);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Boundary term

void BoundaryConfig::validate() const {
  if (edge_samples < 1) throw InputError("edge sample count must be at least 1");
  if (!(sharp_angle_deg >= 0.0 && sharp_angle_deg <= 180.0))
    throw InputError("sharp edge angle must lie in [0, 180] degrees");
}

RowVecX terminal_visibility_gradient(const World& world, const Jet3& apex, const Vec3& antenna,
                                     double radius, bool apex_on_surface,
                                     const BoundaryConfig& config, std::uint64_t seed,
                                     std::vector<BoundaryEdgeSample>* samples) {
  const int n = world.params().layout().size();
  RowVecX grad = RowVecX::Zero(n);
  if (radius <= 0.0) return grad;
  config.validate();
  const Vec3 a = apex.value;
  const auto near = world.triangles_near_segment(a, antenna, radius, apex_on_surface);
  if (near.empty()) return grad;
  const std::set<int> active(near.begin(), near.end());

  const Vec3 axis = antenna - a;
  const double dist = axis.norm();
  const Vec3 w = axis / dist;
  const double cos_sharp = std::cos(config.sharp_angle_deg * kPi / 180.0);
  const double eps = 1e-6 * radius;
  const double disc_area = kPi * radius * radius;
  auto visible = [&](const Vec3& y) { return !world.segment_blocked(a, y, &near); };

  std::set<int> edge_ids;
  for (int id : near) {
    for (int e : world.triangle_edges(id)) {
      if (e >= 0) edge_ids.insert(e);
    }
  }

  for (int eid : edge_ids) {
    const WorldEdge& e = world.edges()[static_cast<std::size_t>(eid)];
    const bool a0 = active.count(e.tri0) > 0;
    const bool a1 = e.tri1 >= 0 && active.count(e.tri1) > 0;
    EdgeKind kind = EdgeKind::kSilhouette;
    if (a0 && a1) {
      const WorldTriangle& t0 = world.triangle(e.tri0);
      const WorldTriangle& t1 = world.triangle(e.tri1);
      const double s0 = t0.signed_distance(a), s1 = t1.signed_distance(a);
      if ((s0 > 0.0) != (s1 > 0.0)) {
        kind = EdgeKind::kSilhouette;
      } else if (t0.normal.dot(t1.normal) < cos_sharp) {
        kind = EdgeKind::kSharp;
      } else {
        continue;
      }
    } else if (!a0 && !a1) {
      continue;
    }

    // Keep the part of the edge strictly between apex and disc planes.
    const double d0 = (e.p0 - a).dot(w);
    const double d1 = (e.p1 - a).dot(w);
    const double lo = 1e-9 * dist, hi = dist * (1.0 - 1e-12);
    double ua = 0.0, ub = 1.0;
    auto clip = [&](double bound, bool keep_above) {
      const double fa = d0 + ua * (d1 - d0) - bound;
      const double fb = d0 + ub * (d1 - d0) - bound;
      const bool ina = keep_above ? fa >= 0.0 : fa <= 0.0;
      const bool inb = keep_above ? fb >= 0.0 : fb <= 0.0;
      if (!ina && !inb) return false;
      if (ina && inb) return true;
      const double uc = (bound - d0) / (d1 - d0);
      if (ina) ub = uc;
      else ua = uc;
      return ub > ua;
    };
    if (!clip(lo, true) || !clip(hi, false)) continue;
    const Vec3 qa = e.p0 + ua * (e.p1 - e.p0);
    const Vec3 qb = e.p0 + ub * (e.p1 - e.p0);
    const double da = (qa - a).dot(w), db = (qb - a).dot(w);
    const Vec3 ya = a + dist * (qa - a) / da;
    const Vec3 yb = a + dist * (qb - a) / db;
    const Vec3 za = ya - antenna, zb = yb - antenna;
    const Vec3 dz = zb - za;
    const double qa2 = dz.squaredNorm();
    if (qa2 < 1e-30) continue;  // edge points at the apex
    // |za + s dz|^2 <= r^2
    const double qb2 = 2.0 * za.dot(dz);
    const double qc = za.squaredNorm() - radius * radius;
    const double disc = qb2 * qb2 - 4.0 * qa2 * qc;
    if (disc <= 0.0) continue;
    const double sq = std::sqrt(disc);
    const double s_lo = std::max(0.0, (-qb2 - sq) / (2.0 * qa2));
    const double s_hi = std::min(1.0, (-qb2 + sq) / (2.0 * qa2));
    if (!(s_hi > s_lo)) continue;

    const Vec3 line = dz.normalized();
    const Vec3 m = w.cross(line);
    const double weight = std::sqrt(qa2) * (s_hi - s_lo) / config.edge_samples / disc_area;
    const Mat3X j0 = vertex_jets_for_edge(world, e, 0);
    const Mat3X j1 = vertex_jets_for_edge(world, e, 1);
    const bool moving = e.mesh == 0 || apex.d.cwiseAbs().maxCoeff() > 0.0;

    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(eid)));
    for (int i = 0; i < config.edge_samples; ++i) {
      const double r01 = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      const double s = s_lo + r01 * (s_hi - s_lo);
      const Vec3 y = ya + s * (yb - ya);
      const bool plus = visible(y + eps * m);
      const bool minus = visible(y - eps * m);
      BoundaryEdgeSample rec;
      rec.p0 = e.p0;
      rec.p1 = e.p1;
      rec.kind = kind;
      rec.point = y;
      rec.weight = weight;
      rec.jump = plus != minus;
      rec.velocity = RowVecX::Zero(n);
      if (rec.jump) {
        rec.normal = plus ? Vec3(-m) : m;
        if (moving) {
          // Edge parameter of the sample point in the original [p0, p1] span.
          const double uprime = s * da / ((1.0 - s) * db + s * da);
          const double u = ua + uprime * (ub - ua);
          const Vec3 q = e.p0 + u * (e.p1 - e.p0);
          const Mat3X dq = (1.0 - u) * j0 + u * j1;
          const double delta = (q - a).dot(w);
          const RowVecX d_dist = -w.transpose() * apex.d;
          const RowVecX d_delta = w.transpose() * (dq - apex.d);
          const Mat3X dy = apex.d + (q - a) * d_dist / delta + dist / delta * (dq - apex.d) -
                           dist / (delta * delta) * (q - a) * d_delta;
          rec.velocity = rec.normal.transpose() * dy;
          if (rec.velocity.allFinite()) {
            grad += weight * rec.velocity;
          } else {
            log::warn("non-finite boundary sample rejected");
            rec.jump = false;
          }
        }
      } else {
        rec.normal = m;
      }
      if (samples) samples->push_back(std::move(rec));
    }
  }
  return grad;
}

RowVecX path_visibility_gradient(const World& world, const PropagationPath& path,
                                 const PathJacobian& jacobian, const BoundaryConfig& config,
                                 std::uint64_t path_seed) {
  const int n = world.params().layout().size();
  const double r = world.scene().aperture_radius;
  if (r <= 0.0) return RowVecX::Zero(n);
  const auto& chain = path.vertices;
  const std::size_t m = chain.size();
  if (m == 2) {
    const Jet3 tx = Jet3::constant(chain[0], n);
    const Jet3 rx = Jet3::constant(chain[1], n);
    const RowVecX g_rx =
        terminal_visibility_gradient(world, tx, chain[1], r, false, config, mix_seed(path_seed, 1));
    const RowVecX g_tx =
        terminal_visibility_gradient(world, rx, chain[0], r, false, config, mix_seed(path_seed, 0));
    return 0.5 * (g_rx + g_tx);
  }
  const Jet3 first{chain[1], jacobian.vertex_jacobians[1]};
  const Jet3 last{chain[m - 2], jacobian.vertex_jacobians[m - 2]};
  const double v_tx = world.terminal_visibility(chain[1], chain[0], r, true);
  const double v_rx = world.terminal_visibility(chain[m - 2], chain[m - 1], r, true);
  const RowVecX g_tx =
      terminal_visibility_gradient(world, first, chain[0], r, true, config, mix_seed(path_seed, 0));
  const RowVecX g_rx =
      terminal_visibility_gradient(world, last, chain[m - 1], r, true, config, mix_seed(path_seed, 1));
  return g_tx * v_rx + v_tx * g_rx;
}

std::vector<RowVecX> visibility_gradients(const World& world, const CirSample& sample,
                                          const std::vector<PathJacobian>& jacobians,
                                          const BoundaryConfig& config) {
  const int n = world.params().layout().size();
  std::vector<RowVecX> out(sample.paths.size(), RowVecX::Zero(n));
  if (world.scene().aperture_radius <= 0.0) return out;
  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(sample.paths.size(), 64));
  parallel_chunks(sample.paths.size(), chunks, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      const PropagationPath& p = sample.paths[i];
      out[i] = path_visibility_gradient(world, p, jacobians[i], config,
                                        mix_seed(config.seed, path_key(p)));
    }
  });
  return out;
}

std::vector<MatXc> boundary_term(const Scene& scene, const SceneParams& params, int max_order,
                                 const RadarConfig& radar, const SurrogateConfig& surrogate,
                                 const BoundaryConfig& config) {
  const Scene s = scene.with_params(params);
  s.validate();
  const World world(s);
  const CirSample sample = trace_paths(world, max_order);
  const auto jac = interior_jacobians(world, sample);
  const auto dv = visibility_gradients(world, sample, jac, config);
  const int n = params.layout().size();
  std::vector<MatXc> out;
  for (int r = 0; r < sample.rx_count; ++r) {
    std::vector<Tap> taps;
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < sample.paths.size(); ++i) {
      if (sample.paths[i].rx_index == r) {
        taps.push_back(sample.paths[i].tap());
        ids.push_back(i);
      }
    }
    MatXc m = MatXc::Zero(radar.bins, n);
    if (!taps.empty()) {
      ProfileJacobian pj;
      range_profile_surrogate(taps, radar, surrogate, &pj);
      for (std::size_t t = 0; t < taps.size(); ++t) {
        const PropagationPath& p = sample.paths[ids[t]];
        const VecXc da = pj.d_alpha(static_cast<Eigen::Index>(t), taps[t]);
        m += da * (p.amplitude / p.visibility * dv[ids[t]]).cast<Complex>();
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences

double GradientReport::rel_err(Eigen::Index i) const {
  return abs_err(i) / std::max(std::abs(fd[i]), denominator_floor);
}

bool GradientReport::passes(Eigen::Index i) const {
  const auto k = static_cast<std::size_t>(i);
  if (!verifiable[k]) return true;
  if (boundary_flag[k]) {
    double fd_max = 0.0;
    for (Eigen::Index j = 0; j < fd.size(); ++j)
      if (std::isfinite(fd[j])) fd_max = std::max(fd_max, std::abs(fd[j]));
    const double floor = std::max(denominator_floor, kBoundaryFloor * fd_max);
    return abs_err(i) / std::max(std::abs(fd[i]), floor) <= boundary_tolerance;
  }
  return rel_err(i) <= smooth_tolerance;
}

bool GradientReport::smooth_ok() const {
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (checked[k] && verifiable[k] && !boundary_flag[k] && !passes(i)) return false;
  }
  return true;
}

bool GradientReport::all_ok() const {
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (checked[k] && !passes(i)) return false;
  }
  return true;
}

std::vector<int> GradientReport::unverifiable() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < verifiable.size(); ++i)
    if (checked[i] && !verifiable[i]) out.push_back(static_cast<int>(i));
  return out;
}

std::string to_string(FdScheme s) {
  switch (s) {
    case FdScheme::kCentral: return "central";
    case FdScheme::kCentral4: return "central4";
    case FdScheme::kForward: return "forward";
  }
  return "?";
}

FdScheme fd_scheme_from_string(const std::string& name) {
  for (FdScheme s : {FdScheme::kCentral, FdScheme::kCentral4, FdScheme::kForward})
    if (to_string(s) == name) return s;
  throw InputError("unknown finite-difference scheme '" + name + "' (expected central, central4 or forward)");
}

GradientReport fd_oracle(const LossFunction& loss, const VecX& theta, const VecX& analytic,
                         const std::vector<std::string>& names, const FdOptions& options) {
  const Eigen::Index n = theta.size();
  if (analytic.size() != n || static_cast<Eigen::Index>(names.size()) != n)
    throw InputError("fd_oracle: theta, analytic gradient and names must have equal length");
  if (options.steps.empty()) throw InputError("fd_oracle: empty step schedule");
  for (double h : options.steps)
    if (!(h > 0.0)) throw InputError("fd_oracle: steps must be positive");

  GradientReport rep;
  rep.names = names;
  rep.analytic = analytic;
  rep.fd = VecX::Zero(n);
  rep.fd_step = VecX::Zero(n);
  rep.boundary_flag.assign(static_cast<std::size_t>(n), false);
  rep.verifiable.assign(static_cast<std::size_t>(n), true);
  rep.checked.assign(static_cast<std::size_t>(n), options.indices.empty());
  rep.smooth_tolerance = options.smooth_tolerance;
  rep.boundary_tolerance = options.boundary_tolerance;
  for (int i : options.indices) {
    if (i < 0 || i >= n) throw InputError("fd_oracle: parameter index out of range");
    rep.checked[static_cast<std::size_t>(i)] = true;
  }
  for (std::size_t i = 0; i < options.boundary_flags.size() && i < static_cast<std::size_t>(n); ++i)
    rep.boundary_flag[i] = options.boundary_flags[i];

  auto eval = [&](const VecX& x, bool* ok) {
    try {
      const double v = loss(x);
      if (!std::isfinite(v)) *ok = false;
      return v;
    } catch (const Error&) {
      *ok = false;
      return 0.0;
    }
  };

  bool base_ok = true;
  const double f0 = options.scheme == FdScheme::kForward ? eval(theta, &base_ok) : 0.0;

  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!rep.checked[k]) continue;
    std::vector<double> steps = options.steps;
    FdScheme scheme = options.scheme;
    if (rep.boundary_flag[k] && options.boundary_step > 0.0) {
      steps = {options.boundary_step};
      scheme = FdScheme::kCentral;
    }
    bool ok = base_ok;
    double best_err = std::numeric_limits<double>::infinity();
    for (double h : steps) {
      VecX xp = theta, xm = theta;
      xp[i] += h;
      xm[i] -= h;
      double g;
      if (scheme == FdScheme::kCentral) {
        const double fp = eval(xp, &ok);
        const double fm = eval(xm, &ok);
        g = (fp - fm) / (2.0 * h);
      } else if (scheme == FdScheme::kCentral4) {
        VecX xpp = theta, xmm = theta;
        xpp[i] += 2.0 * h;
        xmm[i] -= 2.0 * h;
        const double fp = eval(xp, &ok), fm = eval(xm, &ok);
        const double fpp = eval(xpp, &ok), fmm = eval(xmm, &ok);
        g = (fmm - 8.0 * fm + 8.0 * fp - fpp) / (12.0 * h);
      } else {
        g = (eval(xp, &ok) - f0) / h;
      }
      if (!ok) break;
      const double err = std::abs(g - analytic[i]);
      if (err < best_err) {
        best_err = err;
        rep.fd[i] = g;
        rep.fd_step[i] = h;
      }
    }
    if (!ok) {
      rep.verifiable[k] = false;
      rep.fd[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
  double fd_max = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (rep.checked[static_cast<std::size_t>(i)] && rep.verifiable[static_cast<std::size_t>(i)])
      fd_max = std::max(fd_max, std::abs(rep.fd[i]));
  rep.denominator_floor = std::max(options.relative_floor, options.noise_floor * fd_max);
  return rep;
}

}  // namespace rfit
