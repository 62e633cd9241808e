#include "rfit/tracer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>

namespace rfit {

namespace {

constexpr double kBaryTolerance = 1e-12;

// Moller-Trumbore with inclusive, slightly widened barycentric bounds so that
// rays through shared edges hit both neighbours (ties are resolved by id).
bool moller_trumbore(const WorldTriangle& tri, const Vec3& origin, const Vec3& dir, double* t,
                     double* u, double* v) {
  const Vec3 p = dir.cross(tri.e2);
  const double det = tri.e1.dot(p);
  if (std::abs(det) < 1e-18) return false;
  const double inv = 1.0 / det;
  const Vec3 s = origin - tri.v0;
  *u = s.dot(p) * inv;
  if (*u < -kBaryTolerance || *u > 1.0 + kBaryTolerance) return false;
  const Vec3 q = s.cross(tri.e1);
  *v = dir.dot(q) * inv;
  if (*v < -kBaryTolerance || *u + *v > 1.0 + kBaryTolerance) return false;
  *t = tri.e2.dot(q) * inv;
  return true;
}

bool ray_box(const Eigen::AlignedBox3d& box, const Vec3& origin, const Vec3& dir, double tmax) {
  double t0 = 0.0;
  double t1 = tmax;
  for (int a = 0; a < 3; ++a) {
    const double inv = 1.0 / dir[a];
    double tn = (box.min()[a] - origin[a]) * inv;
    double tf = (box.max()[a] - origin[a]) * inv;
    if (std::isnan(tn) || std::isnan(tf)) {
      // Ray parallel to the slab and starting on its boundary plane.
      if (origin[a] < box.min()[a] || origin[a] > box.max()[a]) return false;
      continue;
    }
    if (tn > tf) std::swap(tn, tf);
    t0 = std::max(t0, tn);
    t1 = std::min(t1, tf);
    if (t0 > t1) return false;
  }
  return true;
}

Vec3 mirror(const WorldTriangle& tri, const Vec3& p) {
  return p - 2.0 * tri.signed_distance(p) * tri.normal;
}

struct Candidate {
  int rx = 0;
  int order = 0;
  int k1 = -1;
  int k2 = -1;
  Vec3 x1 = Vec3::Zero();
  Vec3 x2 = Vec3::Zero();
};

bool coplanar(const WorldTriangle& a, const WorldTriangle& b) {
  const double c = a.normal.dot(b.normal);
  if (std::abs(c) < 1.0 - 1e-12) return false;
  return std::abs(a.signed_distance(b.v0)) < 1e-9;
}

bool same_chain(const PropagationPath& a, const PropagationPath& b) {
  if (a.vertices.size() != b.vertices.size()) return false;
  for (std::size_t i = 0; i < a.vertices.size(); ++i) {
    if ((a.vertices[i] - b.vertices[i]).norm() > 1e-9) return false;
  }
  return true;
}

}  // namespace

Tap PropagationPath::tap() const { return Tap{delay, std::polar(amplitude, phase)}; }

std::vector<const PropagationPath*> CirSample::paths_for(int rx_index) const {
  std::vector<const PropagationPath*> out;
  for (const auto& p : paths) {
    if (p.rx_index == rx_index) out.push_back(&p);
  }
  return out;
}

Vec3 WorldTriangle::barycentric(const Vec3& p) const {
  const Vec3 d = p - v0;
  const double d20 = d.dot(e1);
  const double d21 = d.dot(e2);
  const double v = (d11 * d20 - d01 * d21) * inv_denom;
  const double w = (d00 * d21 - d01 * d20) * inv_denom;
  return Vec3(1.0 - v - w, v, w);
}

bool WorldTriangle::contains_planar(const Vec3& p, double tol) const {
  const Vec3 b = barycentric(p);
  return b.minCoeff() >= -tol;
}

// ---------------------------------------------------------------------------
// Distance helpers (closest-point routines after Ericson, Real-Time Collision
// Detection).

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return ap.norm();
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return bp.norm();
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return (p - (a + d1 / (d1 - d3) * ab)).norm();
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return cp.norm();
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return (p - (a + d2 / (d2 - d6) * ac)).norm();
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    return (p - (b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b))).norm();
  }
  const double denom = 1.0 / (va + vb + vc);
  return (p - (a + ab * (vb * denom) + ac * (vc * denom))).norm();
}

double segment_segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1) {
  const Vec3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-300 && e <= 1e-300) return r.norm();
  if (a <= 1e-300) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= 1e-300) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > 0.0 ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p0 + d1 * s) - (q0 + d2 * t)).norm();
}

double segment_triangle_distance(const Vec3& p, const Vec3& q, const Vec3& a, const Vec3& b,
                                 const Vec3& c) {
  // Crossing test first.
  const Vec3 n = (b - a).cross(c - a);
  const double sp = n.dot(p - a);
  const double sq = n.dot(q - a);
  if ((sp <= 0.0 && sq >= 0.0) || (sp >= 0.0 && sq <= 0.0)) {
    if (sp != sq) {
      const Vec3 x = p + (sp / (sp - sq)) * (q - p);
      const Vec3 nn = n.normalized();
      const double w0 = (b - x).cross(c - x).dot(nn);
      const double w1 = (c - x).cross(a - x).dot(nn);
      const double w2 = (a - x).cross(b - x).dot(nn);
      if (w0 >= 0 && w1 >= 0 && w2 >= 0) return 0.0;
    }
  }
  double d = std::min(point_triangle_distance(p, a, b, c), point_triangle_distance(q, a, b, c));
  d = std::min(d, segment_segment_distance(p, q, a, b));
  d = std::min(d, segment_segment_distance(p, q, b, c));
  d = std::min(d, segment_segment_distance(p, q, c, a));
  return d;
}

std::pair<Vec3, Vec3> plane_basis(const Vec3& w) {
  const Vec3 helper = std::abs(w.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 e1 = w.cross(helper).normalized();
  return {e1, w.cross(e1)};
}

Eigen::Vector2d disc_sample(int index, int count) {
  static const double golden = kPi * (3.0 - std::sqrt(5.0));
  const double r = std::sqrt((index + 0.5) / count);
  const double a = index * golden;
  return {r * std::cos(a), r * std::sin(a)};
}

// ---------------------------------------------------------------------------
// World

World::World(const Scene& scene, const SceneParams& params) : scene_(scene), params_(params) {
  meshes_.push_back(apply_params(scene.target, params));
  for (const auto& m : scene.static_meshes) meshes_.push_back(m);
  for (std::size_t mi = 0; mi < meshes_.size(); ++mi) {
    const Mesh& m = meshes_[mi];
    mesh_first_triangle_.push_back(static_cast<int>(triangles_.size()));
    Eigen::AlignedBox3d mbox;
    for (int t = 0; t < m.triangle_count(); ++t) {
      const Eigen::Vector3i idx = m.triangle(t);
      WorldTriangle tri;
      tri.v0 = m.vertex(idx[0]);
      tri.v1 = m.vertex(idx[1]);
      tri.v2 = m.vertex(idx[2]);
      tri.e1 = tri.v1 - tri.v0;
      tri.e2 = tri.v2 - tri.v0;
      tri.normal = tri.e1.cross(tri.e2).normalized();
      tri.offset = tri.normal.dot(tri.v0);
      tri.box.extend(tri.v0);
      tri.box.extend(tri.v1);
      tri.box.extend(tri.v2);
      tri.mesh = static_cast<int>(mi);
      tri.local = t;
      tri.material = m.material_id(t);
      tri.d00 = tri.e1.dot(tri.e1);
      tri.d01 = tri.e1.dot(tri.e2);
      tri.d11 = tri.e2.dot(tri.e2);
      tri.inv_denom = 1.0 / (tri.d00 * tri.d11 - tri.d01 * tri.d01);
      mbox.extend(tri.box);
      triangles_.push_back(tri);
    }
    mesh_boxes_.push_back(mbox);
  }
  tri_edges_.assign(triangles_.size(), {-1, -1, -1});
  std::vector<int> fill(triangles_.size(), 0);
  for (std::size_t mi = 0; mi < meshes_.size(); ++mi) {
    const Mesh& m = meshes_[mi];
    const int base = mesh_first_triangle_[mi];
    for (const MeshEdge& e : m.edges()) {
      WorldEdge we;
      we.mesh = static_cast<int>(mi);
      we.v0 = e.v0;
      we.v1 = e.v1;
      we.tri0 = base + e.tri0;
      we.tri1 = e.tri1 >= 0 ? base + e.tri1 : -1;
      we.p0 = m.vertex(e.v0);
      we.p1 = m.vertex(e.v1);
      const int id = static_cast<int>(edges_.size());
      edges_.push_back(we);
      for (int t : {we.tri0, we.tri1}) {
        if (t < 0) continue;
        auto& slot = fill[static_cast<std::size_t>(t)];
        if (slot < 3) tri_edges_[static_cast<std::size_t>(t)][static_cast<std::size_t>(slot++)] = id;
      }
    }
  }
}

std::optional<Hit> World::intersect(const Vec3& origin, const Vec3& direction) const {
  std::optional<Hit> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (std::size_t mi = 0; mi < meshes_.size(); ++mi) {
    if (!ray_box(mesh_boxes_[mi], origin, direction, best_t)) continue;
    const int begin = mesh_first_triangle_[mi];
    const int end = begin + meshes_[mi].triangle_count();
    for (int id = begin; id < end; ++id) {
      double t, u, v;
      if (!moller_trumbore(triangles_[static_cast<std::size_t>(id)], origin, direction, &t, &u, &v)) continue;
      if (t <= kRayEpsilon || t >= best_t) continue;
      best_t = t;
      best = Hit{id, origin + t * direction, Vec3(1.0 - u - v, u, v), t};
    }
  }
  return best;
}

std::optional<Hit> World::intersect_brute_force(const Vec3& origin, const Vec3& direction) const {
  std::optional<Hit> best;
  double best_t = std::numeric_limits<double>::infinity();
  for (int id = 0; id < triangle_count(); ++id) {
    double t, u, v;
    if (!moller_trumbore(triangles_[static_cast<std::size_t>(id)], origin, direction, &t, &u, &v)) continue;
    if (t <= kRayEpsilon || t >= best_t) continue;
    best_t = t;
    best = Hit{id, origin + t * direction, Vec3(1.0 - u - v, u, v), t};
  }
  return best;
}

bool World::segment_blocked(const Vec3& a, const Vec3& b, const std::vector<int>* candidates) const {
  const Vec3 d = b - a;
  const double len = d.norm();
  if (len <= 2.0 * kRayEpsilon) return false;
  const Vec3 dir = d / len;
  const double tmax = len - kRayEpsilon;
  auto test = [&](int id) {
    double t, u, v;
    return moller_trumbore(triangles_[static_cast<std::size_t>(id)], a, dir, &t, &u, &v) &&
           t > kRayEpsilon && t < tmax;
  };
  if (candidates != nullptr) {
    return std::any_of(candidates->begin(), candidates->end(), test);
  }
  for (std::size_t mi = 0; mi < meshes_.size(); ++mi) {
    if (!ray_box(mesh_boxes_[mi], a, dir, len)) continue;
    const int begin = mesh_first_triangle_[mi];
    const int end = begin + meshes_[mi].triangle_count();
    for (int id = begin; id < end; ++id) {
      if (test(id)) return true;
    }
  }
  return false;
}

std::vector<int> World::triangles_near_segment(const Vec3& a, const Vec3& b, double radius,
                                               bool skip_planes_through_a) const {
  Eigen::AlignedBox3d seg_box(a.cwiseMin(b), a.cwiseMax(b));
  seg_box.min().array() -= radius;
  seg_box.max().array() += radius;
  std::vector<int> out;
  for (std::size_t mi = 0; mi < meshes_.size(); ++mi) {
    if (!mesh_boxes_[mi].intersects(seg_box)) continue;
    const int begin = mesh_first_triangle_[mi];
    const int end = begin + meshes_[mi].triangle_count();
    for (int id = begin; id < end; ++id) {
      const WorldTriangle& tri = triangles_[static_cast<std::size_t>(id)];
      if (!tri.box.intersects(seg_box)) continue;
      if (skip_planes_through_a && std::abs(tri.signed_distance(a)) < 1e-9) continue;
      if (segment_triangle_distance(a, b, tri.v0, tri.v1, tri.v2) <= radius) out.push_back(id);
    }
  }
  return out;
}

double World::terminal_visibility(const Vec3& apex, const Vec3& antenna, double radius,
                                  bool apex_on_surface) const {
  if (radius <= 0.0) {
    if (!apex_on_surface) return segment_blocked(apex, antenna) ? 0.0 : 1.0;
    const auto near = triangles_near_segment(apex, antenna, 0.0, true);
    return segment_blocked(apex, antenna, &near) ? 0.0 : 1.0;
  }
  const auto near = triangles_near_segment(apex, antenna, radius, apex_on_surface);
  if (near.empty()) return 1.0;
  const Vec3 w = (antenna - apex).normalized();
  const auto [e1, e2] = plane_basis(w);
  int visible = 0;
  for (int i = 0; i < kApertureQuadraturePoints; ++i) {
    const Eigen::Vector2d s = disc_sample(i, kApertureQuadraturePoints);
    const Vec3 y = antenna + radius * (s.x() * e1 + s.y() * e2);
    if (!segment_blocked(apex, y, &near)) ++visible;
  }
  return static_cast<double>(visible) / kApertureQuadraturePoints;
}

double World::chain_visibility(const std::vector<Vec3>& chain, double radius) const {
  const std::size_t n = chain.size();
  if (n == 2) {
    return 0.5 * (terminal_visibility(chain[0], chain[1], radius, false) +
                  terminal_visibility(chain[1], chain[0], radius, false));
  }
  double v = terminal_visibility(chain[1], chain[0], radius, true);
  if (v <= 0.0) return 0.0;
  for (std::size_t i = 1; i + 2 < n; ++i) {
    const auto near = triangles_near_segment(chain[i], chain[i + 1], 0.0, true);
    std::vector<int> filtered;
    for (int id : near) {
      if (std::abs(triangles_[static_cast<std::size_t>(id)].signed_distance(chain[i + 1])) >= 1e-9) {
        filtered.push_back(id);
      }
    }
    if (segment_blocked(chain[i], chain[i + 1], &filtered)) return 0.0;
  }
  return v * terminal_visibility(chain[n - 2], chain[n - 1], radius, true);
}

// ---------------------------------------------------------------------------
// Path enumeration

void finalize_path(const World& world, PropagationPath& path) {
  const Scene& scene = world.scene();
  path.order = static_cast<int>(path.vertices.size()) - 2;
  path.length = 0.0;
  for (std::size_t i = 0; i + 1 < path.vertices.size(); ++i) {
    path.length += (path.vertices[i + 1] - path.vertices[i]).norm();
  }
  path.delay = path.length / scene.speed_of_light;
  double rho = 1.0;
  for (int id : path.triangles) rho *= scene.reflection_coefficient(world.triangle(id).material, world.params());
  path.amplitude = scene.wavelength() / (4.0 * kPi * path.length) * rho * path.visibility;
  double phase = std::fmod(kTwoPi * scene.carrier_hz * path.delay, kTwoPi);
  if (phase < 0.0) phase += kTwoPi;
  if (phase >= kTwoPi) phase = 0.0;
  path.phase = phase;
}

CirSample trace_paths(const Scene& scene, int max_order) {
  scene.validate();
  const World world(scene);
  return trace_paths(world, max_order);
}

CirSample trace_paths(const World& world, int max_order) {
  if (max_order < 0 || max_order > kMaxReflectionOrder) {
    throw InputError("unsupported reflection order " + std::to_string(max_order) +
                     " (supported: 0, 1, 2)");
  }
  const Scene& scene = world.scene();
  const Vec3 tx = scene.tx_position;
  const auto& rxs = scene.rx_positions;
  const int nrx = static_cast<int>(rxs.size());
  const auto& tris = world.triangles();
  const int ntri = world.triangle_count();
  constexpr double kSideTol = 1e-12;

  std::vector<Candidate> candidates;
  for (int r = 0; r < nrx; ++r) {
    if ((rxs[static_cast<std::size_t>(r)] - tx).norm() > 1e-9) candidates.push_back({r, 0});
  }

  const std::size_t chunks = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(ntri), 64));
  if (max_order >= 1 && ntri > 0) {
    std::vector<std::vector<Candidate>> parts(chunks);
    parallel_chunks(static_cast<std::size_t>(ntri), chunks, [&](std::size_t b, std::size_t e, std::size_t c) {
      for (std::size_t k = b; k < e; ++k) {
        const WorldTriangle& tri = tris[k];
        const double s_tx = tri.signed_distance(tx);
        for (int r = 0; r < nrx; ++r) {
          const Vec3& rx = rxs[static_cast<std::size_t>(r)];
          const double s_rx = tri.signed_distance(rx);
          if (s_tx * s_rx <= kSideTol * kSideTol || std::abs(s_tx) < kSideTol || std::abs(s_rx) < kSideTol) continue;
          const Vec3 image = mirror(tri, tx);
          const Vec3 x = rx + (s_rx / (s_rx + s_tx)) * (image - rx);
          if (!tri.contains_planar(x)) continue;
          parts[c].push_back({r, 1, static_cast<int>(k), -1, x, Vec3::Zero()});
        }
      }
    });
    for (auto& p : parts) candidates.insert(candidates.end(), p.begin(), p.end());
  }

  if (max_order >= 2 && ntri > 1) {
    std::vector<std::vector<Candidate>> parts(chunks);
    parallel_chunks(static_cast<std::size_t>(ntri), chunks, [&](std::size_t b, std::size_t e, std::size_t c) {
      std::vector<double> s_rx(static_cast<std::size_t>(nrx));
      for (std::size_t k1 = b; k1 < e; ++k1) {
        const WorldTriangle& t1 = tris[k1];
        const double s1_tx = t1.signed_distance(tx);
        if (std::abs(s1_tx) < kSideTol) continue;
        const Vec3 img1 = mirror(t1, tx);
        for (int k2 = 0; k2 < ntri; ++k2) {
          if (static_cast<std::size_t>(k2) == k1) continue;
          const WorldTriangle& t2 = tris[static_cast<std::size_t>(k2)];
          const double s2_img1 = t2.signed_distance(img1);
          if (std::abs(s2_img1) < kSideTol) continue;
          // The second bounce triangle must have some part on tx's side of the
          // first plane.
          const double a0 = t1.signed_distance(t2.v0), a1 = t1.signed_distance(t2.v1),
                       a2 = t1.signed_distance(t2.v2);
          if (s1_tx > 0 ? std::max({a0, a1, a2}) <= 0.0 : std::min({a0, a1, a2}) >= 0.0) continue;
          if (coplanar(t1, t2)) continue;
          const Vec3 img2 = img1 - 2.0 * s2_img1 * t2.normal;
          for (int r = 0; r < nrx; ++r) {
            const Vec3& rx = rxs[static_cast<std::size_t>(r)];
            const double s2_rx = t2.signed_distance(rx);
            if (s2_rx * s2_img1 <= 0.0 || std::abs(s2_rx) < kSideTol) continue;
            const Vec3 x2 = rx + (s2_rx / (s2_rx + s2_img1)) * (img2 - rx);
            if (!t2.contains_planar(x2)) continue;
            const double s1_x2 = t1.signed_distance(x2);
            if (s1_x2 * s1_tx <= 0.0 || std::abs(s1_x2) < kSideTol) continue;
            const Vec3 x1 = x2 + (s1_x2 / (s1_x2 + s1_tx)) * (img1 - x2);
            if (!t1.contains_planar(x1)) continue;
            if ((x1 - x2).norm() < 1e-9) continue;
            parts[c].push_back({r, 2, static_cast<int>(k1), k2, x1, x2});
          }
        }
      }
    });
    for (auto& p : parts) candidates.insert(candidates.end(), p.begin(), p.end());
  }

  // Visibility and tap parameters.
  std::vector<std::optional<PropagationPath>> built(candidates.size());
  const std::size_t cchunks = std::max<std::size_t>(1, std::min<std::size_t>(candidates.size(), 64));
  parallel_chunks(candidates.size(), cchunks, [&](std::size_t b, std::size_t e, std::size_t) {
    for (std::size_t i = b; i < e; ++i) {
      const Candidate& cand = candidates[i];
      PropagationPath path;
      path.rx_index = cand.rx;
      path.vertices.push_back(tx);
      if (cand.order >= 1) {
        path.vertices.push_back(cand.x1);
        path.triangles.push_back(cand.k1);
      }
      if (cand.order >= 2) {
        path.vertices.push_back(cand.x2);
        path.triangles.push_back(cand.k2);
      }
      path.vertices.push_back(rxs[static_cast<std::size_t>(cand.rx)]);
      path.visibility = world.chain_visibility(path.vertices, scene.aperture_radius);
      if (path.visibility <= 0.0) continue;
      finalize_path(world, path);
      if (!(path.amplitude > 0.0)) continue;
      built[i] = std::move(path);
    }
  });

  CirSample sample;
  sample.rx_count = nrx;
  {
    const VecX theta = world.params().pack();
    sample.params_hash = fnv1a(theta.data(), static_cast<std::size_t>(theta.size()) * sizeof(double));
  }
  for (auto& p : built) {
    if (!p) continue;
    // Coplanar neighbours sharing an edge can report the same specular point.
    const bool duplicate = std::any_of(sample.paths.begin(), sample.paths.end(), [&](const PropagationPath& q) {
      return q.rx_index == p->rx_index && q.order == p->order && same_chain(q, *p);
    });
    if (!duplicate) sample.paths.push_back(std::move(*p));
  }
  std::stable_sort(sample.paths.begin(), sample.paths.end(), [](const PropagationPath& a, const PropagationPath& b) {
    return std::tie(a.rx_index, a.delay, a.order, a.triangles) < std::tie(b.rx_index, b.delay, b.order, b.triangles);
  });
  return sample;
}

std::vector<Tap> assemble_cir(const CirSample& sample, int rx_index) {
  if (rx_index < 0 || rx_index >= sample.rx_count) {
    throw InputError("unknown rx_index " + std::to_string(rx_index));
  }
  std::vector<Tap> taps;
  for (const auto& p : sample.paths) {
    if (p.rx_index == rx_index) taps.push_back(p.tap());
  }
  std::stable_sort(taps.begin(), taps.end(), [](const Tap& a, const Tap& b) { return a.delay < b.delay; });
  return taps;
}

Complex coherent_sum(const std::vector<Tap>& taps) {
  std::vector<Tap> sorted = taps;
  std::stable_sort(sorted.begin(), sorted.end(), [](const Tap& a, const Tap& b) {
    return std::make_tuple(a.delay, a.amplitude.real(), a.amplitude.imag()) <
           std::make_tuple(b.delay, b.amplitude.real(), b.amplitude.imag());
  });
  Complex sum{0.0, 0.0};
  for (const auto& t : sorted) sum += t.amplitude;
  return sum;
}

}  // namespace rfit
