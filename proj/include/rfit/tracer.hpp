#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Geometry>

#include "rfit/common.hpp"
#include "rfit/geometry.hpp"

namespace rfit {

inline constexpr double kRayEpsilon = 1e-6;          // m, self-intersection offset
inline constexpr int kMaxReflectionOrder = 2;
inline constexpr int kApertureQuadraturePoints = 2048;

/// One discrete CIR tap: delay and complex amplitude alpha * exp(j phi).
struct Tap {
  double delay = 0.0;
  Complex amplitude{0.0, 0.0};
};

struct PropagationPath {
  std::vector<Vec3> vertices;  // tx, bounce points..., rx
  std::vector<int> triangles;  // world triangle id per bounce
  int order = 0;
  int rx_index = 0;
  double length = 0.0;   // m
  double delay = 0.0;    // s
  double amplitude = 0.0;
  double phase = 0.0;    // rad in [0, 2pi)
  /// Visible fraction of the terminal aperture discs, in (0, 1]. Folded into
  /// amplitude.
  double visibility = 1.0;

  Tap tap() const;
  /// Point the signal arrives from, as seen by the receiver.
  const Vec3& last_interaction() const { return vertices[vertices.size() - 2]; }
};

struct CirSample {
  std::vector<PropagationPath> paths;  // sorted by (rx_index, delay)
  int rx_count = 0;
  std::uint64_t params_hash = 0;

  std::vector<const PropagationPath*> paths_for(int rx_index) const;
};

struct Hit {
  int triangle = -1;
  Vec3 point = Vec3::Zero();
  Vec3 barycentric = Vec3::Zero();  // weights of (v0, v1, v2)
  double distance = 0.0;
};

struct WorldTriangle {
  Vec3 v0, v1, v2;
  Vec3 e1, e2;
  Vec3 normal;
  double offset = 0.0;  // plane: normal . x == offset
  Eigen::AlignedBox3d box;
  int mesh = 0;   // 0 = target, k > 0 = static mesh k-1
  int local = 0;  // triangle index within its mesh
  int material = 0;
  double d00 = 0, d01 = 0, d11 = 0, inv_denom = 0;

  double signed_distance(const Vec3& p) const { return normal.dot(p) - offset; }
  /// Barycentric weights of a point assumed to lie on the plane.
  Vec3 barycentric(const Vec3& p) const;
  bool contains_planar(const Vec3& p, double tol = 1e-9) const;
};

/// Edge of a world mesh with its incident triangles (global ids).
struct WorldEdge {
  int mesh = 0;
  int v0 = -1, v1 = -1;  // vertex ids within the mesh
  int tri0 = -1, tri1 = -1;
  Vec3 p0, p1;
};

/// World-space snapshot of a scene under fixed parameters: the transformed
/// target plus static meshes, flattened for ray queries. Immutable after
/// construction, so concurrent queries are safe.
class World {
 public:
  World(const Scene& scene, const SceneParams& params);
  explicit World(const Scene& scene) : World(scene, scene.params) {}

  const Scene& scene() const { return scene_; }
  const SceneParams& params() const { return params_; }
  const std::vector<Mesh>& meshes() const { return meshes_; }
  const Mesh& target_world() const { return meshes_.front(); }
  const std::vector<WorldTriangle>& triangles() const { return triangles_; }
  const WorldTriangle& triangle(int id) const { return triangles_[static_cast<std::size_t>(id)]; }
  int triangle_count() const { return static_cast<int>(triangles_.size()); }
  const std::vector<WorldEdge>& edges() const { return edges_; }
  /// Edge ids incident to a triangle (three per triangle).
  const std::array<int, 3>& triangle_edges(int id) const { return tri_edges_[static_cast<std::size_t>(id)]; }

  /// Nearest hit with distance > kRayEpsilon; ties go to the lowest id.
  std::optional<Hit> intersect(const Vec3& origin, const Vec3& direction) const;
  /// Brute-force scan without the AABB prefilter (reference for tests).
  std::optional<Hit> intersect_brute_force(const Vec3& origin, const Vec3& direction) const;

  /// True when some triangle is hit strictly inside the segment (endpoints
  /// shrunk by kRayEpsilon). `candidates` restricts the scan when given.
  bool segment_blocked(const Vec3& a, const Vec3& b,
                       const std::vector<int>* candidates = nullptr) const;

  /// Triangles within `radius` of segment [a, b]. Triangles whose plane
  /// contains `a` are skipped when `skip_planes_through_a` is set.
  std::vector<int> triangles_near_segment(const Vec3& a, const Vec3& b, double radius,
                                          bool skip_planes_through_a) const;

  /// Fraction of the aperture disc (centered at `antenna`, facing `apex`,
  /// radius r) visible from `apex`. Hard 0/1 test when r == 0.
  double terminal_visibility(const Vec3& apex, const Vec3& antenna, double radius,
                             bool apex_on_surface) const;

  /// Visibility factor of a whole vertex chain (tx, bounces..., rx).
  double chain_visibility(const std::vector<Vec3>& chain, double radius) const;

 private:
  Scene scene_;
  SceneParams params_;
  std::vector<Mesh> meshes_;
  std::vector<WorldTriangle> triangles_;
  std::vector<Eigen::AlignedBox3d> mesh_boxes_;
  std::vector<int> mesh_first_triangle_;
  std::vector<WorldEdge> edges_;
  std::vector<std::array<int, 3>> tri_edges_;
};

/// Orthonormal basis (e1, e2) spanning the plane normal to `w`.
std::pair<Vec3, Vec3> plane_basis(const Vec3& w);

/// Sunflower (Vogel) sample of the unit disc; deterministic.
Eigen::Vector2d disc_sample(int index, int count);

// Distance helpers shared with the gradient estimator.
double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);
double segment_segment_distance(const Vec3& p0, const Vec3& p1, const Vec3& q0, const Vec3& q1);
double segment_triangle_distance(const Vec3& p, const Vec3& q, const Vec3& a, const Vec3& b,
                                 const Vec3& c);

/// Enumerates LOS and specular paths up to `max_order` with the image method.
CirSample trace_paths(const Scene& scene, int max_order);
CirSample trace_paths(const World& world, int max_order);

/// Fills delay, amplitude and phase of a path from its geometry.
void finalize_path(const World& world, PropagationPath& path);

/// Discrete CIR taps for one receive element, in delay order.
std::vector<Tap> assemble_cir(const CirSample& sample, int rx_index);

/// Coherent sum of tap amplitudes, summed in delay order.
Complex coherent_sum(const std::vector<Tap>& taps);

}  // namespace rfit
