#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rfit/common.hpp"
#include "rfit/geometry.hpp"
#include "rfit/radar.hpp"
#include "rfit/tracer.hpp"

namespace rfit {

/// A point together with its 3 x n Jacobian w.r.t. theta (forward mode).
struct Jet3 {
  Vec3 value = Vec3::Zero();
  Mat3X d;

  static Jet3 constant(const Vec3& v, int n) { return {v, Mat3X::Zero(3, n)}; }
};

/// Plane n . x = c with derivatives of the unit normal and the offset.
struct JetPlane {
  Vec3 normal;
  Mat3X d_normal;
  double offset = 0.0;
  RowVecX d_offset;
};

JetPlane plane_through(const Jet3& a, const Jet3& b, const Jet3& c);
Jet3 mirror_point(const Jet3& p, const JetPlane& plane);
/// Intersection of the line a + t (b - a) with the plane.
Jet3 intersect_line_plane(const Jet3& a, const Jet3& b, const JetPlane& plane);

/// World-space vertex jets of one world triangle (zero Jacobian for static meshes).
std::array<Jet3, 3> triangle_jets(const World& world, int triangle);

struct PathJacobian {
  RowVecX d_delay;      // 1 x n, s per unit theta
  RowVecX d_amplitude;  // 1 x n
  RowVecX d_phase;      // 1 x n, rad per unit theta
  RowVecX d_length;     // 1 x n
  std::vector<Mat3X> vertex_jacobians;  // one 3 x n block per chain vertex
  /// Near a visibility or support change: partial aperture visibility, an
  /// occluder close to a segment, or a bounce close to an open edge.
  bool boundary_affected = false;
  /// Grazing incidence at some bounce; entries may be unreliable.
  bool singular = false;
};

inline constexpr double kGrazingCosine = 1e-9;
inline constexpr double kBoundaryMargin = 1e-3;  // m, added to the aperture radius

/// Analytic interior derivative of (tau, alpha, phi) for one path, holding its
/// triangle ids and visibility factor fixed.
PathJacobian interior_path_jacobian(const World& world, const PropagationPath& path);
std::vector<PathJacobian> interior_jacobians(const World& world, const CirSample& sample);

/// Boundary-affected classification used by interior_path_jacobian.
bool path_near_boundary(const World& world, const PropagationPath& path, double margin);

enum class EdgeKind { kSilhouette, kSharp };

struct BoundaryConfig {
  int edge_samples = 64;             // per edge and terminal
  double sharp_angle_deg = 30.0;     // dihedral threshold for sharp edges
  std::uint64_t seed = 0;
  void validate() const;
};

/// One Monte Carlo sample on a shadow boundary inside an aperture disc.
struct BoundaryEdgeSample {
  Vec3 p0, p1;          // occluding edge endpoints (world)
  EdgeKind kind = EdgeKind::kSilhouette;
  Vec3 point;           // boundary point on the disc
  Vec3 normal;          // in-plane unit normal pointing to the occluded side
  RowVecX velocity;     // normal . d(point)/d(theta)
  double weight = 0.0;  // line measure per sample / disc area
  bool jump = false;    // visibility differs across the boundary
};

/// d(terminal visibility)/d(theta) for a disc at `antenna` seen from `apex`,
/// estimated as a line integral of the shadow boundary's normal velocity.
RowVecX terminal_visibility_gradient(const World& world, const Jet3& apex, const Vec3& antenna,
                                     double radius, bool apex_on_surface,
                                     const BoundaryConfig& config, std::uint64_t seed,
                                     std::vector<BoundaryEdgeSample>* samples = nullptr);

/// d(path visibility)/d(theta), matching World::chain_visibility. Zero when the
/// scene has point antennas.
RowVecX path_visibility_gradient(const World& world, const PropagationPath& path,
                                 const PathJacobian& jacobian, const BoundaryConfig& config,
                                 std::uint64_t path_seed);

/// Per-path d(visibility)/d(theta) for every path of a sample (seeded per path).
std::vector<RowVecX> visibility_gradients(const World& world, const CirSample& sample,
                                          const std::vector<PathJacobian>& jacobians,
                                          const BoundaryConfig& config);

/// Boundary contribution to d(surrogate range profile)/d(theta): one
/// bins x n complex matrix per receive element.
std::vector<MatXc> boundary_term(const Scene& scene, const SceneParams& params, int max_order,
                                 const RadarConfig& radar, const SurrogateConfig& surrogate,
                                 const BoundaryConfig& config);

// ---------------------------------------------------------------------------
// Finite-difference oracle

/// kCentral4 is the five-point stencil (error O(h^4)); boundary-flagged
/// parameters always use a two-point secant over the boundary step.
enum class FdScheme { kCentral, kCentral4, kForward };
std::string to_string(FdScheme s);
FdScheme fd_scheme_from_string(const std::string& name);

/// Denominator floor for boundary-affected parameters, as a fraction of the
/// largest |g_fd|: the wide secant carries curvature error of that order.
inline constexpr double kBoundaryFloor = 5e-2;

struct FdOptions {
  std::vector<double> steps{1e-4, 1e-5, 1e-6};
  FdScheme scheme = FdScheme::kCentral4;
  std::vector<int> indices;           // empty = all parameters
  std::vector<bool> boundary_flags;   // per parameter; empty = none flagged
  double boundary_step = 0.0;         // wide secant for flagged parameters; 0 = use steps
  double smooth_tolerance = 1e-3;     // relative
  double boundary_tolerance = 0.2;    // relative
  double relative_floor = 1e-12;      // absolute floor on the denominator
  double noise_floor = 1e-8;          // fraction of max |g_fd| added to the floor
};

struct GradientReport {
  std::vector<std::string> names;
  VecX analytic;
  VecX fd;
  VecX fd_step;
  std::vector<bool> boundary_flag;
  std::vector<bool> verifiable;
  std::vector<bool> checked;  // parameter was part of the check
  double denominator_floor = 0.0;
  double smooth_tolerance = 1e-3;
  double boundary_tolerance = 0.2;

  double abs_err(Eigen::Index i) const { return std::abs(analytic[i] - fd[i]); }
  double rel_err(Eigen::Index i) const;
  bool passes(Eigen::Index i) const;
  /// Smooth, verifiable, checked components within tolerance.
  bool smooth_ok() const;
  /// Every checked verifiable component within its tolerance.
  bool all_ok() const;
  std::vector<int> unverifiable() const;
};

using LossFunction = std::function<double(const VecX&)>;

/// Central (or forward) differences of `loss` per parameter; for each
/// parameter the step that agrees best with `analytic` is reported. A
/// non-finite or throwing stencil point marks the parameter unverifiable.
GradientReport fd_oracle(const LossFunction& loss, const VecX& theta, const VecX& analytic,
                         const std::vector<std::string>& names, const FdOptions& options);

}  // namespace rfit
