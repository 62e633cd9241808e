#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Geometry>
#include <Eigen/SparseCore>

#include "rfit/common.hpp"

namespace rfit {

inline constexpr double kDegenerateTriangleArea = 1e-12;  // m^2

struct Material {
  std::string name;
  double reflection_coefficient = 1.0;  // amplitude scale per bounce, in [0, 1]
};

/// Undirected mesh edge with its (at most two) incident triangles.
struct MeshEdge {
  int v0 = -1;
  int v1 = -1;
  int tri0 = -1;
  int tri1 = -1;  // -1 on boundary edges
  bool boundary() const { return tri1 < 0; }
};

/// Triangle mesh with vertices stored column-wise (3 x V) and triangles as
/// vertex-index triples (3 x T). Construction validates indices, rejects
/// degenerate triangles and non-manifold edges, and builds the edge map.
class Mesh {
 public:
  Mesh() = default;
  Mesh(Mat3X vertices, Eigen::Matrix<int, 3, Eigen::Dynamic> triangles,
       std::vector<int> material_ids = {});

  int vertex_count() const { return static_cast<int>(vertices_.cols()); }
  int triangle_count() const { return static_cast<int>(triangles_.cols()); }

  const Mat3X& vertices() const { return vertices_; }
  const Eigen::Matrix<int, 3, Eigen::Dynamic>& triangles() const { return triangles_; }
  const std::vector<int>& material_ids() const { return material_ids_; }
  const std::vector<MeshEdge>& edges() const { return edges_; }

  Vec3 vertex(int i) const { return vertices_.col(i); }
  Eigen::Vector3i triangle(int t) const { return triangles_.col(t); }
  int material_id(int t) const { return material_ids_[static_cast<std::size_t>(t)]; }

  /// Unit normal from the right-handed vertex order.
  Vec3 normal(int t) const;
  double area(int t) const;
  /// True when every edge is shared by exactly two triangles.
  bool closed() const;
  /// Ray-parity inside test; only meaningful for closed meshes.
  bool contains(const Vec3& p) const;

  /// Same topology and materials, new vertex positions.
  Mesh with_vertices(Mat3X vertices) const;

 private:
  Mat3X vertices_;
  Eigen::Matrix<int, 3, Eigen::Dynamic> triangles_;
  std::vector<int> material_ids_;
  std::vector<MeshEdge> edges_;
};

// Primitive builders. Triangles are wound so normals follow the given axis.
Mesh make_plate(const Vec3& center, const Vec3& normal, double width, double height,
                int material_id = 0, const Vec3& up_hint = Vec3::UnitZ());
Mesh make_box(const Vec3& center, const Vec3& size, int material_id = 0);
Mesh make_icosphere(const Vec3& center, double radius, int subdivisions, int material_id = 0);
Mesh merge_meshes(const std::vector<Mesh>& meshes);

// Rotation helpers, templated on scalar so they can be reused with any
// Eigen-compatible number type.

template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> skew(const Eigen::Matrix<Scalar, 3, 1>& v) {
  Eigen::Matrix<Scalar, 3, 3> m;
  m << Scalar(0), -v.z(), v.y(), v.z(), Scalar(0), -v.x(), -v.y(), v.x(), Scalar(0);
  return m;
}

/// Rodrigues formula: axis-angle vector -> rotation matrix.
template <typename Scalar>
Eigen::Matrix<Scalar, 3, 3> rotation_from_axis_angle(const Eigen::Matrix<Scalar, 3, 1>& w) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Scalar theta2 = w.squaredNorm();
  const Eigen::Matrix<Scalar, 3, 3> k = skew(w);
  Scalar a, b;
  if (theta2 < Scalar(1e-16)) {
    a = Scalar(1) - theta2 / Scalar(6);
    b = Scalar(0.5) - theta2 / Scalar(24);
  } else {
    const Scalar theta = sqrt(theta2);
    a = sin(theta) / theta;
    b = (Scalar(1) - cos(theta)) / theta2;
  }
  return Eigen::Matrix<Scalar, 3, 3>::Identity() + a * k + b * k * k;
}

/// Right Jacobian of SO(3): R(w + dw) ~= R(w) exp([J_r(w) dw]x).
Mat3 so3_right_jacobian(const Vec3& w);

/// Layout of the flat parameter vector:
/// [translation(3), rotation(3), scale(1), vertex_offsets(3V), material_scalars(M)].
class ParamLayout {
 public:
  static constexpr int kTranslation = 0;
  static constexpr int kRotation = 3;
  static constexpr int kScale = 6;
  static constexpr int kRigidCount = 7;

  ParamLayout() = default;
  ParamLayout(int offset_vertex_count, std::vector<std::string> material_names);

  int size() const { return static_cast<int>(names_.size()); }
  int offset_vertex_count() const { return offset_vertices_; }
  bool has_offsets() const { return offset_vertices_ > 0; }
  int offset_index(int vertex, int axis) const { return kRigidCount + 3 * vertex + axis; }
  int material_begin() const { return kRigidCount + 3 * offset_vertices_; }
  int material_count() const { return static_cast<int>(material_names_.size()); }
  const std::vector<std::string>& material_names() const { return material_names_; }

  const std::vector<std::string>& names() const { return names_; }
  const std::string& name(int index) const { return names_[static_cast<std::size_t>(index)]; }
  std::optional<int> find(const std::string& name) const;
  int index(const std::string& name) const;  // throws InputError when unknown
  bool is_geometric(int index) const { return index < material_begin(); }

  bool operator==(const ParamLayout& other) const {
    return names_ == other.names_;
  }

 private:
  int offset_vertices_ = 0;
  std::vector<std::string> material_names_;
  std::vector<std::string> names_;
  std::map<std::string, int> lookup_;
};

/// Differentiable scene state: rigid transform about a pivot, optional
/// per-vertex offsets in the object frame, optional per-material reflection
/// coefficients. World vertex = pivot + t + s * R(w) * (v + offset - pivot).
struct SceneParams {
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();  // axis-angle, rad
  double uniform_scale = 1.0;
  Vec3 pivot = Vec3::Zero();     // fixed, not part of the flat vector
  Mat3X vertex_offsets;          // 3 x V or empty
  VecX material_scalars;         // one per scene material or empty
  std::vector<std::string> material_names;

  ParamLayout layout() const;
  VecX pack() const;
  /// Rebuilds params from a flat vector using this object's layout and pivot.
  SceneParams unpack(const VecX& theta) const;

  /// Throws InputError naming the first non-finite or out-of-range entry.
  void validate() const;

  bool has_offsets() const { return vertex_offsets.cols() > 0; }
  bool has_material_scalars() const { return material_scalars.size() > 0; }
};

Mesh apply_params(const Mesh& mesh, const SceneParams& params);

/// Compact form of d(world vertex)/d(theta) for one vertex: a dense 3x7 rigid
/// block plus s*R on the vertex's own offset columns. Material columns are 0.
struct VertexJacobian {
  Eigen::Matrix<double, 3, ParamLayout::kRigidCount> rigid;
  Mat3 offset;        // valid when offset_column >= 0
  int offset_column;  // first of three columns, or -1

  /// Adds this Jacobian into columns of `out` (3 x n), scaled by `weight`.
  void accumulate(Mat3X& out, double weight = 1.0) const;
  Mat3X dense(int n) const;
};

VertexJacobian vertex_jacobian(const Mesh& mesh, const SceneParams& params, int vertex);

/// Dense per-vertex 3 x n Jacobian for every vertex.
std::vector<Mat3X> d_vertices_d_theta(const Mesh& mesh, const SceneParams& params);

/// Uniform graph Laplacian over mesh vertices, expanded x3 over coordinates
/// (row/col 3*i + axis). Isolated vertices produce zero rows and a warning.
struct LaplacianMatrix {
  Eigen::SparseMatrix<double> matrix;  // 3V x 3V

  /// Embeds the offset block into the n x n parameter space. All other
  /// blocks are zero.
  Eigen::SparseMatrix<double> embed(const ParamLayout& layout) const;
  /// Quadratic form over the offset block of theta.
  double energy(const VecX& theta, const ParamLayout& layout) const;
};

LaplacianMatrix build_laplacian(const Mesh& mesh);

/// Full scene description consumed by the tracer.
struct Scene {
  Mesh target;
  SceneParams params;
  std::vector<Mesh> static_meshes;
  std::vector<Material> materials;
  Vec3 tx_position = Vec3::Zero();
  std::vector<Vec3> rx_positions;
  double carrier_hz = 77e9;
  double speed_of_light = kSpeedOfLight;
  /// Radius of the antenna aperture discs used for soft visibility (m).
  /// Zero means point antennas with hard visibility.
  double aperture_radius = 0.0;

  double wavelength() const { return speed_of_light / carrier_hz; }
  /// Reflection coefficient of a material under the given params.
  double reflection_coefficient(int material_id, const SceneParams& p) const;
  /// Checks antenna placement, material ranges, and parameter validity.
  void validate() const;
  /// Copy with `params` replaced.
  Scene with_params(const SceneParams& p) const;
};

}  // namespace rfit
