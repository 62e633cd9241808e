#include "rfit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <utility>

namespace rfit {

namespace {

std::string vec_str(const Vec3& v) {
  std::ostringstream os;
  os << '(' << v.x() << ", " << v.y() << ", " << v.z() << ')';
  return os.str();
}

// Plain Moller-Trumbore used for the parity test; the tracer has its own
// accelerated version.
bool ray_hits_triangle(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                       const Vec3& c, double* t_out) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const Vec3 p = dir.cross(e2);
  const double det = e1.dot(p);
  if (std::abs(det) < 1e-15) return false;
  const double inv = 1.0 / det;
  const Vec3 s = origin - a;
  const double u = s.dot(p) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Vec3 q = s.cross(e1);
  const double v = dir.dot(q) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  *t_out = e2.dot(q) * inv;
  return true;
}

}  // namespace

Mesh::Mesh(Mat3X vertices, Eigen::Matrix<int, 3, Eigen::Dynamic> triangles,
           std::vector<int> material_ids)
    : vertices_(std::move(vertices)),
      triangles_(std::move(triangles)),
      material_ids_(std::move(material_ids)) {
  const int nv = vertex_count();
  const int nt = triangle_count();
  if (!vertices_.allFinite()) throw InputError("mesh has non-finite vertex coordinates");
  if (material_ids_.empty()) material_ids_.assign(static_cast<std::size_t>(nt), 0);
  if (static_cast<int>(material_ids_.size()) != nt) {
    throw InputError("mesh material id count does not match triangle count");
  }
  std::map<std::pair<int, int>, int> edge_index;
  for (int t = 0; t < nt; ++t) {
    for (int k = 0; k < 3; ++k) {
      const int idx = triangles_(k, t);
      if (idx < 0 || idx >= nv) {
        std::ostringstream os;
        os << "triangle " << t << " references vertex " << idx << " but mesh has " << nv
           << " vertices";
        throw InputError(os.str());
      }
    }
    if (area(t) <= kDegenerateTriangleArea) {
      std::ostringstream os;
      os << "triangle " << t << " is degenerate (area " << area(t) << " m^2)";
      throw InputError(os.str());
    }
    if (material_ids_[static_cast<std::size_t>(t)] < 0) {
      throw InputError("triangle " + std::to_string(t) + " has a negative material id");
    }
    for (int k = 0; k < 3; ++k) {
      int a = triangles_(k, t);
      int b = triangles_((k + 1) % 3, t);
      if (a > b) std::swap(a, b);
      auto [it, inserted] = edge_index.try_emplace({a, b}, static_cast<int>(edges_.size()));
      if (inserted) {
        edges_.push_back(MeshEdge{a, b, t, -1});
      } else {
        MeshEdge& e = edges_[static_cast<std::size_t>(it->second)];
        if (e.tri1 >= 0) {
          std::ostringstream os;
          os << "edge (" << a << ", " << b << ") is shared by more than two triangles";
          throw InputError(os.str());
        }
        e.tri1 = t;
      }
    }
  }
}

Vec3 Mesh::normal(int t) const {
  const Eigen::Vector3i tri = triangle(t);
  const Vec3 a = vertices_.col(tri[0]);
  return (vertices_.col(tri[1]) - a).cross(vertices_.col(tri[2]) - a).normalized();
}

double Mesh::area(int t) const {
  const Eigen::Vector3i tri = triangle(t);
  const Vec3 a = vertices_.col(tri[0]);
  return 0.5 * (vertices_.col(tri[1]) - a).cross(vertices_.col(tri[2]) - a).norm();
}

bool Mesh::closed() const {
  return !edges_.empty() &&
         std::none_of(edges_.begin(), edges_.end(), [](const MeshEdge& e) { return e.boundary(); });
}

bool Mesh::contains(const Vec3& p) const {
  if (!closed()) return false;
  // Irrational-looking direction avoids hitting edges of axis-aligned meshes.
  const Vec3 dir = Vec3(0.5773502691, 0.5773519, 0.5773486).normalized();
  int crossings = 0;
  for (int t = 0; t < triangle_count(); ++t) {
    const Eigen::Vector3i tri = triangle(t);
    double dist = 0.0;
    if (ray_hits_triangle(p, dir, vertices_.col(tri[0]), vertices_.col(tri[1]),
                          vertices_.col(tri[2]), &dist) &&
        dist > 0.0) {
      ++crossings;
    }
  }
  return (crossings % 2) == 1;
}

Mesh Mesh::with_vertices(Mat3X vertices) const {
  if (vertices.cols() != vertices_.cols()) {
    throw InputError("with_vertices: vertex count mismatch");
  }
  Mesh out = *this;
  out.vertices_ = std::move(vertices);
  return out;
}

Mesh make_plate(const Vec3& center, const Vec3& normal, double width, double height,
                int material_id, const Vec3& up_hint) {
  if (!(width > 0.0) || !(height > 0.0)) throw InputError("plate size must be positive");
  const Vec3 n = normal.normalized();
  Vec3 u = up_hint.cross(n);
  if (u.norm() < 1e-9) u = Vec3::UnitX().cross(n);
  if (u.norm() < 1e-9) u = Vec3::UnitY().cross(n);
  u.normalize();
  const Vec3 v = n.cross(u);
  const Vec3 hu = 0.5 * width * u;
  const Vec3 hv = 0.5 * height * v;
  Mat3X verts(3, 4);
  verts.col(0) = center - hu - hv;
  verts.col(1) = center + hu - hv;
  verts.col(2) = center + hu + hv;
  verts.col(3) = center - hu + hv;
  Eigen::Matrix<int, 3, Eigen::Dynamic> tris(3, 2);
  tris << 0, 0, 1, 2, 2, 3;
  return Mesh(std::move(verts), std::move(tris), {material_id, material_id});
}

Mesh make_box(const Vec3& center, const Vec3& size, int material_id) {
  if ((size.array() <= 0.0).any()) throw InputError("box size must be positive");
  const Vec3 h = 0.5 * size;
  Mat3X verts(3, 8);
  for (int i = 0; i < 8; ++i) {
    verts.col(i) = center + Vec3((i & 1) ? h.x() : -h.x(), (i & 2) ? h.y() : -h.y(),
                                 (i & 4) ? h.z() : -h.z());
  }
  // Outward-facing winding.
  const int faces[12][3] = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                            {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  Eigen::Matrix<int, 3, Eigen::Dynamic> tris(3, 12);
  for (int f = 0; f < 12; ++f) tris.col(f) << faces[f][0], faces[f][1], faces[f][2];
  return Mesh(std::move(verts), std::move(tris), std::vector<int>(12, material_id));
}

Mesh make_icosphere(const Vec3& center, double radius, int subdivisions, int material_id) {
  if (!(radius > 0.0)) throw InputError("sphere radius must be positive");
  if (subdivisions < 0 || subdivisions > 6) throw InputError("icosphere subdivisions must be in [0, 6]");
  const double g = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> pts = {{-1, g, 0}, {1, g, 0},  {-1, -g, 0}, {1, -g, 0},
                           {0, -1, g}, {0, 1, g},  {0, -1, -g}, {0, 1, -g},
                           {g, 0, -1}, {g, 0, 1},  {-g, 0, -1}, {-g, 0, 1}};
  for (auto& p : pts) p.normalize();
  std::vector<Eigen::Vector3i> faces = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
      {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      pts.push_back((pts[static_cast<std::size_t>(a)] + pts[static_cast<std::size_t>(b)]).normalized());
      const int idx = static_cast<int>(pts.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Eigen::Vector3i> next;
    next.reserve(faces.size() * 4);
    for (const auto& f : faces) {
      const int a = mid(f[0], f[1]);
      const int b = mid(f[1], f[2]);
      const int c = mid(f[2], f[0]);
      next.emplace_back(f[0], a, c);
      next.emplace_back(f[1], b, a);
      next.emplace_back(f[2], c, b);
      next.emplace_back(a, b, c);
    }
    faces = std::move(next);
  }
  Mat3X verts(3, static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) verts.col(static_cast<Eigen::Index>(i)) = center + radius * pts[i];
  Eigen::Matrix<int, 3, Eigen::Dynamic> tris(3, static_cast<Eigen::Index>(faces.size()));
  for (std::size_t i = 0; i < faces.size(); ++i) tris.col(static_cast<Eigen::Index>(i)) = faces[i];
  return Mesh(std::move(verts), std::move(tris), std::vector<int>(faces.size(), material_id));
}

Mesh merge_meshes(const std::vector<Mesh>& meshes) {
  Eigen::Index nv = 0;
  Eigen::Index nt = 0;
  for (const auto& m : meshes) {
    nv += m.vertex_count();
    nt += m.triangle_count();
  }
  Mat3X verts(3, nv);
  Eigen::Matrix<int, 3, Eigen::Dynamic> tris(3, nt);
  std::vector<int> mats;
  mats.reserve(static_cast<std::size_t>(nt));
  Eigen::Index vo = 0;
  Eigen::Index to = 0;
  for (const auto& m : meshes) {
    verts.middleCols(vo, m.vertex_count()) = m.vertices();
    tris.middleCols(to, m.triangle_count()) = m.triangles().array() + static_cast<int>(vo);
    mats.insert(mats.end(), m.material_ids().begin(), m.material_ids().end());
    vo += m.vertex_count();
    to += m.triangle_count();
  }
  return Mesh(std::move(verts), std::move(tris), std::move(mats));
}

Mat3 so3_right_jacobian(const Vec3& w) {
  const double theta2 = w.squaredNorm();
  const Mat3 k = skew(w);
  double a, b;
  if (theta2 < 1e-12) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() - a * k + b * k * k;
}

// ---------------------------------------------------------------------------
// Parameter layout

ParamLayout::ParamLayout(int offset_vertex_count, std::vector<std::string> material_names)
    : offset_vertices_(offset_vertex_count), material_names_(std::move(material_names)) {
  names_ = {"translation.x", "translation.y", "translation.z", "rotation.x",
            "rotation.y",    "rotation.z",    "scale"};
  static const char* axes = "xyz";
  for (int v = 0; v < offset_vertices_; ++v) {
    for (int a = 0; a < 3; ++a) {
      names_.push_back("offset." + std::to_string(v) + "." + axes[a]);
    }
  }
  for (const auto& m : material_names_) names_.push_back("material." + m);
  for (int i = 0; i < size(); ++i) {
    if (!lookup_.emplace(names_[static_cast<std::size_t>(i)], i).second) {
      throw InputError("duplicate parameter name '" + names_[static_cast<std::size_t>(i)] + "'");
    }
  }
}

std::optional<int> ParamLayout::find(const std::string& name) const {
  auto it = lookup_.find(name);
  if (it == lookup_.end()) return std::nullopt;
  return it->second;
}

int ParamLayout::index(const std::string& name) const {
  if (auto i = find(name)) return *i;
  throw InputError("unknown parameter '" + name + "'");
}

ParamLayout SceneParams::layout() const {
  return ParamLayout(static_cast<int>(vertex_offsets.cols()),
                     has_material_scalars() ? material_names : std::vector<std::string>{});
}

VecX SceneParams::pack() const {
  const ParamLayout lay = layout();
  VecX theta(lay.size());
  theta.segment<3>(ParamLayout::kTranslation) = translation;
  theta.segment<3>(ParamLayout::kRotation) = rotation;
  theta[ParamLayout::kScale] = uniform_scale;
  for (int v = 0; v < lay.offset_vertex_count(); ++v) {
    theta.segment<3>(lay.offset_index(v, 0)) = vertex_offsets.col(v);
  }
  if (lay.material_count() > 0) {
    theta.segment(lay.material_begin(), lay.material_count()) = material_scalars;
  }
  return theta;
}

SceneParams SceneParams::unpack(const VecX& theta) const {
  const ParamLayout lay = layout();
  if (theta.size() != lay.size()) {
    throw InputError("parameter vector has " + std::to_string(theta.size()) +
                     " entries, layout expects " + std::to_string(lay.size()));
  }
  SceneParams out = *this;
  out.translation = theta.segment<3>(ParamLayout::kTranslation);
  out.rotation = theta.segment<3>(ParamLayout::kRotation);
  out.uniform_scale = theta[ParamLayout::kScale];
  for (int v = 0; v < lay.offset_vertex_count(); ++v) {
    out.vertex_offsets.col(v) = theta.segment<3>(lay.offset_index(v, 0));
  }
  if (lay.material_count() > 0) {
    out.material_scalars = theta.segment(lay.material_begin(), lay.material_count());
  }
  return out;
}

void SceneParams::validate() const {
  const ParamLayout lay = layout();
  const VecX theta = pack();
  for (int i = 0; i < theta.size(); ++i) {
    if (!std::isfinite(theta[i])) {
      throw InputError("parameter '" + lay.name(i) + "' is not finite");
    }
  }
  if (!(uniform_scale > 0.0)) throw InputError("parameter 'scale' must be positive");
  for (int m = 0; m < lay.material_count(); ++m) {
    const double r = material_scalars[m];
    if (r < 0.0 || r > 1.0) {
      throw InputError("parameter '" + lay.name(lay.material_begin() + m) +
                       "' must lie in [0, 1]");
    }
  }
  if (!pivot.allFinite()) throw InputError("pivot is not finite");
  if (has_material_scalars() && material_names.size() != static_cast<std::size_t>(material_scalars.size())) {
    throw InputError("material scalar count does not match material names");
  }
}

Mesh apply_params(const Mesh& mesh, const SceneParams& params) {
  params.validate();
  if (params.has_offsets() && params.vertex_offsets.cols() != mesh.vertex_count()) {
    throw InputError("vertex_offsets has " + std::to_string(params.vertex_offsets.cols()) +
                     " columns, mesh has " + std::to_string(mesh.vertex_count()) + " vertices");
  }
  const Mat3 rs = params.uniform_scale * rotation_from_axis_angle(params.rotation);
  Mat3X local = mesh.vertices();
  if (params.has_offsets()) local += params.vertex_offsets;
  local.colwise() -= params.pivot;
  Mat3X world = rs * local;
  world.colwise() += params.pivot + params.translation;
  return mesh.with_vertices(std::move(world));
}

void VertexJacobian::accumulate(Mat3X& out, double weight) const {
  out.leftCols<ParamLayout::kRigidCount>() += weight * rigid;
  if (offset_column >= 0) out.middleCols<3>(offset_column) += weight * offset;
}

Mat3X VertexJacobian::dense(int n) const {
  Mat3X out = Mat3X::Zero(3, n);
  accumulate(out);
  return out;
}

VertexJacobian vertex_jacobian(const Mesh& mesh, const SceneParams& params, int vertex) {
  const Mat3 r = rotation_from_axis_angle(params.rotation);
  Vec3 q = mesh.vertex(vertex) - params.pivot;
  if (params.has_offsets()) q += params.vertex_offsets.col(vertex);
  VertexJacobian j;
  j.rigid.leftCols<3>() = Mat3::Identity();
  j.rigid.middleCols<3>(3) = -params.uniform_scale * r * skew(q) * so3_right_jacobian(params.rotation);
  j.rigid.col(6) = r * q;
  if (params.has_offsets()) {
    j.offset = params.uniform_scale * r;
    j.offset_column = ParamLayout::kRigidCount + 3 * vertex;
  } else {
    j.offset.setZero();
    j.offset_column = -1;
  }
  return j;
}

std::vector<Mat3X> d_vertices_d_theta(const Mesh& mesh, const SceneParams& params) {
  params.validate();
  const int n = params.layout().size();
  std::vector<Mat3X> out;
  out.reserve(static_cast<std::size_t>(mesh.vertex_count()));
  for (int v = 0; v < mesh.vertex_count(); ++v) out.push_back(vertex_jacobian(mesh, params, v).dense(n));
  return out;
}

// ---------------------------------------------------------------------------
// Laplacian

LaplacianMatrix build_laplacian(const Mesh& mesh) {
  const int nv = mesh.vertex_count();
  std::vector<int> degree(static_cast<std::size_t>(nv), 0);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(mesh.edges().size() * 12 + static_cast<std::size_t>(nv) * 3);
  for (const MeshEdge& e : mesh.edges()) {
    ++degree[static_cast<std::size_t>(e.v0)];
    ++degree[static_cast<std::size_t>(e.v1)];
    for (int a = 0; a < 3; ++a) {
      trips.emplace_back(3 * e.v0 + a, 3 * e.v1 + a, -1.0);
      trips.emplace_back(3 * e.v1 + a, 3 * e.v0 + a, -1.0);
    }
  }
  int isolated = 0;
  for (int v = 0; v < nv; ++v) {
    const int d = degree[static_cast<std::size_t>(v)];
    if (d == 0) {
      ++isolated;
      continue;
    }
    for (int a = 0; a < 3; ++a) trips.emplace_back(3 * v + a, 3 * v + a, static_cast<double>(d));
  }
  if (isolated > 0) {
    log::warn("build_laplacian: " + std::to_string(isolated) +
              " isolated vertex(es); their rows are left zero");
  }
  LaplacianMatrix out;
  out.matrix.resize(3 * nv, 3 * nv);
  out.matrix.setFromTriplets(trips.begin(), trips.end());
  return out;
}

Eigen::SparseMatrix<double> LaplacianMatrix::embed(const ParamLayout& layout) const {
  const int n = layout.size();
  Eigen::SparseMatrix<double> out(n, n);
  if (!layout.has_offsets()) return out;
  if (matrix.rows() != 3 * layout.offset_vertex_count()) {
    throw InputError("Laplacian size does not match the offset block of the parameter layout");
  }
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(matrix.nonZeros()));
  const int base = layout.offset_index(0, 0);
  for (int k = 0; k < matrix.outerSize(); ++k) {
    for (Eigen::SparseMatrix<double>::InnerIterator it(matrix, k); it; ++it) {
      trips.emplace_back(base + static_cast<int>(it.row()), base + static_cast<int>(it.col()), it.value());
    }
  }
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

double LaplacianMatrix::energy(const VecX& theta, const ParamLayout& layout) const {
  if (!layout.has_offsets()) return 0.0;
  const VecX x = theta.segment(layout.offset_index(0, 0), 3 * layout.offset_vertex_count());
  return x.dot(matrix * x);
}

// ---------------------------------------------------------------------------
// Scene

double Scene::reflection_coefficient(int material_id, const SceneParams& p) const {
  if (p.has_material_scalars()) return p.material_scalars[material_id];
  return materials[static_cast<std::size_t>(material_id)].reflection_coefficient;
}

void Scene::validate() const {
  if (rx_positions.empty()) throw InputError("scene has no receive elements");
  if (!(carrier_hz > 0.0) || !(speed_of_light > 0.0)) {
    throw InputError("carrier frequency and speed of light must be positive");
  }
  if (!(aperture_radius >= 0.0) || !std::isfinite(aperture_radius)) {
    throw InputError("aperture_radius must be finite and non-negative");
  }
  if (materials.empty()) throw InputError("scene defines no materials");
  for (const auto& m : materials) {
    if (!(m.reflection_coefficient >= 0.0 && m.reflection_coefficient <= 1.0)) {
      throw InputError("material '" + m.name + "' reflection_coefficient must lie in [0, 1]");
    }
  }
  params.validate();
  if (params.has_material_scalars() &&
      static_cast<std::size_t>(params.material_scalars.size()) != materials.size()) {
    throw InputError("material_scalars must have one entry per scene material");
  }
  auto check_ids = [&](const Mesh& m, const std::string& what) {
    for (int id : m.material_ids()) {
      if (id >= static_cast<int>(materials.size())) {
        throw InputError(what + " references material id " + std::to_string(id) +
                         " but only " + std::to_string(materials.size()) + " are defined");
      }
    }
  };
  check_ids(target, "target mesh");
  for (std::size_t i = 0; i < static_cast<std::size_t>(static_meshes.size()); ++i) {
    check_ids(static_meshes[i], "static mesh " + std::to_string(i));
  }
  const Mesh world = apply_params(target, params);
  std::vector<const Mesh*> all = {&world};
  for (const auto& m : static_meshes) all.push_back(&m);
  auto check_antenna = [&](const Vec3& p, const std::string& what) {
    if (!p.allFinite()) throw InputError(what + " position is not finite");
    for (const Mesh* m : all) {
      if (m->contains(p)) throw InputError(what + " at " + vec_str(p) + " lies inside a mesh");
    }
  };
  check_antenna(tx_position, "tx");
  for (std::size_t i = 0; i < rx_positions.size(); ++i) check_antenna(rx_positions[i], "rx " + std::to_string(i));
}

Scene Scene::with_params(const SceneParams& p) const {
  Scene out = *this;
  out.params = p;
  return out;
}

}  // namespace rfit
