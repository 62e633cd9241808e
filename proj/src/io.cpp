#include "rfit/io.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rfit {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

// ---------------------------------------------------------------------------
// Scene parsing with line/field diagnostics.

int line_at(const std::string& text, std::size_t pos) {
  pos = std::min(pos, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(pos), '\n'));
}

// Best-effort line of a dotted field path: each key is searched after the
// previous one.
int line_of_field(const std::string& text, const std::string& path) {
  std::size_t pos = 0;
  std::size_t found = std::string::npos;
  std::stringstream ss(path);
  std::string part;
  while (std::getline(ss, part, '.')) {
    const auto bracket = part.find('[');
    if (bracket != std::string::npos) part = part.substr(0, bracket);
    if (part.empty()) continue;
    const auto at = text.find("\"" + part + "\"", pos);
    if (at == std::string::npos) break;
    found = at;
    pos = at + part.size() + 2;
  }
  return found == std::string::npos ? 1 : line_at(text, found);
}

class SceneReader {
 public:
  SceneReader(const std::string& text, std::string source, std::string base_dir)
      : text_(text), source_(std::move(source)), base_dir_(std::move(base_dir)) {}

  [[noreturn]] void fail(const std::string& path, const std::string& message) const {
    throw InputError(source_ + ":" + std::to_string(line_of_field(text_, path)) + ": " + path +
                     ": " + message);
  }

  void check_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) const {
    if (!obj.is_object()) fail(path, "expected an object");
    for (const auto& [key, value] : obj.items()) {
      bool ok = false;
      for (const char* a : allowed) ok = ok || key == a;
      if (!ok) fail(join(path, key), "unknown field");
    }
  }

  static std::string join(const std::string& path, const std::string& key) {
    return path.empty() ? key : path + "." + key;
  }
  static std::string index(const std::string& path, std::size_t i) {
    return path + "[" + std::to_string(i) + "]";
  }

  double number(const json& j, const std::string& path) const {
    if (!j.is_number()) fail(path, "expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) fail(path, "must be finite");
    return v;
  }
  double positive(const json& j, const std::string& path) const {
    const double v = number(j, path);
    if (!(v > 0.0)) fail(path, "must be positive");
    return v;
  }
  int integer(const json& j, const std::string& path) const {
    if (!j.is_number_integer()) fail(path, "expected an integer");
    return j.get<int>();
  }
  bool boolean(const json& j, const std::string& path) const {
    if (!j.is_boolean()) fail(path, "expected true or false");
    return j.get<bool>();
  }
  std::string string(const json& j, const std::string& path) const {
    if (!j.is_string()) fail(path, "expected a string");
    return j.get<std::string>();
  }
  Vec3 vec3(const json& j, const std::string& path) const {
    if (!j.is_array() || j.size() != 3) fail(path, "expected an array of 3 numbers");
    return {number(j[0], index(path, 0)), number(j[1], index(path, 1)), number(j[2], index(path, 2))};
  }
  Mat3X vec3_list(const json& j, const std::string& path) const {
    if (!j.is_array()) fail(path, "expected an array of [x, y, z] triples");
    Mat3X out(3, static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = vec3(j[i], index(path, i));
    return out;
  }

  template <typename F>
  auto guarded(const std::string& path, F&& f) const {
    try {
      return f();
    } catch (const InputError& e) {
      if (std::string(e.what()).rfind(source_ + ":", 0) == 0) throw;
      fail(path, e.what());
    }
  }

  std::string resolve(const std::string& file) const {
    const fs::path p(file);
    return p.is_absolute() ? p.string() : (fs::path(base_dir_) / p).string();
  }

  const std::string& text() const { return text_; }

 private:
  const std::string& text_;
  std::string source_;
  std::string base_dir_;
};

int material_ref(const SceneReader& r, const json& obj, const std::string& path,
                 const std::vector<Material>& materials) {
  if (!obj.contains("material")) return 0;
  const json& m = obj["material"];
  const std::string p = SceneReader::join(path, "material");
  if (m.is_string()) {
    const auto name = m.get<std::string>();
    for (std::size_t i = 0; i < materials.size(); ++i) {
      if (materials[i].name == name) return static_cast<int>(i);
    }
    r.fail(p, "unknown material '" + name + "'");
  }
  const int id = r.integer(m, p);
  if (id < 0 || id >= static_cast<int>(materials.size())) r.fail(p, "material index out of range");
  return id;
}

Mesh parse_mesh_item(const SceneReader& r, const json& j, const std::string& path,
                     const std::vector<Material>& materials) {
  if (!j.is_object()) r.fail(path, "expected a mesh object");
  const int mat = material_ref(r, j, path, materials);
  if (j.contains("obj")) {
    r.check_keys(j, path, {"obj", "material"});
    const std::string file = r.resolve(r.string(j["obj"], SceneReader::join(path, "obj")));
    return r.guarded(SceneReader::join(path, "obj"), [&] { return load_obj(file, mat); });
  }
  if (j.contains("plate")) {
    r.check_keys(j, path, {"plate", "material"});
    const std::string p = SceneReader::join(path, "plate");
    const json& s = j["plate"];
    r.check_keys(s, p, {"center", "normal", "width", "height", "up"});
    for (const char* k : {"center", "normal", "width", "height"}) {
      if (!s.contains(k)) r.fail(SceneReader::join(p, k), "missing");
    }
    const Vec3 up = s.contains("up") ? r.vec3(s["up"], SceneReader::join(p, "up")) : Vec3::UnitZ();
    const Vec3 n = r.vec3(s["normal"], SceneReader::join(p, "normal"));
    if (n.norm() < 1e-12) r.fail(SceneReader::join(p, "normal"), "must be nonzero");
    return r.guarded(p, [&] {
      return make_plate(r.vec3(s["center"], SceneReader::join(p, "center")), n,
                        r.positive(s["width"], SceneReader::join(p, "width")),
                        r.positive(s["height"], SceneReader::join(p, "height")), mat, up);
    });
  }
  if (j.contains("box")) {
    r.check_keys(j, path, {"box", "material"});
    const std::string p = SceneReader::join(path, "box");
    const json& s = j["box"];
    r.check_keys(s, p, {"center", "size"});
    if (!s.contains("center") || !s.contains("size")) r.fail(p, "needs center and size");
    return r.guarded(p, [&] {
      return make_box(r.vec3(s["center"], SceneReader::join(p, "center")),
                      r.vec3(s["size"], SceneReader::join(p, "size")), mat);
    });
  }
  if (j.contains("icosphere")) {
    r.check_keys(j, path, {"icosphere", "material"});
    const std::string p = SceneReader::join(path, "icosphere");
    const json& s = j["icosphere"];
    r.check_keys(s, p, {"center", "radius", "subdivisions"});
    if (!s.contains("center") || !s.contains("radius")) r.fail(p, "needs center and radius");
    const int sub = s.contains("subdivisions") ? r.integer(s["subdivisions"], SceneReader::join(p, "subdivisions")) : 2;
    return r.guarded(p, [&] {
      return make_icosphere(r.vec3(s["center"], SceneReader::join(p, "center")),
                            r.positive(s["radius"], SceneReader::join(p, "radius")), sub, mat);
    });
  }
  if (j.contains("vertices")) {
    r.check_keys(j, path, {"vertices", "triangles", "material_ids", "material"});
    const Mat3X verts = r.vec3_list(j["vertices"], SceneReader::join(path, "vertices"));
    const std::string tp = SceneReader::join(path, "triangles");
    if (!j.contains("triangles") || !j["triangles"].is_array()) r.fail(tp, "expected an array of index triples");
    const json& t = j["triangles"];
    Eigen::Matrix<int, 3, Eigen::Dynamic> tris(3, static_cast<Eigen::Index>(t.size()));
    for (std::size_t i = 0; i < t.size(); ++i) {
      const std::string ip = SceneReader::index(tp, i);
      if (!t[i].is_array() || t[i].size() != 3) r.fail(ip, "expected 3 vertex indices");
      for (int k = 0; k < 3; ++k) tris(k, static_cast<Eigen::Index>(i)) = r.integer(t[i][static_cast<std::size_t>(k)], ip);
    }
    std::vector<int> ids(t.size(), mat);
    if (j.contains("material_ids")) {
      const std::string mp = SceneReader::join(path, "material_ids");
      const json& m = j["material_ids"];
      if (!m.is_array() || m.size() != t.size()) r.fail(mp, "expected one material id per triangle");
      for (std::size_t i = 0; i < m.size(); ++i) {
        ids[i] = r.integer(m[i], SceneReader::index(mp, i));
        if (ids[i] < 0 || ids[i] >= static_cast<int>(materials.size())) {
          r.fail(SceneReader::index(mp, i), "material index out of range");
        }
      }
    }
    return r.guarded(path, [&] { return Mesh(verts, tris, ids); });
  }
  r.fail(path, "expected one of vertices/triangles, obj, plate, box, icosphere");
}

Mesh parse_mesh(const SceneReader& r, const json& j, const std::string& path,
                const std::vector<Material>& materials) {
  if (j.is_array()) {
    if (j.empty()) return Mesh();  // free space
    std::vector<Mesh> parts;
    for (std::size_t i = 0; i < j.size(); ++i) {
      parts.push_back(parse_mesh_item(r, j[i], SceneReader::index(path, i), materials));
    }
    return parts.size() == 1 ? parts.front() : merge_meshes(parts);
  }
  return parse_mesh_item(r, j, path, materials);
}

SceneParams parse_params(const SceneReader& r, const json* j, const Mesh& mesh,
                         const std::vector<Material>& materials) {
  SceneParams p;
  for (const auto& m : materials) p.material_names.push_back(m.name);
  if (mesh.vertex_count() > 0) p.pivot = mesh.vertices().rowwise().mean();
  if (j == nullptr) return p;
  const std::string path = "params";
  r.check_keys(*j, path, {"translation", "rotation", "scale", "pivot", "vertex_offsets", "material_scalars"});
  if (j->contains("translation")) p.translation = r.vec3((*j)["translation"], "params.translation");
  if (j->contains("rotation")) p.rotation = r.vec3((*j)["rotation"], "params.rotation");
  if (j->contains("scale")) p.uniform_scale = r.positive((*j)["scale"], "params.scale");
  if (j->contains("pivot")) p.pivot = r.vec3((*j)["pivot"], "params.pivot");
  if (j->contains("vertex_offsets")) {
    const json& v = (*j)["vertex_offsets"];
    if (v.is_boolean()) {
      if (v.get<bool>()) p.vertex_offsets = Mat3X::Zero(3, mesh.vertex_count());
    } else {
      p.vertex_offsets = r.vec3_list(v, "params.vertex_offsets");
      if (p.vertex_offsets.cols() != mesh.vertex_count()) {
        r.fail("params.vertex_offsets", "expected " + std::to_string(mesh.vertex_count()) +
                                             " offsets (one per target vertex), got " +
                                             std::to_string(p.vertex_offsets.cols()));
      }
    }
  }
  if (j->contains("material_scalars")) {
    const json& m = (*j)["material_scalars"];
    const std::string mp = "params.material_scalars";
    VecX scalars(static_cast<Eigen::Index>(materials.size()));
    for (std::size_t i = 0; i < materials.size(); ++i) {
      scalars[static_cast<Eigen::Index>(i)] = materials[i].reflection_coefficient;
    }
    if (m.is_boolean()) {
      if (m.get<bool>()) p.material_scalars = scalars;
    } else if (m.is_object()) {
      for (const auto& [name, value] : m.items()) {
        const auto it = std::find(p.material_names.begin(), p.material_names.end(), name);
        if (it == p.material_names.end()) r.fail(SceneReader::join(mp, name), "unknown material");
        scalars[it - p.material_names.begin()] = r.number(value, SceneReader::join(mp, name));
      }
      p.material_scalars = scalars;
    } else {
      r.fail(mp, "expected true/false or an object of material -> value");
    }
  }
  r.guarded(path, [&] { p.validate(); return 0; });
  return p;
}

void parse_axis_range(const SceneReader& r, const json& j, const std::string& path, double& lo,
                      double& hi, int& count) {
  r.check_keys(j, path, {"min", "max", "count"});
  if (j.contains("min")) lo = r.number(j["min"], SceneReader::join(path, "min"));
  if (j.contains("max")) hi = r.number(j["max"], SceneReader::join(path, "max"));
  if (j.contains("count")) count = r.integer(j["count"], SceneReader::join(path, "count"));
  if (count < 1) r.fail(SceneReader::join(path, "count"), "must be at least 1");
}

}  // namespace

SceneFile parse_scene(const std::string& text, const std::string& source, const std::string& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = e.byte > 0 ? e.byte - 1 : 0;
    std::string what = e.what();
    const auto colon = what.rfind(": ");
    if (colon != std::string::npos) what = what.substr(colon + 2);
    throw InputError(source + ":" + std::to_string(line_at(text, byte)) + ": syntax error: " + what);
  }
  SceneReader r(text, source, base_dir);
  r.check_keys(doc, "", {"mesh", "materials", "params", "static_meshes", "radar", "array", "surrogate",
                         "spectrum", "boundary"});

  SceneFile out;
  out.path = source;
  out.text = text;
  Scene& scene = out.scene;
  PipelineConfig& pipe = out.pipeline;

  if (doc.contains("materials")) {
    const json& m = doc["materials"];
    if (!m.is_array() || m.empty()) r.fail("materials", "expected a non-empty array");
    std::set<std::string> seen;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const std::string p = SceneReader::index("materials", i);
      r.check_keys(m[i], p, {"name", "reflection_coefficient"});
      Material mat;
      mat.name = m[i].contains("name") ? r.string(m[i]["name"], SceneReader::join(p, "name"))
                                       : "material" + std::to_string(i);
      if (!seen.insert(mat.name).second) r.fail(SceneReader::join(p, "name"), "duplicate material name");
      if (m[i].contains("reflection_coefficient")) {
        const std::string rp = SceneReader::join(p, "reflection_coefficient");
        mat.reflection_coefficient = r.number(m[i]["reflection_coefficient"], rp);
        if (mat.reflection_coefficient < 0.0 || mat.reflection_coefficient > 1.0) r.fail(rp, "must lie in [0, 1]");
      }
      scene.materials.push_back(mat);
    }
  } else {
    scene.materials.push_back({"default", 1.0});
  }

  if (!doc.contains("mesh")) r.fail("mesh", "missing (the target mesh is required)");
  scene.target = parse_mesh(r, doc["mesh"], "mesh", scene.materials);
  if (doc.contains("static_meshes")) {
    const json& s = doc["static_meshes"];
    if (!s.is_array()) r.fail("static_meshes", "expected an array");
    for (std::size_t i = 0; i < s.size(); ++i) {
      scene.static_meshes.push_back(parse_mesh_item(r, s[i], SceneReader::index("static_meshes", i), scene.materials));
    }
  }
  scene.params = parse_params(r, doc.contains("params") ? &doc["params"] : nullptr, scene.target, scene.materials);

  if (doc.contains("radar")) {
    const json& j = doc["radar"];
    r.check_keys(j, "radar", {"carrier_hz", "bandwidth_hz", "chirp_duration_s", "samples", "bins", "window",
                              "max_order", "min_order", "speed_of_light"});
    if (j.contains("carrier_hz")) pipe.radar.carrier_hz = r.positive(j["carrier_hz"], "radar.carrier_hz");
    if (j.contains("bandwidth_hz")) pipe.radar.bandwidth_hz = r.positive(j["bandwidth_hz"], "radar.bandwidth_hz");
    if (j.contains("chirp_duration_s")) {
      pipe.radar.chirp_duration_s = r.positive(j["chirp_duration_s"], "radar.chirp_duration_s");
    }
    if (j.contains("samples")) pipe.radar.samples = r.integer(j["samples"], "radar.samples");
    if (j.contains("bins")) pipe.radar.bins = r.integer(j["bins"], "radar.bins");
    if (j.contains("window")) {
      const std::string w = r.string(j["window"], "radar.window");
      pipe.radar.window = r.guarded("radar.window", [&] { return window_from_string(w); });
    }
    if (j.contains("max_order")) pipe.max_order = r.integer(j["max_order"], "radar.max_order");
    if (j.contains("min_order")) pipe.min_order = r.integer(j["min_order"], "radar.min_order");
    if (j.contains("speed_of_light")) scene.speed_of_light = r.positive(j["speed_of_light"], "radar.speed_of_light");
  }
  if (pipe.max_order < 0 || pipe.max_order > 2) r.fail("radar.max_order", "must be 0, 1 or 2");
  if (pipe.min_order < 0 || pipe.min_order > pipe.max_order) r.fail("radar.min_order", "must lie in [0, max_order]");
  r.guarded("radar", [&] { pipe.radar.validate(); return 0; });
  scene.carrier_hz = pipe.radar.carrier_hz;

  if (!doc.contains("array")) r.fail("array", "missing (tx and rx positions are required)");
  {
    const json& j = doc["array"];
    r.check_keys(j, "array", {"tx", "rx", "ula", "aperture_radius"});
    if (j.contains("tx")) scene.tx_position = r.vec3(j["tx"], "array.tx");
    if (j.contains("aperture_radius")) {
      scene.aperture_radius = r.number(j["aperture_radius"], "array.aperture_radius");
      if (scene.aperture_radius < 0.0) r.fail("array.aperture_radius", "must be non-negative");
    }
    if (j.contains("rx") == j.contains("ula")) r.fail("array", "give exactly one of rx or ula");
    if (j.contains("rx")) {
      const Mat3X rx = r.vec3_list(j["rx"], "array.rx");
      if (rx.cols() == 0) r.fail("array.rx", "needs at least one element");
      for (Eigen::Index i = 0; i < rx.cols(); ++i) scene.rx_positions.push_back(rx.col(i));
    } else {
      const json& u = j["ula"];
      r.check_keys(u, "array.ula", {"count", "spacing", "center", "axis"});
      if (!u.contains("count")) r.fail("array.ula.count", "missing");
      const int count = r.integer(u["count"], "array.ula.count");
      if (count < 1) r.fail("array.ula.count", "must be at least 1");
      const double spacing = u.contains("spacing") ? r.positive(u["spacing"], "array.ula.spacing")
                                                   : 0.5 * scene.wavelength();
      const Vec3 center = u.contains("center") ? r.vec3(u["center"], "array.ula.center") : scene.tx_position;
      Vec3 axis = u.contains("axis") ? r.vec3(u["axis"], "array.ula.axis") : Vec3::UnitX();
      if (axis.norm() < 1e-12) r.fail("array.ula.axis", "must be nonzero");
      axis.normalize();
      for (int i = 0; i < count; ++i) {
        scene.rx_positions.push_back(center + (i - 0.5 * (count - 1)) * spacing * axis);
      }
    }
  }

  pipe.surrogate.sigma_s = 2.0 / pipe.radar.bandwidth_hz;
  if (doc.contains("surrogate")) {
    const json& j = doc["surrogate"];
    r.check_keys(j, "surrogate", {"sigma_s", "airy_radius", "field_scale", "seed"});
    if (j.contains("sigma_s")) pipe.surrogate.sigma_s = r.positive(j["sigma_s"], "surrogate.sigma_s");
    if (j.contains("airy_radius")) pipe.surrogate.airy_radius = r.positive(j["airy_radius"], "surrogate.airy_radius");
    if (j.contains("field_scale")) pipe.surrogate.field_scale = r.positive(j["field_scale"], "surrogate.field_scale");
    if (j.contains("seed")) pipe.surrogate.seed = static_cast<std::uint64_t>(r.integer(j["seed"], "surrogate.seed"));
  }
  r.guarded("surrogate", [&] { pipe.surrogate.validate(); return 0; });

  if (doc.contains("spectrum")) {
    const json& j = doc["spectrum"];
    r.check_keys(j, "spectrum", {"method", "sources", "snapshots", "snr_db", "phase_jitter", "seed",
                                 "azimuth", "elevation"});
    SpectrumSettings& s = out.spectrum;
    if (j.contains("method")) {
      const std::string m = r.string(j["method"], "spectrum.method");
      s.method = r.guarded("spectrum.method", [&] { return spectrum_method_from_string(m); });
    }
    if (j.contains("sources")) {
      s.sources = r.integer(j["sources"], "spectrum.sources");
      if (s.sources < 1) r.fail("spectrum.sources", "must be at least 1");
    }
    if (j.contains("snapshots")) {
      s.snapshots.snapshots = r.integer(j["snapshots"], "spectrum.snapshots");
      if (s.snapshots.snapshots < 1) r.fail("spectrum.snapshots", "must be at least 1");
    }
    if (j.contains("snr_db")) s.snapshots.snr_db = r.number(j["snr_db"], "spectrum.snr_db");
    if (j.contains("phase_jitter")) s.snapshots.path_phase_jitter = r.boolean(j["phase_jitter"], "spectrum.phase_jitter");
    if (j.contains("seed")) s.snapshots.seed = static_cast<std::uint64_t>(r.integer(j["seed"], "spectrum.seed"));
    double az_lo = -kPi / 2, az_hi = kPi / 2, el_lo = 0.0, el_hi = kPi / 2;
    int az_n = 31, el_n = 16;
    if (j.contains("azimuth")) parse_axis_range(r, j["azimuth"], "spectrum.azimuth", az_lo, az_hi, az_n);
    if (j.contains("elevation")) parse_axis_range(r, j["elevation"], "spectrum.elevation", el_lo, el_hi, el_n);
    pipe.grid = r.guarded("spectrum", [&] {
      AngleGrid g = AngleGrid::uniform(az_lo, az_hi, az_n, el_lo, el_hi, el_n);
      g.validate();
      return g;
    });
  }

  if (doc.contains("boundary")) {
    const json& j = doc["boundary"];
    r.check_keys(j, "boundary", {"enabled", "edge_samples", "sharp_angle_deg", "seed"});
    if (j.contains("enabled")) pipe.include_boundary = r.boolean(j["enabled"], "boundary.enabled");
    if (j.contains("edge_samples")) pipe.boundary.edge_samples = r.integer(j["edge_samples"], "boundary.edge_samples");
    if (j.contains("sharp_angle_deg")) {
      pipe.boundary.sharp_angle_deg = r.positive(j["sharp_angle_deg"], "boundary.sharp_angle_deg");
    }
    if (j.contains("seed")) pipe.boundary.seed = static_cast<std::uint64_t>(r.integer(j["seed"], "boundary.seed"));
    r.guarded("boundary", [&] { pipe.boundary.validate(); return 0; });
  }

  r.guarded("array", [&] { scene.validate(); return 0; });
  return out;
}

SceneFile load_scene_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open scene file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const fs::path p(path);
  const std::string dir = p.has_parent_path() ? p.parent_path().string() : ".";
  SceneFile f = parse_scene(ss.str(), path, dir);
  f.path = path;
  return f;
}

namespace {

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

void absolutize_obj_paths(json& node, const fs::path& base) {
  if (node.is_array()) {
    for (auto& item : node) absolutize_obj_paths(item, base);
  } else if (node.is_object() && node.contains("obj") && node["obj"].is_string()) {
    const fs::path p(node["obj"].get<std::string>());
    if (!p.is_absolute()) node["obj"] = fs::absolute(base / p).lexically_normal().string();
  }
}

}  // namespace

void write_scene_file(const SceneFile& scene_file, const SceneParams& params, const std::string& path) {
  json doc = json::parse(scene_file.text);
  const fs::path src(scene_file.path);
  const fs::path base = src.has_parent_path() ? src.parent_path() : fs::path(".");
  if (doc.contains("mesh")) absolutize_obj_paths(doc["mesh"], base);
  if (doc.contains("static_meshes")) absolutize_obj_paths(doc["static_meshes"], base);
  json p = json::object();
  p["translation"] = vec_json(params.translation);
  p["rotation"] = vec_json(params.rotation);
  p["scale"] = params.uniform_scale;
  p["pivot"] = vec_json(params.pivot);
  if (params.has_offsets()) {
    json offs = json::array();
    for (Eigen::Index i = 0; i < params.vertex_offsets.cols(); ++i) offs.push_back(vec_json(params.vertex_offsets.col(i)));
    p["vertex_offsets"] = offs;
  }
  if (params.has_material_scalars()) {
    json m = json::object();
    for (Eigen::Index i = 0; i < params.material_scalars.size(); ++i) {
      m[params.material_names[static_cast<std::size_t>(i)]] = params.material_scalars[i];
    }
    p["material_scalars"] = m;
  }
  doc["params"] = p;
  write_file_atomic(path, doc.dump(2) + "\n");
}

Mesh load_obj(const std::string& path, int material_id) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open mesh file '" + path + "'");
  std::vector<Vec3> verts;
  std::vector<Eigen::Vector3i> tris;
  std::string line;
  int line_no = 0;
  auto bad = [&](const std::string& msg) {
    throw InputError(path + ":" + std::to_string(line_no) + ": " + msg);
  };
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ss >> v.x() >> v.y() >> v.z())) bad("vertex needs three coordinates");
      verts.push_back(v);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        const int i = std::atoi(tok.substr(0, tok.find('/')).c_str());
        if (i == 0) bad("invalid face index '" + tok + "'");
        idx.push_back(i > 0 ? i - 1 : static_cast<int>(verts.size()) + i);
      }
      if (idx.size() < 3) bad("face needs at least three vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) tris.emplace_back(idx[0], idx[k], idx[k + 1]);
    }
  }
  if (tris.empty()) throw InputError("mesh file '" + path + "' contains no faces");
  Mat3X v(3, static_cast<Eigen::Index>(verts.size()));
  for (std::size_t i = 0; i < verts.size(); ++i) v.col(static_cast<Eigen::Index>(i)) = verts[i];
  Eigen::Matrix<int, 3, Eigen::Dynamic> t(3, static_cast<Eigen::Index>(tris.size()));
  for (std::size_t i = 0; i < tris.size(); ++i) t.col(static_cast<Eigen::Index>(i)) = tris[i];
  try {
    return Mesh(std::move(v), std::move(t), std::vector<int>(tris.size(), material_id));
  } catch (const InputError& e) {
    throw InputError("mesh file '" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Text files

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> lines;
};

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

CsvTable read_csv(const std::string& path, const std::vector<std::string>& expected) {
  std::istringstream in(read_file(path));
  CsvTable t;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (t.header.empty()) {
      t.header = split_csv(line);
      if (t.header != expected) {
        std::string want;
        for (const auto& e : expected) want += (want.empty() ? "" : ",") + e;
        throw InputError(path + ":" + std::to_string(n) + ": expected columns " + want);
      }
      continue;
    }
    auto cells = split_csv(line);
    if (cells.size() != expected.size()) {
      throw InputError(path + ":" + std::to_string(n) + ": expected " + std::to_string(expected.size()) + " fields");
    }
    t.rows.push_back(std::move(cells));
    t.lines.push_back(n);
  }
  if (t.header.empty()) throw InputError(path + ": missing header row");
  return t;
}

double parse_double(const std::string& s, const std::string& path, int line) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) {
    throw InputError(path + ":" + std::to_string(line) + ": '" + s + "' is not a number");
  }
  return v;
}

std::string provenance_name(Provenance p) { return p == Provenance::kExact ? "exact" : "surrogate"; }

}  // namespace

void write_cir_csv(const std::string& path, const CirSample& sample) {
  std::ostringstream os;
  os << "# rfit channel impulse response\n"
     << "# rx_index: receive element; order: reflections; tau_s: delay [s]; alpha: amplitude [1];\n"
     << "# phi_rad: carrier phase [rad]; vertex_chain: tx, bounces, rx as x;y;z [m]\n"
     << "rx_index,order,tau_s,alpha,phi_rad,vertex_chain\n";
  for (const auto& p : sample.paths) {
    os << p.rx_index << ',' << p.order << ',' << format_double(p.delay) << ',' << format_double(p.amplitude)
       << ',' << format_double(p.phase) << ',';
    bool first = true;
    for (const auto& v : p.vertices) {
      for (int k = 0; k < 3; ++k) {
        os << (first ? "" : ";") << format_double(v[k]);
        first = false;
      }
    }
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

void write_profile_csv(const std::string& path, const MatXc& profiles, const VecX& delays, Provenance provenance) {
  if (delays.size() != profiles.rows()) throw InputError("profile delays do not match bin count");
  std::ostringstream os;
  os << "# rfit range profile (" << provenance_name(provenance) << ")\n"
     << "# bin: index; delay_s: round-trip delay [s]; rx_index: receive element;\n"
     << "# re, im, magnitude: profile value [arbitrary amplitude units]\n"
     << "bin,delay_s,rx_index,re,im,magnitude\n";
  for (Eigen::Index rx = 0; rx < profiles.cols(); ++rx) {
    for (Eigen::Index b = 0; b < profiles.rows(); ++b) {
      const Complex v = profiles(b, rx);
      os << b << ',' << format_double(delays[b]) << ',' << rx << ',' << format_double(v.real()) << ','
         << format_double(v.imag()) << ',' << format_double(std::abs(v)) << '\n';
    }
  }
  write_file_atomic(path, os.str());
}

MatXc read_profile_csv(const std::string& path) {
  const CsvTable t = read_csv(path, {"bin", "delay_s", "rx_index", "re", "im", "magnitude"});
  if (t.rows.empty()) throw InputError(path + ": profile has no rows");
  std::map<std::pair<long, long>, Complex> values;
  long bins = 0, rx = 0;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    const long b = static_cast<long>(parse_double(row[0], path, t.lines[i]));
    const long r = static_cast<long>(parse_double(row[2], path, t.lines[i]));
    if (b < 0 || r < 0) throw InputError(path + ":" + std::to_string(t.lines[i]) + ": negative index");
    values[{b, r}] = {parse_double(row[3], path, t.lines[i]), parse_double(row[4], path, t.lines[i])};
    bins = std::max(bins, b + 1);
    rx = std::max(rx, r + 1);
  }
  if (static_cast<long>(values.size()) != bins * rx) throw InputError(path + ": profile grid is incomplete");
  MatXc out(bins, rx);
  for (const auto& [key, v] : values) out(key.first, key.second) = v;
  return out;
}

void write_spectrum_csv(const std::string& path, const SpatialSpectrum& spectrum) {
  std::ostringstream os;
  os << "# rfit spatial spectrum (" << to_string(spectrum.method) << ")\n"
     << "# azimuth_rad [rad]; elevation_rad: angle from boresight [rad]; power [arbitrary units]\n"
     << "azimuth_rad,elevation_rad,power\n";
  for (Eigen::Index a = 0; a < spectrum.power.rows(); ++a) {
    for (Eigen::Index e = 0; e < spectrum.power.cols(); ++e) {
      os << format_double(spectrum.grid.azimuth[a]) << ',' << format_double(spectrum.grid.elevation[e]) << ','
         << format_double(spectrum.power(a, e)) << '\n';
    }
  }
  write_file_atomic(path, os.str());
}

MatX read_spectrum_csv(const std::string& path, const AngleGrid& grid) {
  const CsvTable t = read_csv(path, {"azimuth_rad", "elevation_rad", "power"});
  const auto expected = static_cast<std::size_t>(grid.az_count() * grid.el_count());
  if (t.rows.size() != expected) {
    throw InputError(path + ": expected " + std::to_string(expected) + " spectrum cells for the configured grid, got " +
                     std::to_string(t.rows.size()));
  }
  MatX out(grid.az_count(), grid.el_count());
  std::size_t i = 0;
  for (Eigen::Index a = 0; a < grid.az_count(); ++a) {
    for (Eigen::Index e = 0; e < grid.el_count(); ++e, ++i) {
      const auto& row = t.rows[i];
      const double az = parse_double(row[0], path, t.lines[i]);
      const double el = parse_double(row[1], path, t.lines[i]);
      if (std::abs(az - grid.azimuth[a]) > 1e-9 || std::abs(el - grid.elevation[e]) > 1e-9) {
        throw InputError(path + ":" + std::to_string(t.lines[i]) + ": angle grid does not match the scene");
      }
      out(a, e) = parse_double(row[2], path, t.lines[i]);
    }
  }
  return out;
}

void write_gradient_report_csv(const std::string& path, const GradientReport& report) {
  std::ostringstream os;
  os << "# rfit gradient check\n"
     << "# analytic, fd: d(loss)/d(param) [loss units per param unit]; abs_err, rel_err: |analytic - fd| and\n"
     << "# its ratio to max(|fd|, floor = " << format_double(report.denominator_floor) << ");\n"
     << "# boundary_flag: 1 when a visibility boundary affects the parameter; fd_step [param units];\n"
     << "# tolerance: smooth " << format_double(report.smooth_tolerance) << ", boundary "
     << format_double(report.boundary_tolerance) << "; fd = nan marks an unverifiable parameter\n"
     << "param_name,analytic,fd,abs_err,rel_err,boundary_flag,fd_step\n";
  for (Eigen::Index i = 0; i < report.analytic.size(); ++i) {
    if (!report.checked[static_cast<std::size_t>(i)]) continue;
    os << report.names[static_cast<std::size_t>(i)] << ',' << format_double(report.analytic[i]) << ','
       << format_double(report.fd[i]) << ',' << format_double(report.abs_err(i)) << ','
       << format_double(report.rel_err(i)) << ',' << (report.boundary_flag[static_cast<std::size_t>(i)] ? 1 : 0)
       << ',' << format_double(report.fd_step[i]) << '\n';
  }
  write_file_atomic(path, os.str());
}

void write_fit_trace_csv(const std::string& path, const FitTrace& trace) {
  std::ostringstream os;
  os << "# rfit fit trace, status: " << to_string(trace.status) << "\n"
     << "# iter: step index; loss [loss units]; grad_norm: |g| of the data term; reg_energy: theta^T L theta;\n"
     << "# remaining columns: parameter values (m, rad, 1)\n"
     << "iter,loss,grad_norm,reg_energy";
  for (const auto& n : trace.names) os << ',' << n;
  os << '\n';
  for (const auto& it : trace.iterations) {
    os << it.iteration << ',' << format_double(it.loss) << ',' << format_double(it.grad_norm) << ','
       << format_double(it.reg_energy);
    for (Eigen::Index i = 0; i < it.theta.size(); ++i) os << ',' << format_double(it.theta[i]);
    os << '\n';
  }
  write_file_atomic(path, os.str());
}

void write_sweep_csv(const std::string& path, const std::string& param, const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "# rfit loss landscape over " << param << "\n"
     << "# theta: parameter value [param units]; loss_exact, loss_surrogate [loss units]\n"
     << "theta,loss_exact,loss_surrogate\n";
  for (const auto& r : rows) {
    os << format_double(r.theta) << ',' << format_double(r.loss_exact) << ',' << format_double(r.loss_surrogate)
       << '\n';
  }
  write_file_atomic(path, os.str());
}

// ---------------------------------------------------------------------------
// Binary grid

namespace {

constexpr char kGridMagic[8] = {'R', 'F', 'G', 'R', 'I', 'D', '0', '1'};

template <typename T>
void put_le(std::string& out, T value) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::string& in, std::size_t& pos, const std::string& path) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  if (pos + sizeof(T) > in.size()) throw InputError(path + ": truncated grid file");
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bits |= static_cast<U>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_grid_binary(const std::string& path, const BinaryGrid& grid) {
  if (grid.axes.size() != grid.dims.size()) throw InputError("grid axes do not match dimensions");
  std::uint64_t count = 1;
  for (std::size_t d = 0; d < grid.dims.size(); ++d) {
    if (static_cast<std::uint64_t>(grid.axes[d].size()) != grid.dims[d]) {
      throw InputError("grid axis " + std::to_string(d) + " has the wrong length");
    }
    count *= grid.dims[d];
  }
  if (grid.data.size() != count * (grid.complex_values ? 2 : 1)) throw InputError("grid data has the wrong size");
  std::string out(kGridMagic, sizeof kGridMagic);
  put_le<std::uint32_t>(out, kGridVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(grid.dims.size()));
  put_le<std::uint32_t>(out, grid.complex_values ? 2u : 1u);
  for (auto d : grid.dims) put_le<std::uint64_t>(out, d);
  for (const auto& axis : grid.axes) {
    for (Eigen::Index i = 0; i < axis.size(); ++i) put_le<double>(out, axis[i]);
  }
  for (double v : grid.data) put_le<double>(out, v);
  write_file_atomic(path, out);
}

BinaryGrid read_grid_binary(const std::string& path) {
  const std::string in = read_file(path);
  if (in.size() < sizeof kGridMagic || std::memcmp(in.data(), kGridMagic, sizeof kGridMagic) != 0) {
    throw InputError(path + ": not an RFGRID01 file");
  }
  std::size_t pos = sizeof kGridMagic;
  const auto version = get_le<std::uint32_t>(in, pos, path);
  if (version != kGridVersion) throw InputError(path + ": unsupported grid version " + std::to_string(version));
  const auto ndim = get_le<std::uint32_t>(in, pos, path);
  const auto dtype = get_le<std::uint32_t>(in, pos, path);
  if (dtype != 1 && dtype != 2) throw InputError(path + ": unknown dtype " + std::to_string(dtype));
  if (ndim > 8) throw InputError(path + ": too many dimensions");
  BinaryGrid g;
  g.complex_values = dtype == 2;
  std::uint64_t count = 1;
  for (std::uint32_t d = 0; d < ndim; ++d) {
    g.dims.push_back(get_le<std::uint64_t>(in, pos, path));
    count *= g.dims.back();
  }
  for (std::uint32_t d = 0; d < ndim; ++d) {
    VecX axis(static_cast<Eigen::Index>(g.dims[d]));
    for (Eigen::Index i = 0; i < axis.size(); ++i) axis[i] = get_le<double>(in, pos, path);
    g.axes.push_back(axis);
  }
  const std::uint64_t values = count * (g.complex_values ? 2 : 1);
  if (in.size() - pos != values * 8) throw InputError(path + ": data size does not match header");
  g.data.resize(values);
  for (auto& v : g.data) v = get_le<double>(in, pos, path);
  return g;
}

BinaryGrid grid_from_spectrum(const SpatialSpectrum& spectrum) {
  BinaryGrid g;
  g.dims = {static_cast<std::uint64_t>(spectrum.power.rows()), static_cast<std::uint64_t>(spectrum.power.cols())};
  g.axes = {spectrum.grid.azimuth, spectrum.grid.elevation};
  for (Eigen::Index a = 0; a < spectrum.power.rows(); ++a) {
    for (Eigen::Index e = 0; e < spectrum.power.cols(); ++e) g.data.push_back(spectrum.power(a, e));
  }
  return g;
}

BinaryGrid grid_from_profiles(const MatXc& profiles, const VecX& delays) {
  BinaryGrid g;
  g.complex_values = true;
  g.dims = {static_cast<std::uint64_t>(profiles.rows()), static_cast<std::uint64_t>(profiles.cols())};
  g.axes = {delays, VecX::LinSpaced(profiles.cols(), 0.0, static_cast<double>(profiles.cols() - 1))};
  for (Eigen::Index b = 0; b < profiles.rows(); ++b) {
    for (Eigen::Index r = 0; r < profiles.cols(); ++r) {
      g.data.push_back(profiles(b, r).real());
      g.data.push_back(profiles(b, r).imag());
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Checkpoints and manifests

namespace {

json number_json(double v) { return std::isfinite(v) ? json(v) : json(format_double(v)); }

double json_number(const json& j) {
  if (j.is_string()) return std::strtod(j.get<std::string>().c_str(), nullptr);
  return j.get<double>();
}

json vector_json(const VecX& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(number_json(v[i]));
  return a;
}

VecX json_vector(const json& j) {
  VecX v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = json_number(j[i]);
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const FitTrace& trace, const VecX& next_theta) {
  json doc;
  doc["format"] = "rfit-checkpoint";
  doc["version"] = 1;
  doc["names"] = trace.names;
  doc["status"] = to_string(trace.status);
  doc["message"] = trace.message;
  doc["initial_loss"] = number_json(trace.initial_loss);
  json its = json::array();
  for (const auto& it : trace.iterations) {
    json row;
    row["iteration"] = it.iteration;
    row["loss"] = number_json(it.loss);
    row["grad_norm"] = number_json(it.grad_norm);
    row["reg_energy"] = number_json(it.reg_energy);
    row["theta"] = vector_json(it.theta);
    its.push_back(row);
  }
  doc["iterations"] = its;
  doc["next_theta"] = vector_json(next_theta);
  write_file_atomic(path, doc.dump(1) + "\n");
}

FitCheckpoint read_checkpoint(const std::string& path) {
  try {
    const json doc = json::parse(read_file(path));
    if (doc.value("format", "") != "rfit-checkpoint") throw InputError(path + ": not a checkpoint file");
    FitCheckpoint cp;
    cp.trace.names = doc.at("names").get<std::vector<std::string>>();
    cp.trace.status = fit_status_from_string(doc.at("status").get<std::string>());
    cp.trace.message = doc.at("message").get<std::string>();
    cp.trace.initial_loss = json_number(doc.at("initial_loss"));
    for (const auto& row : doc.at("iterations")) {
      FitIteration it;
      it.iteration = row.at("iteration").get<int>();
      it.loss = json_number(row.at("loss"));
      it.grad_norm = json_number(row.at("grad_norm"));
      it.reg_energy = json_number(row.at("reg_energy"));
      it.theta = json_vector(row.at("theta"));
      cp.trace.iterations.push_back(std::move(it));
    }
    cp.next_theta = json_vector(doc.at("next_theta"));
    return cp;
  } catch (const json::exception& e) {
    throw InputError(path + ": malformed checkpoint: " + e.what());
  }
}

void write_manifest(const std::string& path, const RunManifest& m) {
  json doc;
  doc["format"] = "rfit-manifest";
  doc["command"] = m.command;
  doc["scene"] = m.scene_path;
  doc["args"] = m.args;
  doc["working_dir"] = m.working_dir;
  doc["seed"] = m.seed;
  doc["version"] = m.version;
  doc["wall_clock_s"] = m.wall_clock_s;
  doc["outputs"] = m.outputs;
  write_file_atomic(path, doc.dump(2) + "\n");
}

RunManifest read_manifest(const std::string& path) {
  try {
    const json doc = json::parse(read_file(path));
    if (doc.value("format", "") != "rfit-manifest") throw InputError(path + ": not a manifest file");
    RunManifest m;
    m.command = doc.at("command").get<std::string>();
    m.scene_path = doc.at("scene").get<std::string>();
    m.args = doc.at("args").get<std::vector<std::string>>();
    m.working_dir = doc.value("working_dir", std::string("."));
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.version = doc.at("version").get<std::string>();
    m.wall_clock_s = doc.value("wall_clock_s", 0.0);
    m.outputs = doc.value("outputs", std::vector<std::string>{});
    return m;
  } catch (const json::exception& e) {
    throw InputError(path + ": malformed manifest: " + e.what());
  }
}

}  // namespace rfit
