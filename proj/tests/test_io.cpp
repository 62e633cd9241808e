#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "rfit/io.hpp"
#include "support.hpp"

using namespace rfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("rfit_test_io_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

const char* kMinimalScene = R"({
  "mesh": {"plate": {"center": [0, 0, 1], "normal": [0, 0, -1], "width": 0.4, "height": 0.4}},
  "array": {"tx": [0, 0, 0], "rx": [[0.01, 0, 0], [0.03, 0, 0]]}
})";

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const InputError& e) {
    return e.what();
  }
  return "";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream(path) << text;
}

}  // namespace

TEST_CASE("formatted doubles round-trip exactly") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::ldexp(test::uniform(rng, -1, 1), static_cast<int>(test::uniform(rng, -60, 60)));
    CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
  }
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
  CHECK(format_double(-std::numeric_limits<double>::infinity()) == "-inf");
}

TEST_CASE("profile CSV round trip") {
  TempDir dir;
  std::mt19937_64 rng(2);
  MatXc p(16, 3);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = Complex(test::uniform(rng, -1, 1), test::uniform(rng, -1, 1));
  RadarConfig radar;
  radar.bins = 16;
  write_profile_csv(dir / "p.csv", p, radar.bin_delays(), Provenance::kSurrogate);
  CHECK(read_profile_csv(dir / "p.csv") == p);
  const std::string text = read_file(dir / "p.csv");
  CHECK(text.rfind("#", 0) == 0);
  CHECK(text.find("surrogate") != std::string::npos);
}

TEST_CASE("incomplete or malformed profiles are rejected") {
  TempDir dir;
  write_text(dir / "bad.csv", "bin,delay_s,rx_index,re,im,magnitude\n0,0,0,1,0,1\n1,0,1,1,0,1\n");
  CHECK(error_of([&] { read_profile_csv(dir / "bad.csv"); }).find("incomplete") != std::string::npos);
  write_text(dir / "nan.csv", "bin,delay_s,rx_index,re,im,magnitude\n0,0,0,abc,0,1\n");
  CHECK(error_of([&] { read_profile_csv(dir / "nan.csv"); }).find(":2:") != std::string::npos);
  write_text(dir / "cols.csv", "bin,rx,re\n0,0,1\n");
  CHECK_THROWS_AS(read_profile_csv(dir / "cols.csv"), InputError);
}

TEST_CASE("spectrum CSV round trip and grid check") {
  TempDir dir;
  SpatialSpectrum s;
  s.grid = AngleGrid::uniform(-1, 1, 5, 0, 1, 4);
  s.power = MatX::Random(5, 4).cwiseAbs();
  write_spectrum_csv(dir / "s.csv", s);
  CHECK(read_spectrum_csv(dir / "s.csv", s.grid) == s.power);
  CHECK_THROWS_AS(read_spectrum_csv(dir / "s.csv", AngleGrid::uniform(-1, 1, 4, 0, 1, 5)), InputError);
  CHECK_THROWS_AS(read_spectrum_csv(dir / "s.csv", AngleGrid::uniform(-1, 1, 5, 0, 1.1, 4)), InputError);
}

TEST_CASE("binary grids round-trip with a little-endian header") {
  TempDir dir;
  MatXc p(4, 2);
  p << Complex(1, 2), Complex(3, 4), Complex(5, 6), Complex(7, 8), Complex(-1, 0), Complex(0, -1),
      Complex(0.5, 0.25), Complex(1e-300, -1e300);
  const VecX delays = VecX::LinSpaced(4, 0.0, 3e-9);
  const BinaryGrid g = grid_from_profiles(p, delays);
  write_grid_binary(dir / "p.rfgrid", g);
  const BinaryGrid r = read_grid_binary(dir / "p.rfgrid");
  CHECK(r.complex_values);
  CHECK(r.dims == std::vector<std::uint64_t>{4, 2});
  CHECK(r.axes[0] == delays);
  CHECK(r.data == g.data);
  CHECK(r.data[2] == 3.0);  // row-major: (0, 1) follows (0, 0)

  const std::string bytes = read_file(dir / "p.rfgrid");
  CHECK(bytes.substr(0, 8) == "RFGRID01");
  CHECK(bytes[8] == 1);
  CHECK(bytes[12] == 2);  // ndim
  CHECK(bytes[16] == 2);  // complex
  CHECK(bytes.size() == 8 + 12 + 16 + 8 * 6 + 8 * 16);

  write_text(dir / "t.rfgrid", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_grid_binary(dir / "t.rfgrid"), InputError);
  write_text(dir / "m.rfgrid", "NOTAGRID" + bytes.substr(8));
  CHECK_THROWS_AS(read_grid_binary(dir / "m.rfgrid"), InputError);
}

TEST_CASE("spectrum grids store power az-major") {
  SpatialSpectrum s;
  s.grid = AngleGrid::uniform(-1, 1, 3, 0, 1, 2);
  s.power.resize(3, 2);
  s.power << 0, 1, 2, 3, 4, 5;
  const BinaryGrid g = grid_from_spectrum(s);
  CHECK_FALSE(g.complex_values);
  CHECK(g.data == std::vector<double>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("checkpoint round trip keeps non-finite values") {
  TempDir dir;
  FitTrace t;
  t.names = {"a", "b"};
  t.status = FitStatus::kMaxIterations;
  t.initial_loss = 2.5;
  t.iterations.push_back({0, 2.5, 1.0, 0.0, (VecX(2) << 0.1, 0.2).finished()});
  t.iterations.push_back({1, std::numeric_limits<double>::infinity(), 0.5, 0.0, (VecX(2) << 0.3, -0.1).finished()});
  const VecX next = (VecX(2) << 1.0 / 3.0, std::numeric_limits<double>::quiet_NaN()).finished();
  write_checkpoint(dir / "c.json", t, next);
  const FitCheckpoint cp = read_checkpoint(dir / "c.json");
  CHECK(cp.trace.names == t.names);
  CHECK(cp.trace.status == t.status);
  REQUIRE(cp.trace.iterations.size() == 2);
  CHECK(std::isinf(cp.trace.iterations[1].loss));
  CHECK(cp.trace.iterations[1].theta == t.iterations[1].theta);
  CHECK(cp.next_theta[0] == next[0]);
  CHECK(std::isnan(cp.next_theta[1]));
  write_text(dir / "x.json", "{\"format\": \"other\"}");
  CHECK_THROWS_AS(read_checkpoint(dir / "x.json"), InputError);
}

TEST_CASE("manifest round trip") {
  TempDir dir;
  RunManifest m{"fit", "scenes/plate.json", {"fit", "scenes/plate.json", "obs.csv"}, "/tmp", 42, "1.0.0", 0.5,
                {"trace.csv"}};
  write_manifest(dir / "m.json", m);
  const RunManifest r = read_manifest(dir / "m.json");
  CHECK(r.command == m.command);
  CHECK(r.args == m.args);
  CHECK(r.working_dir == m.working_dir);
  CHECK(r.seed == 42);
  CHECK(r.outputs == m.outputs);
}

TEST_CASE("minimal scene uses documented defaults") {
  const SceneFile f = parse_scene(kMinimalScene, "mem.json");
  CHECK(f.scene.rx_positions.size() == 2);
  CHECK(f.scene.materials.size() == 1);
  CHECK(f.scene.materials[0].reflection_coefficient == 1.0);
  CHECK(f.pipeline.max_order == 1);
  CHECK(f.pipeline.min_order == 0);
  CHECK(f.pipeline.surrogate.sigma_s == doctest::Approx(2.0 / f.pipeline.radar.bandwidth_hz));
  CHECK((f.scene.params.pivot - Vec3(0, 0, 1)).norm() < 1e-12);
  CHECK(f.scene.params.layout().size() == ParamLayout::kRigidCount);
}

TEST_CASE("scene diagnostics name the line and field") {
  const std::string unknown = R"({
  "mesh": {"plate": {"center": [0, 0, 1], "normal": [0, 0, -1], "width": 0.4, "height": 0.4}},
  "array": {"tx": [0, 0, 0], "rx": [[0.01, 0, 0]]},
  "radar": {"bins": 64,
            "colour": 3}
})";
  const std::string e1 = error_of([&] { parse_scene(unknown, "s.json"); });
  CHECK(e1.find("s.json:5:") == 0);
  CHECK(e1.find("radar.colour") != std::string::npos);

  const std::string syntax = "{\n  \"mesh\": {\n  \"array\" [1]\n}";
  const std::string e2 = error_of([&] { parse_scene(syntax, "s.json"); });
  CHECK(e2.find("s.json:3: syntax error") == 0);

  const std::string bad_value = R"({
  "mesh": {"plate": {"center": [0, 0, 1], "normal": [0, 0, -1], "width": -0.4, "height": 0.4}},
  "array": {"tx": [0, 0, 0], "rx": [[0.01, 0, 0]]}
})";
  const std::string e3 = error_of([&] { parse_scene(bad_value, "s.json"); });
  CHECK(e3.find("s.json:2:") == 0);
  CHECK(e3.find("width") != std::string::npos);

  const std::string no_array = R"({"mesh": []})";
  CHECK(error_of([&] { parse_scene(no_array, "s.json"); }).find("array") != std::string::npos);

  const std::string bad_order = R"({"mesh": [], "array": {"tx": [0,0,0], "rx": [[1,0,0]]}, "radar": {"max_order": 3}})";
  CHECK(error_of([&] { parse_scene(bad_order, "s.json"); }).find("radar.max_order") != std::string::npos);
}

TEST_CASE("OBJ faces are fan-triangulated and resolved against the scene directory") {
  TempDir dir;
  write_text(dir / "quad.obj", "# quad\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\nf 1 2 3 4\n");
  const Mesh m = load_obj(dir / "quad.obj", 0);
  CHECK(m.vertex_count() == 4);
  CHECK(m.triangle_count() == 2);
  CHECK(m.area(0) + m.area(1) == doctest::Approx(1.0));

  write_text(dir / "scene.json", R"({"mesh": {"obj": "quad.obj"}, "array": {"tx": [0,0,0], "rx": [[0.5,0.5,0]]}})");
  const SceneFile f = load_scene_file(dir / "scene.json");
  CHECK(f.scene.target.triangle_count() == 2);

  write_text(dir / "bad.obj", "v 0 0 0\nv 1 0 0\nf 1 2\n");
  CHECK(error_of([&] { load_obj(dir / "bad.obj"); }).find("bad.obj:3:") != std::string::npos);
  CHECK_THROWS_AS(load_obj(dir / "missing.obj"), InputError);
}

TEST_CASE("written scene files reload with the new parameters") {
  TempDir dir;
  write_text(dir / "quad.obj", "v -1 -1 2\nv 1 -1 2\nv 1 1 2\nv -1 1 2\nf 1 2 3 4\n");
  write_text(dir / "scene.json", R"({"mesh": {"obj": "quad.obj"}, "array": {"tx": [0,0,0], "rx": [[0.1,0,0]]},
                                     "params": {"material_scalars": true}})");
  SceneFile f = load_scene_file(dir / "scene.json");
  SceneParams p = f.scene.params;
  p.translation = Vec3(0.1, -0.2, 0.3);
  p.rotation = Vec3(0.01, 0.02, 0.03);
  p.material_scalars[0] = 0.7;
  fs::create_directories(dir.path / "out");
  write_scene_file(f, p, dir / "out/fitted.json");
  const SceneFile g = load_scene_file(dir / "out/fitted.json");
  CHECK(g.scene.params.pack() == p.pack());
  CHECK(g.scene.target.triangle_count() == 2);
}

TEST_CASE("gradient report lists only checked parameters") {
  TempDir dir;
  GradientReport r;
  r.names = {"x", "y"};
  r.analytic = VecX::Ones(2);
  r.fd = VecX::Ones(2);
  r.fd_step = VecX::Constant(2, 1e-5);
  r.boundary_flag = {false, true};
  r.verifiable = {true, true};
  r.checked = {false, true};
  write_gradient_report_csv(dir / "g.csv", r);
  const std::string text = read_file(dir / "g.csv");
  CHECK(text.find("param_name,analytic,fd,abs_err,rel_err,boundary_flag,fd_step") != std::string::npos);
  CHECK(text.find("\ny,1,1,0,0,1,") != std::string::npos);
  CHECK(text.find("\nx,") == std::string::npos);
}

TEST_CASE("CIR CSV lists one row per path with its vertex chain") {
  TempDir dir;
  const Scene s = test::plate_scene(1.0, 2);
  const CirSample c = trace_paths(s, 1);
  write_cir_csv(dir / "cir.csv", c);
  const std::string text = read_file(dir / "cir.csv");
  std::size_t rows = 0;
  std::istringstream ss(text);
  std::string line;
  bool header = false;
  while (std::getline(ss, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      CHECK(line == "rx_index,order,tau_s,alpha,phi_rad,vertex_chain");
      header = true;
      continue;
    }
    ++rows;
  }
  CHECK(rows == c.paths.size());
}
