// Acceptance suite: one PASS/FAIL line per criterion. Exit status is 0 only
// when every criterion passes.

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>

#include <unistd.h>

#include "rfit/cli.hpp"
#include "rfit/io.hpp"
#include "rfit/optimize.hpp"

using namespace rfit;
namespace fs = std::filesystem;

namespace {

// Criterion 1
constexpr int kSmoothScenes = 20;
constexpr double kSmoothTolerance = 1e-3;
constexpr double kSmoothBudgetS = 60.0;
// Criterion 2
constexpr int kOcclusionConfigs = 50;
constexpr double kInteriorAgreementMax = 0.60;
constexpr double kBoundaryAgreementMin = 0.95;
// Criterion 3
constexpr int kRandomTaps = 1000;
constexpr double kTapTolerance = 1e-6;
constexpr double kTapBudgetS = 5.0;
// Criterion 4
constexpr int kSweepSteps = 1601;
constexpr double kSweepHalfRangeWavelengths = 10.0;
constexpr int kExactMinimaMin = 3;
constexpr int kSurrogateMinima = 1;
// Criterion 5
constexpr double kFitOffsetWavelengths = 10.0;
constexpr int kFitIterations = 2000;
constexpr double kFitBudgetS = 300.0;
// Criterion 6
constexpr int kMusicTrials = 100;
constexpr double kMusicRmseDeg = 1.0;
constexpr int kBeamformTrials = 50;
constexpr int kBeamformCellTolerance = 1;
// Criterion 7
constexpr double kResolvedSeparationBins = 2.0;
constexpr double kUnresolvedSeparationBins = 0.25;
constexpr double kPeakFloor = 0.5;  // peaks count above half the largest magnitude
// Criterion 8
constexpr int kRegularizerSteps = 200;
constexpr double kStepFraction = 0.9;  // eta = fraction * 2 / (lambda_reg * lambda_max)
// Criterion 9
constexpr int kRepetitions = 3;
// Criterion 10
constexpr double kSimulateBudgetS = 1.0;
constexpr double kGradcheckBudgetS = 30.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

LossConfig loss_for(TargetKind target) {
  LossConfig c;
  c.domain = default_domain(target);
  c.pool_columns = !is_profile(target);
  c.normalize = true;
  return c;
}

/// Runs the CLI with stdout and stderr discarded.
int quiet_cli(const std::vector<std::string>& args) {
  std::ostringstream sink;
  std::streambuf* out = std::cout.rdbuf(sink.rdbuf());
  std::streambuf* err = std::cerr.rdbuf(sink.rdbuf());
  const int code = run_cli(args);
  std::cout.rdbuf(out);
  std::cerr.rdbuf(err);
  return code;
}

// ---------------------------------------------------------------------------

/// 1-3 plates in separate azimuth sectors facing the radar; the first is the target.
Scene random_smooth_scene(std::mt19937_64& rng) {
  Scene s;
  s.materials = {{"metal", uniform(rng, 0.6, 0.95)}, {"wood", uniform(rng, 0.2, 0.6)}};
  const int plates = 1 + static_cast<int>(rng() % 3);
  const double sector0 = uniform(rng, -kPi, kPi);
  std::vector<Mesh> meshes;
  for (int i = 0; i < plates; ++i) {
    const double az = sector0 + i * kTwoPi / 3.0 + uniform(rng, -0.3, 0.3);
    const double el = uniform(rng, 0.1, 0.45);
    const double r = uniform(rng, 1.0, 2.5);
    const Vec3 c = r * direction_from_angles(az, el);
    Vec3 n = -c.normalized();
    n += Vec3(uniform(rng, -0.15, 0.15), uniform(rng, -0.15, 0.15), uniform(rng, -0.15, 0.15));
    const double size = uniform(rng, 0.5, 1.0);
    meshes.push_back(make_plate(c, n.normalized(), size, size, i == 0 ? 0 : static_cast<int>(rng() % 2)));
  }
  s.target = meshes[0];
  s.static_meshes.assign(meshes.begin() + 1, meshes.end());
  s.params.material_names = {"metal", "wood"};
  s.params.material_scalars = (VecX(2) << s.materials[0].reflection_coefficient,
                               s.materials[1].reflection_coefficient).finished();
  Vec3 pivot = Vec3::Zero();
  for (int v = 0; v < s.target.vertex_count(); ++v) pivot += s.target.vertex(v);
  s.params.pivot = pivot / s.target.vertex_count();
  s.params.rotation = Vec3(uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05), uniform(rng, -0.05, 0.05));
  s.params.translation = Vec3(uniform(rng, -0.02, 0.02), uniform(rng, -0.02, 0.02), uniform(rng, -0.02, 0.02));
  const double lambda = s.wavelength();
  const int rx = 2 + static_cast<int>(rng() % 3);
  for (int i = 0; i < rx; ++i) s.rx_positions.push_back(Vec3(0.01 + 0.5 * lambda * i, 0, 0));
  return s;
}

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(20240601);
  const TargetKind kinds[] = {TargetKind::kProfileExact, TargetKind::kProfileSurrogate, TargetKind::kBeamform,
                              TargetKind::kAiry};
  int passed = 0, rejected = 0;
  double worst = 0.0;
  std::string first_failure;
  for (int k = 0; k < kSmoothScenes;) {
    const Scene s = random_smooth_scene(rng);
    PipelineConfig pipe;
    pipe.radar.bins = 128;
    pipe.max_order = 1 + static_cast<int>(rng() % 2);
    pipe.surrogate.sigma_s = 2.0 / pipe.radar.bandwidth_hz;
    pipe.surrogate.airy_radius = 0.01;
    const TargetKind target = kinds[k % 4];
    SceneParams ref = s.params;
    ref.translation += Vec3(uniform(rng, -1, 1), uniform(rng, -1, 1), uniform(rng, -1, 1)) * 0.25 * s.wavelength();
    ref.material_scalars *= 0.9;
    const Objective obj(s, pipe, target, loss_for(target), simulate_target(s.with_params(ref), pipe, target));
    const VecX theta = obj.initial_theta();
    const auto r = obj.evaluate(theta, true);
    // Smooth scenes only: no bounce near an edge and at least one target reflection.
    if (r.boundary_affected || r.singular || !(r.loss > 0.0) || r.gradient.head(ParamLayout::kRigidCount).norm() == 0.0) {
      ++rejected;
      continue;
    }
    FdOptions fd;
    fd.smooth_tolerance = kSmoothTolerance;
    const GradientReport rep =
        fd_oracle([&](const VecX& t) { return obj.loss(t); }, theta, r.gradient, obj.layout().names(), fd);
    bool ok = rep.unverifiable().empty();
    for (Eigen::Index i = 0; i < rep.analytic.size(); ++i) {
      worst = std::max(worst, rep.rel_err(i));
      ok = ok && rep.rel_err(i) < kSmoothTolerance;
    }
    if (ok) {
      ++passed;
    } else if (first_failure.empty()) {
      first_failure = " first failure: scene " + std::to_string(k) + " (" + to_string(target) + ")";
    }
    ++k;
  }
  const double elapsed = seconds_since(t0);
  return {passed == kSmoothScenes && elapsed < kSmoothBudgetS,
          std::to_string(passed) + "/" + std::to_string(kSmoothScenes) + " scenes within " + fmt(kSmoothTolerance) +
              " relative (max " + fmt(worst) + "), " + std::to_string(rejected) + " non-smooth draws skipped, " +
              fmt(elapsed) + " s (budget " + fmt(kSmoothBudgetS) + " s)" + first_failure};
}

// ---------------------------------------------------------------------------

Outcome boundary_necessity() {
  const SceneFile base = load_scene_file("scenes/occlusion.json");
  std::mt19937_64 rng(77);
  const int iz = ParamLayout::kTranslation + 2;
  const double a = base.scene.aperture_radius;
  int agree_interior = 0, agree_full = 0;
  for (int c = 0; c < kOcclusionConfigs; ++c) {
    Scene s = base.scene;
    // Keep the plate edge's shadow inside the receive disc.
    s.params.translation.z() = uniform(rng, -0.4 * a, 0.4 * a);
    PipelineConfig pipe = base.pipeline;
    pipe.boundary.seed = 1000 + static_cast<std::uint64_t>(c);
    SceneParams ref = s.params;
    ref.translation.z() += (rng() % 2 ? 1.0 : -1.0) * uniform(rng, 0.1 * a, 0.3 * a);
    const TargetKind target = TargetKind::kProfileSurrogate;
    const MatXc obs = simulate_target(s.with_params(ref), pipe, target);
    PipelineConfig interior_pipe = pipe;
    interior_pipe.include_boundary = false;
    const Objective full(s, pipe, target, loss_for(target), obs);
    const Objective interior(s, interior_pipe, target, loss_for(target), obs);
    const VecX theta = full.initial_theta();
    const double h = a / 8.0;
    VecX tp = theta, tm = theta;
    tp[iz] += h;
    tm[iz] -= h;
    const double secant = (full.loss(tp) - full.loss(tm)) / (2.0 * h);
    auto sign = [](double x) { return (x > 0.0) - (x < 0.0); };
    agree_full += sign(full.evaluate(theta, true).gradient[iz]) == sign(secant);
    agree_interior += sign(interior.evaluate(theta, true).gradient[iz]) == sign(secant);
  }
  const double fi = static_cast<double>(agree_interior) / kOcclusionConfigs;
  const double ff = static_cast<double>(agree_full) / kOcclusionConfigs;
  return {fi < kInteriorAgreementMax && ff >= kBoundaryAgreementMin,
          "sign agreement with FD secant on translation.z over " + std::to_string(kOcclusionConfigs) +
              " configurations: interior-only " + fmt(100 * fi) + "% (need < " + fmt(100 * kInteriorAgreementMax) +
              "%), with boundary term " + fmt(100 * ff) + "% (need >= " + fmt(100 * kBoundaryAgreementMin) + "%)"};
}

// ---------------------------------------------------------------------------

template <typename F>
VecXc diff5(const F& f, double h) {
  return (f(-2 * h) - 8.0 * f(-h) + 8.0 * f(h) - f(2 * h)) / (12.0 * h);
}

Outcome surrogate_partials() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(31337);
  RadarConfig radar;
  radar.bins = 64;
  SurrogateConfig sc;
  double worst = 0.0;
  for (int i = 0; i < kRandomTaps; ++i) {
    sc.sigma_s = uniform(rng, 0.5, 3.0) / radar.bandwidth_hz;
    const Tap tap{uniform(rng, 2.0, 60.0) / radar.bandwidth_hz, std::polar(uniform(rng, 0.01, 1.0), uniform(rng, 0.0, kTwoPi))};
    ProfileJacobian j;
    range_profile_surrogate({tap}, radar, sc, &j);
    const double alpha = std::abs(tap.amplitude), phi = std::arg(tap.amplitude);
    auto profile = [&](double tau, double al, double ph) {
      return VecXc(range_profile_surrogate({{tau, std::polar(al, ph)}}, radar, sc).values);
    };
    const VecXc fd_tau = diff5([&](double d) { return profile(tap.delay + d, alpha, phi); }, sc.sigma_s / 100.0);
    const VecXc fd_alpha = diff5([&](double d) { return profile(tap.delay, alpha + d, phi); }, 1e-3 * alpha);
    const VecXc fd_phi = diff5([&](double d) { return profile(tap.delay, alpha, phi + d); }, 1e-3);
    auto rel = [](const VecXc& an, const VecXc& fd) {
      return (an - fd).cwiseAbs().maxCoeff() / an.cwiseAbs().maxCoeff();
    };
    worst = std::max({worst, rel(j.d_delay.col(0), fd_tau), rel(j.d_alpha(0, tap), fd_alpha),
                      rel(j.d_phase(0, tap), fd_phi)});
  }
  const double elapsed = seconds_since(t0);
  return {worst < kTapTolerance && elapsed < kTapBudgetS,
          std::to_string(kRandomTaps) + " random taps, max relative error " + fmt(worst) + " over d/dtau, d/dalpha, "
              "d/dphi (tolerance " + fmt(kTapTolerance) + "), " + fmt(elapsed) + " s (budget " + fmt(kTapBudgetS) + " s)"};
}

// ---------------------------------------------------------------------------

int strict_interior_minima(const std::vector<double>& v) {
  int n = 0;
  for (std::size_t i = 1; i + 1 < v.size(); ++i) n += v[i] < v[i - 1] && v[i] < v[i + 1];
  return n;
}

Outcome sweep_minima() {
  const SceneFile f = load_scene_file("scenes/plate.json");
  PipelineConfig pipe = f.pipeline;
  pipe.surrogate.sigma_s = 2.0 / pipe.radar.bandwidth_hz;
  const Scene& s = f.scene;
  const Objective exact(s, pipe, TargetKind::kProfileExact, loss_for(TargetKind::kProfileExact),
                        simulate_target(s, pipe, TargetKind::kProfileExact));
  const Objective sur(s, pipe, TargetKind::kProfileSurrogate, loss_for(TargetKind::kProfileSurrogate),
                      simulate_target(s, pipe, TargetKind::kProfileSurrogate));
  const int iz = ParamLayout::kTranslation + 2;
  const VecX theta0 = exact.initial_theta();
  const double half = kSweepHalfRangeWavelengths * s.wavelength();
  std::vector<double> le, ls;
  for (int i = 0; i < kSweepSteps; ++i) {
    VecX t = theta0;
    t[iz] += -half + 2.0 * half * i / (kSweepSteps - 1);
    le.push_back(exact.loss(t));
    ls.push_back(sur.loss(t));
  }
  const int me = strict_interior_minima(le), ms = strict_interior_minima(ls);
  return {me >= kExactMinimaMin && ms == kSurrogateMinima,
          "translation.z sweep over +-" + fmt(kSweepHalfRangeWavelengths) + " wavelengths (" +
              std::to_string(kSweepSteps) + " points): exact loss " + std::to_string(me) +
              " strict interior minima (need >= " + std::to_string(kExactMinimaMin) + "), surrogate " +
              std::to_string(ms) + " (need exactly " + std::to_string(kSurrogateMinima) + ")"};
}

// ---------------------------------------------------------------------------

Outcome inverse_recovery() {
  const auto t0 = Clock::now();
  const SceneFile f = load_scene_file("scenes/plate.json");
  const Scene& s = f.scene;
  const double lambda = s.wavelength();
  auto run = [&](TargetKind target) {
    const Objective obj(s, f.pipeline, target, loss_for(target), simulate_target(s, f.pipeline, target));
    OptimizerConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.max_iterations = kFitIterations;
    cfg.tol_rel = 1e-6;
    cfg.active.assign(static_cast<std::size_t>(obj.layout().size()), false);
    for (int i = 0; i < 3; ++i) cfg.active[static_cast<std::size_t>(ParamLayout::kTranslation + i)] = true;
    VecX theta0 = obj.initial_theta();
    theta0[ParamLayout::kTranslation + 2] += kFitOffsetWavelengths * lambda;
    const FitTrace t = fit(obj, theta0, cfg);
    const double err = (t.final_theta().head<3>() - obj.initial_theta().head<3>()).norm();
    return std::make_tuple(t, err);
  };
  const auto [ts, es] = run(TargetKind::kProfileSurrogate);
  const auto [te, ee] = run(TargetKind::kProfileExact);
  const double elapsed = seconds_since(t0);
  const int its = static_cast<int>(ts.iterations.size()) - 1;
  const bool ok = es < lambda / 2 && its <= kFitIterations && ee > lambda && elapsed < kFitBudgetS;
  return {ok, "from a " + fmt(kFitOffsetWavelengths) + "-wavelength offset: surrogate fit " + to_string(ts.status) +
                  " after " + std::to_string(its) + " steps, error " + fmt(es / lambda) +
                  " wavelengths (need < 0.5); exact fit " + to_string(te.status) + ", error " + fmt(ee / lambda) +
                  " wavelengths (need > 1); " + fmt(elapsed) + " s (budget " + fmt(kFitBudgetS) + " s)"};
}

// ---------------------------------------------------------------------------

Outcome array_processing() {
  const double lambda = kSpeedOfLight / 77e9;
  const ArrayGeometry ula = ArrayGeometry::ula(8, lambda / 2, lambda);
  // Elevation cut at azimuth 0 (the array axis), 0.1 degree cells.
  const AngleGrid fine = AngleGrid::uniform(0.0, 0.0, 1, 0.0, kPi / 3, 601);
  std::mt19937_64 rng(606);
  double sq = 0.0;
  int missing = 0;
  for (int t = 0; t < kMusicTrials; ++t) {
    const double e1 = uniform(rng, 10.0, 30.0) * kPi / 180.0;
    const double e2 = e1 + 15.0 * kPi / 180.0;
    const MatXc x = synthetic_snapshots(ula, {{0.0, e1}, {0.0, e2}}, 64, 10.0, 5000 + static_cast<std::uint64_t>(t));
    const auto peaks = music_spectrum(x, ula, 2, fine).peaks(2);
    if (peaks.size() < 2) {
      ++missing;
      sq += 2 * std::pow(15.0 * kPi / 180.0, 2);
      continue;
    }
    double a = fine.elevation[peaks[0].el], b = fine.elevation[peaks[1].el];
    if (a > b) std::swap(a, b);
    sq += (a - e1) * (a - e1) + (b - e2) * (b - e2);
  }
  const double rmse = std::sqrt(sq / (2.0 * kMusicTrials)) * 180.0 / kPi;

  const AngleGrid coarse = AngleGrid::uniform(0.0, 0.0, 1, 0.0, kPi / 3, 61);
  int within = 0;
  for (int t = 0; t < kBeamformTrials; ++t) {
    const double el = uniform(rng, 5.0, 55.0) * kPi / 180.0;
    const MatXc x = synthetic_snapshots(ula, {{0.0, el}}, 64, 20.0, 9000 + static_cast<std::uint64_t>(t));
    const Eigen::Index got = beamform_spectrum(x, ula, coarse).argmax().el;
    Eigen::Index nearest = 0;
    (coarse.elevation.array() - el).abs().minCoeff(&nearest);
    within += std::abs(got - nearest) <= kBeamformCellTolerance;
  }
  return {rmse < kMusicRmseDeg && missing == 0 && within == kBeamformTrials,
          "MUSIC (L = 8, 15 deg apart, 10 dB, 64 snapshots) RMSE " + fmt(rmse) + " deg over " +
              std::to_string(kMusicTrials) + " trials (need < " + fmt(kMusicRmseDeg) + "); beamforming argmax within " +
              std::to_string(kBeamformCellTolerance) + " cell in " + std::to_string(within) + "/" +
              std::to_string(kBeamformTrials) + " single-source trials at 20 dB"};
}

// ---------------------------------------------------------------------------

int profile_peaks(const VecXc& v) {
  const VecX m = v.cwiseAbs();
  const double floor = kPeakFloor * m.maxCoeff();
  int n = 0;
  for (Eigen::Index i = 1; i + 1 < m.size(); ++i) n += m[i] > floor && m[i] > m[i - 1] && m[i] > m[i + 1];
  return n;
}

Outcome range_resolution() {
  RadarConfig radar;
  std::mt19937_64 rng(7);
  int resolved = 0, merged = 0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    const double start = uniform(rng, 20.0, 80.0) / radar.bandwidth_hz;
    const double phase = uniform(rng, 0.0, kTwoPi);
    auto peaks = [&](double sep_bins) {
      const std::vector<Tap> taps{{start, Complex(1.0, 0.0)},
                                  {start + sep_bins / radar.bandwidth_hz, std::polar(1.0, phase)}};
      return profile_peaks(range_profile_exact(taps, radar, nullptr).values);
    };
    resolved += peaks(kResolvedSeparationBins) == 2;
    merged += peaks(kUnresolvedSeparationBins) == 1;
  }
  return {resolved == trials && merged == trials,
          "equal-amplitude tap pairs with random offset and relative phase: " + fmt(kResolvedSeparationBins) +
              "/B apart give two peaks in " + std::to_string(resolved) + "/" + std::to_string(trials) + ", " +
              fmt(kUnresolvedSeparationBins) + "/B apart give one peak in " + std::to_string(merged) + "/" +
              std::to_string(trials)};
}

// ---------------------------------------------------------------------------

Outcome regularizer() {
  const Mesh m = make_icosphere(Vec3::Zero(), 1.0, 2);
  const LaplacianMatrix lap = build_laplacian(m);
  const double lambda_max = Eigen::SelfAdjointEigenSolver<MatX>(MatX(lap.matrix)).eigenvalues().maxCoeff();
  SceneParams p;
  std::mt19937_64 rng(88);
  p.vertex_offsets = Mat3X::Zero(3, m.vertex_count());
  for (int v = 0; v < m.vertex_count(); ++v)
    p.vertex_offsets.col(v) = Vec3(uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01), uniform(rng, -0.01, 0.01));
  const ParamLayout layout = p.layout();
  const Eigen::SparseMatrix<double> embedded = lap.embed(layout);
  OptimizerConfig cfg;
  cfg.reg_weight = 0.5;
  cfg.learning_rate = kStepFraction * 2.0 / (cfg.reg_weight * lambda_max);
  VecX theta = p.pack();
  double prev = lap.energy(theta, layout);
  const double e0 = prev;
  int decreasing = 0;
  for (int it = 0; it < kRegularizerSteps; ++it) {
    theta = *sgd_step(theta, VecX::Zero(theta.size()), &embedded, cfg);
    const double e = lap.energy(theta, layout);
    decreasing += e < prev;
    prev = e;
  }
  return {decreasing == kRegularizerSteps,
          "energy decreased on " + std::to_string(decreasing) + "/" + std::to_string(kRegularizerSteps) +
              " steps at eta = " + fmt(kStepFraction) + " * 2/(lambda_reg lambda_max), lambda_max = " +
              fmt(lambda_max) + "; energy " + fmt(e0) + " -> " + fmt(prev)};
}

// ---------------------------------------------------------------------------

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("rfit_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

/// Files of a run directory except the manifest, which records wall-clock time.
std::map<std::string, std::string> run_outputs(const std::string& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name != "manifest.json") files[name] = read_file(e.path().string());
  }
  return files;
}

Outcome determinism() {
  TempDir tmp;
  if (quiet_cli({"--out-dir", tmp / "obs", "simulate", "scenes/plate.json", "--spectrum", "none"}) != kExitOk)
    return {false, "could not create the fit observation"};
  const std::vector<std::pair<std::string, std::vector<std::string>>> commands{
      {"simulate", {"simulate", "scenes/two_targets.json", "--spectrum", "music"}},
      {"gradcheck", {"--seed", "3", "gradcheck", "scenes/occlusion.json"}},
      {"fit", {"fit", "scenes/plate.json", tmp / "obs/profile_surrogate.csv", "--perturb", "translation.z=0.005",
               "--max-iter", "40"}},
  };
  std::string detail;
  bool ok = true;
  for (const auto& [name, args] : commands) {
    std::vector<std::string> first{"--out-dir", tmp / (name + "_0")};
    first.insert(first.end(), args.begin(), args.end());
    quiet_cli(first);
    const auto reference = run_outputs(tmp / (name + "_0"));
    int identical = 1;
    for (int r = 1; r < kRepetitions; ++r) {
      // Later repetitions replay the first run's manifest.
      const std::string dir = tmp / (name + "_" + std::to_string(r));
      quiet_cli({"--out-dir", dir, "replay", tmp / (name + "_0/manifest.json")});
      identical += run_outputs(dir) == reference && !reference.empty();
    }
    ok = ok && identical == kRepetitions;
    detail += (detail.empty() ? "" : ", ") + name + " " + std::to_string(identical) + "/" +
              std::to_string(kRepetitions) + " identical (" + std::to_string(reference.size()) + " files)";
  }
  return {ok, detail + "; manifest.json excluded (wall-clock field)"};
}

// ---------------------------------------------------------------------------

Outcome performance() {
  TempDir tmp;
  const SceneFile f = load_scene_file("scenes/perf.json");
  auto t0 = Clock::now();
  const int sim = quiet_cli({"--out-dir", tmp / "sim", "simulate", "scenes/perf.json"});
  const double ts = seconds_since(t0);
  t0 = Clock::now();
  const int gc = quiet_cli({"--out-dir", tmp / "gc", "gradcheck", "scenes/perf.json", "--params",
                            "translation.x,translation.y,translation.z,rotation.x,rotation.y,rotation.z,scale"});
  const double tg = seconds_since(t0);
  const bool ok = sim == kExitOk && gc == kExitOk && ts < kSimulateBudgetS && tg < kGradcheckBudgetS;
  return {ok, "simulate of " + std::to_string(f.scene.target.triangle_count()) + "+" +
                  std::to_string(f.scene.static_meshes.empty() ? 0 : f.scene.static_meshes[0].triangle_count()) +
                  " triangles, order " + std::to_string(f.pipeline.max_order) + ", " +
                  std::to_string(f.scene.rx_positions.size()) + " rx: " + fmt(ts) + " s (budget " +
                  fmt(kSimulateBudgetS) + " s, exit " + std::to_string(sim) + "); gradcheck over 7 rigid parameters: " +
                  fmt(tg) + " s (budget " + fmt(kGradcheckBudgetS) + " s, exit " + std::to_string(gc) + ")"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness on smooth scenes", gradient_correctness},
      {"boundary term necessity", boundary_necessity},
      {"surrogate closed-form partials", surrogate_partials},
      {"loss landscape minima", sweep_minima},
      {"inverse recovery", inverse_recovery},
      {"MUSIC and beamforming", array_processing},
      {"range resolution", range_resolution},
      {"regularizer energy", regularizer},
      {"determinism", determinism},
      {"performance", performance},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %2zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
