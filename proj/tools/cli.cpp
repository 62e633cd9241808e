#include "rfit/cli.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "rfit/io.hpp"

#ifndef RFIT_VERSION
#define RFIT_VERSION "0.0.0"
#endif

namespace rfit {

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out_dir = ".";
};

struct SimulateOptions {
  std::string scene;
  int order = -1;
  std::string spectrum = "beamform";
  int sources = 0;
  double surrogate_sigma = 0.0;
  int snapshots = 0;
  double snr_db = std::numeric_limits<double>::quiet_NaN();
};

struct GradcheckOptions {
  std::string scene;
  std::string loss = "surrogate";
  std::string observation;
  std::vector<std::string> params;
  std::vector<std::string> obs_offset;
  bool interior_only = false;
  bool strict = false;
  int edge_samples = 0;
  int order = -1;
  std::vector<double> steps;
  std::string fd_scheme = "central4";
  double boundary_step = 0.0;
  double tolerance = 1e-3;
};

struct SweepOptions {
  std::string scene;
  std::string param;
  std::vector<double> range;
  int steps = 101;
  bool absolute = false;
  int order = -1;
};

struct FitOptions {
  std::string scene;
  std::string observation;
  std::string loss = "surrogate";
  int max_iter = 100;
  double lr = 1e-3;
  double reg = 0.0;
  double tol_rel = 1e-6;
  double tol_abs = 0.0;
  double rx_fraction = 1.0;
  double bin_fraction = 1.0;
  std::vector<std::string> params;
  std::vector<std::string> perturb;
  std::string resume;
  int checkpoint_every = 0;
  int order = -1;
};

// Collects written files for the manifest.
class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {}
  std::string path(const std::string& name) {
    names_.push_back(name);
    return (fs::path(dir_) / name).string();
  }
  const std::vector<std::string>& names() const { return names_; }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::vector<std::string> names_;
};

std::uint64_t effective_seed(std::uint64_t scene_seed, std::uint64_t global) {
  return global == 0 ? scene_seed : mix_seed(scene_seed, global);
}

SceneFile load_scene(const std::string& path, const GlobalOptions& g, int order) {
  SceneFile f = load_scene_file(path);
  if (order >= 0) {
    if (order > 2) throw InputError("--order must be 0, 1 or 2");
    f.pipeline.max_order = order;
    f.pipeline.min_order = std::min(f.pipeline.min_order, order);
  }
  f.pipeline.surrogate.seed = effective_seed(f.pipeline.surrogate.seed, g.seed);
  f.pipeline.boundary.seed = effective_seed(f.pipeline.boundary.seed, g.seed);
  f.spectrum.snapshots.seed = effective_seed(f.spectrum.snapshots.seed, g.seed);
  return f;
}

LossConfig loss_for(TargetKind target) {
  LossConfig cfg;
  cfg.domain = default_domain(target);
  cfg.pool_columns = !is_profile(target);
  cfg.normalize = true;
  return cfg;
}

// "name=value" pairs applied to a parameter vector.
VecX apply_assignments(const ParamLayout& layout, VecX theta, const std::vector<std::string>& items,
                       bool relative) {
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InputError("expected name=value, got '" + item + "'");
    const int idx = layout.index(item.substr(0, eq));
    char* end = nullptr;
    const std::string num = item.substr(eq + 1);
    const double v = std::strtod(num.c_str(), &end);
    if (num.empty() || *end != '\0') throw InputError("'" + num + "' is not a number");
    theta[idx] = relative ? theta[idx] + v : v;
  }
  return theta;
}

std::vector<int> param_indices(const ParamLayout& layout, const std::vector<std::string>& names) {
  std::vector<int> out;
  for (const auto& n : names) out.push_back(layout.index(n));
  return out;
}

MatXc read_observation(const std::string& path, TargetKind target, const PipelineConfig& pipe) {
  const bool binary = fs::path(path).extension() == ".rfgrid";
  if (is_profile(target)) {
    if (!binary) return read_profile_csv(path);
    const BinaryGrid g = read_grid_binary(path);
    if (g.dims.size() != 2 || !g.complex_values) throw InputError(path + ": expected a complex bins x rx grid");
    MatXc out(static_cast<Eigen::Index>(g.dims[0]), static_cast<Eigen::Index>(g.dims[1]));
    std::size_t k = 0;
    for (Eigen::Index b = 0; b < out.rows(); ++b)
      for (Eigen::Index r = 0; r < out.cols(); ++r, k += 2) out(b, r) = {g.data[k], g.data[k + 1]};
    return out;
  }
  if (!binary) return read_spectrum_csv(path, pipe.grid).cast<Complex>();
  const BinaryGrid g = read_grid_binary(path);
  if (g.dims.size() != 2 || g.complex_values) throw InputError(path + ": expected a real azimuth x elevation grid");
  MatXc out(static_cast<Eigen::Index>(g.dims[0]), static_cast<Eigen::Index>(g.dims[1]));
  std::size_t k = 0;
  for (Eigen::Index a = 0; a < out.rows(); ++a)
    for (Eigen::Index e = 0; e < out.cols(); ++e) out(a, e) = g.data[k++];
  return out;
}

void finish_manifest(const std::string& command, const std::string& scene, const std::vector<std::string>& args,
                     const GlobalOptions& g, Outputs& outputs, std::chrono::steady_clock::time_point start) {
  RunManifest m;
  m.command = command;
  m.scene_path = scene;
  m.args = args;
  m.working_dir = fs::current_path().string();
  m.seed = g.seed;
  m.version = RFIT_VERSION;
  m.outputs = outputs.names();
  m.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_manifest((fs::path(outputs.dir()) / "manifest.json").string(), m);
}

// ---------------------------------------------------------------------------

int cmd_simulate(const SimulateOptions& o, const GlobalOptions& g, Outputs& out) {
  SceneFile f = load_scene(o.scene, g, o.order);
  PipelineConfig& pipe = f.pipeline;
  if (o.surrogate_sigma > 0.0) pipe.surrogate.sigma_s = o.surrogate_sigma;
  if (o.sources > 0) f.spectrum.sources = o.sources;
  if (o.snapshots > 0) f.spectrum.snapshots.snapshots = o.snapshots;
  if (!std::isnan(o.snr_db)) f.spectrum.snapshots.snr_db = o.snr_db;
  pipe.surrogate.validate();
  const Scene& scene = f.scene;

  CirSample cir = trace_paths(scene, pipe.max_order);
  std::erase_if(cir.paths, [&](const PropagationPath& p) { return p.order < pipe.min_order; });
  write_cir_csv(out.path("cir.csv"), cir);

  const VecX delays = pipe.radar.bin_delays();
  const MatXc exact = simulate_target(scene, pipe, TargetKind::kProfileExact);
  write_profile_csv(out.path("profile_exact.csv"), exact, delays, Provenance::kExact);
  write_grid_binary(out.path("profile_exact.rfgrid"), grid_from_profiles(exact, delays));
  const MatXc surrogate = simulate_target(scene, pipe, TargetKind::kProfileSurrogate);
  write_profile_csv(out.path("profile_surrogate.csv"), surrogate, delays, Provenance::kSurrogate);
  write_grid_binary(out.path("profile_surrogate.rfgrid"), grid_from_profiles(surrogate, delays));

  std::cout << "paths: " << cir.paths.size() << " over " << cir.rx_count << " rx\n";
  if (o.spectrum != "none") {
    SpatialSpectrum spec;
    spec.grid = pipe.grid;
    spec.method = spectrum_method_from_string(o.spectrum);
    if (spec.method == SpectrumMethod::kBeamform) {
      spec.power = simulate_target(scene, pipe, TargetKind::kBeamform).real();
    } else if (spec.method == SpectrumMethod::kAiry) {
      spec.power = simulate_target(scene, pipe, TargetKind::kAiry).real();
    } else {
      // Direct tx -> rx coupling is range-gated out before subspace estimation.
      CirSample echoes = cir;
      std::erase_if(echoes.paths, [](const PropagationPath& p) { return p.order == 0; });
      const MatXc x = snapshots_from_paths(echoes, f.spectrum.snapshots);
      spec = music_spectrum(x, ArrayGeometry::from_positions(scene.rx_positions, scene.wavelength()),
                            f.spectrum.sources, pipe.grid);
    }
    const std::string stem = "spectrum_" + to_string(spec.method);
    write_spectrum_csv(out.path(stem + ".csv"), spec);
    write_grid_binary(out.path(stem + ".rfgrid"), grid_from_spectrum(spec));
    for (const auto& pk : spec.peaks(static_cast<std::size_t>(f.spectrum.sources))) {
      std::cout << "peak: azimuth " << format_double(spec.grid.azimuth[pk.az]) << " rad, elevation "
                << format_double(spec.grid.elevation[pk.el]) << " rad\n";
    }
  }
  return kExitOk;
}

int cmd_gradcheck(const GradcheckOptions& o, const GlobalOptions& g, Outputs& out) {
  SceneFile f = load_scene(o.scene, g, o.order);
  if (o.edge_samples > 0) f.pipeline.boundary.edge_samples = o.edge_samples;
  f.pipeline.boundary.validate();
  const TargetKind target = target_kind_from_string(o.loss);
  const Scene& scene = f.scene;
  const ParamLayout layout = scene.params.layout();
  const VecX theta = scene.params.pack();

  MatXc observation;
  if (!o.observation.empty()) {
    observation = read_observation(o.observation, target, f.pipeline);
  } else {
    // Reference taken from the scene moved by a small offset so the loss has
    // a nonzero slope at theta.
    std::vector<std::string> offset = o.obs_offset;
    if (offset.empty()) offset.push_back("translation.z=" + format_double(0.25 * scene.wavelength()));
    const SceneParams ref = scene.params.unpack(apply_assignments(layout, theta, offset, true));
    observation = simulate_target(scene.with_params(ref), f.pipeline, target);
  }
  PipelineConfig pipe = f.pipeline;
  pipe.include_boundary = !o.interior_only;
  const Objective objective(scene, pipe, target, loss_for(target), observation);

  const Objective::Result r = objective.evaluate(theta, true);
  FdOptions fd;
  fd.indices = param_indices(layout, o.params);
  fd.boundary_flags = objective.boundary_flags(r);
  fd.smooth_tolerance = o.tolerance;
  if (!o.steps.empty()) fd.steps = o.steps;
  fd.scheme = fd_scheme_from_string(o.fd_scheme);
  fd.boundary_step = o.boundary_step > 0.0 ? o.boundary_step : scene.aperture_radius / 8.0;
  const GradientReport report =
      fd_oracle([&](const VecX& t) { return objective.loss(t); }, theta, r.gradient, layout.names(), fd);
  write_gradient_report_csv(out.path("gradcheck.csv"), report);

  int failed = 0;
  for (Eigen::Index i = 0; i < report.analytic.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    if (!report.checked[k] || !report.verifiable[k]) continue;
    if (!report.passes(i)) {
      ++failed;
      std::cout << "mismatch: " << report.names[k] << " analytic " << format_double(report.analytic[i]) << " fd "
                << format_double(report.fd[i]) << (report.boundary_flag[k] ? " (boundary)" : "") << "\n";
    }
  }
  const auto unverifiable = report.unverifiable();
  for (int i : unverifiable) std::cout << "unverifiable: " << layout.name(i) << "\n";
  std::cout << "paths: " << r.path_count << ", loss " << format_double(r.loss) << ", "
            << (r.boundary_affected ? "boundary-affected" : "smooth") << ", " << failed << " mismatches\n";
  if (failed > 0) return kExitCheckFailed;
  if (o.strict && !unverifiable.empty()) return kExitCheckFailed;
  return kExitOk;
}

int cmd_sweep(const SweepOptions& o, const GlobalOptions& g, Outputs& out) {
  SceneFile f = load_scene(o.scene, g, o.order);
  const Scene& scene = f.scene;
  const ParamLayout layout = scene.params.layout();
  const int idx = layout.index(o.param);
  if (o.range.size() != 2) throw InputError("--range needs two values lo,hi");
  if (o.steps < 1) throw InputError("--steps must be at least 1");
  if (o.range[0] == o.range[1]) throw InputError("--range endpoints are equal");
  const VecX theta0 = scene.params.pack();
  const double base = o.absolute ? 0.0 : theta0[idx];

  const Objective exact(scene, f.pipeline, TargetKind::kProfileExact, loss_for(TargetKind::kProfileExact),
                        simulate_target(scene, f.pipeline, TargetKind::kProfileExact));
  const Objective surrogate(scene, f.pipeline, TargetKind::kProfileSurrogate,
                            loss_for(TargetKind::kProfileSurrogate),
                            simulate_target(scene, f.pipeline, TargetKind::kProfileSurrogate));
  std::vector<SweepRow> rows(static_cast<std::size_t>(o.steps));
  for (int s = 0; s < o.steps; ++s) {
    const double t = o.steps == 1 ? 0.0 : static_cast<double>(s) / (o.steps - 1);
    VecX theta = theta0;
    theta[idx] = base + o.range[0] + t * (o.range[1] - o.range[0]);
    SweepRow& row = rows[static_cast<std::size_t>(s)];
    row.theta = theta[idx];
    row.loss_exact = exact.loss(theta);
    row.loss_surrogate = surrogate.loss(theta);
  }
  write_sweep_csv(out.path("sweep.csv"), o.param, rows);
  std::cout << "evaluated " << rows.size() << " points of " << o.param << "\n";
  return kExitOk;
}

int cmd_fit(const FitOptions& o, const GlobalOptions& g, Outputs& out) {
  SceneFile f = load_scene(o.scene, g, o.order);
  const TargetKind target = target_kind_from_string(o.loss);
  const Scene& scene = f.scene;
  const ParamLayout layout = scene.params.layout();
  const MatXc observation = read_observation(o.observation, target, f.pipeline);
  const Objective objective(scene, f.pipeline, target, loss_for(target), observation);

  OptimizerConfig cfg;
  cfg.learning_rate = o.lr;
  cfg.reg_weight = o.reg;
  cfg.max_iterations = o.max_iter;
  cfg.tol_rel = o.tol_rel;
  cfg.tol_abs = o.tol_abs;
  cfg.rx_fraction = o.rx_fraction;
  cfg.bin_fraction = o.bin_fraction;
  cfg.seed = effective_seed(0, g.seed);
  if (!o.params.empty()) {
    cfg.active.assign(static_cast<std::size_t>(layout.size()), false);
    for (int i : param_indices(layout, o.params)) cfg.active[static_cast<std::size_t>(i)] = true;
  }
  const VecX theta0 = apply_assignments(layout, scene.params.pack(), o.perturb, true);

  std::optional<LaplacianMatrix> lap;
  if (o.reg > 0.0 && layout.has_offsets()) lap = build_laplacian(scene.target);

  std::optional<FitCheckpoint> resume;
  if (!o.resume.empty()) {
    resume = read_checkpoint(o.resume);
    if (resume->trace.names != layout.names()) throw InputError(o.resume + ": parameter names do not match the scene");
  }
  const std::string checkpoint_path = out.path("checkpoint.json");
  VecX last_next = theta0;
  const FitCallback callback = [&](const FitTrace& trace, const std::optional<VecX>& next) {
    if (next) last_next = *next;
    const int n = static_cast<int>(trace.iterations.size());
    if (o.checkpoint_every > 0 && next && n % o.checkpoint_every == 0) write_checkpoint(checkpoint_path, trace, *next);
  };
  const FitTrace trace = fit(objective, theta0, cfg, lap ? &*lap : nullptr, callback, resume ? &*resume : nullptr);

  write_fit_trace_csv(out.path("trace.csv"), trace);
  const bool can_continue = trace.status == FitStatus::kMaxIterations || trace.iterations.empty();
  write_checkpoint(checkpoint_path, trace, can_continue ? last_next : trace.final_theta());
  if (!trace.iterations.empty()) {
    write_scene_file(f, scene.params.unpack(trace.final_theta()), out.path("fitted_scene.json"));
  }
  std::cout << "status: " << to_string(trace.status) << " after " << trace.iterations.size() << " evaluations";
  if (!trace.iterations.empty()) std::cout << ", loss " << format_double(trace.iterations.back().loss);
  if (!trace.message.empty()) std::cout << " (" << trace.message << ")";
  std::cout << "\n";
  return trace.status == FitStatus::kConverged ? kExitOk : kExitCheckFailed;
}

std::vector<std::string> without_out_dir(const std::vector<std::string>& args) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out-dir") {
      ++i;
      continue;
    }
    if (args[i].rfind("--out-dir=", 0) == 0) continue;
    out.push_back(args[i]);
  }
  return out;
}

int run(const std::vector<std::string>& args) {
  CLI::App app{"rfit: differentiable radar ray tracing and inverse fitting"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", RFIT_VERSION);
  GlobalOptions g;
  app.add_option("--seed", g.seed, "Seed mixed into every random stream (0 keeps the scene seeds)");
  app.add_option("--threads", g.threads, "Worker threads (0: RFIT_THREADS or hardware)");
  app.add_option("--out-dir", g.out_dir, "Directory for output files");

  SimulateOptions so;
  auto* sim = app.add_subcommand("simulate", "Trace paths and write CIR, range profiles and a spatial spectrum");
  sim->add_option("scene", so.scene, "Scene file")->required();
  sim->add_option("--order", so.order, "Maximum reflection order (0-2)");
  sim->add_option("--spectrum", so.spectrum, "Spatial spectrum")
      ->check(CLI::IsMember({"none", "beamform", "music", "airy"}));
  sim->add_option("--sources", so.sources, "Source count for MUSIC");
  sim->add_option("--surrogate-sigma", so.surrogate_sigma, "Surrogate pulse width (s)");
  sim->add_option("--snapshots", so.snapshots, "Array snapshots for MUSIC");
  sim->add_option("--snr-db", so.snr_db, "Snapshot SNR (dB)");

  GradcheckOptions go;
  auto* gc = app.add_subcommand("gradcheck", "Compare the analytic gradient with finite differences");
  gc->add_option("scene", go.scene, "Scene file")->required();
  gc->add_option("--loss", go.loss, "Objective")->check(CLI::IsMember({"exact", "surrogate", "beamform", "airy", "music"}));
  gc->add_option("--observation", go.observation, "Observation file (default: scene shifted by --obs-offset)");
  gc->add_option("--obs-offset", go.obs_offset, "name=delta offsets for the synthesized observation")->delimiter(',');
  gc->add_option("--params", go.params, "Parameters to check (comma-separated names)")->delimiter(',');
  gc->add_flag("--interior-only", go.interior_only, "Omit the visibility boundary term");
  gc->add_flag("--strict", go.strict, "Fail when a parameter is unverifiable");
  gc->add_option("--edge-samples", go.edge_samples, "Boundary samples per edge");
  gc->add_option("--order", go.order, "Maximum reflection order (0-2)");
  gc->add_option("--fd-steps", go.steps, "Finite-difference steps")->delimiter(',');
  gc->add_option("--fd-scheme", go.fd_scheme, "Stencil for smooth parameters")
      ->check(CLI::IsMember({"central", "central4", "forward"}));
  gc->add_option("--boundary-step", go.boundary_step, "Secant step for boundary-affected parameters");
  gc->add_option("--tolerance", go.tolerance, "Relative tolerance for smooth parameters");

  SweepOptions wo;
  auto* sw = app.add_subcommand("sweep", "Evaluate exact and surrogate losses along one parameter");
  sw->add_option("scene", wo.scene, "Scene file")->required();
  sw->add_option("--param", wo.param, "Parameter name")->required();
  sw->add_option("--range", wo.range, "lo,hi offsets from the scene value")->delimiter(',')->required();
  sw->add_option("--steps", wo.steps, "Grid points");
  sw->add_flag("--absolute", wo.absolute, "Treat --range as absolute values");
  sw->add_option("--order", wo.order, "Maximum reflection order (0-2)");

  FitOptions fo;
  auto* ft = app.add_subcommand("fit", "Recover scene parameters from an observation");
  ft->add_option("scene", fo.scene, "Scene file")->required();
  ft->add_option("observation", fo.observation, "Observation file (profile or spectrum)")->required();
  ft->add_option("--loss", fo.loss, "Objective")->check(CLI::IsMember({"exact", "surrogate", "beamform", "airy", "music"}));
  ft->add_option("--max-iter", fo.max_iter, "Iteration budget");
  ft->add_option("--lr", fo.lr, "Learning rate");
  ft->add_option("--reg", fo.reg, "Laplacian regularization weight");
  ft->add_option("--tol-rel", fo.tol_rel, "Stop when loss <= tol-rel * initial loss");
  ft->add_option("--tol-abs", fo.tol_abs, "Stop when loss <= tol-abs");
  ft->add_option("--rx-fraction", fo.rx_fraction, "Minibatch share of receive elements");
  ft->add_option("--bin-fraction", fo.bin_fraction, "Minibatch share of range-bin blocks");
  ft->add_option("--params", fo.params, "Parameters to optimize (default all)")->delimiter(',');
  ft->add_option("--perturb", fo.perturb, "name=delta offsets applied to the initial parameters")->delimiter(',');
  ft->add_option("--resume", fo.resume, "Checkpoint to continue from");
  ft->add_option("--checkpoint-every", fo.checkpoint_every, "Write a checkpoint every N iterations");
  ft->add_option("--order", fo.order, "Maximum reflection order (0-2)");

  std::string manifest_path;
  auto* rp = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  rp->add_option("manifest", manifest_path, "Manifest file")->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInputError;
  }

  if (rp->parsed()) {
    const RunManifest m = read_manifest(manifest_path);
    std::vector<std::string> replay = without_out_dir(m.args);
    for (auto& a : replay) {
      const fs::path p(a);
      if (!a.empty() && a[0] != '-' && p.is_relative() && fs::exists(fs::path(m.working_dir) / p))
        a = (fs::path(m.working_dir) / p).string();
    }
    if (app.count("--out-dir") > 0) {
      replay.push_back("--out-dir");
      replay.push_back(g.out_dir);
    } else {
      replay.push_back("--out-dir");
      replay.push_back(fs::path(manifest_path).parent_path().empty() ? "." : fs::path(manifest_path).parent_path().string());
    }
    return run(replay);
  }

  set_thread_count(g.threads);
  fs::create_directories(g.out_dir);
  Outputs outputs(g.out_dir);
  const auto start = std::chrono::steady_clock::now();
  int code = kExitOk;
  std::string command, scene;
  if (sim->parsed()) {
    command = "simulate";
    scene = so.scene;
    code = cmd_simulate(so, g, outputs);
  } else if (gc->parsed()) {
    command = "gradcheck";
    scene = go.scene;
    code = cmd_gradcheck(go, g, outputs);
  } else if (sw->parsed()) {
    command = "sweep";
    scene = wo.scene;
    code = cmd_sweep(wo, g, outputs);
  } else {
    command = "fit";
    scene = fo.scene;
    code = cmd_fit(fo, g, outputs);
  }
  finish_manifest(command, scene, args, g, outputs, start);
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  try {
    return run(args);
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInputError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitCheckFailed;
  }
}

}  // namespace rfit
