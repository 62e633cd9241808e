#include "rfit/radar.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace rfit {

std::string to_string(Window w) { return w == Window::kHamming ? "hamming" : "rect"; }

Window window_from_string(const std::string& name) {
  if (name == "hamming") return Window::kHamming;
  if (name == "rect" || name == "rectangular") return Window::kRect;
  throw InputError("unknown window '" + name + "' (expected hamming or rect)");
}

void RadarConfig::validate() const {
  if (!(bandwidth_hz > 0.0) || !std::isfinite(bandwidth_hz))
    throw InputError("radar.bandwidth must be positive");
  if (!(chirp_duration_s > 0.0) || !std::isfinite(chirp_duration_s))
    throw InputError("radar.chirp_duration must be positive");
  if (samples < 2) throw InputError("radar.samples must be at least 2");
  if (!(carrier_hz > bandwidth_hz)) throw InputError("radar.f0 must exceed radar.bandwidth");
  if (bins < 1 || bins > samples)
    throw InputError("radar.bins must be in [1, samples]");
}

VecX RadarConfig::bin_delays() const {
  VecX d(bins);
  for (int l = 0; l < bins; ++l) d[l] = bin_delay(l);
  return d;
}

VecXc ProfileJacobian::d_alpha(Eigen::Index tap, const Tap& t) const {
  const double a = std::abs(t.amplitude);
  const Complex unit = a > 0.0 ? t.amplitude / a : Complex(1.0, 0.0);
  return d_amplitude.col(tap) * unit;
}

VecXc ProfileJacobian::d_phase(Eigen::Index tap, const Tap& t) const {
  return d_amplitude.col(tap) * (Complex(0.0, 1.0) * t.amplitude);
}

void SurrogateConfig::validate() const {
  if (!(sigma_s > 0.0) || !std::isfinite(sigma_s)) throw InputError("surrogate.sigma must be positive");
  if (!(airy_radius >= 0.0)) throw InputError("surrogate.airy_radius must be non-negative");
  if (!std::isfinite(field_scale)) throw InputError("surrogate.e0 must be finite");
}

VecX window_coefficients(Window window, int n) {
  VecX w = VecX::Ones(n);
  if (window == Window::kHamming && n > 1) {
    for (int i = 0; i < n; ++i) w[i] = 0.54 - 0.46 * std::cos(kTwoPi * i / (n - 1));
  }
  return w;
}

namespace {

void check_taps(const std::vector<Tap>& taps, const RadarConfig& config) {
  for (const Tap& t : taps) {
    if (!std::isfinite(t.delay) || !std::isfinite(t.amplitude.real()) ||
        !std::isfinite(t.amplitude.imag()))
      throw InputError("non-finite CIR tap");
    if (t.delay < 0.0) throw InputError("negative tap delay");
    if (t.delay >= config.chirp_duration_s) {
      std::ostringstream os;
      os << "tap delay " << t.delay << " s is outside the unambiguous range (chirp duration "
         << config.chirp_duration_s << " s)";
      throw InputError(os.str());
    }
  }
}

// Chirp phase terms that do not depend on the sample index.
double chirp_phase(double tau, const RadarConfig& c) {
  return kTwoPi * (c.carrier_hz * tau - c.bandwidth_hz / (2.0 * c.chirp_duration_s) * tau * tau);
}

double chirp_phase_derivative(double tau, const RadarConfig& c) {
  return kTwoPi * (c.carrier_hz - c.bandwidth_hz / c.chirp_duration_s * tau);
}

// bins x N matrix with entries w[n] exp(-j 2 pi l n / N).
const MatXc& windowed_dft(const RadarConfig& c) {
  thread_local std::map<std::tuple<int, int, int>, MatXc> cache;
  const auto key = std::make_tuple(c.samples, c.bins, static_cast<int>(c.window));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  const VecX w = window_coefficients(c.window, c.samples);
  MatXc f(c.bins, c.samples);
  for (int l = 0; l < c.bins; ++l) {
    for (int n = 0; n < c.samples; ++n) {
      // Reduce l*n mod N before scaling for an exact-ish argument.
      const long m = (static_cast<long>(l) * n) % c.samples;
      f(l, n) = w[n] * std::polar(1.0, -kTwoPi * static_cast<double>(m) / c.samples);
    }
  }
  return cache.emplace(key, std::move(f)).first->second;
}

}  // namespace

VecXc if_signal(const std::vector<Tap>& taps, const RadarConfig& config) {
  config.validate();
  if (taps.empty()) throw InputError("if_signal needs at least one tap");
  check_taps(taps, config);
  VecXc s = VecXc::Zero(config.samples);
  const double slope = config.slope();
  for (const Tap& t : taps) {
    const double base = chirp_phase(t.delay, config);
    for (int n = 0; n < config.samples; ++n) {
      const double tn = n * config.chirp_duration_s / config.samples;
      s[n] += t.amplitude * std::polar(1.0, kTwoPi * slope * t.delay * tn + base);
    }
  }
  return s;
}

RangeProfile range_profile_exact(const VecXc& signal, const RadarConfig& config) {
  config.validate();
  if (signal.size() != config.samples)
    throw InputError("IF signal length does not match radar.samples");
  RangeProfile r;
  r.values = windowed_dft(config) * signal;
  r.delays = config.bin_delays();
  r.provenance = Provenance::kExact;
  return r;
}

RangeProfile range_profile_exact(const std::vector<Tap>& taps, const RadarConfig& config,
                                 ProfileJacobian* jacobian) {
  config.validate();
  check_taps(taps, config);
  const MatXc& f = windowed_dft(config);
  const int n_taps = static_cast<int>(taps.size());
  RangeProfile r;
  r.values = VecXc::Zero(config.bins);
  r.delays = config.bin_delays();
  r.provenance = Provenance::kExact;
  if (jacobian) {
    jacobian->d_delay = MatXc::Zero(config.bins, n_taps);
    jacobian->d_amplitude = MatXc::Zero(config.bins, n_taps);
  }
  const double n_inv = 1.0 / config.samples;
  VecXc e(config.samples), de(config.samples);
  for (int i = 0; i < n_taps; ++i) {
    const Tap& t = taps[static_cast<std::size_t>(i)];
    const double beat = config.bandwidth_hz * t.delay;  // cycles per chirp
    const Complex carrier = std::polar(1.0, chirp_phase(t.delay, config));
    const double dpsi = chirp_phase_derivative(t.delay, config);
    for (int n = 0; n < config.samples; ++n) {
      e[n] = carrier * std::polar(1.0, kTwoPi * beat * n * n_inv);
      de[n] = e[n] * Complex(0.0, dpsi + kTwoPi * config.bandwidth_hz * n * n_inv);
    }
    const VecXc unit = f * e;
    r.values += unit * t.amplitude;
    if (jacobian) {
      jacobian->d_amplitude.col(i) = unit;
      jacobian->d_delay.col(i) = (f * de) * t.amplitude;
    }
  }
  return r;
}

VecX surrogate_kernel(double delay, const RadarConfig& config, double sigma) {
  VecX e(config.bins);
  for (int k = 0; k < config.bins; ++k) {
    const double d = delay - config.bin_delay(k);
    e[k] = -d * d / (2.0 * sigma * sigma);
  }
  const double m = e.maxCoeff();
  VecX g = (e.array() - m).exp();
  return g / g.sum();
}

VecX surrogate_kernel_derivative(double delay, const RadarConfig& config, double sigma) {
  const VecX g = surrogate_kernel(delay, config, sigma);
  const VecX tau = config.bin_delays();
  const double mean = g.dot(tau);
  return (g.array() * (tau.array() - mean)).matrix() / (sigma * sigma);
}

RangeProfile range_profile_surrogate(const std::vector<Tap>& taps, const RadarConfig& config,
                                     const SurrogateConfig& surrogate, ProfileJacobian* jacobian) {
  config.validate();
  surrogate.validate();
  check_taps(taps, config);
  if (surrogate.sigma_s < config.bin_spacing() / 10.0) {
    log::warn("surrogate sigma is below a tenth of the bin spacing; the kernel degenerates to spikes");
  }
  const int n_taps = static_cast<int>(taps.size());
  RangeProfile r;
  r.values = VecXc::Zero(config.bins);
  r.delays = config.bin_delays();
  r.provenance = Provenance::kSurrogate;
  if (jacobian) {
    jacobian->d_delay = MatXc::Zero(config.bins, n_taps);
    jacobian->d_amplitude = MatXc::Zero(config.bins, n_taps);
  }
  const double s2 = surrogate.sigma_s * surrogate.sigma_s;
  for (int i = 0; i < n_taps; ++i) {
    const Tap& t = taps[static_cast<std::size_t>(i)];
    const VecX g = surrogate_kernel(t.delay, config, surrogate.sigma_s);
    r.values += g.cast<Complex>() * t.amplitude;
    if (jacobian) {
      const double mean = g.dot(r.delays);
      const VecX dg = (g.array() * (r.delays.array() - mean)).matrix() / s2;
      jacobian->d_amplitude.col(i) = g.cast<Complex>();
      jacobian->d_delay.col(i) = dg.cast<Complex>() * t.amplitude;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

void ArrayGeometry::validate() const {
  if (size() < 1) throw InputError("array needs at least one element");
  if (!(wavelength > 0.0)) throw InputError("array wavelength must be positive");
  for (int i = 0; i < size(); ++i) {
    for (int j = i + 1; j < size(); ++j) {
      if ((positions.col(i) - positions.col(j)).norm() < 1e-12)
        throw InputError("array element positions must be distinct");
    }
  }
}

double ArrayGeometry::half_aperture() const {
  double best = 0.0;
  for (int i = 0; i < size(); ++i)
    for (int j = i + 1; j < size(); ++j)
      best = std::max(best, (positions.col(i) - positions.col(j)).norm());
  return 0.5 * best;
}

ArrayGeometry ArrayGeometry::from_positions(const std::vector<Vec3>& rx, double wavelength) {
  ArrayGeometry a;
  a.wavelength = wavelength;
  a.positions.resize(2, static_cast<Eigen::Index>(rx.size()));
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : rx) centroid += p;
  if (!rx.empty()) centroid /= static_cast<double>(rx.size());
  for (std::size_t i = 0; i < rx.size(); ++i)
    a.positions.col(static_cast<Eigen::Index>(i)) = (rx[i] - centroid).head<2>();
  return a;
}

ArrayGeometry ArrayGeometry::ula(int count, double spacing, double wavelength) {
  ArrayGeometry a;
  a.wavelength = wavelength;
  a.positions = Eigen::Matrix2Xd::Zero(2, count);
  for (int i = 0; i < count; ++i) a.positions(0, i) = (i - 0.5 * (count - 1)) * spacing;
  return a;
}

Vec3 direction_from_angles(double azimuth, double elevation) {
  return Vec3(std::sin(elevation) * std::cos(azimuth), std::sin(elevation) * std::sin(azimuth),
              std::cos(elevation));
}

AngleGrid AngleGrid::uniform(double az_min, double az_max, int az_count, double el_min,
                             double el_max, int el_count) {
  if (az_count < 1 || el_count < 1) throw InputError("angle grid needs at least one cell per axis");
  AngleGrid g;
  g.azimuth = az_count == 1 ? VecX(VecX::Constant(1, az_min))
                            : VecX(VecX::LinSpaced(az_count, az_min, az_max));
  g.elevation = el_count == 1 ? VecX(VecX::Constant(1, el_min))
                              : VecX(VecX::LinSpaced(el_count, el_min, el_max));
  g.validate();
  return g;
}

void AngleGrid::validate() const {
  if (azimuth.size() < 1 || elevation.size() < 1) throw InputError("empty angle grid");
  for (Eigen::Index i = 1; i < azimuth.size(); ++i)
    if (!(azimuth[i] > azimuth[i - 1])) throw InputError("azimuth grid must be increasing");
  for (Eigen::Index i = 1; i < elevation.size(); ++i)
    if (!(elevation[i] > elevation[i - 1])) throw InputError("elevation grid must be increasing");
  const double tol = 1e-12;
  if (azimuth.minCoeff() < -kPi - tol || azimuth.maxCoeff() > kPi + tol)
    throw InputError("azimuth must lie in [-pi, pi]");
  if (elevation.minCoeff() < -tol || elevation.maxCoeff() > kPi / 2 + tol)
    throw InputError("elevation must lie in [0, pi/2]");
}

std::string to_string(SpectrumMethod m) {
  switch (m) {
    case SpectrumMethod::kBeamform: return "beamform";
    case SpectrumMethod::kMusic: return "music";
    case SpectrumMethod::kAiry: return "airy";
  }
  return "?";
}

SpectrumMethod spectrum_method_from_string(const std::string& name) {
  if (name == "beamform") return SpectrumMethod::kBeamform;
  if (name == "music") return SpectrumMethod::kMusic;
  if (name == "airy" || name == "airy_surrogate") return SpectrumMethod::kAiry;
  throw InputError("unknown spectrum method '" + name + "' (expected beamform, music or airy)");
}

SpectrumPeak SpatialSpectrum::argmax() const {
  SpectrumPeak best;
  best.value = -1.0;
  // Column-major scan with a strict comparison keeps the first maximum.
  for (Eigen::Index e = 0; e < power.cols(); ++e) {
    for (Eigen::Index a = 0; a < power.rows(); ++a) {
      if (power(a, e) > best.value) best = {a, e, power(a, e)};
    }
  }
  return best;
}

std::vector<SpectrumPeak> SpatialSpectrum::peaks(std::size_t max_count) const {
  std::vector<SpectrumPeak> out;
  const Eigen::Index na = power.rows(), ne = power.cols();
  for (Eigen::Index e = 0; e < ne; ++e) {
    for (Eigen::Index a = 0; a < na; ++a) {
      const double v = power(a, e);
      bool is_peak = true;
      for (int da = -1; da <= 1 && is_peak; ++da) {
        for (int de = -1; de <= 1; ++de) {
          if (da == 0 && de == 0) continue;
          const Eigen::Index aa = a + da, ee = e + de;
          if (aa < 0 || aa >= na || ee < 0 || ee >= ne) continue;
          if (!(v > power(aa, ee))) {
            is_peak = false;
            break;
          }
        }
      }
      if (is_peak) out.push_back({a, e, v});
    }
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SpectrumPeak& x, const SpectrumPeak& y) { return x.value > y.value; });
  if (out.size() > max_count) out.resize(max_count);
  return out;
}

namespace {

void check_snapshots(const MatXc& x, const ArrayGeometry& array) {
  array.validate();
  if (x.rows() != array.size()) {
    std::ostringstream os;
    os << "snapshot matrix has " << x.rows() << " rows but the array has " << array.size()
       << " elements";
    throw InputError(os.str());
  }
  if (x.cols() < 1) throw InputError("at least one snapshot is required");
}

template <typename Fn>
SpatialSpectrum evaluate_grid(const AngleGrid& grid, SpectrumMethod method, const Fn& fn) {
  grid.validate();
  SpatialSpectrum s;
  s.grid = grid;
  s.method = method;
  s.power.resize(grid.az_count(), grid.el_count());
  const std::size_t n = static_cast<std::size_t>(grid.az_count());
  parallel_chunks(n, std::min<std::size_t>(n, thread_count()),
                  [&](std::size_t begin, std::size_t end, std::size_t) {
                    for (std::size_t a = begin; a < end; ++a) {
                      const auto ai = static_cast<Eigen::Index>(a);
                      for (Eigen::Index e = 0; e < grid.el_count(); ++e)
                        s.power(ai, e) = fn(grid.azimuth[ai], grid.elevation[e]);
                    }
                  });
  return s;
}

}  // namespace

SpatialSpectrum beamform_spectrum(const MatXc& snapshots, const ArrayGeometry& array,
                                  const AngleGrid& grid) {
  check_snapshots(snapshots, array);
  const double inv_t = 1.0 / static_cast<double>(snapshots.cols());
  return evaluate_grid(grid, SpectrumMethod::kBeamform, [&](double az, double el) {
    const VecXc a = steering_vector(array, az, el);
    const VecXc y = snapshots.adjoint() * a;
    return y.squaredNorm() * inv_t;
  });
}

MatXc sample_covariance(const MatXc& snapshots) {
  if (snapshots.cols() < 1) throw InputError("at least one snapshot is required");
  return snapshots * snapshots.adjoint() / static_cast<double>(snapshots.cols());
}

SubspaceDecomposition decompose_covariance(const MatXc& covariance) {
  if (covariance.rows() != covariance.cols() || covariance.rows() < 1)
    throw InputError("covariance must be square and non-empty");
  const MatXc herm = 0.5 * (covariance + covariance.adjoint());
  Eigen::SelfAdjointEigenSolver<MatXc> solver(herm);
  if (solver.info() != Eigen::Success) throw NumericalError("covariance eigendecomposition failed");
  const Eigen::Index n = herm.rows();
  SubspaceDecomposition d;
  d.eigenvalues.resize(n);
  d.eigenvectors.resize(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    // Eigen returns ascending order.
    d.eigenvalues[i] = solver.eigenvalues()[n - 1 - i];
    VecXc v = solver.eigenvectors().col(n - 1 - i);
    const double scale = v.cwiseAbs().maxCoeff();
    for (Eigen::Index k = 0; k < n; ++k) {
      if (std::abs(v[k]) > 1e-12 * scale) {
        v *= std::conj(v[k]) / std::abs(v[k]);
        v[k] = Complex(v[k].real(), 0.0);
        break;
      }
    }
    d.eigenvectors.col(i) = v;
  }
  const double largest = std::abs(d.eigenvalues[0]);
  const double smallest = std::abs(d.eigenvalues[n - 1]);
  d.condition = smallest > 0.0 ? largest / smallest : std::numeric_limits<double>::infinity();
  return d;
}

SpatialSpectrum music_spectrum(const MatXc& snapshots, const ArrayGeometry& array, int sources,
                               const AngleGrid& grid) {
  check_snapshots(snapshots, array);
  if (sources < 1 || sources >= array.size())
    throw InputError("MUSIC needs 1 <= sources < array elements");
  if (snapshots.cols() < sources) throw InputError("MUSIC needs at least as many snapshots as sources");
  const SubspaceDecomposition d = decompose_covariance(sample_covariance(snapshots));
  if (d.condition > 1e12) log::warn("sample covariance is near-singular (condition > 1e12)");
  const MatXc un = d.eigenvectors.rightCols(array.size() - sources);
  return evaluate_grid(grid, SpectrumMethod::kMusic, [&](double az, double el) {
    const VecXc a = steering_vector(array, az, el);
    const double denom = (un.adjoint() * a).squaredNorm();
    return 1.0 / std::max(denom, kMusicFloor);
  });
}

double airy_pattern(double x) {
  if (std::abs(x) < 1e-8) return 1.0;
  const double a = 2.0 * std::cyl_bessel_j(1.0, std::abs(x)) / std::abs(x);
  return a * a;
}

double airy_amplitude_derivative(double x) {
  const double ax = std::abs(x);
  double d;
  if (ax < 1e-6) {
    d = -ax / 4.0;
  } else {
    d = -2.0 * std::cyl_bessel_j(2.0, ax) / ax;
  }
  return x < 0.0 ? -d : d;
}

VecX airy_phases(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0xA1A1));
  VecX p(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    // 53-bit uniform in [0, 1).
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    p[static_cast<Eigen::Index>(i)] = kTwoPi * u;
  }
  return p;
}

SpatialSpectrum airy_spatial_surrogate(const std::vector<Vec3>& directions,
                                       const SurrogateConfig& surrogate, double wavelength,
                                       const AngleGrid& grid) {
  return airy_spatial_surrogate(directions, airy_phases(directions.size(), surrogate.seed),
                                surrogate, wavelength, grid);
}

SpatialSpectrum airy_spatial_surrogate(const std::vector<Vec3>& directions, const VecX& phases,
                                       const SurrogateConfig& surrogate, double wavelength,
                                       const AngleGrid& grid) {
  surrogate.validate();
  if (!(surrogate.airy_radius > 0.0)) throw InputError("surrogate.airy_radius must be positive");
  if (phases.size() != static_cast<Eigen::Index>(directions.size()))
    throw InputError("one phase per path direction is required");
  const double kr = kTwoPi / wavelength * surrogate.airy_radius;
  std::vector<Vec3> dirs;
  std::vector<Complex> rot;
  for (std::size_t i = 0; i < directions.size(); ++i) {
    const double n = directions[i].norm();
    if (!(n > 0.0)) throw InputError("zero arrival direction");
    dirs.push_back(directions[i] / n);
    rot.push_back(std::polar(surrogate.field_scale, phases[static_cast<Eigen::Index>(i)]));
  }
  return evaluate_grid(grid, SpectrumMethod::kAiry, [&](double az, double el) {
    const Vec3 u = direction_from_angles(az, el);
    Complex field(0.0, 0.0);
    for (std::size_t i = 0; i < dirs.size(); ++i) {
      const double x = kr * dirs[i].cross(u).norm();
      field += airy_pattern(x) * rot[i];
    }
    return std::norm(field);
  });
}

namespace {

// Identifies a path by its reflecting planes so every element of the array sees
// the same jitter for one reflector, even when the specular points fall on
// different triangles of a planar facet.
std::uint64_t path_key(const PropagationPath& p) {
  std::vector<std::int64_t> ids{p.order};
  for (std::size_t k = 1; k + 1 < p.vertices.size(); ++k) {
    const Vec3 n = ((p.vertices[k - 1] - p.vertices[k]).normalized() +
                    (p.vertices[k + 1] - p.vertices[k]).normalized())
                       .normalized();
    for (int i = 0; i < 3; ++i) ids.push_back(std::llround(n[i] * 1e4));
    ids.push_back(std::llround(n.dot(p.vertices[k]) * 1e4));
  }
  return fnv1a(ids.data(), ids.size() * sizeof(std::int64_t));
}

void add_noise(MatXc& x, double snr_db, double signal_power, std::uint64_t seed) {
  if (!std::isfinite(snr_db)) return;
  const double variance = signal_power / std::pow(10.0, snr_db / 10.0);
  std::mt19937_64 rng(mix_seed(seed, 0x4E015E));
  std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
  for (Eigen::Index t = 0; t < x.cols(); ++t)
    for (Eigen::Index p = 0; p < x.rows(); ++p) x(p, t) += Complex(normal(rng), normal(rng));
}

}  // namespace

MatXc snapshots_from_paths(const CirSample& sample, const SnapshotConfig& config) {
  if (config.snapshots < 1) throw InputError("snapshots must be at least 1");
  if (sample.rx_count < 1) throw InputError("CIR sample has no receive elements");
  MatXc x = MatXc::Zero(sample.rx_count, config.snapshots);
  for (int t = 0; t < config.snapshots; ++t) {
    for (const PropagationPath& p : sample.paths) {
      Complex c = p.tap().amplitude;
      if (config.path_phase_jitter) {
        std::mt19937_64 rng(mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(t)), path_key(p)));
        c *= std::polar(1.0, kTwoPi * static_cast<double>(rng() >> 11) * 0x1.0p-53);
      }
      x(p.rx_index, t) += c;
    }
  }
  const double power = x.squaredNorm() / static_cast<double>(x.size());
  add_noise(x, config.snr_db, power, config.seed);
  return x;
}

MatXc snapshots_from_scene(const Scene& scene, int max_order, const SnapshotConfig& config) {
  return snapshots_from_paths(trace_paths(scene, max_order), config);
}

MatXc synthetic_snapshots(const ArrayGeometry& array,
                          const std::vector<std::pair<double, double>>& sources, int snapshots,
                          double snr_db, std::uint64_t seed) {
  array.validate();
  if (snapshots < 1) throw InputError("snapshots must be at least 1");
  MatXc x = MatXc::Zero(array.size(), snapshots);
  std::mt19937_64 rng(mix_seed(seed, 0x5005CE));
  for (int t = 0; t < snapshots; ++t) {
    for (const auto& [az, el] : sources) {
      const double phase = kTwoPi * static_cast<double>(rng() >> 11) * 0x1.0p-53;
      x.col(t) += steering_vector(array, az, el) * std::polar(1.0, phase);
    }
  }
  add_noise(x, snr_db, 1.0, seed);
  return x;
}

std::vector<Vec3> arrival_directions(const CirSample& sample, const Scene& scene, int rx_index) {
  if (rx_index < 0 || rx_index >= static_cast<int>(scene.rx_positions.size()))
    throw InputError("unknown rx index");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : scene.rx_positions) centroid += p;
  centroid /= static_cast<double>(scene.rx_positions.size());
  std::vector<Vec3> out;
  for (const PropagationPath* p : sample.paths_for(rx_index)) {
    const Vec3 d = p->last_interaction() - centroid;
    out.push_back(d.normalized());
  }
  return out;
}

}  // namespace rfit
