#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "rfit/common.hpp"
#include "rfit/tracer.hpp"

namespace rfit {

enum class Window { kHamming, kRect };

std::string to_string(Window w);
Window window_from_string(const std::string& name);

/// FMCW chirp and range-processing configuration.
struct RadarConfig {
  double carrier_hz = 77e9;
  double bandwidth_hz = 4e9;
  double chirp_duration_s = 40e-6;
  int samples = 256;  // per chirp
  int bins = 128;     // range-profile bins kept, <= samples
  Window window = Window::kHamming;

  void validate() const;
  double slope() const { return bandwidth_hz / chirp_duration_s; }
  /// Round-trip delay of range bin l.
  double bin_delay(int l) const { return l / bandwidth_hz; }
  double bin_spacing() const { return 1.0 / bandwidth_hz; }
  VecX bin_delays() const;
};

enum class Provenance { kExact, kSurrogate };

struct RangeProfile {
  VecXc values;  // one per bin
  VecX delays;   // bin -> delay (s), strictly increasing
  Provenance provenance = Provenance::kExact;

  Eigen::Index size() const { return values.size(); }
};

/// Per-tap partial derivatives of a range profile. Columns follow the tap
/// order. The profile is complex-linear in each tap amplitude c = alpha e^{j phi},
/// so dR/dalpha = d_amplitude * e^{j phi} and dR/dphi = d_amplitude * j c.
struct ProfileJacobian {
  MatXc d_delay;      // bins x taps, at fixed complex amplitude
  MatXc d_amplitude;  // bins x taps

  VecXc d_alpha(Eigen::Index tap, const Tap& t) const;
  VecXc d_phase(Eigen::Index tap, const Tap& t) const;
};

struct SurrogateConfig {
  double sigma_s = 0.5e-9;  // Gaussian pulse width (s)
  double airy_radius = 0.0; // aperture radius for the spatial surrogate (m)
  double field_scale = 1.0; // E0
  std::uint64_t seed = 0;   // phase draws for the spatial surrogate

  void validate() const;
};

VecX window_coefficients(Window window, int n);

/// Beat signal of an FMCW chirp for the given taps (one sample per n T / N).
VecXc if_signal(const std::vector<Tap>& taps, const RadarConfig& config);

/// Windowed DFT of an IF signal, first `config.bins` bins.
RangeProfile range_profile_exact(const VecXc& signal, const RadarConfig& config);

/// Same profile built directly from taps, optionally with per-tap partials.
RangeProfile range_profile_exact(const std::vector<Tap>& taps, const RadarConfig& config,
                                 ProfileJacobian* jacobian);

/// Normalised Gaussian kernel of one tap over the bin grid.
VecX surrogate_kernel(double delay, const RadarConfig& config, double sigma);
/// d kernel / d delay for one tap.
VecX surrogate_kernel_derivative(double delay, const RadarConfig& config, double sigma);

/// Phase-decoupled Gaussian-kernel range profile with closed-form partials.
RangeProfile range_profile_surrogate(const std::vector<Tap>& taps, const RadarConfig& config,
                                     const SurrogateConfig& surrogate,
                                     ProfileJacobian* jacobian = nullptr);

// ---------------------------------------------------------------------------
// Array processing

/// Planar virtual receive array: element positions (x, y) in meters.
struct ArrayGeometry {
  Eigen::Matrix2Xd positions;
  double wavelength = kSpeedOfLight / 77e9;

  int size() const { return static_cast<int>(positions.cols()); }
  double wavenumber() const { return kTwoPi / wavelength; }
  void validate() const;
  /// Half of the largest element separation.
  double half_aperture() const;

  /// Elements relative to their centroid; the array plane is the world x-y plane
  /// with boresight along +z.
  static ArrayGeometry from_positions(const std::vector<Vec3>& rx, double wavelength);
  /// Uniform linear array along x.
  static ArrayGeometry ula(int count, double spacing, double wavelength);
};

/// Unit vector for (azimuth, elevation) with elevation measured from boresight.
Vec3 direction_from_angles(double azimuth, double elevation);

struct AngleGrid {
  VecX azimuth;    // rad
  VecX elevation;  // rad, from boresight

  static AngleGrid uniform(double az_min, double az_max, int az_count, double el_min,
                           double el_max, int el_count);
  Eigen::Index az_count() const { return azimuth.size(); }
  Eigen::Index el_count() const { return elevation.size(); }
  void validate() const;
};

enum class SpectrumMethod { kBeamform, kMusic, kAiry };
std::string to_string(SpectrumMethod m);
SpectrumMethod spectrum_method_from_string(const std::string& name);

struct SpectrumPeak {
  Eigen::Index az = 0;
  Eigen::Index el = 0;
  double value = 0.0;
};

struct SpatialSpectrum {
  MatX power;  // az_count x el_count, all >= 0
  AngleGrid grid;
  SpectrumMethod method = SpectrumMethod::kBeamform;

  SpectrumPeak argmax() const;
  /// Strict local maxima over the 8-neighbourhood, strongest first.
  std::vector<SpectrumPeak> peaks(std::size_t max_count) const;
};

template <typename Scalar = double>
Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> steering_vector(const ArrayGeometry& array,
                                                                        Scalar azimuth,
                                                                        Scalar elevation) {
  using std::cos;
  using std::sin;
  const Scalar k = Scalar(kTwoPi) / Scalar(array.wavelength);
  const Scalar ux = sin(elevation) * cos(azimuth);
  const Scalar uy = sin(elevation) * sin(azimuth);
  Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1> a(array.size());
  for (int p = 0; p < array.size(); ++p) {
    const Scalar arg = -k * (Scalar(array.positions(0, p)) * ux + Scalar(array.positions(1, p)) * uy);
    a[p] = std::complex<Scalar>(cos(arg), sin(arg));
  }
  return a;
}

SpatialSpectrum beamform_spectrum(const MatXc& snapshots, const ArrayGeometry& array,
                                  const AngleGrid& grid);

/// Eigen-decomposition of a sample covariance with eigenvalues in descending
/// order and each eigenvector's first significant component made real-positive.
struct SubspaceDecomposition {
  VecX eigenvalues;
  MatXc eigenvectors;
  double condition = 0.0;
};

MatXc sample_covariance(const MatXc& snapshots);
SubspaceDecomposition decompose_covariance(const MatXc& covariance);

inline constexpr double kMusicFloor = 1e-12;

SpatialSpectrum music_spectrum(const MatXc& snapshots, const ArrayGeometry& array, int sources,
                               const AngleGrid& grid);

/// (2 J1(x) / x)^2 with the x -> 0 limit of 1.
double airy_pattern(double x);
/// d/dx of 2 J1(x) / x.
double airy_amplitude_derivative(double x);

/// Phase draws in [0, 2pi) for `count` paths.
VecX airy_phases(std::size_t count, std::uint64_t seed);

/// Coherent sum of per-path Airy lobes centred on each arrival direction.
SpatialSpectrum airy_spatial_surrogate(const std::vector<Vec3>& directions,
                                       const SurrogateConfig& surrogate, double wavelength,
                                       const AngleGrid& grid);
SpatialSpectrum airy_spatial_surrogate(const std::vector<Vec3>& directions, const VecX& phases,
                                       const SurrogateConfig& surrogate, double wavelength,
                                       const AngleGrid& grid);

struct SnapshotConfig {
  int snapshots = 1;
  double snr_db = std::numeric_limits<double>::infinity();  // inf disables noise
  bool path_phase_jitter = false;  // fresh random phase per path per snapshot
  std::uint64_t seed = 0;
};

/// Narrowband array snapshots (elements x snapshots) from traced paths: each
/// element sums its taps at the carrier.
MatXc snapshots_from_paths(const CirSample& sample, const SnapshotConfig& config);
MatXc snapshots_from_scene(const Scene& scene, int max_order, const SnapshotConfig& config);

/// Far-field snapshots for point sources at (azimuth, elevation) pairs with unit
/// power and independent random phases per snapshot, plus complex white noise
/// at `snr_db` per source.
MatXc synthetic_snapshots(const ArrayGeometry& array,
                          const std::vector<std::pair<double, double>>& sources, int snapshots,
                          double snr_db, std::uint64_t seed);

/// Unit arrival directions (array centroid -> last interaction) for the paths
/// of one receive element.
std::vector<Vec3> arrival_directions(const CirSample& sample, const Scene& scene, int rx_index);

}  // namespace rfit
