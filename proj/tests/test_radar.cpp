#include <doctest.h>

#include "rfit/radar.hpp"
#include "support.hpp"

using namespace rfit;

namespace {

RadarConfig radar(Window w = Window::kHamming) {
  RadarConfig c;
  c.samples = 256;
  c.bins = 128;
  c.window = w;
  return c;
}

Eigen::Index argmax_abs(const VecXc& v) {
  Eigen::Index i = 0;
  v.cwiseAbs().maxCoeff(&i);
  return i;
}

double db(double x) { return 20.0 * std::log10(x); }

/// Largest magnitude more than `guard` bins from `center`, relative to the
/// window's coherent gain (the on-bin peak of a unit tap), in dB.
double sidelobe_db(const VecXc& v, double center, double guard, const RadarConfig& c) {
  const double peak = window_coefficients(c.window, c.samples).sum();
  double side = 0.0;
  for (Eigen::Index l = 0; l < v.size(); ++l)
    if (std::abs(static_cast<double>(l) - center) > guard) side = std::max(side, std::abs(v[l]));
  return db(side / peak);
}

AngleGrid elevation_cut(int count) { return AngleGrid::uniform(0.0, 0.0, 1, 0.0, kPi / 3, count); }

}  // namespace

TEST_CASE("beat signal of one tap has unit modulus") {
  const RadarConfig c = radar();
  const VecXc s = if_signal({{1e-8, Complex(1.0, 0.0)}}, c);
  CHECK((s.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("beat signal is linear in the taps") {
  const RadarConfig c = radar();
  const Tap a{7e-9, Complex(0.3, -0.2)}, b{2.2e-8, Complex(-0.1, 0.5)};
  const VecXc sum = if_signal({a, b}, c);
  const VecXc parts = if_signal({a}, c) + if_signal({b}, c);
  CHECK((sum - parts).cwiseAbs().maxCoeff() < 1e-12);
  const Tap a2{a.delay, 2.5 * a.amplitude};
  CHECK((if_signal({a2}, c) - 2.5 * if_signal({a}, c)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("beat frequency lands in the bin of its delay") {
  const RadarConfig c = radar();
  for (int bin : {3, 10, 57, 100}) {
    const double tau = bin / c.bandwidth_hz;
    const RangeProfile p = range_profile_exact(if_signal({{tau, Complex(1.0, 0.0)}}, c), c);
    CHECK(argmax_abs(p.values) == bin);
    CHECK(p.delays[bin] == doctest::Approx(tau).epsilon(1e-14));
  }
}

TEST_CASE("profile from taps equals the transformed beat signal") {
  const RadarConfig c = radar();
  const std::vector<Tap> taps{{5.3e-9, Complex(0.4, 0.1)}, {1.71e-8, Complex(-0.2, 0.3)}};
  const RangeProfile a = range_profile_exact(if_signal(taps, c), c);
  const RangeProfile b = range_profile_exact(taps, c, nullptr);
  CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-10 * a.values.cwiseAbs().maxCoeff());
}

TEST_CASE("zero amplitude gives a zero profile") {
  const RadarConfig c = radar();
  const RangeProfile p = range_profile_exact({{1e-8, Complex(0.0, 0.0)}}, c, nullptr);
  CHECK(p.values.cwiseAbs().maxCoeff() == 0.0);
  const RangeProfile q = range_profile_surrogate({{1e-8, Complex(0.0, 0.0)}}, c, SurrogateConfig{});
  CHECK(q.values.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("window sidelobe levels") {
  // A half-bin offset samples the spectrum at its sidelobe peaks.
  const double center = 40.5;
  {
    const RadarConfig c = radar(Window::kHamming);
    const RangeProfile p = range_profile_exact({{center / c.bandwidth_hz, Complex(1.0, 0.0)}}, c, nullptr);
    CHECK(sidelobe_db(p.values, center, 2.0, c) <= -40.0);
  }
  {
    const RadarConfig c = radar(Window::kRect);
    const RangeProfile p = range_profile_exact({{center / c.bandwidth_hz, Complex(1.0, 0.0)}}, c, nullptr);
    CHECK(sidelobe_db(p.values, center, 1.0, c) == doctest::Approx(-13.46).epsilon(0.01));
  }
}

TEST_CASE("exact profile delay derivative matches finite differences") {
  const RadarConfig c = radar();
  const std::vector<Tap> taps{{5.3e-9, Complex(0.4, 0.1)}, {1.71e-8, Complex(-0.2, 0.3)}};
  ProfileJacobian j;
  range_profile_exact(taps, c, &j);
  const double h = 1e-16;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    auto plus = taps, minus = taps;
    plus[i].delay += h;
    minus[i].delay -= h;
    const VecXc fd = (range_profile_exact(plus, c, nullptr).values - range_profile_exact(minus, c, nullptr).values) / (2 * h);
    const auto col = static_cast<Eigen::Index>(i);
    CHECK((j.d_delay.col(col) - fd).cwiseAbs().maxCoeff() < 1e-5 * fd.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("surrogate kernel peaks at the tap and sums to one") {
  const RadarConfig c = radar();
  const double sigma = 0.5 / c.bandwidth_hz;
  for (int bin : {0, 20, 77, 127}) {
    const VecX g = surrogate_kernel(bin / c.bandwidth_hz, c, sigma);
    Eigen::Index k = 0;
    g.maxCoeff(&k);
    CHECK(k == bin);
    CHECK(g.sum() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(g.minCoeff() >= 0.0);
  }
}

TEST_CASE("surrogate kernel derivative matches finite differences") {
  const RadarConfig c = radar();
  const double sigma = 2.0 / c.bandwidth_hz;
  const double h = sigma / 100.0;
  for (double tau : {5.25e-9, 1.31e-8, 2.0e-8}) {
    const VecX fd = test::central_diff5([&](double t) { return surrogate_kernel(t, c, sigma); }, tau, h);
    const VecX an = surrogate_kernel_derivative(tau, c, sigma);
    CHECK((an - fd).cwiseAbs().maxCoeff() < 1e-6 * an.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("profile phase derivative is j times the tap contribution") {
  const RadarConfig c = radar();
  SurrogateConfig sc;
  sc.sigma_s = 5e-10;
  const std::vector<Tap> taps{{5.3e-9, std::polar(0.4, 0.7)}, {1.71e-8, std::polar(0.2, -2.0)}};
  for (bool surrogate : {false, true}) {
    ProfileJacobian j;
    if (surrogate)
      range_profile_surrogate(taps, c, sc, &j);
    else
      range_profile_exact(taps, c, &j);
    for (std::size_t i = 0; i < taps.size(); ++i) {
      const auto col = static_cast<Eigen::Index>(i);
      const VecXc contribution = j.d_amplitude.col(col) * taps[i].amplitude;
      CHECK((j.d_phase(col, taps[i]) - Complex(0, 1) * contribution).cwiseAbs().maxCoeff() < 1e-14);
      const double a = std::abs(taps[i].amplitude);
      const VecXc unit_phase = contribution / a;
      CHECK((j.d_alpha(col, taps[i]) - unit_phase).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
}

TEST_CASE("profiles are linear in the taps") {
  const RadarConfig c = radar();
  SurrogateConfig sc;
  const Tap a{7e-9, Complex(0.3, -0.2)}, b{2.2e-8, Complex(-0.1, 0.5)};
  const VecXc e = range_profile_exact({a, b}, c, nullptr).values;
  CHECK((e - range_profile_exact({a}, c, nullptr).values - range_profile_exact({b}, c, nullptr).values)
            .cwiseAbs()
            .maxCoeff() < 1e-12);
  const VecXc s = range_profile_surrogate({a, b}, c, sc).values;
  CHECK((s - range_profile_surrogate({a}, c, sc).values - range_profile_surrogate({b}, c, sc).values)
            .cwiseAbs()
            .maxCoeff() < 1e-14);
}

TEST_CASE("surrogate and exact profiles peak in the same bin") {
  const RadarConfig c = radar();
  SurrogateConfig sc;
  sc.sigma_s = 0.5 / c.bandwidth_hz;
  for (double bins : {12.2, 33.0, 64.8, 90.4}) {
    const std::vector<Tap> taps{{bins / c.bandwidth_hz, Complex(0.5, 0.5)}};
    CHECK(argmax_abs(range_profile_exact(taps, c, nullptr).values) ==
          argmax_abs(range_profile_surrogate(taps, c, sc).values));
  }
}

TEST_CASE("taps outside the unambiguous range are rejected") {
  const RadarConfig c = radar();
  CHECK_THROWS_AS(if_signal({{c.chirp_duration_s, Complex(1, 0)}}, c), InputError);
  CHECK_THROWS_AS(range_profile_exact({{-1e-9, Complex(1, 0)}}, c, nullptr), InputError);
}

TEST_CASE("steering vectors") {
  const double lambda = kSpeedOfLight / 77e9;
  const ArrayGeometry ula = ArrayGeometry::ula(8, lambda / 2, lambda);
  const VecXc broadside = steering_vector(ula, 0.3, 0.0);
  CHECK((broadside - VecXc::Ones(8)).cwiseAbs().maxCoeff() < 1e-15);
  const VecXc a = steering_vector(ula, 0.4, 0.9);
  CHECK((a.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-14);
  const ArrayGeometry single = ArrayGeometry::ula(1, lambda / 2, lambda);
  const VecXc one = steering_vector(single, 1.0, 1.0);
  REQUIRE(one.size() == 1);
  CHECK(std::abs(one[0] - Complex(1.0, 0.0)) < 1e-15);
}

TEST_CASE("beamforming peaks at the source with the array gain") {
  const double lambda = kSpeedOfLight / 77e9;
  const ArrayGeometry ula = ArrayGeometry::ula(8, lambda / 2, lambda);
  const AngleGrid grid = elevation_cut(61);
  const double el0 = grid.elevation[20];
  const MatXc x = steering_vector(ula, 0.0, el0);
  const SpatialSpectrum s = beamform_spectrum(x, ula, grid);
  const SpectrumPeak pk = s.argmax();
  CHECK(pk.el == 20);
  CHECK(pk.value == doctest::Approx(64.0).epsilon(1e-12));
  CHECK(beamform_spectrum(MatXc::Zero(8, 3), ula, grid).power.maxCoeff() == 0.0);
}

TEST_CASE("beamforming separates two well-spaced sources") {
  const double lambda = kSpeedOfLight / 77e9;
  const ArrayGeometry ula = ArrayGeometry::ula(16, lambda / 2, lambda);
  const AngleGrid grid = elevation_cut(121);
  const MatXc x = synthetic_snapshots(ula, {{0.0, grid.elevation[15]}, {0.0, grid.elevation[70]}}, 64,
                                      std::numeric_limits<double>::infinity(), 4);
  const auto peaks = beamform_spectrum(x, ula, grid).peaks(2);
  REQUIRE(peaks.size() == 2);
  std::vector<Eigen::Index> els{peaks[0].el, peaks[1].el};
  std::sort(els.begin(), els.end());
  CHECK(std::abs(els[0] - 15) <= 1);
  CHECK(std::abs(els[1] - 70) <= 1);
}

TEST_CASE("MUSIC pseudospectrum is clamped where the noise subspace vanishes") {
  const double lambda = kSpeedOfLight / 77e9;
  const ArrayGeometry ula = ArrayGeometry::ula(6, lambda / 2, lambda);
  const AngleGrid grid = elevation_cut(61);
  const MatXc x = synthetic_snapshots(ula, {{0.0, grid.elevation[25]}}, 16,
                                      std::numeric_limits<double>::infinity(), 1);
  const SpatialSpectrum s = music_spectrum(x, ula, 1, grid);
  CHECK(s.power.maxCoeff() <= 1.0 / kMusicFloor);
  CHECK(s.power(0, 25) == doctest::Approx(1.0 / kMusicFloor));
  CHECK(s.power.minCoeff() > 0.0);
  CHECK_THROWS_AS(music_spectrum(x, ula, 6, grid), InputError);
}

TEST_CASE("covariance eigenvalues sum to the trace") {
  std::mt19937_64 rng(9);
  MatXc x(5, 40);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = Complex(test::uniform(rng, -1, 1), test::uniform(rng, -1, 1));
  const MatXc r = sample_covariance(x);
  const SubspaceDecomposition d = decompose_covariance(r);
  CHECK(d.eigenvalues.sum() == doctest::Approx(r.trace().real()).epsilon(1e-12));
  for (Eigen::Index i = 1; i < d.eigenvalues.size(); ++i) CHECK(d.eigenvalues[i] <= d.eigenvalues[i - 1]);
  const MatXc v = d.eigenvectors;
  CHECK((v.adjoint() * v - MatXc::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((r * v - v * d.eigenvalues.asDiagonal()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("MUSIC resolves two close sources") {
  const double lambda = kSpeedOfLight / 77e9;
  const ArrayGeometry ula = ArrayGeometry::ula(8, lambda / 2, lambda);
  const AngleGrid grid = elevation_cut(601);
  const double e1 = 20.0 * kPi / 180.0, e2 = 35.0 * kPi / 180.0;
  double sq = 0.0;
  const int trials = 20;
  for (int t = 0; t < trials; ++t) {
    const MatXc x = synthetic_snapshots(ula, {{0.0, e1}, {0.0, e2}}, 64, 10.0, 100 + static_cast<std::uint64_t>(t));
    const auto peaks = music_spectrum(x, ula, 2, grid).peaks(2);
    REQUIRE(peaks.size() == 2);
    double a = grid.elevation[peaks[0].el], b = grid.elevation[peaks[1].el];
    if (a > b) std::swap(a, b);
    sq += (a - e1) * (a - e1) + (b - e2) * (b - e2);
  }
  const double rmse_deg = std::sqrt(sq / (2.0 * trials)) * 180.0 / kPi;
  CHECK(rmse_deg < 1.0);
}

TEST_CASE("Airy pattern") {
  CHECK(airy_pattern(0.0) == 1.0);
  CHECK(airy_pattern(3.8317059702075125) < 1e-20);
  CHECK(airy_pattern(1.0) == doctest::Approx(std::pow(2.0 * std::cyl_bessel_j(1.0, 1.0), 2)));
  for (double x : {0.3, 1.7, 5.0}) {
    const double h = 1e-6;
    const double fd = (2.0 * std::cyl_bessel_j(1.0, x + h) / (x + h) - 2.0 * std::cyl_bessel_j(1.0, x - h) / (x - h)) / (2 * h);
    CHECK(airy_amplitude_derivative(x) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("Airy surrogate is the field power on its axis") {
  const double lambda = kSpeedOfLight / 77e9;
  SurrogateConfig sc;
  sc.airy_radius = 0.01;
  sc.field_scale = 1.7;
  const AngleGrid grid = AngleGrid::uniform(-0.5, 0.5, 11, 0.1, 0.9, 9);
  const Vec3 d = direction_from_angles(grid.azimuth[4], grid.elevation[6]);
  const SpatialSpectrum s = airy_spatial_surrogate({d}, sc, lambda, grid);
  CHECK(s.power(4, 6) == doctest::Approx(1.7 * 1.7).epsilon(1e-12));
  CHECK(s.argmax().az == 4);
  CHECK(s.argmax().el == 6);
}

TEST_CASE("Airy phases are seeded") {
  const VecX a = airy_phases(50, 3), b = airy_phases(50, 3), c = airy_phases(50, 4);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.minCoeff() >= 0.0);
  CHECK(a.maxCoeff() < kTwoPi);
}

TEST_CASE("far-field snapshots are proportional to the steering vector") {
  const double lambda = kSpeedOfLight / 77e9;
  const ArrayGeometry ula = ArrayGeometry::ula(8, lambda / 2, lambda);
  const double inf = std::numeric_limits<double>::infinity();
  const MatXc x = synthetic_snapshots(ula, {{0.2, 0.6}}, 10, inf, 5);
  const VecXc a = steering_vector(ula, 0.2, 0.6);
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    const Complex ratio = x(0, t) / a[0];
    CHECK((x.col(t) - ratio * a).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(ratio) == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(x == synthetic_snapshots(ula, {{0.2, 0.6}}, 10, inf, 5));
}

TEST_CASE("noise power follows the requested SNR") {
  const double lambda = kSpeedOfLight / 77e9;
  const ArrayGeometry ula = ArrayGeometry::ula(8, lambda / 2, lambda);
  const MatXc x = synthetic_snapshots(ula, {}, 4000, 3.0, 8);
  const double power = x.squaredNorm() / static_cast<double>(x.size());
  CHECK(power == doctest::Approx(std::pow(10.0, -0.3)).epsilon(0.05));
}

TEST_CASE("path snapshots without jitter or noise are identical across snapshots") {
  Scene s = test::plate_scene(1.0, 4);
  SnapshotConfig cfg;
  cfg.snapshots = 3;
  const MatXc x = snapshots_from_scene(s, 1, cfg);
  CHECK(x.rows() == 4);
  CHECK((x.col(0) - x.col(2)).cwiseAbs().maxCoeff() == 0.0);
  cfg.path_phase_jitter = true;
  cfg.seed = 2;
  const MatXc y = snapshots_from_scene(s, 1, cfg);
  CHECK((y.col(0) - y.col(1)).cwiseAbs().maxCoeff() > 0.0);
  CHECK(y == snapshots_from_scene(s, 1, cfg));
}
