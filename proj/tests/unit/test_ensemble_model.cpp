#include <doctest.h>

#include <cmath>

#include "afcmem/ensemble_model.hpp"

using namespace afcmem;

namespace {

CombParams small_comb() {
  CombParams p;
  p.grid_points = 1 << 18;
  p.grid_span_hz = 8e6;
  return p;
}

Waveform short_pulse(double span) {
  const double fwhm = 700e-9;
  const double c = 2.4e-6;
  return gaussian_pulse(fwhm, c, span, 0.0, static_cast<std::size_t>(2 * c * span));
}

// First-harmonic echo of a periodic causal optical depth: the transmitted carrier is exp(-d/2) and the
// first delayed copy carries half the first Fourier coefficient, 2 d sinc(pi/F) for square teeth.
double square_tooth_echo(double peak_od_total, double finesse, double gamma_hz, double delta_hz) {
  const double dm = peak_od_total / finesse;
  const double x = pi / finesse;
  const double s = std::sin(x) / x;
  return dm * dm * s * s * std::exp(-dm) * std::exp(-4.0 * pi * gamma_hz / delta_hz);
}

// Square teeth convolved with a Lorentzian of HWHM g.
double broadened_square(const CombParams& p, double g, double f) {
  const double w = p.comb_period_hz / p.finesse;
  const int k_max = static_cast<int>(0.5 * p.bandwidth_hz / p.comb_period_hz);
  double v = 0.0;
  for (int k = -k_max; k <= k_max; ++k) {
    const double x = f - k * p.comb_period_hz;
    v += (std::atan((x + 0.5 * w) / g) - std::atan((x - 0.5 * w) / g)) / pi;
  }
  return p.peak_od * v;
}

}  // namespace

TEST_SUITE("ensemble_model") {
  TEST_CASE("tooth shape names round trip") {
    for (auto s : {ToothShape::square, ToothShape::gaussian, ToothShape::lorentzian_sum})
      CHECK(tooth_shape_from_string(to_string(s)) == s);
    CHECK_THROWS(tooth_shape_from_string("triangle"));
  }

  TEST_CASE("comb parameters are validated") {
    CombParams p = small_comb();
    p.finesse = 1.0;
    CHECK_THROWS_AS(build_comb(p), std::invalid_argument);
    p = small_comb();
    p.bandwidth_hz = 9e6;
    CHECK_THROWS_AS(build_comb(p), std::invalid_argument);
    p = small_comb();
    p.grid_points = 1000;
    CHECK_THROWS_AS(build_comb(p), std::invalid_argument);
    p = small_comb();
    p.grid_points = 1 << 12;  // teeth not resolved
    CHECK_THROWS(build_comb(p));
  }

  TEST_CASE("absorption follows the target profile inside the band") {
    CombParams p = small_comb();
    p.passes = 1;
    const auto c = build_comb(p);
    const std::size_t mid = c.freq_grid_hz.size() / 2;
    CHECK(c.freq_grid_hz[mid] == doctest::Approx(0.0).epsilon(1e-12));
    const double g = c.homogeneous_hwhm_hz;
    CHECK(g > 0.0);
    CHECK(c.alpha[mid] == doctest::Approx(broadened_square(p, g, 0.0)).epsilon(2e-3));
    // halfway between teeth only the Lorentzian wings remain
    const std::size_t gap = mid + static_cast<std::size_t>(std::llround(0.5 * p.comb_period_hz / c.df()));
    CHECK(c.alpha[gap] == doctest::Approx(broadened_square(p, g, 0.5 * p.comb_period_hz)).epsilon(0.05).scale(1e-3));
    CHECK(c.alpha[gap] < 0.01 * c.alpha[mid]);
    // real part of the exponent recovers the optical depth
    CHECK(-2.0 * std::log(std::abs(c.complex_response[mid])) == doctest::Approx(c.alpha[mid]).epsilon(1e-6));
  }

  TEST_CASE("echo and transmission of square teeth match the harmonic expansion") {
    for (double delta : {20e3, 40e3, 100e3}) {
      CAPTURE(delta);
      CombParams p = small_comb();
      p.comb_period_hz = delta;
      p.passes = 2;
      const auto c = build_comb(p);
      const auto r = propagate(short_pulse(p.grid_span_hz), c);
      CHECK(r.echo_time_s == doctest::Approx(1.0 / delta).epsilon(0.01));
      CHECK(r.echo_efficiency == doctest::Approx(square_tooth_echo(6.0, 4.0, c.homogeneous_hwhm_hz, delta)).epsilon(0.02));
      CHECK(r.transmitted_fraction == doctest::Approx(std::exp(-1.5)).epsilon(0.02));
    }
  }

  TEST_CASE("homogeneous broadening damps the echo") {
    CombParams p = small_comb();
    p.passes = 2;
    p.homogeneous_hwhm_hz = hwhm_for_t2afc(240e-6);
    const auto r = propagate(short_pulse(p.grid_span_hz), build_comb(p));
    CHECK(r.echo_efficiency ==
          doctest::Approx(square_tooth_echo(6.0, 4.0, p.homogeneous_hwhm_hz, p.comb_period_hz)).epsilon(0.02));
  }

  TEST_CASE("echo time is independent of tooth shape") {
    for (auto s : {ToothShape::gaussian, ToothShape::lorentzian_sum}) {
      CombParams p = small_comb();
      p.tooth_shape = s;
      const auto r = propagate(short_pulse(p.grid_span_hz), build_comb(p));
      CHECK(r.echo_time_s == doctest::Approx(25e-6).epsilon(0.01));
      CHECK(r.echo_efficiency > 0.05);
      CHECK(r.echo_efficiency < 0.6);
    }
  }

  TEST_CASE("background absorption lowers the echo") {
    CombParams p = small_comb();
    const double e0 = propagate(short_pulse(p.grid_span_hz), build_comb(p)).echo_efficiency;
    p.background_od = 0.3;
    const double e1 = propagate(short_pulse(p.grid_span_hz), build_comb(p)).echo_efficiency;
    CHECK(e1 < e0);
  }

  TEST_CASE("propagate rejects bad inputs") {
    CombParams p = small_comb();
    const auto c = build_comb(p);
    auto w = short_pulse(p.grid_span_hz);
    w.sample_rate_hz *= 2.0;
    CHECK_THROWS_AS(propagate(w, c), std::invalid_argument);
    // 20 ns pulse is far wider than the comb band
    const auto wide = gaussian_pulse(20e-9, 1e-6, p.grid_span_hz, 0.0, 64);
    CHECK_THROWS_AS(propagate(wide, c), std::invalid_argument);
  }

  TEST_CASE("decay model") {
    CHECK(afc_decay_model(0.0, 0.36, 240e-6, 0.3, 41.4e3) == doctest::Approx(0.36));
    const double x = 25e-6;
    const double s = std::sin(pi * 41.4e3 * x);
    CHECK(afc_decay_model(x, 0.36, 240e-6, 0.3, 41.4e3) ==
          doctest::Approx(0.36 * std::exp(-4.0 * x / 240e-6) * (1.0 - 0.3 * s * s)));
    // modulation vanishes at multiples of the inverse splitting
    const double x1 = 1.0 / 41.4e3;
    CHECK(afc_decay_model(x1, 1.0, 1.0, 1.0, 41.4e3) == doctest::Approx(std::exp(-4.0 * x1)));
    CHECK_THROWS(afc_decay_model(1e-6, 0.3, 1e-4, 1.5, 41.4e3));
    CHECK(hwhm_for_t2afc(240e-6) == doctest::Approx(1326.29).epsilon(1e-4));
  }
}
