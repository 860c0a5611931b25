#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <numeric>

#include "afcmem/spin_sim.hpp"

using namespace afcmem;

namespace {

// Phase variance (rad^2) by direct quadrature of the switching function against the OU kernel.
double brute_force_phase_variance(const DDSequence& dd, double sigma, double tau_c, int n) {
  const double t = dd.total_time_s;
  const double h = t / n;
  std::vector<double> s(n), tm(n);
  for (int k = 0; k < n; ++k) {
    tm[k] = (k + 0.5) * h;
    int flips = 0;
    for (double c : dd.centers_s) flips += tm[k] > c;
    s[k] = flips % 2 ? -1.0 : 1.0;
  }
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) acc += s[i] * s[j] * std::exp(-std::abs(tm[i] - tm[j]) / tau_c);
  return 4.0 * pi * pi * sigma * sigma * acc * h * h;
}

using mat2 = Eigen::Matrix2cd;

// RK4 of i dpsi/dt = H psi with H = pi (d sz + W cos(ph) sx + W sin(ph) sy), basis (s, g).
mat2 integrate_sequence(const DDSequence& dd, double rabi, double detuning, double h) {
  const cplx i(0.0, 1.0);
  auto ham = [&](double t) {
    mat2 m = mat2::Zero();
    m(0, 0) = pi * detuning;
    m(1, 1) = -pi * detuning;
    for (int p = 0; p < dd.n_pulses(); ++p) {
      if (std::abs(t - dd.centers_s[p]) < 0.5 * dd.pulse_duration_s) {
        const cplx w = pi * rabi * std::polar(1.0, dd.phases_rad[p]);
        m(0, 1) = std::conj(w);
        m(1, 0) = w;
      }
    }
    return m;
  };
  mat2 u = mat2::Identity();
  const int n = static_cast<int>(std::llround(dd.total_time_s / h));
  for (int k = 0; k < n; ++k) {
    // steps are aligned with the pulse edges, so H is constant across each one
    const mat2 hk = ham((k + 0.5) * h);
    const mat2 k1 = -i * hk * u;
    const mat2 k2 = -i * hk * (u + 0.5 * h * k1);
    const mat2 k3 = -i * hk * (u + 0.5 * h * k2);
    const mat2 k4 = -i * hk * (u + h * k3);
    u += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return u;
}

}  // namespace

TEST_SUITE("spin_sim") {
  TEST_CASE("ensemble sampling is seeded and has the requested width") {
    SpinBathParams b;
    b.n_atoms = 20000;
    const auto a = sample_ensemble(b);
    const auto c = sample_ensemble(b);
    CHECK(a == c);
    double m = 0.0, v = 0.0;
    for (double x : a) m += x;
    m /= a.size();
    for (double x : a) v += (x - m) * (x - m);
    v /= a.size() - 1;
    CHECK(std::abs(m) < 4.0 * b.inhom_sigma_hz() / std::sqrt(a.size()));
    CHECK(std::sqrt(v) == doctest::Approx(60e3 / 2.35482).epsilon(0.02));
    b.n_atoms = 0;
    CHECK_THROWS(sample_ensemble(b));
  }

  TEST_CASE("OU trajectory statistics") {
    const double sigma = 50.0, tau = 1.0, dt = 0.01;
    const auto x = ou_trajectory(sigma, tau, dt, 400000, 7);
    REQUIRE(x.size() == 400001);
    double m = 0.0;
    for (double v : x) m += v;
    m /= x.size();
    double v0 = 0.0, v1 = 0.0;
    for (std::size_t k = 0; k + 1 < x.size(); ++k) {
      v0 += (x[k] - m) * (x[k] - m);
      v1 += (x[k] - m) * (x[k + 1] - m);
    }
    CHECK(std::sqrt(v0 / x.size()) == doctest::Approx(sigma).epsilon(0.05));
    CHECK(v1 / v0 == doctest::Approx(std::exp(-dt / tau)).epsilon(1e-3));
    CHECK(ou_trajectory(0.0, 1.0, 0.1, 5, 1) == std::vector<double>(6, 0.0));
    CHECK_THROWS(ou_trajectory(1.0, 0.0, 0.1, 5, 1));
  }

  TEST_CASE("ideal pulses refocus static detunings exactly") {
    SpinBathParams b;
    b.n_atoms = 2000;
    for (auto k : {DDKind::XX, DDKind::XY4, DDKind::XY8, DDKind::XY16}) {
      const auto r = spin_echo_coherence(dd_sequence(k, 20e-3), b, PulseErrorModel{});
      CHECK(std::abs(r.coherence - 1.0) < 1e-6);
      CHECK(r.residual_excitation == 0.0);
    }
    // without pulses the inhomogeneous line dephases completely
    const auto free = spin_echo_coherence(dd_sequence(DDKind::none, 1e-3), b, PulseErrorModel{});
    CHECK(free.coherence < 0.1);
  }

  TEST_CASE("Gaussian-phase coherence matches direct quadrature") {
    const double sigma = 60.0, tau = 1.0;
    for (auto [k, t] : {std::pair{DDKind::XX, 70e-3}, std::pair{DDKind::XY4, 100e-3}, std::pair{DDKind::XY8, 20e-3}}) {
      CAPTURE(to_string(k));
      const auto dd = dd_sequence(k, t, 1e-12, 1.0);
      const double var = brute_force_phase_variance(dd, sigma, tau, 3200);
      CHECK(-2.0 * std::log(ou_gaussian_coherence(dd, sigma, tau)) == doctest::Approx(var).epsilon(2e-3));
    }
    // fast bath limit: the phase variance approaches 2 sigma^2 tau T (x (2 pi)^2)
    const auto dd = dd_sequence(DDKind::XX, 1.0, 1e-12, 1.0);
    const double tau_fast = 1e-4;
    const double expected = 4.0 * pi * pi * 2.0 * 1.0 * tau_fast * 1.0;
    CHECK(-2.0 * std::log(ou_gaussian_coherence(dd, 1.0, tau_fast)) == doctest::Approx(expected).epsilon(1e-3));
  }

  TEST_CASE("Monte Carlo OU coherence agrees with the Gaussian-phase value") {
    SpinBathParams b;
    b.n_atoms = 4000;
    b.ou_sigma_hz = 60.0;
    b.ou_tau_c_s = 1.0;
    b.seed = 3;
    for (auto k : {DDKind::XX, DDKind::XY8}) {
      CAPTURE(to_string(k));
      const auto dd = dd_sequence(k, 60e-3);
      const auto r = spin_echo_coherence(dd, b, PulseErrorModel{});
      const double g = ou_gaussian_coherence(dd, b.ou_sigma_hz, b.ou_tau_c_s);
      CHECK(std::abs(r.coherence - g) < 4.0 * r.coherence_stderr + 0.01);
      CHECK(r.eta_spin == doctest::Approx(r.coherence * r.coherence));
    }
  }

  TEST_CASE("slow-bath T2 grows as the pulse number to the 2/3") {
    const double sigma = calibrate_ou_sigma(DDKind::XX, 70e-3, 1.0);
    CHECK(ou_t2(DDKind::XX, sigma, 1.0) == doctest::Approx(70e-3).epsilon(1e-6));
    const double r = ou_t2(DDKind::XY16, sigma, 1.0) / ou_t2(DDKind::XY4, sigma, 1.0);
    CHECK(r == doctest::Approx(std::pow(4.0, 2.0 / 3.0)).epsilon(0.02));
    const auto dd = dd_sequence(DDKind::XX, 70e-3, 1e-12, 1.0);
    const double c = ou_gaussian_coherence(dd, sigma, 1.0);
    CHECK(c * c == doctest::Approx(std::exp(-2.0)).epsilon(1e-9));
  }

  TEST_CASE("finite-Rabi sequence matches direct Schroedinger integration") {
    SpinBathParams line;
    line.n_atoms = 3;
    line.seed = 11;
    PulseErrorModel err;
    err.finite_rabi = true;
    err.area_error = 0.04;
    const double rabi = 125e3;
    const auto dd = dd_sequence(DDKind::XY4, 120e-6, 0.0, rabi);
    const auto det = sample_ensemble(line);
    double expected = 0.0;
    for (double d : det) {
      const mat2 u = integrate_sequence(dd, rabi * (1.0 + err.area_error), d, 1e-9);
      expected += std::norm(u(0, 1));
    }
    expected /= det.size();
    CHECK(residual_excitation(dd, err, line) == doctest::Approx(expected).epsilon(1e-4).scale(1e-6));
    CHECK(expected > 1e-4);
  }

  TEST_CASE("pulse errors and noise calibration") {
    SpinBathParams line;
    line.n_atoms = 500;
    PulseErrorModel err;
    err.finite_rabi = true;
    const auto xx = dd_sequence(DDKind::XX, 20e-3);
    const auto xy4 = dd_sequence(DDKind::XY4, 20e-3);
    // phase-alternating sequences leave less population behind than repeated X pulses
    CHECK(residual_excitation(xy4, err, line) < residual_excitation(xx, err, line));
    const double kappa = calibrate_noise_gain(0.0073, xy4, err, line);
    err.excitation_to_photon_gain = kappa;
    CHECK(readout_noise(xy4, err, line) == doctest::Approx(0.0073));
    CHECK_THROWS_AS(calibrate_noise_gain(0.01, xy4, PulseErrorModel{}, line), std::domain_error);
    PulseErrorModel bad;
    bad.area_error = 0.7;
    CHECK_THROWS(bad.validate());
  }

  TEST_CASE("efficiency decay table") {
    SpinBathParams b;
    b.n_atoms = 500;
    b.ou_sigma_hz = 60.0;
    const auto t = efficiency_decay(DDKind::XY4, {0.0, 20e-3, 80e-3}, b, PulseErrorModel{});
    REQUIRE(t.size() == 3);
    CHECK(t[0].eta == 1.0);
    CHECK(t[1].eta > t[2].eta);
    CHECK_THROWS(efficiency_decay(DDKind::XY4, {20e-3, 10e-3}, b, PulseErrorModel{}));
    const auto again = efficiency_decay(DDKind::XY4, {0.0, 20e-3, 80e-3}, b, PulseErrorModel{});
    CHECK(again[2].eta == t[2].eta);
  }
}
