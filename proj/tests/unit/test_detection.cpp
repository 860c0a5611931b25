#include <doctest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <limits>

#include "afcmem/detection.hpp"

using namespace afcmem;

namespace {

PhotonFlux flat_flux(double photons_per_bin, std::size_t n_bins, int samples_per_bin, double bin) {
  PhotonFlux f{samples_per_bin / bin, 0.0, std::vector<double>(n_bins * samples_per_bin, photons_per_bin / bin)};
  return f;
}

}  // namespace

TEST_SUITE("detection") {
  TEST_CASE("chain validation") {
    DetectionChain c;
    CHECK(c.efficiency() == doctest::Approx(0.57 * 0.185));
    c.detector_efficiency = 1.2;
    CHECK_THROWS(c.validate());
    c = {};
    c.filter_extinction = 0.5;
    CHECK_THROWS(c.validate());
  }

  TEST_CASE("mean counts follow flux, efficiency and trial number") {
    const double bin = 200e-9;
    const auto f = flat_flux(0.2, 10, 4, bin);
    DetectionChain c;
    const std::uint64_t n = 200000;
    const auto h = simulate_counts(f, c, n, 5, bin);
    REQUIRE(h.counts.size() == 10);
    const double lam = 0.2 * c.efficiency();
    for (auto v : h.counts) CHECK(std::abs(v - lam * n) < 5.0 * std::sqrt(lam * n));
    CHECK(h.n_trials == n);
  }

  TEST_CASE("per-trial counts are Poissonian") {
    // dispersion index across bins: sum (c - m)^2 / m is chi-square with k - 1 dof
    const double bin = 100e-9;
    const std::size_t k = 400;
    const auto f = flat_flux(0.05, k, 2, bin);
    DetectionChain c;
    c.detector_efficiency = 1.0;
    c.path_transmission = 1.0;
    const auto h = simulate_counts(f, c, 2000, 17, bin);
    double mean = 0.0;
    for (auto v : h.counts) mean += v;
    mean /= k;
    double chi = 0.0;
    for (auto v : h.counts) chi += (v - mean) * (v - mean) / mean;
    boost::math::chi_squared dist(k - 1.0);
    const double pval = boost::math::cdf(boost::math::complement(dist, chi));
    CHECK(pval > 1e-3);
    CHECK(pval < 1.0 - 1e-3);
    // within-bin second moment equals mean + mean^2 for a Poisson variable
    const double lam = 0.05;
    for (std::size_t i = 0; i < 5; ++i) {
      const double m2 = static_cast<double>(h.sum_sq[i]) / 2000.0;
      CHECK(m2 == doctest::Approx(lam + lam * lam).epsilon(0.4));
    }
  }

  TEST_CASE("counts are reproducible and independent of block boundaries") {
    const double bin = 200e-9;
    const auto f = flat_flux(0.1, 6, 4, bin);
    DetectionChain c;
    const auto a = simulate_counts(f, c, 10000, 3, bin);
    const auto b = simulate_counts(f, c, 10000, 3, bin);
    CHECK(a.counts == b.counts);
    CHECK(a.sum_sq == b.sum_sq);
    const auto d = simulate_counts(f, c, 10000, 4, bin);
    CHECK(a.counts != d.counts);
  }

  TEST_CASE("bin widths must be whole numbers of samples") {
    const auto f = flat_flux(0.1, 6, 4, 200e-9);
    CHECK_THROWS(simulate_counts(f, DetectionChain{}, 10, 1, 130e-9));
    PhotonFlux bad = f;
    bad.rate[2] = -1.0;
    CHECK_THROWS(simulate_counts(bad, DetectionChain{}, 10, 1, 200e-9));
  }

  TEST_CASE("mode sums with partial bin overlap") {
    CountHistogram h;
    h.bin_width_s = 1.0;
    h.counts = {10, 20, 30, 40};
    h.sum_sq = {10, 20, 30, 40};
    h.n_trials = 100;
    h.detector_efficiency = 0.5;
    h.path_transmission = 1.0;
    const auto m = mode_sums(h, 0.5, 2.0, 2, 1.5);
    REQUIRE(m.counts.size() == 2);
    CHECK(m.counts[0] == doctest::Approx(0.5 * 10 + 20));
    CHECK(m.counts[1] == doctest::Approx(0.5 * 30 + 40));
    CHECK(m.photons[0] == doctest::Approx(25.0 / (100 * 0.5)));
    CHECK_THROWS(mode_sums(h, 3.0, 2.0, 1, 1.5));
    CHECK_THROWS(mode_sums(h, 0.0, 1.0, 2, 1.5));
  }

  TEST_CASE("metrics arithmetic") {
    const auto r = metrics({0.711}, {0.0739 * 0.711 + 0.0073}, {0.0073});
    CHECK(r.eta[0] == doctest::Approx(0.0739));
    CHECK(r.snr[0] == doctest::Approx(0.0739 * 0.711 / 0.0073));
    CHECK(r.mu1[0] == doctest::Approx(0.0073 / 0.0739));
    const auto raw = metrics({1.0}, {0.3}, {0.1}, {}, {}, SnrConvention::raw);
    CHECK(raw.snr[0] == doctest::Approx(3.0));
    const auto clean = metrics({1.0}, {0.2}, {0.0});
    CHECK(std::isinf(clean.snr[0]));
    CHECK(clean.mu1[0] == 0.0);
    CHECK_THROWS_AS(metrics({1.0}, {0.1}, {0.2}), std::domain_error);
    CHECK_THROWS(metrics({1.0, 2.0, 3.0}, {0.1, 0.2}, {0.0, 0.0}));
  }

  TEST_CASE("averages combine modes") {
    const auto r = metrics({1.0}, {0.3, 0.5}, {0.1, 0.1}, {0.01, 0.01}, {0.001, 0.001});
    CHECK(r.eta_avg == doctest::Approx(0.3));
    CHECK(r.snr_avg == doctest::Approx(0.6 / 0.2));
    CHECK(r.mu1_avg == doctest::Approx(0.5 * (0.1 / 0.2 + 0.1 / 0.4)));
    CHECK(r.eta_avg_err == doctest::Approx(std::sqrt(2.0 * (1e-4 + 1e-6)) / 2.0));
  }

  TEST_CASE("noise floor decays exponentially") {
    CHECK(noise_floor_model(0.0, 0.01) == doctest::Approx(0.01));
    CHECK(noise_floor_model(1.9e-3, 0.01) == doctest::Approx(0.01 / std::exp(1.0)));
    CHECK_THROWS(noise_floor_model(-1.0, 0.01));
  }
}
