#include "afcmem/analysis.hpp"

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "afcmem/random.hpp"
#include "afcmem/waveform.hpp"

namespace afcmem {

std::array<double, 3> DensityMatrix::bloch() const {
  return {2.0 * m(1, 0).real(), 2.0 * m(1, 0).imag(), (m(0, 0) - m(1, 1)).real()};
}

std::array<double, 2> DensityMatrix::eigenvalues() const {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(m);
  return {es.eigenvalues()(1), es.eigenvalues()(0)};
}

Eigen::Vector2cd projection_state(Projection p) {
  const double s = 1.0 / std::sqrt(2.0);
  const cplx i(0.0, 1.0);
  switch (p) {
    case proj_E: return {1.0, 0.0};
    case proj_L: return {0.0, 1.0};
    case proj_plus: return {s, s};
    case proj_minus: return {s, -s};
    case proj_plus_i: return {s, s * i};
    case proj_minus_i: return {s, -s * i};
  }
  return {1.0, 0.0};
}

std::array<double, 3> pauli_expectations(const TomoCounts& tc, bool subtract_noise) {
  std::array<double, 6> rate{};
  for (int j = 0; j < 6; ++j) {
    if (tc.counts[j] < 0.0) throw std::invalid_argument("tomography counts must be nonnegative");
    if (!(tc.trials[j] > 0.0)) throw std::invalid_argument("tomography trial numbers must be positive");
    double c = tc.counts[j];
    if (subtract_noise) c = std::max(0.0, c - tc.noise[j]);
    rate[j] = c / tc.trials[j];
  }
  auto expect = [&](int a, int b) {
    const double tot = rate[a] + rate[b];
    if (!(tot > 0.0)) throw std::invalid_argument("zero total counts in a measurement basis");
    return (rate[a] - rate[b]) / tot;
  };
  return {expect(proj_plus, proj_minus), expect(proj_plus_i, proj_minus_i), expect(proj_E, proj_L)};
}

DensityMatrix direct_inversion(const std::array<double, 3>& r_in) {
  for (double v : r_in)
    if (!std::isfinite(v)) throw std::invalid_argument("Bloch vector must be finite");
  auto r = r_in;
  DensityMatrix rho;
  const double n = std::sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2]);
  if (n > 1.0) {
    for (double& v : r) v /= n;
    rho.projected = true;
  }
  rho.m(0, 0) = 0.5 * (1.0 + r[2]);
  rho.m(1, 1) = 0.5 * (1.0 - r[2]);
  rho.m(0, 1) = 0.5 * cplx(r[0], -r[1]);
  rho.m(1, 0) = 0.5 * cplx(r[0], r[1]);
  return rho;
}

double fidelity(const DensityMatrix& rho, const Eigen::Vector2cd& psi) {
  const Eigen::Vector2cd v = psi.normalized();
  return std::clamp((v.adjoint() * rho.m * v)(0, 0).real(), 0.0, 1.0);
}

double purity(const DensityMatrix& rho) { return std::clamp((rho.m * rho.m).trace().real(), 0.0, 1.0); }

double trace_distance(const DensityMatrix& a, const DensityMatrix& b) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(a.m - b.m);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double max_fidelity_from_purity(double p) {
  if (!(p >= 0.5 && p <= 1.0)) throw std::invalid_argument("purity must lie in [0.5, 1]");
  return 0.5 * (1.0 + std::sqrt(2.0 * p - 1.0));
}

double white_noise_fidelity(double snr) {
  if (!(snr >= 0.0)) throw std::invalid_argument("snr must be nonnegative");
  if (std::isinf(snr)) return 1.0;
  return (snr + 1.0) / (snr + 2.0);
}

double measure_prepare_fidelity(int n_copies) {
  if (n_copies < 0) throw std::invalid_argument("copy number must be nonnegative");
  return (n_copies + 1.0) / (n_copies + 2.0);
}

double classical_bound_weak_coherent(double mu, double eta) {
  if (!(mu > 0.0)) throw std::invalid_argument("mu must be positive");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("eta must lie in (0, 1]");
  const int n_max = static_cast<int>(std::ceil(mu + 40.0 * std::sqrt(mu) + 60.0));
  std::vector<double> p(n_max + 1);
  for (int n = 0; n <= n_max; ++n) p[n] = std::exp(n * std::log(mu) - mu - std::lgamma(n + 1.0));
  double budget = eta, score = 0.0, used = 0.0;
  for (int n = n_max; n >= 0 && budget > 0.0; --n) {
    const double take = std::min(p[n], budget);
    score += take * measure_prepare_fidelity(n);
    used += take;
    budget -= take;
  }
  return score / used;
}

TomoCounts synthesize_tomo_counts(const DensityMatrix& rho, double mean_photons, double trials,
                                  std::uint64_t seed, double noise_mean) {
  if (mean_photons < 0.0 || noise_mean < 0.0 || !(trials > 0.0))
    throw std::invalid_argument("synthesize_tomo_counts: bad photon number or trials");
  TomoCounts tc;
  for (int j = 0; j < 6; ++j) {
    const double pj = fidelity(rho, projection_state(static_cast<Projection>(j)));
    const double mean = trials * (mean_photons * pj + noise_mean);
    auto rng = substream(seed, static_cast<std::uint64_t>(j));
    tc.counts[j] = mean > 0.0 ? static_cast<double>(std::poisson_distribution<std::uint64_t>(mean)(rng)) : 0.0;
    tc.trials[j] = trials;
    tc.noise[j] = trials * noise_mean;
  }
  return tc;
}

// ---- fitting ----

FitResult levenberg_marquardt(const ModelFn& model, std::span<const double> x, std::span<const double> y,
                              std::span<const double> sigma, std::vector<double> p0, const LmOptions& opts) {
  const auto n = static_cast<Eigen::Index>(x.size());
  const auto np = static_cast<Eigen::Index>(p0.size());
  if (y.size() != x.size()) throw std::invalid_argument("fit: x and y sizes differ");
  if (!sigma.empty() && sigma.size() != x.size()) throw std::invalid_argument("fit: sigma size mismatch");
  if (n < np + 2) throw std::invalid_argument("fit: need at least two more points than parameters");
  for (double s : sigma)
    if (!(s > 0.0)) throw std::invalid_argument("fit: sigma must be positive");

  Eigen::VectorXd r(n);
  Eigen::MatrixXd jac(n, np);
  std::vector<double> grad(p0.size());
  auto evaluate = [&](const std::vector<double>& p, Eigen::VectorXd& res, Eigen::MatrixXd* j) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = sigma.empty() ? 1.0 : 1.0 / sigma[i];
      res(i) = w * (model(x[i], p, grad) - y[i]);
      if (j)
        for (Eigen::Index k = 0; k < np; ++k) (*j)(i, k) = w * grad[k];
    }
    return res.allFinite() ? 0.5 * res.squaredNorm() : std::numeric_limits<double>::infinity();
  };

  FitResult out;
  std::vector<double> p = p0;
  double cost = evaluate(p, r, &jac);
  if (!std::isfinite(cost)) throw std::invalid_argument("fit: model not finite at the starting point");
  Eigen::MatrixXd jtj = jac.transpose() * jac;
  Eigen::VectorXd g = jac.transpose() * r;
  double lambda = 1e-3 * std::max(jtj.diagonal().maxCoeff(), 1e-300);
  Eigen::VectorXd r_try(n);
  auto scaled_gradient = [&]() {
    const double denom = jac.colwise().norm().maxCoeff() * r.norm();
    return denom > 0.0 ? g.cwiseAbs().maxCoeff() / denom : 0.0;
  };

  bool small_step = false;
  int it = 0;
  for (; it < opts.max_iterations; ++it) {
    if (g.cwiseAbs().maxCoeff() < opts.gtol) break;
    Eigen::MatrixXd a = jtj;
    for (Eigen::Index k = 0; k < np; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-30);
    const Eigen::VectorXd step = a.ldlt().solve(-g);
    double pnorm = 0.0;
    for (double v : p) pnorm += v * v;
    pnorm = std::sqrt(pnorm);
    std::vector<double> trial(p);
    for (Eigen::Index k = 0; k < np; ++k) trial[k] += step(k);
    const double c_try = evaluate(trial, r_try, nullptr);
    if (std::isfinite(c_try) && c_try <= cost) {
      p = trial;
      cost = evaluate(p, r, &jac);
      jtj = jac.transpose() * jac;
      g = jac.transpose() * r;
      lambda = std::max(lambda / 10.0, 1e-15);
      if (step.norm() <= opts.xtol * (pnorm + opts.xtol)) {
        small_step = true;
        break;
      }
    } else {
      lambda *= 10.0;
      if (lambda > 1e20) break;
    }
  }

  out.params = p;
  out.iterations = it;
  out.residual_norm = r.norm();
  out.gradient_norm = scaled_gradient();
  const bool tiny_gradient = g.cwiseAbs().maxCoeff() < opts.gtol;
  out.converged = (tiny_gradient || small_step) && (tiny_gradient || out.gradient_norm < 1e-6);
  if (!out.converged) {
    if (lambda > 1e20 && out.gradient_norm < 1e-6) {
      out.converged = true;
      out.message = "converged (rounding limited)";
    } else {
      out.message = it >= opts.max_iterations ? "iteration limit reached" : "no further decrease possible";
    }
  } else {
    out.message = tiny_gradient ? "gradient below tolerance" : "relative step below tolerance";
  }

  const double dof = static_cast<double>(n - np);
  const double s2 = 2.0 * cost / dof;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(jtj);
  const double tq = boost::math::quantile(boost::math::students_t(dof), 0.975);
  out.ci95.assign(p.size(), std::numeric_limits<double>::infinity());
  if (lu.isInvertible()) {
    const Eigen::MatrixXd cov = lu.inverse() * s2;
    for (Eigen::Index k = 0; k < np; ++k) out.ci95[k] = tq * std::sqrt(std::max(cov(k, k), 0.0));
  } else {
    out.message += "; singular normal matrix, confidence intervals undefined";
  }
  return out;
}

double afc_decay_fn(double x, std::span<const double> p, std::span<double> grad, double zeeman_split_hz) {
  const double eta0 = p[0], t2 = p[1], md = p[2];
  const double e = std::exp(-4.0 * x / t2);
  const double s = std::sin(pi * zeeman_split_hz * x);
  const double mod = 1.0 - md * s * s;
  if (!grad.empty()) {
    grad[0] = e * mod;
    grad[1] = eta0 * e * mod * 4.0 * x / (t2 * t2);
    grad[2] = -eta0 * e * s * s;
  }
  return eta0 * e * mod;
}

double mims_fn(double x, std::span<const double> p, std::span<double> grad) {
  const double eta0 = p[0], t2 = p[1], m = p[2];
  const double u = x > 0.0 ? std::pow(x / t2, m) : 0.0;
  const double e = std::exp(-2.0 * u);
  if (!grad.empty()) {
    grad[0] = e;
    grad[1] = eta0 * e * 2.0 * m * u / t2;
    grad[2] = x > 0.0 ? -2.0 * eta0 * e * u * std::log(x / t2) : 0.0;
  }
  return eta0 * e;
}

double log_power_law_fn(double log_n, std::span<const double> p, std::span<double> grad) {
  if (!grad.empty()) {
    grad[0] = 1.0 / p[0];
    grad[1] = log_n;
  }
  return std::log(p[0]) + p[1] * log_n;
}

namespace {

void check_positive(const XY& d) {
  if (d.x.size() != d.y.size()) throw std::invalid_argument("fit data: x and y sizes differ");
  for (double v : d.y)
    if (!(v > 0.0)) throw std::invalid_argument("fit data: ordinates must be positive");
}

// Least-squares line y = a + b x.
std::pair<double, double> line_fit(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double den = n * sxx - sx * sx;
  const double b = den != 0.0 ? (n * sxy - sx * sy) / den : 0.0;
  return {(sy - b * sx) / n, b};
}

}  // namespace

FitResult fit_afc_decay(const XY& data, double zeeman_split_hz, std::vector<double> p0) {
  check_positive(data);
  if (p0.empty()) {
    std::vector<double> ly;
    for (double v : data.y) ly.push_back(std::log(v));
    const auto [a, b] = line_fit(data.x, ly);
    p0 = {std::exp(a), b < 0.0 ? -4.0 / b : 1e-3, 0.1};
  }
  auto f = [zeeman_split_hz](double x, std::span<const double> p, std::span<double> g) {
    return afc_decay_fn(x, p, g, zeeman_split_hz);
  };
  auto r = levenberg_marquardt(f, data.x, data.y, data.sigma, p0);
  r.names = {"eta0", "t2afc_s", "mod_depth"};
  return r;
}

FitResult fit_mims(const XY& data, std::vector<double> p0) {
  check_positive(data);
  if (p0.empty()) {
    const double e0 = *std::max_element(data.y.begin(), data.y.end()) * 1.05;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < data.x.size(); ++i)
      if (data.x[i] > 0.0 && data.y[i] < e0) {
        lx.push_back(std::log(data.x[i]));
        ly.push_back(std::log(-0.5 * std::log(data.y[i] / e0)));
      }
    double m = 2.0, t2 = data.x.back();
    if (lx.size() >= 2) {
      const auto [a, b] = line_fit(lx, ly);
      if (b > 0.1) {
        m = b;
        t2 = std::exp(-a / b);
      }
    }
    p0 = {e0, t2, m};
  }
  auto r = levenberg_marquardt(mims_fn, data.x, data.y, data.sigma, p0);
  r.names = {"eta0", "t2_s", "m"};
  return r;
}

FitResult fit_power_law(const XY& data) {
  check_positive(data);
  std::vector<double> lx, ly, ls;
  for (std::size_t i = 0; i < data.x.size(); ++i) {
    if (!(data.x[i] > 0.0)) throw std::invalid_argument("power-law fit needs positive abscissae");
    lx.push_back(std::log(data.x[i]));
    ly.push_back(std::log(data.y[i]));
    if (!data.sigma.empty()) ls.push_back(data.sigma[i] / data.y[i]);
  }
  const auto [a, b] = line_fit(lx, ly);
  auto r = levenberg_marquardt(log_power_law_fn, lx, ly, ls, {std::exp(a), b});
  r.names = {"t2_1", "gamma"};
  return r;
}

}  // namespace afcmem
