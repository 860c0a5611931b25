#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace afcmem {

struct DensityMatrix {
  Eigen::Matrix2cd m = Eigen::Matrix2cd::Identity() * 0.5;
  bool projected = false;  // Bloch vector was rescaled onto the unit sphere

  std::array<double, 3> bloch() const;
  std::array<double, 2> eigenvalues() const;
};

enum Projection { proj_E = 0, proj_L, proj_plus, proj_minus, proj_plus_i, proj_minus_i };

struct TomoCounts {
  std::array<double, 6> counts{};
  std::array<double, 6> trials{1, 1, 1, 1, 1, 1};
  std::array<double, 6> noise{};  // expected noise counts per projection, for optional subtraction
};

std::array<double, 3> pauli_expectations(const TomoCounts& tc, bool subtract_noise = false);
DensityMatrix direct_inversion(const std::array<double, 3>& r);
double fidelity(const DensityMatrix& rho, const Eigen::Vector2cd& psi);
double purity(const DensityMatrix& rho);
double trace_distance(const DensityMatrix& a, const DensityMatrix& b);
double max_fidelity_from_purity(double p);
double white_noise_fidelity(double snr);
// Optimal measure-and-prepare fidelity from N copies of a qubit.
double measure_prepare_fidelity(int n_copies);
double classical_bound_weak_coherent(double mu, double eta);

// Poisson counts for the six projections of rho; signal mean per projection is mean_photons * <P>.
TomoCounts synthesize_tomo_counts(const DensityMatrix& rho, double mean_photons, double trials,
                                  std::uint64_t seed, double noise_mean = 0.0);

// Qubit basis states |E> = (1, 0), |L> = (0, 1).
Eigen::Vector2cd projection_state(Projection p);

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> ci95;  // half widths
  double residual_norm = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

struct LmOptions {
  int max_iterations = 500;
  double xtol = 1e-9;
  double gtol = 1e-12;
};

// Model value at x with its gradient with respect to the parameters.
using ModelFn = std::function<double(double x, std::span<const double> p, std::span<double> grad)>;

FitResult levenberg_marquardt(const ModelFn& model, std::span<const double> x, std::span<const double> y,
                              std::span<const double> sigma, std::vector<double> p0,
                              const LmOptions& opts = {});

struct XY {
  std::vector<double> x, y, sigma;  // sigma optional
};

// (one_over_delta_s, efficiency); parameters eta0, t2afc_s, mod_depth.
FitResult fit_afc_decay(const XY& data, double zeeman_split_hz = 41.4e3, std::vector<double> p0 = {});
// (t_s, eta); parameters eta0, t2_s, m.
FitResult fit_mims(const XY& data, std::vector<double> p0 = {});
// (n_pulses, t2); fitted in log-log space; parameters t2_1, gamma.
FitResult fit_power_law(const XY& data);

// Model functions with analytic gradients, exposed for Jacobian checks.
double afc_decay_fn(double x, std::span<const double> p, std::span<double> grad, double zeeman_split_hz);
double mims_fn(double x, std::span<const double> p, std::span<double> grad);
double log_power_law_fn(double log_n, std::span<const double> p, std::span<double> grad);

}  // namespace afcmem
