#include "afcmem/spin_sim.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

#include "afcmem/random.hpp"

namespace afcmem {

void SpinBathParams::validate() const {
  if (inhom_fwhm_hz < 0.0) throw std::invalid_argument("inhom_fwhm_hz must be nonnegative");
  if (ou_sigma_hz < 0.0) throw std::invalid_argument("ou_sigma_hz must be nonnegative");
  if (!(ou_tau_c_s > 0.0)) throw std::invalid_argument("ou_tau_c_s must be positive");
  if (n_atoms == 0) throw std::invalid_argument("n_atoms must be positive");
}

void PulseErrorModel::validate() const {
  if (!(std::abs(area_error) < 0.5)) throw std::invalid_argument("|area_error| must be below 0.5");
  if (!std::isfinite(phase_error_rad)) throw std::invalid_argument("phase_error_rad must be finite");
  if (excitation_to_photon_gain < 0.0) throw std::invalid_argument("excitation_to_photon_gain must be nonnegative");
}

std::vector<double> sample_ensemble(const SpinBathParams& params) {
  params.validate();
  std::vector<double> d(params.n_atoms);
  const double s = params.inhom_sigma_hz();
  for (std::size_t i = 0; i < params.n_atoms; ++i) {
    auto rng = substream(params.seed, i);
    std::normal_distribution<double> g;
    d[i] = s * g(rng);
  }
  return d;
}

std::vector<double> ou_trajectory(double sigma_hz, double tau_c_s, double dt_s, std::size_t n_steps,
                                  std::uint64_t seed) {
  if (!(dt_s > 0.0)) throw std::invalid_argument("ou_trajectory: dt must be positive");
  if (!(tau_c_s > 0.0) || sigma_hz < 0.0) throw std::invalid_argument("ou_trajectory: bad sigma or tau_c");
  std::vector<double> x(n_steps + 1, 0.0);
  if (sigma_hz == 0.0) return x;
  auto rng = substream(seed, 0);
  std::normal_distribution<double> g;
  const double a = std::exp(-dt_s / tau_c_s);
  const double b = sigma_hz * std::sqrt(-std::expm1(-2.0 * dt_s / tau_c_s));
  x[0] = sigma_hz * g(rng);
  for (std::size_t k = 0; k < n_steps; ++k) x[k + 1] = a * x[k] + b * g(rng);
  return x;
}

namespace {

using mat2 = Eigen::Matrix2cd;

// Basis order (s, g); free precession exp(-i pi phi sz) for an accumulated phase phi in cycles.
mat2 free_evolution(double phi_cycles) {
  mat2 u = mat2::Zero();
  u(0, 0) = std::polar(1.0, -pi * phi_cycles);
  u(1, 1) = std::polar(1.0, pi * phi_cycles);
  return u;
}

// exp(-i (ax sx + ay sy + az sz))
mat2 su2(double ax, double ay, double az) {
  const double n = std::sqrt(ax * ax + ay * ay + az * az);
  mat2 u;
  if (n == 0.0) return mat2::Identity();
  const double c = std::cos(n), s = std::sin(n) / n;
  const cplx i(0.0, 1.0);
  u(0, 0) = c - i * s * az;
  u(1, 1) = c + i * s * az;
  u(0, 1) = -i * s * cplx(ax, -ay);
  u(1, 0) = -i * s * cplx(ax, ay);
  return u;
}

mat2 pulse_unitary(const DDSequence& dd, double phase, const PulseErrorModel& err, double detuning_hz) {
  const double ph = phase + err.phase_error_rad;
  const double scale = 1.0 + err.area_error;
  if (!err.finite_rabi) {
    const double half_angle = 0.5 * pi * scale;
    return su2(half_angle * std::cos(ph), half_angle * std::sin(ph), 0.0);
  }
  const double tp = dd.pulse_duration_s;
  const double a = pi * tp * dd.rabi_hz * scale;
  const mat2 core = su2(a * std::cos(ph), a * std::sin(ph), pi * tp * detuning_hz);
  // free precession across the pulse is already counted at the pulse centre
  const mat2 back = free_evolution(-0.5 * detuning_hz * tp);
  return back * core * back;
}

struct Layout {
  int n_segments = 1;
  std::vector<int> steps;     // OU steps per segment
  std::vector<double> length; // seconds
  double dt = 0.0;
};

Layout make_layout(const DDSequence& dd, int steps_per_tau) {
  if (steps_per_tau < 1) throw std::invalid_argument("steps_per_tau must be positive");
  Layout l;
  const int n = dd.n_pulses();
  const double t = dd.total_time_s;
  if (n == 0) {
    l.dt = t / (2.0 * steps_per_tau);
    l.steps = {2 * steps_per_tau};
    l.length = {t};
    return l;
  }
  const double tau = t / (2.0 * n);
  l.dt = tau / steps_per_tau;
  l.n_segments = n + 1;
  for (int j = 0; j <= n; ++j) {
    const bool edge = j == 0 || j == n;
    l.steps.push_back(edge ? steps_per_tau : 2 * steps_per_tau);
    l.length.push_back(edge ? tau : 2.0 * tau);
  }
  // segment boundaries must land on the pulse centres
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    acc += l.length[j];
    if (std::abs(acc - dd.centers_s[j]) > 1e-9 * t) throw std::logic_error("OU grid misaligned with pulse centres");
  }
  return l;
}

}  // namespace

SpinStorageResult spin_echo_coherence(const DDSequence& dd, const SpinBathParams& bath,
                                      const PulseErrorModel& errors, const SpinSimOptions& opts) {
  bath.validate();
  errors.validate();
  const Layout lay = make_layout(dd, opts.steps_per_tau);
  const bool ideal = errors.ideal();
  const bool with_ou = bath.ou_sigma_hz > 0.0;
  const double a = std::exp(-lay.dt / bath.ou_tau_c_s);
  const double b = bath.ou_sigma_hz * std::sqrt(-std::expm1(-2.0 * lay.dt / bath.ou_tau_c_s));
  const double sig = bath.inhom_sigma_hz();
  const std::size_t n_atoms = bath.n_atoms;

  std::vector<double> seg_phi(lay.n_segments);
  std::vector<cplx> z(n_atoms);
  double resid = 0.0;
  SpinStorageResult r;
  if (opts.keep_phases) r.per_atom_phases.resize(n_atoms);

  for (std::size_t i = 0; i < n_atoms; ++i) {
    auto rng = substream(bath.seed, i);
    std::normal_distribution<double> g;
    const double ds = sig * g(rng);
    double x = with_ou ? bath.ou_sigma_hz * g(rng) : 0.0;
    for (int s = 0; s < lay.n_segments; ++s) {
      double acc = 0.0;
      if (with_ou) {
        for (int k = 0; k < lay.steps[s]; ++k) {
          const double xn = a * x + b * g(rng);
          acc += 0.5 * (x + xn);
          x = xn;
        }
        acc *= lay.dt;
      }
      seg_phi[s] = ds * lay.length[s] + acc;
    }

    if (ideal) {
      double phi = 0.0;
      for (int s = 0; s < lay.n_segments; ++s) phi += (s % 2 == 0 ? 1.0 : -1.0) * seg_phi[s];
      z[i] = std::polar(1.0, -two_pi * phi);
    } else {
      mat2 u = free_evolution(seg_phi[0]);
      for (int p = 0; p < dd.n_pulses(); ++p) {
        u = pulse_unitary(dd, dd.phases_rad[p], errors, ds) * u;
        u = free_evolution(seg_phi[p + 1]) * u;
      }
      z[i] = u(0, 0) * std::conj(u(1, 1));
      resid += std::norm(u(0, 1));
    }
    if (opts.keep_phases) r.per_atom_phases[i] = std::arg(z[i]);
  }

  cplx mean(0.0);
  for (const auto& v : z) mean += v;
  mean /= static_cast<double>(n_atoms);
  r.coherence = std::min(1.0, std::abs(mean));
  const cplx dir = r.coherence > 0.0 ? mean / std::abs(mean) : cplx(1.0);
  double var = 0.0;
  for (const auto& v : z) {
    const double p = (v * std::conj(dir)).real() - r.coherence;
    var += p * p;
  }
  var /= static_cast<double>(n_atoms > 1 ? n_atoms - 1 : 1);
  r.coherence_stderr = std::sqrt(var / static_cast<double>(n_atoms));
  r.eta_spin = r.coherence * r.coherence;
  r.eta_stderr = 2.0 * r.coherence * r.coherence_stderr;
  r.residual_excitation = ideal ? 0.0 : resid / static_cast<double>(n_atoms);
  r.p_noise_per_mode = errors.excitation_to_photon_gain * r.residual_excitation;
  return r;
}

double residual_excitation(const DDSequence& dd, const PulseErrorModel& errors, const SpinBathParams& line) {
  errors.validate();
  if (errors.ideal()) return 0.0;
  const auto det = sample_ensemble(line);
  const int n = dd.n_pulses();
  std::vector<double> gaps;
  for (int p = 0; p <= n; ++p) {
    const double lo = p == 0 ? 0.0 : dd.centers_s[p - 1];
    const double hi = p == n ? dd.total_time_s : dd.centers_s[p];
    gaps.push_back(hi - lo);
  }
  double sum = 0.0;
  for (double d : det) {
    mat2 u = free_evolution(d * gaps[0]);
    for (int p = 0; p < n; ++p) {
      u = pulse_unitary(dd, dd.phases_rad[p], errors, d) * u;
      u = free_evolution(d * gaps[p + 1]) * u;
    }
    sum += std::norm(u(0, 1));
  }
  return sum / static_cast<double>(det.size());
}

double readout_noise(const DDSequence& dd, const PulseErrorModel& errors, const SpinBathParams& line) {
  return errors.excitation_to_photon_gain * residual_excitation(dd, errors, line);
}

double calibrate_noise_gain(double target_p_noise, const DDSequence& dd, const PulseErrorModel& errors,
                            const SpinBathParams& line) {
  if (target_p_noise < 0.0) throw std::invalid_argument("noise target must be nonnegative");
  const double r = residual_excitation(dd, errors, line);
  if (r <= 0.0) throw std::domain_error("sequence produces no residual excitation to calibrate against");
  return target_p_noise / r;
}

std::vector<DecayPoint> efficiency_decay(DDKind kind, const std::vector<double>& t_list, const SpinBathParams& bath,
                                         const PulseErrorModel& errors, double rabi_hz, const SpinSimOptions& opts) {
  if (!std::is_sorted(t_list.begin(), t_list.end())) throw std::invalid_argument("t_list must be ascending");
  std::vector<DecayPoint> out;
  for (std::size_t j = 0; j < t_list.size(); ++j) {
    if (t_list[j] == 0.0) {
      out.push_back({0.0, 1.0, 0.0});
      continue;
    }
    SpinBathParams b = bath;
    b.seed = derive_seed(bath.seed, j);
    const auto seq = dd_sequence(kind, t_list[j], 0.0, rabi_hz);
    const auto r = spin_echo_coherence(seq, b, errors, opts);
    out.push_back({t_list[j], r.eta_spin, r.eta_stderr});
  }
  return out;
}

void write_decay_csv(const std::vector<DecayPoint>& table, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "t_s,eta,stderr\n" << std::setprecision(12);
  for (const auto& p : table) f << p.t_s << ',' << p.eta << ',' << p.eta_err << '\n';
}

namespace {

// Phase variance in cycles^2 for unit OU amplitude, from the toggling-frame segment list.
double ou_unit_variance(const DDSequence& dd, double tau_c) {
  const int n = dd.n_pulses();
  std::vector<double> len, start;
  for (int p = 0; p <= n; ++p) {
    const double lo = p == 0 ? 0.0 : dd.centers_s[p - 1];
    const double hi = p == n ? dd.total_time_s : dd.centers_s[p];
    start.push_back(lo);
    len.push_back(hi - lo);
  }
  double v = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double li = len[i];
    v += 2.0 * tau_c * (li + tau_c * std::expm1(-li / tau_c));
    for (int j = i + 1; j <= n; ++j) {
      const double sign = ((j - i) % 2 == 0) ? 1.0 : -1.0;
      const double gap = start[j] - (start[i] + li);
      v += 2.0 * sign * tau_c * tau_c * (-std::expm1(-li / tau_c)) * (-std::expm1(-len[j] / tau_c)) *
           std::exp(-gap / tau_c);
    }
  }
  return v;
}

}  // namespace

double ou_gaussian_coherence(const DDSequence& dd, double sigma_hz, double tau_c_s) {
  const double v = sigma_hz * sigma_hz * ou_unit_variance(dd, tau_c_s);
  return std::exp(-0.5 * two_pi * two_pi * v);
}

double ou_t2(DDKind kind, double sigma_hz, double tau_c_s) {
  if (!(sigma_hz > 0.0)) throw std::invalid_argument("ou_t2 needs a positive sigma");
  auto f = [&](double t) {
    const auto seq = dd_sequence(kind, t, 1e-12, 1.0);
    return two_pi * two_pi * sigma_hz * sigma_hz * ou_unit_variance(seq, tau_c_s) - 2.0;
  };
  double lo = 1e-7, hi = 1e4;
  if (f(lo) > 0.0 || f(hi) < 0.0) throw std::domain_error("ou_t2: no crossing in range");
  for (int it = 0; it < 200 && hi / lo > 1.0 + 1e-13; ++it) {
    const double mid = std::sqrt(lo * hi);
    (f(mid) < 0.0 ? lo : hi) = mid;
  }
  return std::sqrt(lo * hi);
}

double calibrate_ou_sigma(DDKind kind, double t2_s, double tau_c_s) {
  const auto seq = dd_sequence(kind, t2_s, 1e-12, 1.0);
  return std::sqrt(2.0 / (two_pi * two_pi * ou_unit_variance(seq, tau_c_s)));
}

}  // namespace afcmem
