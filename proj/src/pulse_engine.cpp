#include "afcmem/pulse_engine.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace afcmem {

namespace {

double log_cosh(double x) {
  const double a = std::abs(x);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

double sech(double x) { return 1.0 / std::cosh(x); }

}  // namespace

void HshSpec::validate() const {
  if (!(duration_s > 0.0)) throw std::invalid_argument("HSH duration must be positive");
  if (bandwidth_hz < 0.0) throw std::invalid_argument("HSH bandwidth must be nonnegative");
  if (!(edge_fraction > 0.0 && edge_fraction < 0.5)) throw std::invalid_argument("edge_fraction must lie in (0, 0.5)");
  if (!(sech_truncation > 0.0)) throw std::invalid_argument("sech_truncation must be positive");
  if (peak_rabi_hz < 0.0) throw std::invalid_argument("peak_rabi_hz must be nonnegative");
  if (peak_rabi_hz == 0.0 && bandwidth_hz == 0.0)
    throw std::invalid_argument("an unchirped HSH pulse needs an explicit peak_rabi_hz");
  if (sample_rate_hz > 0.0 && sample_rate_hz < 8.0 * (bandwidth_hz + rabi_hz()))
    throw std::invalid_argument("sample rate under-resolves the HSH chirp");
}

double HshSpec::chirp_rate() const {
  const double b = sech_truncation;
  return bandwidth_hz / (plateau_s() + 2.0 * edge_s() * std::tanh(b) / b);
}

double HshSpec::rabi_hz() const {
  return peak_rabi_hz > 0.0 ? peak_rabi_hz : 0.8 * std::sqrt(chirp_rate());
}

double HshSpec::rate_hz() const {
  return sample_rate_hz > 0.0 ? sample_rate_hz : 16.0 * (bandwidth_hz + rabi_hz());
}

double HshSpec::amplitude(double t) const {
  if (t < 0.0 || t > duration_s) return 0.0;
  const double te = edge_s(), tp = plateau_s(), b = sech_truncation;
  if (t < te) return rabi_hz() * sech(b * (t / te - 1.0));
  if (t <= te + tp) return rabi_hz();
  return rabi_hz() * sech(b * (t - te - tp) / te);
}

double HshSpec::instantaneous_frequency(double t) const {
  const double te = edge_s(), tp = plateau_s(), b = sech_truncation;
  const double k = chirp_rate();
  const double half = 0.5 * k * tp;
  t = std::clamp(t, 0.0, duration_s);
  if (t < te) return center_freq_hz - half + k * te / b * std::tanh(b * (t / te - 1.0));
  if (t <= te + tp) return center_freq_hz - half + k * (t - te);
  return center_freq_hz + half + k * te / b * std::tanh(b * (t - te - tp) / te);
}

double HshSpec::phase(double t) const {
  const double te = edge_s(), tp = plateau_s(), b = sech_truncation;
  const double k = chirp_rate();
  const double half = 0.5 * k * tp;
  const double c = k * te * te / (b * b);
  t = std::clamp(t, 0.0, duration_s);
  auto rising = [&](double x) { return (center_freq_hz - half) * x + c * (log_cosh(b * (x / te - 1.0)) - log_cosh(b)); };
  if (t < te) return two_pi * rising(t);
  const double p1 = rising(te);
  if (t <= te + tp) {
    const double x = t - te;
    return two_pi * (p1 + (center_freq_hz - half) * x + 0.5 * k * x * x);
  }
  const double p2 = p1 + (center_freq_hz - half) * tp + 0.5 * k * tp * tp;
  const double x = t - te - tp;
  return two_pi * (p2 + (center_freq_hz + half) * x + c * log_cosh(b * x / te));
}

cplx HshSpec::field(double t) const {
  if (t < 0.0 || t > duration_s) return 0.0;
  return std::polar(amplitude(t), phase(t));
}

double HshSpec::crossing_time(double f) const {
  const double k = chirp_rate();
  if (k <= 0.0) throw std::domain_error("crossing_time needs a chirped pulse");
  const double te = edge_s(), tp = plateau_s(), b = sech_truncation;
  const double half = 0.5 * k * tp;
  const double x = f - center_freq_hz;
  if (std::abs(x) <= half) return te + (x + half) / k;
  const double edge_span = k * te / b;
  const double arg = (std::abs(x) - half) / edge_span;
  if (arg >= std::tanh(b)) throw std::domain_error("frequency outside the swept range");
  const double u = std::atanh(arg) / b * te;
  return x < 0.0 ? te - u : te + tp + u;
}

void ChshSpec::validate() const {
  base.validate();
  if (separation_s < 0.0) throw std::invalid_argument("cHSH separation must be nonnegative");
  if (!(relative_phase_rad >= 0.0 && relative_phase_rad < two_pi))
    throw std::invalid_argument("cHSH relative phase must lie in [0, 2 pi)");
  if (!(amplitude_scale > 0.0)) throw std::invalid_argument("cHSH amplitude_scale must be positive");
}

cplx ChshSpec::field(double t) const {
  return amplitude_scale * (base.field(t) + std::polar(1.0, relative_phase_rad) * base.field(t - separation_s));
}

double ChshSpec::crossing_time(int component, double f) const {
  return base.crossing_time(f) + (component == 0 ? 0.0 : separation_s);
}

namespace {

template <class F>
Waveform sample_field(F&& field, double duration, double rate) {
  const auto n = static_cast<std::size_t>(std::llround(duration * rate)) + 1;
  Waveform w{rate, 0.0, std::vector<cplx>(n)};
  for (std::size_t k = 0; k < n; ++k) w.samples[k] = field(w.time(k));
  return w;
}

}  // namespace

Waveform hsh_waveform(const HshSpec& spec) {
  spec.validate();
  return sample_field([&](double t) { return spec.field(t); }, spec.duration_s, spec.rate_hz());
}

Waveform chsh_waveform(const ChshSpec& spec) {
  spec.validate();
  return sample_field([&](double t) { return spec.field(t); }, spec.duration_s(), spec.base.rate_hz());
}

DDKind dd_kind_from_string(const std::string& s) {
  if (s == "none") return DDKind::none;
  if (s == "XX") return DDKind::XX;
  if (s == "XY4") return DDKind::XY4;
  if (s == "XY8") return DDKind::XY8;
  if (s == "XY16") return DDKind::XY16;
  throw std::invalid_argument("unknown DD kind: " + s);
}

std::string to_string(DDKind k) {
  switch (k) {
    case DDKind::none: return "none";
    case DDKind::XX: return "XX";
    case DDKind::XY4: return "XY4";
    case DDKind::XY8: return "XY8";
    case DDKind::XY16: return "XY16";
  }
  return "?";
}

int pulse_count(DDKind k) {
  switch (k) {
    case DDKind::none: return 0;
    case DDKind::XX: return 2;
    case DDKind::XY4: return 4;
    case DDKind::XY8: return 8;
    case DDKind::XY16: return 16;
  }
  return 0;
}

DDSequence dd_sequence(DDKind kind, double total_time_s, double pulse_duration_s, double rabi_hz) {
  if (!(total_time_s > 0.0)) throw std::invalid_argument("DD total time must be positive");
  if (!(rabi_hz > 0.0)) throw std::invalid_argument("DD Rabi frequency must be positive");
  if (pulse_duration_s < 0.0) throw std::invalid_argument("DD pulse duration must be nonnegative");
  DDSequence seq;
  seq.kind = kind;
  seq.total_time_s = total_time_s;
  seq.rabi_hz = rabi_hz;
  seq.pulse_duration_s = pulse_duration_s > 0.0 ? pulse_duration_s : 0.5 / rabi_hz;

  const double h = pi / 2.0;
  switch (kind) {
    case DDKind::none: break;
    case DDKind::XX: seq.phases_rad = {0.0, 0.0}; break;
    case DDKind::XY4: seq.phases_rad = {0.0, h, 0.0, h}; break;
    case DDKind::XY8:
    case DDKind::XY16: {
      seq.phases_rad = {0.0, h, 0.0, h, h, 0.0, h, 0.0};
      if (kind == DDKind::XY16)
        for (int j = 0; j < 8; ++j) seq.phases_rad.push_back(seq.phases_rad[j] + pi);
      break;
    }
  }
  const int n = pulse_count(kind);
  if (n == 0) return seq;
  if (!(total_time_s > 2.0 * n * seq.pulse_duration_s))
    throw std::invalid_argument("DD total time too short for the pulse train");
  const double tau = total_time_s / (2.0 * n);
  for (int j = 0; j < n; ++j) seq.centers_s.push_back((2 * j + 1) * tau);
  for (int j = 0; j + 1 < n; ++j)
    if (seq.centers_s[j + 1] - seq.centers_s[j] < seq.pulse_duration_s)
      throw std::invalid_argument("DD pulses overlap");
  if (seq.centers_s.front() < 0.5 * seq.pulse_duration_s) throw std::invalid_argument("DD pulses overlap the window edge");
  return seq;
}

namespace {

void check_finite(const Waveform& w) {
  if (!(w.sample_rate_hz > 0.0)) throw std::invalid_argument("waveform sample rate must be positive");
  for (const auto& s : w.samples)
    if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) throw std::invalid_argument("non-finite waveform sample");
}

// Sub-steps per sample interval for fixed-step RK4 with linear field interpolation.
int substeps(const Waveform& w, double detuning_hz, double step_scale) {
  const double omax = w.peak_abs();
  const double a = std::max(omax, std::abs(detuning_hz));
  const double g = two_pi * std::hypot(omax, detuning_hz);
  double h = w.dt();
  if (a > 0.0) h = std::min(h, 1.0 / (32.0 * a));
  if (g > 0.0) h = std::min(h, 0.01 / g);
  h *= step_scale;
  return std::max(1, static_cast<int>(std::ceil(w.dt() / h - 1e-9)));
}

}  // namespace

BlochVector bloch_propagate(const Waveform& waveform, double detuning_hz, BlochVector r, double step_scale) {
  check_finite(waveform);
  if (!(step_scale > 0.0)) throw std::invalid_argument("step_scale must be positive");
  if (waveform.samples.size() < 2) return r;
  const int m = substeps(waveform, detuning_hz, step_scale);
  const double h = waveform.dt() / m;
  const double wz = two_pi * detuning_hz;
  auto deriv = [wz](const cplx& om, const BlochVector& v) {
    const double wx = two_pi * om.real(), wy = two_pi * om.imag();
    return BlochVector{wy * v[2] - wz * v[1], wz * v[0] - wx * v[2], wx * v[1] - wy * v[0]};
  };
  auto axpy = [](const BlochVector& v, double s, const BlochVector& d) {
    return BlochVector{v[0] + s * d[0], v[1] + s * d[1], v[2] + s * d[2]};
  };
  const auto& s = waveform.samples;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const cplx a = s[k], da = s[k + 1] - s[k];
    for (int j = 0; j < m; ++j) {
      const double x0 = static_cast<double>(j) / m;
      const cplx o1 = a + da * x0, o2 = a + da * (x0 + 0.5 / m), o3 = a + da * (x0 + 1.0 / m);
      const BlochVector k1 = deriv(o1, r);
      const BlochVector k2 = deriv(o2, axpy(r, 0.5 * h, k1));
      const BlochVector k3 = deriv(o2, axpy(r, 0.5 * h, k2));
      const BlochVector k4 = deriv(o3, axpy(r, h, k3));
      for (int i = 0; i < 3; ++i) r[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  return r;
}

Spinor propagate_amplitudes(const Waveform& waveform, double detuning_hz, Spinor psi) {
  check_finite(waveform);
  if (waveform.samples.size() < 2) return psi;
  const int m = substeps(waveform, detuning_hz, 1.0);
  const double h = waveform.dt() / m;
  const double d = pi * detuning_hz;
  const cplx mi(0.0, -1.0);
  auto deriv = [&](const cplx& om, const Spinor& v) {
    const cplx o = pi * om;
    return Spinor{mi * (d * v[0] + std::conj(o) * v[1]), mi * (o * v[0] - d * v[1])};
  };
  auto axpy = [](const Spinor& v, double s, const Spinor& dv) { return Spinor{v[0] + s * dv[0], v[1] + s * dv[1]}; };
  const auto& s = waveform.samples;
  for (std::size_t k = 0; k + 1 < s.size(); ++k) {
    const cplx a = s[k], da = s[k + 1] - s[k];
    for (int j = 0; j < m; ++j) {
      const double x0 = static_cast<double>(j) / m;
      const cplx o1 = a + da * x0, o2 = a + da * (x0 + 0.5 / m), o3 = a + da * (x0 + 1.0 / m);
      const Spinor k1 = deriv(o1, psi);
      const Spinor k2 = deriv(o2, axpy(psi, 0.5 * h, k1));
      const Spinor k3 = deriv(o2, axpy(psi, 0.5 * h, k2));
      const Spinor k4 = deriv(o3, axpy(psi, h, k3));
      for (int i = 0; i < 2; ++i) psi[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
  }
  return psi;
}

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(std::max(n, 0)));
  if (n == 1) v[0] = a;
  for (int i = 0; i < n && n > 1; ++i) v[i] = a + (b - a) * i / (n - 1);
  return v;
}

TransferProfile transfer_profile(const Waveform& waveform, const std::vector<double>& detuning_grid) {
  if (detuning_grid.size() < 3) throw std::invalid_argument("transfer_profile needs at least 3 detunings");
  if (!std::is_sorted(detuning_grid.begin(), detuning_grid.end()))
    throw std::invalid_argument("detuning grid must be ascending");
  TransferProfile p;
  p.detuning_hz = detuning_grid;
  p.transfer.reserve(detuning_grid.size());
  for (double d : detuning_grid) p.transfer.push_back(0.5 * (1.0 + bloch_propagate(waveform, d)[2]));

  const auto ipk = static_cast<std::size_t>(std::max_element(p.transfer.begin(), p.transfer.end()) - p.transfer.begin());
  p.peak = p.transfer[ipk];
  const double level = 0.5 * p.peak;
  auto cross = [&](std::size_t i, std::size_t j) {
    const double y0 = p.transfer[i], y1 = p.transfer[j];
    return p.detuning_hz[i] + (level - y0) / (y1 - y0) * (p.detuning_hz[j] - p.detuning_hz[i]);
  };
  std::size_t r = ipk;
  while (r + 1 < p.transfer.size() && p.transfer[r + 1] >= level) ++r;
  std::size_t l = ipk;
  while (l > 0 && p.transfer[l - 1] >= level) --l;
  if (r + 1 >= p.transfer.size() || l == 0)
    throw std::domain_error("transfer profile does not fall below half maximum inside the grid");
  p.bandwidth_hz = cross(r, r + 1) - cross(l, l - 1);
  return p;
}

double chsh_component_transfer(const ChshSpec& spec, double band_fraction, int n_points) {
  spec.validate();
  HshSpec single = spec.base;
  single.peak_rabi_hz = spec.amplitude_scale * spec.base.rabi_hz();
  single.sample_rate_hz = spec.base.rate_hz();
  const Waveform w = hsh_waveform(single);
  const double half = 0.5 * band_fraction * spec.base.bandwidth_hz;
  double sum = 0.0;
  for (double d : linspace(spec.base.center_freq_hz - half, spec.base.center_freq_hz + half, n_points))
    sum += 0.5 * (1.0 + bloch_propagate(w, d)[2]);
  return sum / n_points;
}

double calibrate_chsh_scale(ChshSpec spec, double target, double band_fraction) {
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("calibration target must lie in (0, 1)");
  double lo = 0.02, hi = 1.0;
  spec.amplitude_scale = hi;
  if (chsh_component_transfer(spec, band_fraction) < target)
    throw std::domain_error("cHSH component cannot reach the target transfer");
  while (hi - lo > 1e-4) {
    spec.amplitude_scale = 0.5 * (lo + hi);
    if (chsh_component_transfer(spec, band_fraction) < target) lo = spec.amplitude_scale;
    else hi = spec.amplitude_scale;
  }
  return 0.5 * (lo + hi);
}

ChshDecomposition chsh_decomposition(const ChshSpec& spec, const Waveform& reference_single,
                                     double band_fraction, int n_points) {
  const Waveform w = chsh_waveform(spec);
  const double half = 0.5 * band_fraction * spec.base.bandwidth_hz;
  const auto grid = linspace(spec.base.center_freq_hz - half, spec.base.center_freq_hz + half, n_points);
  // the composite pulse ends later, so refer both to the same final time
  const double extra = w.duration() - reference_single.duration();
  Eigen::MatrixXcd m(n_points, 2);
  Eigen::VectorXcd a(n_points);
  double single = 0.0;
  for (int i = 0; i < n_points; ++i) {
    const double d = grid[i];
    const cplx ref = propagate_amplitudes(reference_single, d)[0];
    single += std::norm(ref);
    const cplx u = std::abs(ref) > 0.0 ? ref / std::abs(ref) : cplx(1.0);
    a(i) = propagate_amplitudes(w, d)[0] * std::conj(u) * std::polar(1.0, pi * d * extra);
    m(i, 0) = 1.0;
    m(i, 1) = std::polar(1.0, two_pi * d * spec.separation_s);
  }
  const Eigen::VectorXcd c = m.colPivHouseholderQr().solve(a);
  ChshDecomposition out;
  out.c_early = c(0);
  out.c_late = c(1);
  out.residual_rel = (m * c - a).norm() / a.norm();
  out.single_transfer = single / n_points;
  return out;
}

}  // namespace afcmem
