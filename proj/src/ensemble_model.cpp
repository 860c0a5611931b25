#include "afcmem/ensemble_model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fft.hpp"

namespace afcmem {

ToothShape tooth_shape_from_string(const std::string& s) {
  if (s == "square") return ToothShape::square;
  if (s == "gaussian") return ToothShape::gaussian;
  if (s == "lorentzian_sum") return ToothShape::lorentzian_sum;
  throw std::invalid_argument("unknown tooth shape: " + s);
}

std::string to_string(ToothShape s) {
  switch (s) {
    case ToothShape::square: return "square";
    case ToothShape::gaussian: return "gaussian";
    case ToothShape::lorentzian_sum: return "lorentzian_sum";
  }
  return "?";
}

void CombParams::validate() const {
  if (!(comb_period_hz > 0.0)) throw std::invalid_argument("comb_period_hz must be positive");
  if (!(finesse > 1.0)) throw std::invalid_argument("finesse must exceed 1");
  if (peak_od < 0.0 || background_od < 0.0) throw std::invalid_argument("optical depths must be nonnegative");
  if (bandwidth_hz < 10.0 * comb_period_hz) throw std::invalid_argument("bandwidth_hz must cover at least 10 teeth");
  if (passes < 1) throw std::invalid_argument("passes must be >= 1");
  if (homogeneous_hwhm_hz < 0.0) throw std::invalid_argument("homogeneous_hwhm_hz must be nonnegative");
  if (grid_points < 16 || (grid_points & (grid_points - 1)) != 0)
    throw std::invalid_argument("grid_points must be a power of two");
  if (bandwidth_hz >= grid_span_hz) throw std::invalid_argument("comb band must fit inside the grid span");
}

namespace {

// Raised-cosine taper over the outer 10% of the band on each side.
double band_window(double f, double bw) {
  const double half = 0.5 * bw;
  const double edge = 0.1 * bw;
  const double a = std::abs(f);
  if (a >= half) return 0.0;
  if (a <= half - edge) return 1.0;
  const double u = (a - (half - edge)) / edge;
  return 0.5 * (1.0 + std::cos(pi * u));
}

double tooth_value(ToothShape shape, double f, double period, double w) {
  switch (shape) {
    case ToothShape::square: {
      const double x = f - period * std::round(f / period);
      return std::abs(x) <= 0.5 * w ? 1.0 : 0.0;
    }
    case ToothShape::gaussian: {
      const double x0 = f - period * std::round(f / period);
      const double c = 4.0 * std::log(2.0) / (w * w);
      double v = 0.0;
      for (int m = -2; m <= 2; ++m) {
        const double x = x0 + m * period;
        v += std::exp(-c * x * x);
      }
      return v;
    }
    case ToothShape::lorentzian_sum: {
      // closed-form periodic sum of Lorentzians with HWHM w/2, peak normalised to 1
      const double q = two_pi * 0.5 * w / period;
      const double v = std::sinh(q) / (std::cosh(q) - std::cos(two_pi * f / period));
      const double vmax = std::sinh(q) / (std::cosh(q) - 1.0);
      return v / vmax;
    }
  }
  return 0.0;
}

double freq_of_fft_index(std::size_t j, std::size_t n, double df) {
  return j < n / 2 ? static_cast<double>(j) * df : (static_cast<double>(j) - static_cast<double>(n)) * df;
}

}  // namespace

CombSpectrum build_comb(const CombParams& params) {
  params.validate();
  const std::size_t n = params.grid_points;
  const double df = params.grid_span_hz / static_cast<double>(n);
  const double w = params.tooth_fwhm_hz();
  if (df > w / 8.0) throw std::invalid_argument("frequency grid coarser than tooth FWHM / 8");
  const double gamma = params.homogeneous_hwhm_hz > 0.0 ? params.homogeneous_hwhm_hz : 4.0 * df;
  const double dt = 1.0 / params.grid_span_hz;

  std::vector<cplx> s(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double f = freq_of_fft_index(j, n, df);
    const double win = band_window(f, params.bandwidth_hz);
    if (win == 0.0) continue;
    s[j] = win * (params.peak_od * tooth_value(params.tooth_shape, f, params.comb_period_hz, w) +
                  params.background_od);
  }

  // Causal line response: one-sided time kernel damped by the homogeneous width.
  std::vector<cplx> kernel;
  detail::fft_plan inverse(n, FFTW_BACKWARD);
  inverse.execute(s, kernel);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double decay = std::exp(-two_pi * gamma * dt);
  double damp = 1.0;
  kernel[0] *= inv_n;
  for (std::size_t m = 1; m < n; ++m) {
    if (m < n / 2) {
      damp *= decay;
      kernel[m] *= 2.0 * inv_n * damp;
    } else {
      kernel[m] = 0.0;
    }
  }
  std::vector<cplx> d;
  detail::fft_plan forward(n, FFTW_FORWARD);
  forward.execute(kernel, d);

  CombSpectrum out;
  out.params = params;
  out.homogeneous_hwhm_hz = gamma;
  out.freq_grid_hz.resize(n);
  out.alpha.resize(n);
  out.complex_response.resize(n);
  const double half_passes = 0.5 * params.passes;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = (k + n / 2) % n;
    out.freq_grid_hz[k] = (static_cast<double>(k) - static_cast<double>(n / 2)) * df;
    cplx dj(std::max(0.0, d[j].real()), d[j].imag());
    out.alpha[k] = dj.real();
    out.complex_response[k] = std::exp(-half_passes * dj);
  }
  return out;
}

namespace {

// Sub-sample peak position from a parabola through the log intensities.
double refine_peak(const std::vector<double>& p, std::size_t i) {
  if (i == 0 || i + 1 >= p.size()) return static_cast<double>(i);
  if (p[i - 1] <= 0.0 || p[i] <= 0.0 || p[i + 1] <= 0.0) return static_cast<double>(i);
  const double a = std::log(p[i - 1]), b = std::log(p[i]), c = std::log(p[i + 1]);
  const double den = a - 2.0 * b + c;
  if (den >= 0.0) return static_cast<double>(i);
  return static_cast<double>(i) + 0.5 * (a - c) / den;
}

}  // namespace

EchoResult propagate(const Waveform& input, const CombSpectrum& spectrum) {
  const std::size_t n = spectrum.freq_grid_hz.size();
  const double span = spectrum.params.grid_span_hz;
  if (std::abs(input.sample_rate_hz - span) > 1e-9 * span)
    throw std::invalid_argument("input sample rate must equal the spectrum grid span");
  if (input.samples.empty() || input.samples.size() > n)
    throw std::invalid_argument("input length must be in [1, grid_points]");
  for (const auto& v : input.samples)
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw std::invalid_argument("non-finite input sample");

  std::vector<cplx> x(n);
  std::copy(input.samples.begin(), input.samples.end(), x.begin());
  std::vector<cplx> xf;
  detail::fft_plan forward(n, FFTW_FORWARD);
  forward.execute(x, xf);

  const double df = span / static_cast<double>(n);
  const double half_bw = 0.5 * spectrum.params.bandwidth_hz;
  double total = 0.0, outside = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    const double e = std::norm(xf[j]);
    total += e;
    if (std::abs(freq_of_fft_index(j, n, df)) > half_bw) outside += e;
  }
  if (total <= 0.0) throw std::invalid_argument("input carries no energy");
  if (outside > 0.01 * total) throw std::invalid_argument("input spectrum leaks more than 1% outside the comb band");

  for (std::size_t j = 0; j < n; ++j) xf[j] *= spectrum.complex_response[(j + n / 2) % n];
  std::vector<cplx> y;
  detail::fft_plan inverse(n, FFTW_BACKWARD);
  inverse.execute(xf, y);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (auto& v : y) v *= inv_n;

  const double dt = 1.0 / span;
  const double period_s = 1.0 / spectrum.params.comb_period_hz;
  std::vector<double> pin(input.samples.size());
  for (std::size_t k = 0; k < pin.size(); ++k) pin[k] = std::norm(input.samples[k]);
  const std::size_t ipk = static_cast<std::size_t>(std::max_element(pin.begin(), pin.end()) - pin.begin());
  const double t_in = refine_peak(pin, ipk) * dt;

  const std::size_t keep = std::min(n, input.samples.size() + static_cast<std::size_t>(std::ceil(4.0 * period_s / dt)));
  std::vector<double> pout(keep);
  for (std::size_t k = 0; k < keep; ++k) pout[k] = std::norm(y[k]);

  const auto lo = static_cast<std::size_t>(std::ceil((t_in + 0.5 * period_s) / dt));
  const auto hi = std::min(keep, static_cast<std::size_t>(std::floor((t_in + 1.5 * period_s) / dt)));
  if (lo >= hi) throw std::invalid_argument("echo window falls outside the time grid");

  double echo_e = 0.0, before_e = 0.0;
  std::size_t epk = lo;
  for (std::size_t k = 0; k < keep; ++k) {
    if (k < lo) before_e += pout[k];
    else if (k < hi) {
      echo_e += pout[k];
      if (pout[k] > pout[epk]) epk = k;
    }
  }
  const double in_e = input.energy() * span;

  EchoResult r;
  r.echo_efficiency = std::clamp(echo_e / in_e, 0.0, 1.0);
  r.transmitted_fraction = before_e / in_e;
  r.echo_time_s = refine_peak(pout, epk) * dt - t_in;
  r.output_waveform = Waveform{span, input.t0_s, std::vector<cplx>(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(keep))};
  return r;
}

double afc_decay_model(double one_over_delta_s, double eta0, double t2afc_s, double mod_depth,
                       double zeeman_split_hz) {
  if (one_over_delta_s < 0.0 || eta0 < 0.0 || t2afc_s < 0.0 || zeeman_split_hz < 0.0)
    throw std::invalid_argument("afc_decay_model: arguments must be nonnegative");
  if (mod_depth < 0.0 || mod_depth > 1.0) throw std::invalid_argument("afc_decay_model: mod_depth outside [0, 1]");
  if (t2afc_s == 0.0) return one_over_delta_s == 0.0 ? eta0 : 0.0;
  const double s = std::sin(pi * zeeman_split_hz * one_over_delta_s);
  return eta0 * std::exp(-4.0 * one_over_delta_s / t2afc_s) * (1.0 - mod_depth * s * s);
}

}  // namespace afcmem
