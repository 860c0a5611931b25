#include "afcmem/waveform.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace afcmem {

double Waveform::energy() const {
  double e = 0.0;
  for (const auto& s : samples) e += std::norm(s);
  return e / sample_rate_hz;
}

double Waveform::peak_abs() const {
  double m = 0.0;
  for (const auto& s : samples) m = std::max(m, std::abs(s));
  return m;
}

Waveform gaussian_pulse(double fwhm_s, double center_s, double sample_rate_hz, double t0_s,
                        std::size_t n_samples, double peak) {
  if (fwhm_s <= 0.0 || sample_rate_hz <= 0.0) throw std::invalid_argument("gaussian_pulse: bad width or rate");
  Waveform w{sample_rate_hz, t0_s, std::vector<cplx>(n_samples)};
  // intensity FWHM -> amplitude exp(-2 ln2 (t/fwhm)^2)
  const double a = 2.0 * std::log(2.0) / (fwhm_s * fwhm_s);
  for (std::size_t k = 0; k < n_samples; ++k) {
    const double t = w.time(k) - center_s;
    w.samples[k] = peak * std::exp(-a * t * t);
  }
  return w;
}

void write_waveform_csv(const Waveform& w, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << "t_s,re,im\n" << std::setprecision(12);
  for (std::size_t k = 0; k < w.samples.size(); ++k)
    out << w.time(k) << ',' << w.samples[k].real() << ',' << w.samples[k].imag() << '\n';
}

}  // namespace afcmem
