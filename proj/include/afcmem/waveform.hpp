#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace afcmem {

using cplx = std::complex<double>;

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double two_pi = 2.0 * pi;

// Uniformly sampled complex envelope. Sample k sits at t0_s + k / sample_rate_hz.
struct Waveform {
  double sample_rate_hz = 0.0;
  double t0_s = 0.0;
  std::vector<cplx> samples;

  double dt() const { return 1.0 / sample_rate_hz; }
  double time(std::size_t k) const { return t0_s + static_cast<double>(k) / sample_rate_hz; }
  double duration() const { return static_cast<double>(samples.size()) / sample_rate_hz; }
  double energy() const;  // sum |s|^2 dt
  double peak_abs() const;
};

// Gaussian envelope with the given intensity FWHM, centred at center_s.
Waveform gaussian_pulse(double fwhm_s, double center_s, double sample_rate_hz, double t0_s,
                        std::size_t n_samples, double peak = 1.0);

void write_waveform_csv(const Waveform& w, const std::string& path);

}  // namespace afcmem
