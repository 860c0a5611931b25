#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "afcmem/waveform.hpp"

namespace afcmem {

enum class ToothShape { square, gaussian, lorentzian_sum };

ToothShape tooth_shape_from_string(const std::string& s);
std::string to_string(ToothShape s);

struct CombParams {
  double comb_period_hz = 40e3;
  double finesse = 4.0;
  double peak_od = 3.0;
  double background_od = 0.0;
  double bandwidth_hz = 4e6;
  ToothShape tooth_shape = ToothShape::square;
  int passes = 1;
  double zeeman_split_hz = 41.4e3;
  // Half width of the individual homogeneous lines; 0 selects 4 grid steps.
  double homogeneous_hwhm_hz = 0.0;
  std::size_t grid_points = std::size_t{1} << 20;
  double grid_span_hz = 8e6;

  void validate() const;
  double tooth_fwhm_hz() const { return comb_period_hz / finesse; }
};

struct CombSpectrum {
  CombParams params;
  std::vector<double> freq_grid_hz;  // ascending, centred on zero
  std::vector<double> alpha;         // optical depth per pass, line-broadened
  std::vector<cplx> complex_response;
  double homogeneous_hwhm_hz = 0.0;

  double df() const { return freq_grid_hz[1] - freq_grid_hz[0]; }
};

struct EchoResult {
  Waveform output_waveform;
  double echo_time_s = 0.0;  // delay of the first echo after the input peak
  double echo_efficiency = 0.0;
  double transmitted_fraction = 0.0;
};

CombSpectrum build_comb(const CombParams& params);

// Input sample rate must equal the spectrum grid span; samples are zero padded to the grid.
EchoResult propagate(const Waveform& input, const CombSpectrum& spectrum);

double afc_decay_model(double one_over_delta_s, double eta0, double t2afc_s, double mod_depth,
                       double zeeman_split_hz);

// Homogeneous half width that turns a tooth of FWHM w into exp(-4 t / t2) decay of the echo.
inline double hwhm_for_t2afc(double t2afc_s) { return 1.0 / (pi * t2afc_s); }

}  // namespace afcmem
