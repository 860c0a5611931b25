#pragma once

#include <array>
#include <string>
#include <vector>

#include "afcmem/waveform.hpp"

namespace afcmem {

// Hyperbolic-secant edges around a flat plateau; the instantaneous frequency sweeps the full
// bandwidth_hz, linear on the plateau and tanh-rounded on the edges.
struct HshSpec {
  double duration_s = 15e-6;
  double bandwidth_hz = 1.5e6;
  double center_freq_hz = 0.0;
  double peak_rabi_hz = 0.0;  // 0 selects 0.8 * sqrt(chirp rate)
  double edge_fraction = 0.3;
  double sech_truncation = 2.6;
  double sample_rate_hz = 0.0;  // 0 selects 16 * (bandwidth + Rabi)

  void validate() const;
  double edge_s() const { return edge_fraction * duration_s; }
  double plateau_s() const { return duration_s - 2.0 * edge_s(); }
  double chirp_rate() const;  // Hz/s on the plateau
  double rabi_hz() const;
  double rate_hz() const;
  double amplitude(double t) const;               // Rabi frequency, Hz
  double instantaneous_frequency(double t) const; // Hz, relative to the carrier
  double phase(double t) const;                   // rad, integral of 2 pi f
  cplx field(double t) const;                     // zero outside [0, duration]
  // Time at which the sweep passes f; throws outside the swept range.
  double crossing_time(double f) const;
};

struct ChshSpec {
  HshSpec base;
  double separation_s = 1.65e-6;
  double relative_phase_rad = 0.0;
  double amplitude_scale = 0.5;

  void validate() const;
  double duration_s() const { return base.duration_s + separation_s; }
  cplx field(double t) const;
  double crossing_time(int component, double f) const;
};

enum class DDKind { none, XX, XY4, XY8, XY16 };

DDKind dd_kind_from_string(const std::string& s);
std::string to_string(DDKind k);
int pulse_count(DDKind k);

struct DDSequence {
  DDKind kind = DDKind::XY4;
  double total_time_s = 0.0;
  double pulse_duration_s = 0.0;
  double rabi_hz = 120e3;
  std::vector<double> phases_rad;
  std::vector<double> centers_s;

  int n_pulses() const { return static_cast<int>(centers_s.size()); }
};

using BlochVector = std::array<double, 3>;
using Spinor = std::array<cplx, 2>;  // (excited/target, ground)

Waveform hsh_waveform(const HshSpec& spec);
Waveform chsh_waveform(const ChshSpec& spec);

// pulse_duration_s = 0 selects a pi pulse at rabi_hz.
DDSequence dd_sequence(DDKind kind, double total_time_s, double pulse_duration_s = 0.0,
                       double rabi_hz = 120e3);

// step_scale < 1 tightens the automatic RK4 step.
BlochVector bloch_propagate(const Waveform& waveform, double detuning_hz,
                            BlochVector initial = {0.0, 0.0, -1.0}, double step_scale = 1.0);
// Pure-state propagation returning amplitudes, starting from the ground state.
Spinor propagate_amplitudes(const Waveform& waveform, double detuning_hz,
                            Spinor initial = {cplx(0.0), cplx(1.0)});

struct TransferProfile {
  std::vector<double> detuning_hz;
  std::vector<double> transfer;  // population moved out of the initial state, (1 + z) / 2
  double bandwidth_hz = 0.0;     // -3 dB full width around the central maximum
  double peak = 0.0;
};

TransferProfile transfer_profile(const Waveform& waveform, const std::vector<double>& detuning_grid);

// Band average of the single-component transfer of a cHSH pulse.
double chsh_component_transfer(const ChshSpec& spec, double band_fraction = 0.6, int n_points = 61);
// amplitude_scale giving `target` mean single-component transfer over the inner band.
double calibrate_chsh_scale(ChshSpec spec, double target = 0.5, double band_fraction = 0.6);

// Two-path fit A(d) = u(d) [c_early + c_late exp(2 pi i d Tm)] of the composite readout amplitude.
struct ChshDecomposition {
  cplx c_early, c_late;
  double residual_rel = 0.0;
  double single_transfer = 0.0;  // band mean of the reference single-pulse transfer
};
ChshDecomposition chsh_decomposition(const ChshSpec& spec, const Waveform& reference_single,
                                     double band_fraction = 0.6, int n_points = 61);

std::vector<double> linspace(double a, double b, int n);

}  // namespace afcmem
