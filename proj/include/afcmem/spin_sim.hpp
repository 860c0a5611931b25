#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "afcmem/pulse_engine.hpp"

namespace afcmem {

struct SpinBathParams {
  double inhom_fwhm_hz = 60e3;
  double ou_sigma_hz = 0.0;
  double ou_tau_c_s = 1.0;
  std::size_t n_atoms = 10000;
  std::uint64_t seed = 1;

  void validate() const;
  double inhom_sigma_hz() const { return inhom_fwhm_hz / 2.354820045030949; }
};

struct PulseErrorModel {
  double area_error = 0.0;       // fractional rotation-angle error
  double phase_error_rad = 0.0;  // added to every pulse phase
  bool finite_rabi = false;      // pulses act with the sequence Rabi frequency on detuned spins
  double excitation_to_photon_gain = 0.0;

  void validate() const;
  bool ideal() const { return area_error == 0.0 && phase_error_rad == 0.0 && !finite_rabi; }
};

struct SpinStorageResult {
  double coherence = 0.0;
  double coherence_stderr = 0.0;
  double eta_spin = 0.0;
  double eta_stderr = 0.0;
  double residual_excitation = 0.0;  // mean |s> population from spins starting in |g>
  double p_noise_per_mode = 0.0;
  std::vector<double> per_atom_phases;
};

struct SpinSimOptions {
  int steps_per_tau = 50;  // OU steps per half inter-pulse spacing
  bool keep_phases = false;
};

std::vector<double> sample_ensemble(const SpinBathParams& params);

// n_steps + 1 points starting from a stationary draw.
std::vector<double> ou_trajectory(double sigma_hz, double tau_c_s, double dt_s, std::size_t n_steps,
                                  std::uint64_t seed);

SpinStorageResult spin_echo_coherence(const DDSequence& dd, const SpinBathParams& bath,
                                      const PulseErrorModel& errors, const SpinSimOptions& opts = {});

// Mean residual |s> population after the sequence for spins starting in |g>.
double residual_excitation(const DDSequence& dd, const PulseErrorModel& errors, const SpinBathParams& line);
double readout_noise(const DDSequence& dd, const PulseErrorModel& errors, const SpinBathParams& line);
// kappa giving p_noise = target for this sequence.
double calibrate_noise_gain(double target_p_noise, const DDSequence& dd, const PulseErrorModel& errors,
                            const SpinBathParams& line);

struct DecayPoint {
  double t_s = 0.0;
  double eta = 0.0;
  double eta_err = 0.0;
};

std::vector<DecayPoint> efficiency_decay(DDKind kind, const std::vector<double>& t_list, const SpinBathParams& bath,
                                         const PulseErrorModel& errors, double rabi_hz = 120e3,
                                         const SpinSimOptions& opts = {});
void write_decay_csv(const std::vector<DecayPoint>& table, const std::string& path);

// Gaussian-phase coherence of an OU bath under ideal pulses (static part refocused).
double ou_gaussian_coherence(const DDSequence& dd, double sigma_hz, double tau_c_s);
// Storage time at which the OU coherence squared falls to exp(-2).
double ou_t2(DDKind kind, double sigma_hz, double tau_c_s);
// sigma giving an exp(-2) efficiency point at t2_s for the given sequence.
double calibrate_ou_sigma(DDKind kind, double t2_s, double tau_c_s);

}  // namespace afcmem
