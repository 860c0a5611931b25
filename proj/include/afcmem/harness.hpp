#pragma once

#include <json.hpp>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "afcmem/detection.hpp"
#include "afcmem/ensemble_model.hpp"
#include "afcmem/pulse_engine.hpp"
#include "afcmem/spin_sim.hpp"

namespace afcmem {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct SimulationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// X(type, name, default)
#define AFCMEM_CONFIG_FIELDS(X)                     \
  X(std::string, preset, "")                        \
  X(double, comb_period_hz, 40e3)                   \
  X(double, comb_finesse, 4.0)                      \
  X(double, comb_peak_od, 3.0)                      \
  X(double, comb_background_od, 0.0)                \
  X(double, comb_bandwidth_hz, 4e6)                 \
  X(std::string, comb_tooth_shape, "square")        \
  X(int, comb_passes, 2)                            \
  X(double, comb_t2afc_s, 240e-6)                   \
  X(double, zeeman_split_hz, 41.4e3)                \
  X(double, input_fwhm_s, 700e-9)                   \
  X(int, n_modes, 6)                                \
  X(double, mode_duration_s, 1.65e-6)               \
  X(double, mu_in, 0.711)                           \
  X(double, transfer_duration_s, 15e-6)             \
  X(double, transfer_bandwidth_hz, 1.5e6)           \
  X(double, transfer_rabi_hz, 0.0)                  \
  X(double, transfer_edge_fraction, 0.3)            \
  X(double, transfer_sech_truncation, 2.6)          \
  X(double, transfer_efficiency, 0.0)               \
  X(double, storage_time_s, 20e-3)                  \
  X(std::string, dd_kind, "XY4")                    \
  X(double, dd_rabi_hz, 120e3)                      \
  X(double, inhom_fwhm_hz, 60e3)                    \
  X(double, ou_sigma_hz, 0.0)                       \
  X(double, ou_tau_c_s, 1.0)                        \
  X(double, ou_calibration_t2_s, 70e-3)             \
  X(std::string, ou_calibration_kind, "XX")         \
  X(std::uint64_t, n_atoms, 10000)                  \
  X(double, area_error, 0.0)                        \
  X(double, phase_error_rad, 0.0)                   \
  X(bool, finite_rabi, true)                        \
  X(double, noise_gain, 0.0)                        \
  X(double, noise_target_p_n, 0.0)                  \
  X(std::string, noise_calibration_kind, "XY4")     \
  X(double, noise_calibration_storage_s, 20e-3)     \
  X(double, noise_window_start_s, 77.5e-6)          \
  X(double, noise_window_length_s, 225e-6)          \
  X(double, noise_lifetime_s, 1.9e-3)               \
  X(double, extra_loss, 1.0)                        \
  X(bool, spin_enabled, true)                       \
  X(bool, noise_enabled, true)                      \
  X(std::string, snr_convention, "noise_subtracted") \
  X(double, detector_efficiency, 0.57)              \
  X(double, path_transmission, 0.185)               \
  X(double, filter_extinction, 1636.0)              \
  X(double, dark_rate_hz, 0.0)                      \
  X(double, bin_width_s, 0.0)                       \
  X(double, qubit_mu, 0.92)                         \
  X(double, qubit_p_n, 0.0)                         \
  X(double, qubit_visibility, 1.0)                  \
  X(int, qubit1_first_mode, 2)                      \
  X(int, qubit2_first_mode, 5)                      \
  X(std::string, qubit_input, "plus")               \
  X(double, chsh_amplitude_scale, 0.0)              \
  X(std::uint64_t, n_trials, 100000)                \
  X(std::uint64_t, seed, 1)                         \
  X(std::string, output_dir, "out")

struct ExperimentConfig {
#define AFCMEM_DECLARE_FIELD(type, name, def) type name = def;
  AFCMEM_CONFIG_FIELDS(AFCMEM_DECLARE_FIELD)
#undef AFCMEM_DECLARE_FIELD

  void validate() const;
  CombParams comb() const;
  HshSpec transfer_pulse() const;
  SpinBathParams bath() const;
  PulseErrorModel pulse_errors() const;
  DetectionChain chain() const;
  double effective_bin_width() const { return bin_width_s > 0.0 ? bin_width_s : mode_duration_s / 8.0; }
};

nlohmann::json to_json(const ExperimentConfig& c);
// Flat object; unknown keys or wrong types raise ConfigError.
ExperimentConfig config_from_json(const nlohmann::json& j, ExperimentConfig base = {});
ExperimentConfig load_config(const std::string& path, ExperimentConfig base = {});
std::string config_hash(const ExperimentConfig& c);

std::vector<std::string> preset_names();
ExperimentConfig preset_config(const std::string& name);

struct RunReport {
  nlohmann::json data;
  std::vector<std::pair<std::string, CountHistogram>> histograms;  // written as hist_<name>.csv
  std::vector<std::pair<std::string, nlohmann::json>> fits;         // written as fit_<name>.json
  std::vector<std::pair<std::string, std::string>> tables;          // extra CSV files: name, content
  bool passed = true;  // all gating comparisons within tolerance
};

struct StageValues {
  double eta_afc = 0.0;
  double echo_time_s = 0.0;
  double transfer_inversion = 0.0;  // Bloch band average of the HSH transfer
  double eta_transfer = 0.0;        // value used in the composition
  double eta_spin = 0.0;
  double eta_spin_err = 0.0;
  double p_noise = 0.0;
  double noise_gain = 0.0;
  double ou_sigma_hz = 0.0;
  double eta_total = 0.0;
};

StageValues compute_stages(const ExperimentConfig& cfg, nlohmann::json* provenance = nullptr);

RunReport run_afc(const ExperimentConfig& cfg);
RunReport run_spinwave(const ExperimentConfig& cfg);
RunReport run_qubit_tomography(const ExperimentConfig& cfg);
// seed / trials of zero keep the preset values.
RunReport reproduce(const std::string& preset, std::uint64_t seed = 0, std::uint64_t trials = 0);

void write_report(const RunReport& r, const std::string& dir);

std::string version_string();

}  // namespace afcmem
