#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace afcmem {

struct DetectionChain {
  double detector_efficiency = 0.57;
  double path_transmission = 0.185;
  double filter_extinction = 1636.0;
  double gate_window_s = 0.0;  // 0: no gating
  double dark_rate_hz = 0.0;

  void validate() const;
  double efficiency() const { return detector_efficiency * path_transmission; }
};

// Mean photon flux (photons per second) at the memory output, uniformly sampled.
struct PhotonFlux {
  double sample_rate_hz = 0.0;
  double t0_s = 0.0;
  std::vector<double> rate;

  double dt() const { return 1.0 / sample_rate_hz; }
  double duration() const { return static_cast<double>(rate.size()) / sample_rate_hz; }
};

struct CountHistogram {
  double bin_width_s = 200e-9;
  double t0_s = 0.0;
  std::vector<std::uint64_t> counts;
  std::vector<std::uint64_t> sum_sq;  // per-bin sum over trials of counts^2
  std::uint64_t n_trials = 0;
  double detector_efficiency = 1.0;
  double path_transmission = 1.0;

  double bin_start(std::size_t i) const { return t0_s + static_cast<double>(i) * bin_width_s; }
};

// Raw per-mode counts and the photon numbers they imply at the memory output.
struct ModeSums {
  std::vector<double> photons;
  std::vector<double> photons_err;
  std::vector<double> counts;  // overlap-weighted raw counts
};

struct ModeMetrics {
  std::vector<double> mu_in, eta, p_n, snr, mu1;
  std::vector<double> eta_err, p_n_err, snr_err, mu1_err;
  double mu_in_avg = 0.0, eta_avg = 0.0, p_n_avg = 0.0, snr_avg = 0.0, mu1_avg = 0.0;
  double eta_avg_err = 0.0, p_n_avg_err = 0.0, snr_avg_err = 0.0, mu1_avg_err = 0.0;
};

enum class SnrConvention { noise_subtracted, raw };

// bin_width_s must be a whole number of flux samples.
CountHistogram simulate_counts(const PhotonFlux& flux, const DetectionChain& chain, std::uint64_t n_trials,
                               std::uint64_t seed, double bin_width_s = 200e-9);

ModeSums mode_sums(const CountHistogram& hist, double mode_start_s, double mode_period_s, int n_modes,
                   double t_m_s);

// Values with their standard errors; errors may be empty.
ModeMetrics metrics(const std::vector<double>& mu_in, const std::vector<double>& output,
                    const std::vector<double>& noise, const std::vector<double>& output_err = {},
                    const std::vector<double>& noise_err = {},
                    SnrConvention convention = SnrConvention::noise_subtracted);

double noise_floor_model(double t_after_readout_s, double p_n_ref, double lifetime_s = 1.9e-3);

void write_histogram_csv(const CountHistogram& h, const std::string& path);

}  // namespace afcmem
