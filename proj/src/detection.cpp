#include "afcmem/detection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <stdexcept>

#include "afcmem/random.hpp"

namespace afcmem {

void DetectionChain::validate() const {
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!unit(detector_efficiency) || !unit(path_transmission))
    throw std::invalid_argument("detection efficiencies must lie in [0, 1]");
  if (!(filter_extinction >= 1.0)) throw std::invalid_argument("filter_extinction must be >= 1");
  if (gate_window_s < 0.0 || dark_rate_hz < 0.0) throw std::invalid_argument("gate window and dark rate must be nonnegative");
}

CountHistogram simulate_counts(const PhotonFlux& flux, const DetectionChain& chain, std::uint64_t n_trials,
                               std::uint64_t seed, double bin_width_s) {
  chain.validate();
  if (!(flux.sample_rate_hz > 0.0)) throw std::invalid_argument("flux sample rate must be positive");
  if (!(bin_width_s > 0.0)) throw std::invalid_argument("bin width must be positive");
  for (double v : flux.rate)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("photon flux must be finite and nonnegative");
  const double spb_real = bin_width_s * flux.sample_rate_hz;
  const auto spb = static_cast<std::size_t>(std::llround(spb_real));
  if (spb == 0 || std::abs(spb_real - static_cast<double>(spb)) > 1e-6 * spb_real)
    throw std::invalid_argument("bin width must be a whole number of flux samples");

  const std::size_t n_bins = (flux.rate.size() + spb - 1) / spb;
  std::vector<double> lambda(n_bins, 0.0);
  const double dt = flux.dt();
  for (std::size_t k = 0; k < flux.rate.size(); ++k) lambda[k / spb] += flux.rate[k] * dt;
  for (std::size_t i = 0; i < n_bins; ++i) {
    lambda[i] = lambda[i] * chain.efficiency() + chain.dark_rate_hz * bin_width_s;
    if (chain.gate_window_s > 0.0 && static_cast<double>(i) * bin_width_s >= chain.gate_window_s) lambda[i] = 0.0;
  }

  CountHistogram h;
  h.bin_width_s = bin_width_s;
  h.t0_s = flux.t0_s;
  h.counts.assign(n_bins, 0);
  h.sum_sq.assign(n_bins, 0);
  h.n_trials = n_trials;
  h.detector_efficiency = chain.detector_efficiency;
  h.path_transmission = chain.path_transmission;

  std::vector<std::poisson_distribution<std::uint64_t>> dists;
  std::vector<std::size_t> active;
  for (std::size_t i = 0; i < n_bins; ++i)
    if (lambda[i] > 0.0) {
      active.push_back(i);
      dists.emplace_back(lambda[i]);
    }
  constexpr std::uint64_t block = 4096;
  for (std::uint64_t b0 = 0; b0 < n_trials; b0 += block) {
    auto rng = substream(seed, b0 / block);
    const std::uint64_t end = std::min(n_trials, b0 + block);
    for (std::uint64_t t = b0; t < end; ++t) {
      for (std::size_t a = 0; a < active.size(); ++a) {
        const std::uint64_t c = dists[a](rng);
        if (c) {
          h.counts[active[a]] += c;
          h.sum_sq[active[a]] += c * c;
        }
      }
    }
  }
  return h;
}

ModeSums mode_sums(const CountHistogram& hist, double mode_start_s, double mode_period_s, int n_modes,
                   double t_m_s) {
  if (n_modes < 1 || !(t_m_s > 0.0)) throw std::invalid_argument("mode_sums: bad mode layout");
  if (n_modes > 1 && mode_period_s < t_m_s * (1.0 - 1e-12)) throw std::invalid_argument("mode windows overlap");
  if (hist.n_trials == 0) throw std::invalid_argument("histogram has no trials");
  const double eff = hist.detector_efficiency * hist.path_transmission;
  if (!(eff > 0.0)) throw std::invalid_argument("histogram detection efficiency is zero");
  const double span_end = hist.t0_s + hist.bin_width_s * static_cast<double>(hist.counts.size());
  const double tol = 1e-9 * hist.bin_width_s;
  const double n = static_cast<double>(hist.n_trials);

  ModeSums out;
  for (int m = 0; m < n_modes; ++m) {
    const double lo = mode_start_s + m * mode_period_s;
    const double hi = lo + t_m_s;
    if (lo < hist.t0_s - tol || hi > span_end + tol) throw std::invalid_argument("mode window outside histogram span");
    double c = 0.0, var = 0.0;
    const auto i0 = static_cast<std::size_t>(std::max(0.0, std::floor((lo - hist.t0_s) / hist.bin_width_s)));
    for (std::size_t i = i0; i < hist.counts.size(); ++i) {
      const double b0 = hist.bin_start(i), b1 = b0 + hist.bin_width_s;
      if (b0 >= hi - tol) break;
      const double ov = std::min(b1, hi) - std::max(b0, lo);
      if (ov <= tol) continue;
      const double w = std::min(1.0, ov / hist.bin_width_s);
      const double ci = static_cast<double>(hist.counts[i]);
      c += w * ci;
      const double mean = ci / n;
      const double v = n > 1.0 ? (static_cast<double>(hist.sum_sq[i]) - n * mean * mean) / (n - 1.0) : ci;
      var += w * w * std::max(v, 0.0);
    }
    out.counts.push_back(c);
    out.photons.push_back(c / (n * eff));
    out.photons_err.push_back(std::sqrt(var / n) / eff);
  }
  return out;
}

ModeMetrics metrics(const std::vector<double>& mu_in, const std::vector<double>& output,
                    const std::vector<double>& noise, const std::vector<double>& output_err,
                    const std::vector<double>& noise_err, SnrConvention convention) {
  const std::size_t k = output.size();
  if (k == 0 || noise.size() != k) throw std::invalid_argument("metrics: output and noise sizes differ");
  if (!(mu_in.size() == k || mu_in.size() == 1)) throw std::invalid_argument("metrics: mu_in size mismatch");
  if (!output_err.empty() && output_err.size() != k) throw std::invalid_argument("metrics: output_err size mismatch");
  if (!noise_err.empty() && noise_err.size() != k) throw std::invalid_argument("metrics: noise_err size mismatch");
  const double inf = std::numeric_limits<double>::infinity();

  ModeMetrics r;
  double sum_sig = 0.0, sum_p = 0.0, sum_oe2 = 0.0, sum_pe2 = 0.0, sum_o = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double mu = mu_in.size() == 1 ? mu_in[0] : mu_in[i];
    if (!(mu > 0.0)) throw std::invalid_argument("metrics: mu_in must be positive");
    const double o = output[i], p = noise[i];
    if (o < 0.0 || p < 0.0) throw std::invalid_argument("metrics: counts must be nonnegative");
    const double oe = output_err.empty() ? 0.0 : output_err[i];
    const double pe = noise_err.empty() ? 0.0 : noise_err[i];
    const double sig = o - p;
    const double eta = std::max(0.0, sig / mu);
    r.mu_in.push_back(mu);
    r.eta.push_back(eta);
    r.eta_err.push_back(std::hypot(oe, pe) / mu);
    r.p_n.push_back(p);
    r.p_n_err.push_back(pe);
    const double num = convention == SnrConvention::noise_subtracted ? sig : o;
    if (p > 0.0) {
      r.snr.push_back(std::max(0.0, num / p));
      r.snr_err.push_back(std::hypot(oe / p, o / (p * p) * pe));
    } else {
      r.snr.push_back(inf);
      r.snr_err.push_back(0.0);
    }
    if (p > 0.0 && !(eta > 0.0)) throw std::domain_error("metrics: mu1 undefined for zero efficiency with nonzero noise");
    if (p == 0.0) {
      r.mu1.push_back(0.0);
      r.mu1_err.push_back(0.0);
    } else {
      r.mu1.push_back(p / eta);
      const double d_do = -p * mu / (sig * sig), d_dp = mu * o / (sig * sig);
      r.mu1_err.push_back(std::hypot(d_do * oe, d_dp * pe));
    }
    sum_sig += sig;
    sum_o += o;
    sum_p += p;
    sum_oe2 += oe * oe;
    sum_pe2 += pe * pe;
  }
  const double kk = static_cast<double>(k);
  auto mean = [kk](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / kk;
  };
  auto qerr = [kk](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s) / kk;
  };
  r.mu_in_avg = mean(r.mu_in);
  r.eta_avg = mean(r.eta);
  r.eta_avg_err = qerr(r.eta_err);
  r.p_n_avg = mean(r.p_n);
  r.p_n_avg_err = qerr(r.p_n_err);
  r.mu1_avg = mean(r.mu1);
  r.mu1_avg_err = qerr(r.mu1_err);
  if (sum_p > 0.0) {
    const double num = convention == SnrConvention::noise_subtracted ? sum_sig : sum_o;
    r.snr_avg = std::max(0.0, num / sum_p);
    r.snr_avg_err = std::hypot(std::sqrt(sum_oe2) / sum_p, sum_o / (sum_p * sum_p) * std::sqrt(sum_pe2));
  } else {
    r.snr_avg = inf;
  }
  return r;
}

double noise_floor_model(double t_after_readout_s, double p_n_ref, double lifetime_s) {
  if (t_after_readout_s < 0.0) throw std::invalid_argument("noise_floor_model: t must be nonnegative");
  if (!(lifetime_s > 0.0)) throw std::invalid_argument("noise_floor_model: lifetime must be positive");
  return p_n_ref * std::exp(-t_after_readout_s / lifetime_s);
}

void write_histogram_csv(const CountHistogram& h, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "bin_start_s,counts\n" << std::setprecision(12);
  for (std::size_t i = 0; i < h.counts.size(); ++i) f << h.bin_start(i) << ',' << h.counts[i] << '\n';
}

}  // namespace afcmem
