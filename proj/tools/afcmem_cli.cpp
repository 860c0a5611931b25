#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "afcmem/analysis.hpp"
#include "afcmem/harness.hpp"

namespace {

using nlohmann::json;
using namespace afcmem;

enum exit_code { ok = 0, config_error = 2, simulation_failure = 3, tolerance_failure = 4 };

struct common_opts {
  std::string config;
  std::uint64_t seed = 0;
  std::uint64_t trials = 0;
  std::string out;
};

void add_common(CLI::App* app, common_opts& o) {
  app->add_option("--config", o.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--seed", o.seed, "master seed");
  app->add_option("--trials", o.trials, "number of trials");
  app->add_option("--out", o.out, "output directory");
}

ExperimentConfig make_config(const common_opts& o, ExperimentConfig base = {}) {
  ExperimentConfig c = o.config.empty() ? base : load_config(o.config, base);
  if (o.seed) c.seed = o.seed;
  if (o.trials) c.n_trials = o.trials;
  if (!o.out.empty()) c.output_dir = o.out;
  c.validate();
  return c;
}

XY read_xy_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file " + path);
  XY d;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (d.x.empty()) continue;  // header
      throw ConfigError("non-numeric value on line " + std::to_string(row) + " of " + path);
    }
    if (v.size() < 2 || v.size() > 3) throw ConfigError("expected x,y[,sigma] on line " + std::to_string(row));
    d.x.push_back(v[0]);
    d.y.push_back(v[1]);
    if (v.size() == 3) d.sigma.push_back(v[2]);
  }
  if (!d.sigma.empty() && d.sigma.size() != d.x.size()) throw ConfigError("sigma column must be present on every row");
  return d;
}

json fit_to_json(const FitResult& f) {
  json j;
  for (std::size_t k = 0; k < f.params.size(); ++k) {
    j["params"][f.names[k]] = f.params[k];
    j["ci95"][f.names[k]] = f.ci95[k];
  }
  j["residual_norm"] = f.residual_norm;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["message"] = f.message;
  return j;
}

void summarize(const RunReport& r, const std::string& dir) {
  std::cout << "wrote " << dir << "/report.json";
  if (r.data.contains("checks")) {
    std::cout << '\n';
    for (const auto& c : r.data["checks"]) {
      std::cout << (c["pass"].get<bool>() ? "  ok    " : (c["gating"].get<bool>() ? "  FAIL  " : "  info  "))
                << c["name"].get<std::string>() << " = " << c["value"].dump() << "  [" << c["low"].dump() << ", "
                << c["high"].dump() << "]\n";
    }
  } else {
    std::cout << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spin-wave AFC memory simulator"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  common_opts sim_o;
  std::string sim_mode;
  auto* sim = app.add_subcommand("simulate", "run the storage pipeline");
  sim->add_option("mode", sim_mode, "afc, spinwave or qubit")->required()->check(CLI::IsMember({"afc", "spinwave", "qubit"}));
  add_common(sim, sim_o);

  common_opts fit_o;
  std::string fit_kind, fit_data;
  auto* fit = app.add_subcommand("fit", "fit a decay or scaling model to CSV data");
  fit->add_option("model", fit_kind, "afc, mims or powerlaw")->required()->check(CLI::IsMember({"afc", "mims", "powerlaw"}));
  fit->add_option("--data", fit_data, "CSV with x,y[,sigma]")->required()->check(CLI::ExistingFile);
  add_common(fit, fit_o);

  common_opts tomo_o;
  std::string tomo_data;
  bool tomo_subtract = false;
  auto* tomo = app.add_subcommand("tomo", "reconstruct a time-bin qubit from projection counts");
  tomo->add_option("--data", tomo_data, "JSON with counts, trials, optional noise and target")->required()->check(CLI::ExistingFile);
  tomo->add_flag("--subtract-noise", tomo_subtract, "subtract the expected noise counts");
  add_common(tomo, tomo_o);

  common_opts rep_o;
  std::string preset;
  auto* rep = app.add_subcommand("reproduce", "run a stored preset and compare against reference values");
  rep->add_option("preset", preset, "preset name")->required();
  add_common(rep, rep_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? ok : config_error;
  }

  try {
    if (*sim) {
      const ExperimentConfig cfg = make_config(sim_o);
      RunReport r;
      if (sim_mode == "afc") r = run_afc(cfg);
      else if (sim_mode == "spinwave") r = run_spinwave(cfg);
      else r = run_qubit_tomography(cfg);
      write_report(r, cfg.output_dir);
      summarize(r, cfg.output_dir);
      return ok;
    }
    if (*fit) {
      const XY d = read_xy_csv(fit_data);
      FitResult f;
      if (fit_kind == "afc") {
        const ExperimentConfig cfg = make_config(fit_o);
        f = fit_afc_decay(d, cfg.zeeman_split_hz);
      } else if (fit_kind == "mims") {
        f = fit_mims(d);
      } else {
        f = fit_power_law(d);
      }
      const std::string dir = fit_o.out.empty() ? "out" : fit_o.out;
      RunReport r;
      r.fits.emplace_back(fit_kind, fit_to_json(f));
      r.data = {{"mode", "fit"}, {"model", fit_kind}, {"fit", fit_to_json(f)}, {"n_points", d.x.size()}};
      r.passed = f.converged;
      write_report(r, dir);
      std::cout << fit_to_json(f).dump(2) << '\n';
      return f.converged ? ok : simulation_failure;
    }
    if (*tomo) {
      std::ifstream in(tomo_data);
      json j;
      try {
        in >> j;
      } catch (const json::exception& e) {
        throw ConfigError(std::string("cannot parse tomography data: ") + e.what());
      }
      const char* keys[6] = {"E", "L", "plus", "minus", "plus_i", "minus_i"};
      TomoCounts tc;
      try {
        for (int k = 0; k < 6; ++k) {
          tc.counts[k] = j.at("counts").at(keys[k]).get<double>();
          tc.trials[k] = j.contains("trials") ? j["trials"].at(keys[k]).get<double>() : 1.0;
          tc.noise[k] = j.contains("noise") ? j["noise"].at(keys[k]).get<double>() : 0.0;
        }
      } catch (const json::exception& e) {
        throw ConfigError(std::string("tomography data: ") + e.what());
      }
      const auto ex = pauli_expectations(tc, tomo_subtract);
      const auto rho = direct_inversion(ex);
      json d;
      d["mode"] = "tomo";
      d["expectations"] = {{"sx", ex[0]}, {"sy", ex[1]}, {"sz", ex[2]}};
      d["rho"] = {{"re", {{rho.m(0, 0).real(), rho.m(0, 1).real()}, {rho.m(1, 0).real(), rho.m(1, 1).real()}}},
                  {"im", {{rho.m(0, 0).imag(), rho.m(0, 1).imag()}, {rho.m(1, 0).imag(), rho.m(1, 1).imag()}}}};
      d["projected"] = rho.projected;
      d["purity"] = purity(rho);
      if (j.contains("target")) {
        const auto& t = j["target"];
        if (!t.is_string()) throw ConfigError("target must be one of E, L, plus, minus, plus_i, minus_i");
        int idx = -1;
        for (int k = 0; k < 6; ++k)
          if (t.get<std::string>() == keys[k]) idx = k;
        if (idx < 0) throw ConfigError("unknown target state " + t.get<std::string>());
        d["fidelity"] = fidelity(rho, projection_state(static_cast<Projection>(idx)));
      }
      RunReport r;
      r.data = d;
      const std::string dir = tomo_o.out.empty() ? "out" : tomo_o.out;
      write_report(r, dir);
      std::cout << d.dump(2) << '\n';
      return ok;
    }
    if (*rep) {
      bool known = false;
      for (const auto& n : preset_names()) known |= n == preset;
      if (!known) {
        std::cerr << "unknown preset '" << preset << "'; choose one of:";
        for (const auto& n : preset_names()) std::cerr << ' ' << n;
        std::cerr << '\n';
        return config_error;
      }
      if (!rep_o.config.empty()) throw ConfigError("--config is not accepted by reproduce; presets are fixed");
      const RunReport r = reproduce(preset, rep_o.seed, rep_o.trials);
      const std::string dir = rep_o.out.empty() ? "out/" + preset : rep_o.out;
      write_report(r, dir);
      summarize(r, dir);
      return r.passed ? ok : tolerance_failure;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const SimulationError& e) {
    std::cerr << "simulation failure: " << e.what() << '\n';
    return simulation_failure;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return config_error;
  } catch (const std::exception& e) {
    std::cerr << "simulation failure: " << e.what() << '\n';
    return simulation_failure;
  }
  return ok;
}
