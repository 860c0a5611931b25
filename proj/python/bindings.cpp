#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "afcmem/analysis.hpp"
#include "afcmem/harness.hpp"

namespace py = pybind11;
using namespace afcmem;

namespace {

// dicts cross the boundary as JSON text
nlohmann::json from_py(const py::object& o) {
  if (o.is_none()) return nlohmann::json::object();
  const auto s = py::module_::import("json").attr("dumps")(o).cast<std::string>();
  return nlohmann::json::parse(s);
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

ExperimentConfig make_config(const py::object& cfg, const std::string& preset) {
  ExperimentConfig base = preset.empty() ? ExperimentConfig{} : preset_config(preset);
  auto c = config_from_json(from_py(cfg), base);
  c.validate();
  return c;
}

py::dict report_dict(const RunReport& r) {
  py::dict d;
  d["data"] = to_py(r.data);
  py::dict fits;
  for (const auto& [k, v] : r.fits) fits[py::str(k)] = to_py(v);
  d["fits"] = fits;
  py::dict hists;
  for (const auto& [k, h] : r.histograms) {
    py::dict e;
    e["bin_width_s"] = h.bin_width_s;
    e["counts"] = h.counts;
    e["n_trials"] = h.n_trials;
    hists[py::str(k)] = e;
  }
  d["histograms"] = hists;
  d["passed"] = r.passed;
  return d;
}

py::dict fit_dict(const FitResult& f) {
  py::dict d;
  d["params"] = f.params;
  d["ci95"] = f.ci95;
  d["converged"] = f.converged;
  d["iterations"] = f.iterations;
  return d;
}

XY make_xy(std::vector<double> x, std::vector<double> y, std::vector<double> s) { return {std::move(x), std::move(y), std::move(s)}; }

}  // namespace

PYBIND11_MODULE(_core, m) {
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<SimulationError>(m, "SimulationError", PyExc_RuntimeError);

  m.def("version", &version_string);
  m.def("preset_names", &preset_names);
  m.def("preset_config", [](const std::string& n) { return to_py(to_json(preset_config(n))); });
  m.def("default_config", [] { return to_py(to_json(ExperimentConfig{})); });
  m.def("config_hash", [](const py::object& cfg) { return config_hash(make_config(cfg, "")); },
        py::arg("config") = py::none());

  m.def("stages", [](const py::object& cfg, const std::string& preset) {
    const auto s = compute_stages(make_config(cfg, preset));
    py::dict d;
    d["eta_afc"] = s.eta_afc;
    d["eta_transfer"] = s.eta_transfer;
    d["eta_spin"] = s.eta_spin;
    d["p_noise"] = s.p_noise;
    d["eta_total"] = s.eta_total;
    return d;
  }, py::arg("config") = py::none(), py::arg("preset") = "");

  const auto run = [&m](const char* name, RunReport (*f)(const ExperimentConfig&)) {
    m.def(name, [f](const py::object& cfg, const std::string& preset) {
      const auto c = make_config(cfg, preset);
      RunReport r;
      {
        py::gil_scoped_release nogil;
        r = f(c);
      }
      return report_dict(r);
    }, py::arg("config") = py::none(), py::arg("preset") = "");
  };
  run("simulate_afc", &run_afc);
  run("simulate_spinwave", &run_spinwave);
  run("simulate_qubit", &run_qubit_tomography);

  m.def("reproduce", [](const std::string& preset, std::uint64_t seed, std::uint64_t trials, const std::string& out) {
    RunReport r;
    {
      py::gil_scoped_release nogil;
      r = reproduce(preset, seed, trials);
      if (!out.empty()) write_report(r, out);
    }
    return report_dict(r);
  }, py::arg("preset"), py::arg("seed") = 0, py::arg("trials") = 0, py::arg("out") = "");

  m.def("fit_afc", [](std::vector<double> x, std::vector<double> y, std::vector<double> s) {
    return fit_dict(fit_afc_decay(make_xy(std::move(x), std::move(y), std::move(s))));
  }, py::arg("x"), py::arg("y"), py::arg("sigma") = std::vector<double>{});
  m.def("fit_mims", [](std::vector<double> x, std::vector<double> y, std::vector<double> s) {
    return fit_dict(fit_mims(make_xy(std::move(x), std::move(y), std::move(s))));
  }, py::arg("x"), py::arg("y"), py::arg("sigma") = std::vector<double>{});
  m.def("fit_powerlaw", [](std::vector<double> x, std::vector<double> y) {
    return fit_dict(fit_power_law(make_xy(std::move(x), std::move(y), {})));
  }, py::arg("x"), py::arg("y"));

  m.def("classical_bound", &classical_bound_weak_coherent, py::arg("mu"), py::arg("eta"));
  m.def("white_noise_fidelity", &white_noise_fidelity, py::arg("snr"));
  m.def("max_fidelity_from_purity", &max_fidelity_from_purity, py::arg("purity"));
}
