#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "afcmem/harness.hpp"

using namespace afcmem;
using nlohmann::json;

namespace {

ExperimentConfig quick() {
  ExperimentConfig c;
  c.n_atoms = 300;
  c.n_trials = 20000;
  c.transfer_efficiency = 0.54;
  c.noise_target_p_n = 0.0073;
  return c;
}

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("config json round trip and hash") {
    ExperimentConfig c;
    c.storage_time_s = 33e-3;
    c.dd_kind = "XY8";
    const auto back = config_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
    CHECK(config_hash(back) == config_hash(c));
    ExperimentConfig d = c;
    d.output_dir = "elsewhere";
    CHECK(config_hash(d) == config_hash(c));
    d.seed = 99;
    CHECK(config_hash(d) != config_hash(c));
  }

  TEST_CASE("config errors") {
    CHECK_THROWS_AS(config_from_json(json{{"no_such_key", 1}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"n_modes", "six"}}), ConfigError);
    CHECK_THROWS_AS(config_from_json(json::array()), ConfigError);
    CHECK_THROWS_AS(config_from_json(json{{"dd_kind", "CPMG"}}), ConfigError);
    CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  }

  TEST_CASE("timing budget") {
    ExperimentConfig c;
    CHECK_NOTHROW(c.validate());
    c.n_modes = 7;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.comb_period_hz = 50e3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.bin_width_s = 400e-9;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("qubit bins must not overlap") {
    ExperimentConfig c;
    c.qubit2_first_mode = 3;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("presets") {
    for (const auto& n : preset_names()) CHECK_NOTHROW(preset_config(n));
    CHECK_THROWS_AS(preset_config("fig9"), ConfigError);
    CHECK_THROWS_AS(reproduce("fig9"), ConfigError);
    const auto t = preset_config("table1-20ms");
    CHECK(t.transfer_efficiency >= 0.46);
    CHECK(t.transfer_efficiency <= 0.57);
  }

  TEST_CASE("stage composition") {
    ExperimentConfig c = quick();
    c.spin_enabled = false;
    c.noise_enabled = false;
    const auto s = compute_stages(c);
    CHECK(s.eta_spin == 1.0);
    CHECK(s.p_noise == 0.0);
    CHECK(std::abs(s.eta_total - s.eta_afc * s.eta_transfer * s.eta_transfer) < 1e-12);
    ExperimentConfig d = quick();
    const auto t = compute_stages(d);
    CHECK(std::abs(t.eta_total - t.eta_afc * t.eta_transfer * t.eta_transfer * t.eta_spin) < 1e-12);
    CHECK(t.p_noise == doctest::Approx(0.0073));
  }

  TEST_CASE("transfer efficiency defaults to the Bloch inversion") {
    ExperimentConfig c = quick();
    c.transfer_efficiency = 0.0;
    c.spin_enabled = false;
    c.noise_enabled = false;
    const auto s = compute_stages(c);
    CHECK(s.eta_transfer == s.transfer_inversion);
    CHECK(s.eta_transfer > 0.98);
  }

  TEST_CASE("spin-wave run report") {
    const auto r = run_spinwave(quick());
    const auto& d = r.data;
    REQUIRE(d.contains("stages"));
    REQUIRE(d["per_mode"]["snr"].size() == 6);
    CHECK(d["stages"]["composition_residual"].get<double>() < 1e-6);
    CHECK(d["provenance"]["config_hash"].get<std::string>().size() == 16);
    for (const auto& z : d["per_mode"]["output_zscore"]) CHECK(std::abs(z.get<double>()) < 5.0);
    REQUIRE(r.histograms.size() == 1);
    const auto again = run_spinwave(quick());
    CHECK(again.data.dump() == d.dump());
  }

  TEST_CASE("stage failures carry a tag") {
    ExperimentConfig c = quick();
    c.input_fwhm_s = 50e-9;  // spectrum spills far outside the comb
    try {
      run_spinwave(c);
      FAIL("expected a failure");
    } catch (const SimulationError& e) {
      CHECK(std::string(e.what()).rfind("ensemble_model:", 0) == 0);
    }
  }

  TEST_CASE("ideal qubit storage") {
    ExperimentConfig c = quick();
    c.noise_enabled = false;
    c.n_trials = 200000;
    c.qubit_visibility = 1.0;
    const auto r = run_qubit_tomography(c);
    CHECK(r.data["fidelity"].get<double>() > 0.99);
    CHECK(r.histograms.size() == 5);
  }

  TEST_CASE("minus input is dark on the plus projection") {
    ExperimentConfig c = quick();
    c.noise_enabled = false;
    c.n_trials = 200000;
    c.qubit_input = "minus";
    const auto r = run_qubit_tomography(c);
    const auto& q = r.data["qubits"][0]["counts"];
    CHECK(q["plus"].get<double>() < 0.02 * q["minus"].get<double>());
    c.qubit_input = "plus";
    const auto p = run_qubit_tomography(c);
    CHECK(p.data["qubits"][0]["counts"]["plus"].get<double>() > 50.0 * q["plus"].get<double>() + 1.0);
  }

  TEST_CASE("reports are written to disk") {
    const auto dir = std::filesystem::temp_directory_path() / "afcmem_harness_test";
    std::filesystem::remove_all(dir);
    auto r = run_spinwave(quick());
    r.fits.emplace_back("x", json{{"a", 1}});
    write_report(r, dir.string());
    CHECK(std::filesystem::exists(dir / "report.json"));
    CHECK(std::filesystem::exists(dir / "hist_spinwave.csv"));
    CHECK(std::filesystem::exists(dir / "fit_x.json"));
    std::ifstream in(dir / "report.json");
    json j;
    in >> j;
    CHECK(j["mode"] == "spinwave");
    std::filesystem::remove_all(dir);
  }
}
