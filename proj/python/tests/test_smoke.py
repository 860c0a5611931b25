import math

import pytest

import afcmem


def test_presets_listed():
    names = afcmem.preset_names()
    assert "table1-20ms" in names
    cfg = afcmem.preset_config("table1-20ms")
    assert cfg["dd_kind"] == "XY4"


def test_bad_config_raises():
    with pytest.raises(afcmem.ConfigError):
        afcmem.config_hash({"no_such_key": 1})
    with pytest.raises(ValueError):
        afcmem.stages({"n_modes": 7})


def test_stage_composition():
    s = afcmem.stages(preset="table1-20ms")
    assert math.isclose(s["eta_total"], s["eta_afc"] * s["eta_transfer"] ** 2 * s["eta_spin"], rel_tol=1e-9)


def test_spinwave_is_deterministic():
    cfg = {"n_atoms": 200, "n_trials": 5000, "transfer_efficiency": 0.54}
    a = afcmem.simulate_spinwave(cfg)
    b = afcmem.simulate_spinwave(cfg)
    assert a["data"] == b["data"]
    assert len(a["data"]["per_mode"]["snr"]) == 6
    assert a["histograms"]["spinwave"]["n_trials"] == 5000


def test_fits_and_bounds():
    x = [2.0, 4.0, 8.0, 16.0]
    y = [0.05 * n**0.6 for n in x]
    r = afcmem.fit_powerlaw(x, y)
    assert r["params"][1] == pytest.approx(0.6, rel=1e-9)
    assert afcmem.white_noise_fidelity(7.0) == pytest.approx(8.0 / 9.0)
    assert 0.79 < afcmem.classical_bound(0.92, 0.076) < 0.82
