import json
import math

import numpy as np
import pytest

import ksp_lab


def test_version_and_scenarios():
    assert ksp_lab.__version__ == "0.1.0"
    assert set(ksp_lab.list_scenarios()) == {
        "linear_compare",
        "heston_demo",
        "master_demo",
        "pricing_demo",
        "novikov_check",
    }


def test_master_demo_report(tmp_path):
    rep = ksp_lab.run_scenario("master_demo", out_dir=str(tmp_path))
    assert rep["passed"]
    assert rep["metrics"]["stationary_p_1"] == pytest.approx(0.75, abs=1e-12)
    assert (tmp_path / "master_demo.csv").exists()
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_hash"] == rep["config_hash"]


def test_config_errors_surface_as_value_error():
    with pytest.raises(ValueError, match="dt"):
        ksp_lab.run_scenario("linear_compare", json.dumps({"dt": -0.1}))


def test_markov_helpers():
    rates = np.array([[0.0, 1.0], [3.0, 0.0]])
    G = ksp_lab.generator_from_rates(rates)
    assert np.allclose(G.sum(axis=1), 0.0)
    p = ksp_lab.stationary_distribution(rates)
    assert np.allclose(p, [0.75, 0.25], atol=1e-12)
    Q = ksp_lab.evolve_kernel(ksp_lab.generator_from_rates(np.array([[0, 1.0], [1.0, 0]])), 0.5)
    assert Q[0, 0] == pytest.approx(0.5 * (1 + math.exp(-1)), abs=1e-14)
    assert np.allclose(ksp_lab.master_rhs(rates, p), 0.0, atol=1e-12)


def test_kalman_and_particle_filter_agree():
    F, f0, sig, H, h0 = np.array([[-1.0]]), np.zeros(1), np.eye(1), np.eye(1), np.zeros(1)
    t, x, y = ksp_lab.simulate_linear(F, f0, sig, H, h0, np.zeros(1), np.eye(1), 1.0, 1e-3, seed=4)
    assert x.shape == (1001, 1) and y.shape == (1001, 1)
    means, covs = ksp_lab.run_kalman(F, f0, sig, H, h0, t, y, np.zeros(1), np.eye(1))
    assert means.shape == (1001, 1) and len(covs) == 1001
    pf, ess = ksp_lab.particle_filter_linear(F, f0, sig, H, h0, np.zeros(1), np.eye(1), t, y, n_particles=2000)
    assert np.sqrt(np.mean((pf[:, 0] - means[:, 0]) ** 2)) < 0.05
    assert ess.min() >= 1.0
    grid, nodes, dens = ksp_lab.zakai_grid_linear(-1, 0, 1, 1, 0, 0, 1, t, y[:, 0])
    assert np.max(np.abs(grid[:, 0] - means[:, 0])) < 0.01
    assert dens.min() >= 0.0


def test_riccati_roots():
    R = ksp_lab.steady_state_cov(np.array([[-1.0]]), np.zeros(1), np.array([[math.sqrt(2)]]), np.eye(1), np.zeros(1))
    assert R[0, 0] == pytest.approx(math.sqrt(3) - 1, abs=1e-6)


def test_scalar_path_with_python_callables():
    t, x = ksp_lab.simulate_scalar_path(lambda x: 1.0, lambda x: 0.0, 0.0, 1.0, 0.125)
    assert len(t) == 9
    assert x[-1] == 1.0


def test_heston_pipeline():
    p = ksp_lab.simulate_heston(gamma=0.0, kappa=1.0, x0=0.09, dt=1e-4)
    assert p["variance"][-1] == pytest.approx(0.04 + 0.05 * math.exp(-1), abs=1e-4)
    qv = ksp_lab.realized_qv(p["log_price"])
    assert np.all(np.diff(qv) >= 0)
    rec = ksp_lab.vol_recovery(qv, 500, 1e-4)
    assert rec.shape == qv.shape
    mean, var, ess = ksp_lab.heston_filter(1.0, 0.04, 0.0, 0.0, 0.09, p["times"][:2001], p["log_price"][:2001], 200)
    assert mean.shape == (2001,) and np.all(var >= -1e-12)


def test_pricing():
    assert ksp_lab.bs_call_price(100, 100, 1.0, 0.04) == pytest.approx(7.9656, abs=1e-4)
    price, se = ksp_lab.filtered_option_price(
        np.array([0.01, 0.09]), np.array([0.5, 0.5]), 0.0, 0.0, 0.0, 100.0, 100.0, 1.0
    )
    expect = 0.5 * (ksp_lab.bs_call_price(100, 100, 1, 0.01) + ksp_lab.bs_call_price(100, 100, 1, 0.09))
    assert price == pytest.approx(expect, abs=1e-9)
