import math
from dataclasses import replace

import numpy as np
import pytest

from aempc.linmodel import EconomicCost, step_true
from aempc.mpc import MpcConfig
from aempc.presets import DIST_AMPLITUDE, DIST_NOISE, THETA_STAR
from aempc.sim import (
    DisturbanceGenerator,
    SimLog,
    disturbance_bound,
    disturbance_energy,
    generate_disturbance,
    run_closed_loop,
)
from aempc.terminal import make_terminal_cost


def building_gen(noise=DIST_NOISE, seed=0):
    return DisturbanceGenerator(
        "building", {"amplitude": list(DIST_AMPLITUDE), "noise": list(noise), "period": 144, "lag": [0, 9]}, seed
    )


def test_zero_generator():
    gen = DisturbanceGenerator("zero", {"dim": 2})
    assert all(np.all(generate_disturbance(gen, k) == 0) for k in (0, 5, 1000))
    assert disturbance_energy(gen) == 0.0


def test_building_generator_noise_free_slice():
    w = generate_disturbance(building_gen(noise=(0.0, 0.0)), 36)
    np.testing.assert_allclose(w, [0.595, 7 * math.sin(3 * math.pi / 8)], rtol=1e-15)
    np.testing.assert_allclose(w[1], 7 * math.sin(2 * math.pi * 27 / 144), rtol=1e-15)


def test_decaying_energy_geometric_series():
    gen = DisturbanceGenerator("decaying", {"w0": [1.0, -2.0], "rho": 0.9})
    total = sum(float(np.sum(generate_disturbance(gen, k) ** 2)) for k in range(2000))
    assert disturbance_energy(gen) == pytest.approx(5.0 / (1 - 0.81), rel=1e-12)
    assert total == pytest.approx(disturbance_energy(gen), rel=1e-12)


def test_energy_undefined_for_persistent():
    with pytest.raises(ValueError):
        disturbance_energy(building_gen())


def test_generator_validation():
    with pytest.raises(ValueError):
        DisturbanceGenerator("decaying", {"w0": [1.0], "rho": 1.0})
    with pytest.raises(ValueError):
        DisturbanceGenerator("weather", {})
    with pytest.raises(ValueError):
        generate_disturbance(DisturbanceGenerator("zero", {"dim": 1}), -1)


def test_building_generator_bound_and_reproducibility():
    gen = building_gen(seed=4)
    w_bar_raw = math.hypot(0.595 * 1.2, 7 * 1.5)
    assert disturbance_bound(gen) == pytest.approx(w_bar_raw, rel=1e-14)
    draws = np.array([generate_disturbance(gen, k) for k in range(3000)])
    assert np.all(np.linalg.norm(draws, axis=1) <= w_bar_raw)
    # pure function of (seed, k): order and repetition do not matter
    np.testing.assert_array_equal(generate_disturbance(gen, 1234), draws[1234])
    other = generate_disturbance(replace(gen, seed=5), 1234)
    assert not np.array_equal(other, draws[1234])


def test_recorded_generator():
    seq = [[0.1, 0.2], [0.3, -0.4]]
    gen = DisturbanceGenerator("recorded", {"sequence": seq})
    np.testing.assert_array_equal(generate_disturbance(gen, 1), [0.3, -0.4])
    assert disturbance_bound(gen) == pytest.approx(0.5)


def short(scn, **kw):
    return replace(scn, **kw)


def test_equilibrium_run(bscn):
    cfg = bscn.mpc_config
    cost = EconomicCost(cfg.cost.Q, cfg.cost.R, [0.0, 0.0], [0.0], cfg.cost.Lambda)
    tc = make_terminal_cost(bscn.model, bscn.theta_box, cost, cfg.constraints)
    scn = short(
        bscn,
        mpc_config=MpcConfig(cfg.N, cost, cfg.constraints, tc, bscn.theta_box),
        disturbance=DisturbanceGenerator("zero", {"dim": 2}),
        disturbance_matrix=None,
        theta_hat_0=np.array(THETA_STAR),
        T_steps=50,
    )
    log = run_closed_loop(scn)
    assert np.all(log.x == 0) and np.all(np.abs(log.u) <= 1e-12)
    assert np.all(np.abs(log.stage_cost) <= 1e-20)
    np.testing.assert_array_equal(log.theta_hat, np.tile(THETA_STAR, (50, 1)))


def test_plant_consistency_and_determinism(bscn):
    scn = short(bscn, T_steps=200, seed=3)
    a = run_closed_loop(scn)
    for k in range(a.T - 1):
        np.testing.assert_array_equal(a.x[k + 1], step_true(scn.model, scn.theta_star, a.x[k], a.u[k], a.w[k]))
    np.testing.assert_array_equal(a.x_final, step_true(scn.model, scn.theta_star, a.x[-1], a.u[-1], a.w[-1]))
    b = run_closed_loop(scn)
    assert a.to_csv() == b.to_csv()
    assert all(scn.theta_box.contains(t) for t in a.theta_hat)


def test_no_adaptation_keeps_estimate(bscn):
    log = run_closed_loop(short(bscn, T_steps=100, adapt=False))
    np.testing.assert_array_equal(log.theta_hat, np.tile(bscn.theta_hat_0, (100, 1)))


def test_effective_disturbance_bound(bscn):
    log = run_closed_loop(short(bscn, T_steps=150))
    assert np.all(np.linalg.norm(log.w, axis=1) <= bscn.w_bar + 1e-15)
    np.testing.assert_allclose(bscn.E, np.diag([1 / 0.6125, 0.0015 / 21.12]))


def test_first_step_has_no_update(bscn):
    log = run_closed_loop(short(bscn, T_steps=3))
    np.testing.assert_array_equal(log.theta_hat[0], bscn.theta_hat_0)


def test_csv_roundtrip(bscn):
    log = run_closed_loop(short(bscn, T_steps=20))
    text = log.to_csv()
    assert text.splitlines()[0] == "k,x0,x1,u0,w0,w1,theta_hat0,theta_hat1,slack0,stage_cost,value_fn,qp_iters"
    back = SimLog.from_csv(text, 2, 1, 2, 1)
    for name in ("x", "u", "w", "theta_hat", "slack", "stage_cost", "value_fn", "qp_iters"):
        np.testing.assert_array_equal(getattr(back, name), getattr(log, name))


def test_scenario_validation(bscn):
    with pytest.raises(ValueError):
        short(bscn, theta_hat_0=np.array([1.0, 0.001]))
    with pytest.raises(ValueError):
        short(bscn, T_steps=0)
