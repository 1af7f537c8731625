import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lumenforge.lighting import EnvMapGrid, SgEnvironment, eval_sg, sg_to_grid
from lumenforge.sgfit import (PRINTED, SgFitConfig, UnconstrainedParams, constrain, fit_grid, fit_loss,
                              fit_objective, format_trace_csv, region_offsets)

PRINTED_CFG = SgFitConfig(offset_rule=PRINTED)
SOURCE = SgEnvironment([[0.3, 0.2, np.sqrt(0.87)], [0, 0, 1]], [40.0, 0.01], [[8, 6, 4], [0.2] * 3])


@pytest.mark.parametrize("k,cfg,expected", [
    (0, SgFitConfig(), (np.pi / 8, np.pi / 6 - np.pi)),
    (7, SgFitConfig(), (3 * np.pi / 8, np.pi / 2 - np.pi)),
    (0, PRINTED_CFG, (np.pi / 8, np.pi / 6 - np.pi)),
    (7, PRINTED_CFG, (3 * np.pi / 8, np.pi / 2 - np.pi)),
    (6, PRINTED_CFG, (np.pi / 8, np.pi / 6 - np.pi)),
    (11, SgFitConfig(), (3 * np.pi / 8, 11 * np.pi / 6 - np.pi)),
])
def test_region_offsets(k, cfg, expected):
    assert region_offsets(k, cfg) == pytest.approx(expected, abs=1e-15)


def test_region_offsets_out_of_range():
    with pytest.raises(IndexError):
        region_offsets(12)


def test_config_checks():
    with pytest.raises(ValueError):
        SgFitConfig(lobe_count=10)
    with pytest.raises(ValueError):
        SgFitConfig(offset_rule="diagonal")


def test_row_major_covers_every_region_once():
    cells = {(round(b, 9), round(d, 9)) for b, d in (region_offsets(k) for k in range(12))}
    assert len(cells) == 12


def test_printed_rule_duplicates_regions():
    offsets = [region_offsets(k, PRINTED_CFG) for k in range(12)]
    for k in range(6):
        assert offsets[k] == offsets[k + 6]
    assert len(set(offsets)) == 6


def test_constrain_examples():
    env = constrain(UnconstrainedParams.initial(12))
    assert np.allclose(env.lam, np.pi / 2)
    assert np.allclose(env.intensity, 1.0)
    # zero tanh input puts each axis at its region centre
    b, d = region_offsets(3)
    assert np.allclose(env.xi[3], [np.sin(b) * np.cos(d), np.sin(b) * np.sin(d), np.cos(b)])
    u = UnconstrainedParams(np.zeros(12), np.zeros(12), np.zeros(12), np.full((12, 3), np.log(2.0)))
    env = constrain(u)
    assert np.allclose(env.lam, 1.0) and np.allclose(env.intensity, 2.0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-30, 30), min_size=24, max_size=24))
def test_constrained_angles_stay_in_region(vals):
    th, ph = np.array(vals[:12]), np.array(vals[12:])
    cfg = SgFitConfig()
    env = constrain(UnconstrainedParams(th, ph, np.zeros(12), np.zeros((12, 3))), cfg)
    for k in range(12):
        b, d = region_offsets(k, cfg)
        theta = cfg.theta_scale * np.tanh(th[k]) + b
        phi = cfg.phi_scale * np.tanh(ph[k]) + d
        assert b - cfg.theta_scale <= theta <= b + cfg.theta_scale
        assert d - cfg.phi_scale <= phi <= d + cfg.phi_scale
        assert np.isclose(env.xi[k, 2], np.cos(theta))


def test_unconstrained_vector_round_trip(rng):
    x = rng.normal(size=72)
    assert np.array_equal(UnconstrainedParams.from_vector(x).to_vector(), x)
    with pytest.raises(ValueError):
        UnconstrainedParams(np.zeros(2), np.zeros(3), np.zeros(2), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        UnconstrainedParams.from_vector(np.full(6, np.nan))


def test_fit_loss_single_cell():
    # rec = e - 1 against a black target gives (log e - log 1)^2 = 1 per channel
    target = EnvMapGrid(np.zeros((1, 1, 3)))
    d = target.directions()[0, 0]
    env = SgEnvironment([d], [1.0], [[np.e - 1] * 3])
    assert fit_loss(env, target) == pytest.approx(1.0, rel=1e-14)
    assert fit_loss(env, target, weighted=False) == pytest.approx(1.0, rel=1e-14)


def test_fit_loss_zero_on_exact_target(rng):
    env = constrain(UnconstrainedParams.from_vector(rng.normal(size=72) * 0.5))
    assert fit_loss(env, sg_to_grid(env)) == 0.0


@pytest.mark.parametrize("cfg", [SgFitConfig(), SgFitConfig(solid_angle_weighting=False), PRINTED_CFG])
def test_gradient_matches_finite_differences(rng, cfg):
    target = sg_to_grid(constrain(UnconstrainedParams.from_vector(rng.normal(size=72) * 0.7)))
    fun = fit_objective(target, cfg)
    h = 1e-6
    worst = 0.0
    for _ in range(50):
        x = rng.normal(size=72) * 0.7
        _, g = fun(x)
        i = rng.integers(72)
        e = np.zeros(72)
        e[i] = h
        fd = (fun(x + e)[0] - fun(x - e)[0]) / (2 * h)
        worst = max(worst, abs(fd - g[i]) / max(abs(fd), 1e-6))
    assert worst < 1e-4


def test_objective_matches_fit_loss(rng):
    target = sg_to_grid(SgEnvironment([[0, 0, 1.0]], [20.0], [[5, 4, 3]]))
    x = rng.normal(size=72) * 0.5
    assert fit_objective(target)(x)[0] == pytest.approx(fit_loss(constrain(UnconstrainedParams.from_vector(x)),
                                                                  target), rel=1e-13)


def test_constant_target():
    target = EnvMapGrid(np.ones((16, 32, 3)))
    res = fit_grid(target)
    rec = eval_sg(res.environment, target.directions())
    assert np.max(np.abs(rec - 1.0)) < 0.05
    losses = [r.loss for r in res.trace]
    assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_fit_is_deterministic():
    target = sg_to_grid(SOURCE)
    cfg = SgFitConfig(max_iterations=60)
    a, b = fit_grid(target, cfg), fit_grid(target, cfg)
    assert a.loss == b.loss
    assert np.array_equal(a.params.to_vector(), b.params.to_vector())


def test_printed_rule_keeps_paired_lobes_identical():
    target = sg_to_grid(SOURCE)
    res = fit_grid(target, SgFitConfig(offset_rule=PRINTED, max_iterations=50))
    p = res.params.to_vector().reshape(12, 6)
    assert np.allclose(p[:6], p[6:], atol=1e-10)


def test_trace_csv():
    res = fit_grid(EnvMapGrid(np.ones((4, 8, 3))), SgFitConfig(max_iterations=3))
    text = format_trace_csv(res.trace)
    lines = text.splitlines()
    assert lines[0] == "iteration,loss,gradient_norm"
    assert len(lines) == len(res.trace) + 1
    assert float(lines[1].split(",")[1]) == res.trace[0].loss
