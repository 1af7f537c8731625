import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from lumenforge.lighting import (HEMISPHERE, SPHERE, EnvMapGrid, RawSgParams, SgEnvironment, SgLobe, eval_sg,
                                 format_environment, grid_direction, grid_solid_angles, parse_environment,
                                 raw_to_hdr, read_environment, sg_to_grid, uniform_environment,
                                 write_environment)
from lumenforge.sh import ShCoeffs, sh_basis, sh_eval, sh_fit_lstsq, sh_index, sh_project

from conftest import random_env, random_unit

# 2 sqrt(pi), 30-digit mpmath
TWO_SQRT_PI = 3.54490770181103205459633496668
Z = np.array([0.0, 0.0, 1.0])


def test_sg_peak_and_falloff():
    env = SgEnvironment([Z], [10.0], [[2.0, 1.0, 0.5]])
    assert np.allclose(eval_sg(env, Z), [2.0, 1.0, 0.5], rtol=0, atol=0)
    # perpendicular direction: exp(-lambda)
    assert np.allclose(eval_sg(env, [1.0, 0, 0]), np.array([2.0, 1.0, 0.5]) * np.exp(-10.0), rtol=1e-15)
    # antipode: exp(-2 lambda)
    assert eval_sg(env, -Z)[0] == pytest.approx(2 * np.exp(-20.0), rel=1e-14)


def test_sg_sums_lobes(rng):
    env = random_env(rng, 4)
    d = random_unit(rng, 7)
    single = sum(eval_sg(SgEnvironment([l.xi], [l.lam], [l.intensity]), d) for l in env.lobes)
    assert np.allclose(eval_sg(env, d), single, rtol=1e-14)


def test_uniform_environment_within_two_percent(rng):
    vals = eval_sg(uniform_environment(), random_unit(rng, 500))
    assert np.all(vals <= 1.0) and np.all(vals >= np.exp(-0.02))


@pytest.mark.parametrize("kwargs", [
    dict(xi=[[0, 0, 2.0]], lam=[1.0], intensity=[[1, 1, 1]]),
    dict(xi=[Z], lam=[0.0], intensity=[[1, 1, 1]]),
    dict(xi=[Z], lam=[np.inf], intensity=[[1, 1, 1]]),
    dict(xi=[Z], lam=[1.0], intensity=[[1, -1, 1]]),
    dict(xi=[Z, Z], lam=[1.0], intensity=[[1, 1, 1], [1, 1, 1]]),
    dict(xi=np.zeros((0, 3)), lam=[], intensity=np.zeros((0, 3))),
])
def test_environment_validation(kwargs):
    with pytest.raises(ValueError):
        SgEnvironment(**kwargs)


def test_environment_lobes_round_trip(rng):
    env = random_env(rng, 5)
    back = SgEnvironment.from_lobes(env.lobes)
    assert np.array_equal(back.xi, env.xi) and np.array_equal(back.intensity, env.intensity)
    with pytest.raises(ValueError):
        SgLobe(Z, -1.0, [1, 1, 1])
    with pytest.raises(ValueError):
        env.lam[0] = 3.0


def test_raw_to_hdr_examples():
    raw = RawSgParams([[0.0, 0.0, 3.0], [1.0, 1.0, 0.0]], [0.0, 0.5], [[0.0, 0.0, 0.0], [-0.5, 0.5, 0.0]])
    env = raw_to_hdr(raw)
    assert np.allclose(env.xi, [[0, 0, 1], [np.sqrt(0.5), np.sqrt(0.5), 0]], atol=1e-15)
    # tan(pi/4) = 1, tan(3 pi / 8) = 1 + sqrt(2), tan(pi / 8) = sqrt(2) - 1
    assert env.lam == pytest.approx([1.0, 1 + np.sqrt(2)], rel=1e-14)
    assert env.intensity[1] == pytest.approx([np.sqrt(2) - 1, 1 + np.sqrt(2), 1.0], rel=1e-14)


@pytest.mark.parametrize("bad", [1.0, -1.0, 1.5])
def test_raw_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        RawSgParams([Z], [bad], [[0, 0, 0]])
    with pytest.raises(ValueError):
        RawSgParams([Z], [0.0], [[bad, 0, 0]])


def test_raw_rejects_zero_axis():
    with pytest.raises(ValueError):
        RawSgParams([[0, 0, 0]], [0.0], [[0, 0, 0]])


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.999, 0.999), st.floats(-0.999, 0.999))
def test_raw_to_hdr_monotone_positive(a, b):
    lam = raw_to_hdr(RawSgParams([Z, Z], [a, b], np.zeros((2, 3)))).lam
    assert np.all(lam > 0)
    if a < b:
        assert lam[0] <= lam[1]


def test_grid_direction_cell_centres():
    g = EnvMapGrid(np.zeros((8, 16, 3)))
    t, p = 0.5 * (np.pi / 2) / 8, 0.5 * 2 * np.pi / 16
    assert np.allclose(grid_direction(g, 0, 0), [np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])
    assert np.allclose(g.directions()[3, 5], grid_direction(g, 3, 5))
    with pytest.raises(IndexError):
        grid_direction(g, 8, 0)


@pytest.mark.parametrize("rows,cols", [(8, 16), (16, 32), (256, 512)])
def test_solid_angles_sum(rows, cols):
    # closed form of the midpoint sum: sum_r sin((r + 1/2) h) = sin^2(n h / 2) / sin(h / 2)
    h = np.pi / 2 / rows
    assert grid_solid_angles(rows, cols).sum() == pytest.approx(2 * np.pi * (h / 2) / np.sin(h / 2), rel=1e-12)
    h = np.pi / rows
    assert grid_solid_angles(rows, cols, SPHERE).sum() == pytest.approx(4 * np.pi * (h / 2) / np.sin(h / 2),
                                                                        rel=1e-12)
    assert grid_solid_angles(rows, cols).sum() == pytest.approx(2 * np.pi, rel=2e-2)


def test_grid_validation_and_lookup(rng):
    with pytest.raises(ValueError):
        EnvMapGrid(np.zeros((4, 4)))
    with pytest.raises(ValueError):
        EnvMapGrid(-np.ones((4, 4, 3)))
    with pytest.raises(ValueError):
        EnvMapGrid(np.zeros((4, 4, 3)), domain="cube")
    g = EnvMapGrid(rng.random((8, 16, 3)))
    assert np.array_equal(g.lookup(g.directions()), g.radiance)
    assert np.array_equal(g.lookup(-Z), np.zeros(3))
    s = EnvMapGrid(rng.random((8, 16, 3)), SPHERE)
    assert np.array_equal(s.lookup(s.directions()), s.radiance)


def test_sg_to_grid_samples_centres(rng):
    env = random_env(rng)
    g = sg_to_grid(env, 16, 32)
    assert g.radiance.shape == (16, 32, 3) and g.domain == HEMISPHERE
    assert np.allclose(g.radiance, eval_sg(env, g.directions()), rtol=0, atol=0)


def test_environment_text_round_trip(rng, tmp_path):
    env = random_env(rng, 6)
    back = parse_environment(format_environment(env))
    for a, b in ((env.xi, back.xi), (env.lam, back.lam), (env.intensity, back.intensity)):
        assert np.array_equal(a, b)
    write_environment(env, tmp_path / "env.txt")
    assert np.array_equal(read_environment(tmp_path / "env.txt").lam, env.lam)


def test_environment_text_comments_and_errors():
    env = parse_environment("# header\n\n0 0 2 5 1 1 1\n")
    assert np.allclose(env.xi, [Z])
    with pytest.raises(ValueError, match=":1:"):
        parse_environment("0 0 1 5 1 1\n")
    with pytest.raises(ValueError, match="non-numeric"):
        parse_environment("0 0 1 five 1 1 1\n")


# -------------------------------------------------------------- SH


def test_sh_constant_projection():
    g = EnvMapGrid(np.ones((256, 512, 3)), SPHERE)
    c = sh_project(g).coeffs
    assert c[0] == pytest.approx([TWO_SQRT_PI] * 3, rel=1e-5)
    assert np.max(np.abs(c[1:])) < 1e-4


def test_sh_basis_matches_scipy(rng):
    d = random_unit(rng, 40)
    theta = np.arccos(d[:, 2])
    phi = np.arctan2(d[:, 1], d[:, 0])
    y = sh_basis(d)
    for l in range(5):
        for m in range(-l, l + 1):
            # scipy's complex harmonics include the Condon-Shortley phase
            c = special.sph_harm_y(l, abs(m), theta, phi) * (-1) ** abs(m)
            ref = c.real if m == 0 else np.sqrt(2) * (c.real if m > 0 else c.imag)
            assert np.allclose(y[:, sh_index(l, m)], ref, atol=1e-12), (l, m)


def test_sh_orthonormal_on_dense_sphere():
    g = EnvMapGrid(np.zeros((200, 400, 3)), SPHERE)
    y = sh_basis(g.directions()).reshape(-1, 25)
    gram = (y * g.solid_angles().reshape(-1, 1)).T @ y
    assert np.allclose(gram, np.eye(25), atol=1e-4)


def test_sh_y20_projection():
    g = EnvMapGrid(np.zeros((256, 512, 3)), SPHERE)
    y = sh_basis(g.directions())[..., sh_index(2, 0)]
    c = sh_project(EnvMapGrid(np.repeat((y + 1.0)[..., None], 3, 2), SPHERE)).coeffs
    assert c[sh_index(2, 0)] == pytest.approx([1.0] * 3, abs=1e-4)
    assert c[0] == pytest.approx([TWO_SQRT_PI] * 3, rel=1e-4)


def test_sh_band_limited_round_trip(rng):
    true = rng.normal(size=(25, 3)) * 0.2
    true[0] += 10.0
    g = EnvMapGrid(np.zeros((256, 512, 3)), SPHERE)
    vals = sh_eval(ShCoeffs(true), g.directions())
    assert np.all(vals > 0)
    est = sh_project(EnvMapGrid(vals, SPHERE)).coeffs
    assert np.max(np.abs(est - true)) < 1e-3


def test_sh_lstsq_recovers_on_hemisphere(rng):
    true = rng.normal(size=(25, 3)) * 0.1
    true[0] += 5.0
    g = EnvMapGrid(np.zeros((16, 32, 3)))
    vals = sh_eval(ShCoeffs(true), g.directions())
    est = sh_fit_lstsq(EnvMapGrid(vals))
    assert np.allclose(sh_eval(est, g.directions()), vals, atol=1e-9)
    assert est.parameter_count == 75


def test_sh_coeffs_shape_checked():
    with pytest.raises(ValueError):
        ShCoeffs(np.zeros((16, 3)))
