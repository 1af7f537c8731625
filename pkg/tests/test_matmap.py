import numpy as np
import pytest
from scipy import stats

from lumenforge.matmap import (ConditionalTable, build_conditional, build_from_phong, format_table, parse_table,
                               read_observations_csv, read_table, roughness_edges, sample_conditional,
                               write_table)


def test_row_probabilities():
    t = build_conditional([((3, 1), 0.12), ((3, 1), 0.14), ((3, 1), 0.11), ((3, 1), 0.61)])
    p = t.probabilities((3, 1))
    assert p[2] == 0.75 and p[12] == 0.25 and p.sum() == 1.0
    lo, hi = t.row_support((3, 1))
    assert np.allclose(lo, [0.1, 0.6]) and np.allclose(hi, [0.15, 0.65])


def test_edges_and_last_bin():
    e = roughness_edges()
    assert e.size == 21 and e[0] == 0 and e[-1] == 1
    t = build_conditional([(0, 1.0), (0, 0.0)])
    p = t.probabilities(0)
    assert p[0] == 0.5 and p[-1] == 0.5
    with pytest.raises(ValueError):
        build_conditional([(0, 1.2)])
    with pytest.raises(ValueError):
        build_conditional([])


def test_unknown_key_names_neighbours():
    t = build_conditional([((1, 1), 0.2), ((5, 5), 0.3), ((2, 1), 0.5)])
    with pytest.raises(KeyError, match=r"\(1, 1\)"):
        sample_conditional(t, (1, 2))


def test_samples_stay_in_support():
    t = build_conditional([(7, 0.33), (7, 0.91)])
    x = sample_conditional(t, 7, seed=3, size=2000)
    assert np.all(((x >= 0.3) & (x < 0.35)) | ((x >= 0.9) & (x < 0.95)))
    assert isinstance(sample_conditional(t, 7), float)


def test_sampling_deterministic_per_seed():
    t = build_conditional([(0, v) for v in np.linspace(0, 1, 50)])
    a = sample_conditional(t, 0, seed=11, size=100)
    assert np.array_equal(a, sample_conditional(t, 0, seed=11, size=100))
    assert not np.array_equal(a, sample_conditional(t, 0, seed=12, size=100))


def test_chi_square_against_row():
    counts = np.array([0, 5, 10, 20, 40, 80, 40, 20, 10, 5, 3, 2, 1, 1, 1, 0, 0, 0, 0, 2])
    t = ConditionalTable(roughness_edges(), {(4, 4): counts})
    x = sample_conditional(t, (4, 4), seed=42, size=100_000)
    obs = np.histogram(x, roughness_edges())[0]
    nz = counts > 0
    assert obs[~nz].sum() == 0
    expected = counts[nz] / counts.sum() * x.size
    assert stats.chisquare(obs[nz], expected).pvalue > 0.01


def test_phong_decile_keys(rng):
    rows = np.column_stack([rng.uniform(1, 1000, 500), rng.uniform(0, 1, 500), rng.uniform(0, 1, 500)])
    t = build_from_phong(rows)
    assert len(t.exponent_edges) == 9
    assert all(0 <= a <= 9 and 0 <= b <= 9 for a, b in t.keys)
    assert sum(c.sum() for c in t.counts.values()) == 500
    k = t.key_for(rows[0, 0], rows[0, 1])
    assert k in t.keys
    with pytest.raises(ValueError):
        build_conditional([(0, 0.5)]).key_for(10.0, 0.5)


def test_table_text_round_trip(rng, tmp_path):
    rows = np.column_stack([rng.uniform(1, 100, 200), rng.random(200), rng.random(200)])
    t = build_from_phong(rows)
    back = parse_table(format_table(t))
    assert back.keys == t.keys
    assert all(np.array_equal(back.counts[k], t.counts[k]) for k in t.keys)
    assert np.array_equal(back.exponent_edges, t.exponent_edges)
    write_table(t, tmp_path / "t.txt")
    assert read_table(tmp_path / "t.txt").keys == t.keys
    with pytest.raises(ValueError, match="line 1"):
        parse_table("bogus 1 2\n")
    with pytest.raises(ValueError):
        parse_table("row 1 = 1 2\n")


def test_observations_csv(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("phong_exponent,phong_intensity,roughness\n10,0.5,0.3\n# note\n20,0.1,0.9\n")
    assert read_observations_csv(p) == [(10.0, 0.5, 0.3), (20.0, 0.1, 0.9)]
    p.write_text("10,0.5\n")
    with pytest.raises(ValueError, match="3 fields"):
        read_observations_csv(p)


def test_table_validation():
    with pytest.raises(ValueError):
        ConditionalTable(np.array([0.0, 0.5, 0.4]), {})
    with pytest.raises(ValueError):
        ConditionalTable(roughness_edges(), {0: np.ones(5)})
    t = ConditionalTable(roughness_edges(), {0: np.zeros(20, int), 1: np.ones(20, int)})
    assert t.keys == [(1,)]
