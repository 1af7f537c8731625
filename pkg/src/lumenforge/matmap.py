"""Phong -> microfacet roughness mapping through an empirical conditional histogram.

Observations pair a discrete Phong key with a roughness value. The table
stores, per key, counts over 20 uniform roughness bins on [0, 1]; sampling
draws a bin by inverse CDF and a value uniformly inside it.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

ROUGHNESS_BINS = 20
DECILES = np.linspace(0.1, 0.9, 9)


def _key(k) -> tuple:
    if isinstance(k, (tuple, list, np.ndarray)):
        return tuple(int(v) for v in k)
    return (int(k),)


@dataclass(eq=False)
class ConditionalTable:
    edges: np.ndarray                       # roughness bin edges, (B + 1,)
    counts: dict                            # key -> (B,) int64
    exponent_edges: np.ndarray | None = None
    intensity_edges: np.ndarray | None = None
    _cdf: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        b = self.edges.size - 1
        if b < 1 or np.any(np.diff(self.edges) <= 0):
            raise ValueError("bin edges must be strictly increasing")
        clean = {}
        for k, c in self.counts.items():
            c = np.asarray(c, dtype=np.int64)
            if c.shape != (b,) or np.any(c < 0):
                raise ValueError(f"row {k} must hold {b} non-negative counts")
            if c.sum() > 0:
                clean[_key(k)] = c
        self.counts = clean

    @property
    def keys(self):
        return sorted(self.counts)

    def probabilities(self, key) -> np.ndarray:
        c = self._row(key)
        return c / c.sum()

    def _row(self, key):
        k = _key(key)
        if k not in self.counts:
            near = sorted(self.counts, key=lambda o: (sum((a - b) ** 2 for a, b in zip(o, k))
                                                      if len(o) == len(k) else np.inf, o))[:3]
            raise KeyError(f"no observations for Phong key {k}; nearest available keys: {near}")
        return self.counts[k]

    def key_for(self, exponent: float, intensity: float) -> tuple:
        """Decile key of raw Phong parameters (needs a table built from raw observations)."""
        if self.exponent_edges is None or self.intensity_edges is None:
            raise ValueError("this table was built from discrete keys and has no Phong bin edges")
        return (int(np.searchsorted(self.exponent_edges, exponent, side="right")),
                int(np.searchsorted(self.intensity_edges, intensity, side="right")))

    def row_support(self, key):
        """``(lo, hi)`` edges of the bins with non-zero probability."""
        nz = np.flatnonzero(self._row(key))
        return self.edges[nz], self.edges[nz + 1]


def roughness_edges(bins: int = ROUGHNESS_BINS) -> np.ndarray:
    return np.linspace(0.0, 1.0, bins + 1)


def build_conditional(observations, edges=None) -> ConditionalTable:
    """Histogram ``(phong_key, roughness)`` pairs into a conditional table.

    Roughness 1.0 falls in the last bin.
    """
    obs = list(observations)
    if not obs:
        raise ValueError("cannot build a conditional table from no observations")
    edges = roughness_edges() if edges is None else np.asarray(edges, dtype=np.float64)
    b = edges.size - 1
    counts: dict = {}
    for key, m in obs:
        m = float(m)
        if not edges[0] <= m <= edges[-1]:
            raise ValueError(f"microfacet value {m} outside [{edges[0]}, {edges[-1]}]")
        i = min(int(np.searchsorted(edges, m, side="right")) - 1, b - 1)
        counts.setdefault(_key(key), np.zeros(b, np.int64))[i] += 1
    return ConditionalTable(edges, counts)


def build_from_phong(rows, edges=None) -> ConditionalTable:
    """Build from raw ``(exponent, intensity, roughness)`` rows keyed by decile bins."""
    arr = np.asarray(list(rows), dtype=np.float64).reshape(-1, 3)
    if arr.shape[0] == 0:
        raise ValueError("cannot build a conditional table from no observations")
    e_edges = np.quantile(arr[:, 0], DECILES)
    i_edges = np.quantile(arr[:, 1], DECILES)
    keys = zip(np.searchsorted(e_edges, arr[:, 0], side="right"),
               np.searchsorted(i_edges, arr[:, 1], side="right"))
    table = build_conditional(zip(keys, arr[:, 2]), edges)
    table.exponent_edges, table.intensity_edges = e_edges, i_edges
    return table


def sample_conditional(table: ConditionalTable, key, seed: int = 42, size=None):
    """Draw roughness values for ``key``; deterministic for a given seed.

    Uses a counter-based Philox generator. Returns a float when ``size`` is
    None, otherwise an array.
    """
    c = table._row(key)
    cdf = np.cumsum(c) / c.sum()
    cdf[-1] = 1.0
    rng = np.random.Generator(np.random.Philox(seed))
    u = rng.random(size)
    v = rng.random(size)
    i = np.minimum(np.searchsorted(cdf, u, side="right"), c.size - 1)
    lo, hi = table.edges[i], table.edges[i + 1]
    out = lo + v * (hi - lo)
    return float(out) if size is None else out


def format_table(table: ConditionalTable) -> str:
    lines = ["# conditional roughness table", "edges " + " ".join(repr(float(e)) for e in table.edges)]
    if table.exponent_edges is not None:
        lines.append("exponent_edges " + " ".join(repr(float(e)) for e in table.exponent_edges))
        lines.append("intensity_edges " + " ".join(repr(float(e)) for e in table.intensity_edges))
    for k in table.keys:
        lines.append("row " + ",".join(map(str, k)) + " = " + " ".join(map(str, table.counts[k])))
    return "\n".join(lines) + "\n"


def parse_table(text: str) -> ConditionalTable:
    edges, counts, extra = None, {}, {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tag, _, rest = line.partition(" ")
        try:
            if tag == "edges":
                edges = [float(t) for t in rest.split()]
            elif tag in ("exponent_edges", "intensity_edges"):
                extra[tag] = np.array([float(t) for t in rest.split()])
            elif tag == "row":
                k, _, vals = rest.partition("=")
                counts[tuple(int(t) for t in k.split(","))] = [int(t) for t in vals.split()]
            else:
                raise ValueError(f"unknown record {tag!r}")
        except ValueError as exc:
            raise ValueError(f"line {n}: {exc}") from None
    if edges is None:
        raise ValueError("table text has no edges record")
    return ConditionalTable(np.array(edges), counts, extra.get("exponent_edges"), extra.get("intensity_edges"))


def write_table(table: ConditionalTable, path) -> None:
    with open(path, "w") as f:
        f.write(format_table(table))


def read_table(path) -> ConditionalTable:
    with open(path) as f:
        return parse_table(f.read())


def read_observations_csv(path):
    """Rows of ``phong_exponent,phong_intensity,roughness``; a header line is optional."""
    rows = []
    with open(path, newline="") as f:
        for n, rec in enumerate(csv.reader(f), 1):
            if not rec or rec[0].strip().startswith("#"):
                continue
            if n == 1 and rec[0].strip() == "phong_exponent":
                continue
            if len(rec) != 3:
                raise ValueError(f"{path}:{n}: expected 3 fields, got {len(rec)}")
            try:
                rows.append(tuple(float(x) for x in rec))
            except ValueError:
                raise ValueError(f"{path}:{n}: non-numeric field in {rec}") from None
    return rows
