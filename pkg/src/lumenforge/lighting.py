"""Spherical-Gaussian lighting, LDR->HDR parameter transforms and env-map grids.

A lobe contributes ``F * exp(-lambda * (1 - dot(eta, xi)))``: it equals ``F``
along its axis and decays away from it.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

HEMISPHERE = "hemisphere"
SPHERE = "sphere"
MAX_LOBES = 64


@dataclass(frozen=True, eq=False)
class SgLobe:
    xi: np.ndarray
    lam: float
    intensity: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=np.float64).reshape(3)
        if abs(np.linalg.norm(xi) - 1.0) > 1e-6:
            raise ValueError("lobe axis must be unit length")
        if not (np.isfinite(self.lam) and self.lam > 0):
            raise ValueError(f"lobe bandwidth must be positive, got {self.lam}")
        f = np.asarray(self.intensity, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ValueError("lobe intensity must be finite and non-negative")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "lam", float(self.lam))
        object.__setattr__(self, "intensity", f)


@dataclass(frozen=True, eq=False)
class SgEnvironment:
    """An ordered set of K lobes stored as parallel arrays.

    ``xi`` is ``(K, 3)``, ``lam`` is ``(K,)`` and ``intensity`` is ``(K, 3)``.
    Lobe order matters: it carries the region assignment of a fit.
    """

    xi: np.ndarray
    lam: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        xi = np.array(self.xi, dtype=np.float64).reshape(-1, 3)
        lam = np.array(self.lam, dtype=np.float64).reshape(-1)
        f = np.array(self.intensity, dtype=np.float64).reshape(-1, 3)
        k = xi.shape[0]
        if not 1 <= k <= MAX_LOBES:
            raise ValueError(f"an environment needs 1..{MAX_LOBES} lobes, got {k}")
        if lam.shape[0] != k or f.shape[0] != k:
            raise ValueError("xi, lam and intensity must describe the same number of lobes")
        if np.any(np.abs(np.linalg.norm(xi, axis=1) - 1.0) > 1e-6):
            raise ValueError("lobe axes must be unit length")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValueError("lobe bandwidths must be positive and finite")
        if not np.all(np.isfinite(f)) or np.any(f < 0):
            raise ValueError("lobe intensities must be finite and non-negative")
        for name, arr in (("xi", xi), ("lam", lam), ("intensity", f)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self):
        return self.lam.shape[0]

    @property
    def lobes(self):
        return [SgLobe(self.xi[k], self.lam[k], self.intensity[k]) for k in range(len(self))]

    @classmethod
    def from_lobes(cls, lobes):
        lobes = list(lobes)
        if not lobes:
            raise ValueError("an environment needs at least one lobe")
        return cls(np.stack([l.xi for l in lobes]),
                   np.array([l.lam for l in lobes]),
                   np.stack([l.intensity for l in lobes]))

    def scaled(self, factor):
        return SgEnvironment(self.xi, self.lam, self.intensity * factor)


def uniform_environment(value=1.0, lam=0.01, axis=(0.0, 0.0, 1.0)) -> SgEnvironment:
    """A single very wide lobe: nearly constant radiance ``value`` on the sphere.

    With ``lam = 0.01`` radiance varies by at most 2% over the whole sphere.
    """
    f = np.broadcast_to(np.asarray(value, dtype=np.float64), (3,))
    return SgEnvironment([axis], [lam], [f])


def sg_lobe_values(xi, lam, dirs):
    """``exp(-lam_k (1 - dirs . xi_k))`` with shape ``dirs.shape[:-1] + (K,)``."""
    cos = np.asarray(dirs, dtype=np.float64) @ np.asarray(xi).T
    return np.exp(lam * (cos - 1.0))


def eval_sg(env: SgEnvironment, dirs) -> np.ndarray:
    """Radiance of ``env`` along unit direction(s) ``dirs`` (``(..., 3)`` -> ``(..., 3)``)."""
    return sg_lobe_values(env.xi, env.lam, dirs) @ env.intensity


@dataclass(frozen=True, eq=False)
class RawSgParams:
    """Bounded network-style lobe parameters (each in (-1, 1) after a tanh)."""

    xi_raw: np.ndarray
    lambda_raw: np.ndarray
    intensity_raw: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.xi_raw, dtype=np.float64).reshape(-1, 3)
        lam = np.asarray(self.lambda_raw, dtype=np.float64).reshape(-1)
        f = np.asarray(self.intensity_raw, dtype=np.float64).reshape(-1, 3)
        if not (xi.shape[0] == lam.shape[0] == f.shape[0]):
            raise ValueError("raw parameter arrays disagree on lobe count")
        if np.any(np.linalg.norm(xi, axis=1) == 0):
            raise ValueError("raw lobe axis must be non-zero")
        for name, arr in (("lambda_raw", lam), ("intensity_raw", f)):
            if not np.all(np.abs(arr) < 1):
                raise ValueError(f"{name} must lie strictly inside (-1, 1); tan transform diverges")
        object.__setattr__(self, "xi_raw", xi)
        object.__setattr__(self, "lambda_raw", lam)
        object.__setattr__(self, "intensity_raw", f)


def raw_to_hdr(raw: RawSgParams) -> SgEnvironment:
    xi = raw.xi_raw / np.linalg.norm(raw.xi_raw, axis=1, keepdims=True)
    lam = np.tan(np.pi / 4.0 * (raw.lambda_raw + 1.0))
    f = np.tan(np.pi / 4.0 * (raw.intensity_raw + 1.0))
    # lambda_raw -> -1 underflows tan to exactly 0; keep the bandwidth positive.
    lam = np.maximum(lam, np.finfo(np.float64).tiny)
    return SgEnvironment(xi, lam, f)


# --------------------------------------------------------------------------
# Environment-map grids
# --------------------------------------------------------------------------

def _theta_extent(domain):
    if domain == HEMISPHERE:
        return np.pi / 2.0
    if domain == SPHERE:
        return np.pi
    raise ValueError(f"unknown grid domain {domain!r}")


def grid_angles(rows, cols, domain=HEMISPHERE):
    """Cell-centre elevation ``theta`` (rows,) and azimuth ``phi`` (cols,)."""
    theta = (np.arange(rows) + 0.5) * _theta_extent(domain) / rows
    phi = (np.arange(cols) + 0.5) * 2.0 * np.pi / cols
    return theta, phi


def spherical_to_vector(theta, phi):
    st = np.sin(theta)
    return np.stack(np.broadcast_arrays(st * np.cos(phi), st * np.sin(phi), np.cos(theta)), axis=-1)


def grid_directions(rows, cols, domain=HEMISPHERE) -> np.ndarray:
    theta, phi = grid_angles(rows, cols, domain)
    return spherical_to_vector(theta[:, None], phi[None, :])


def grid_solid_angles(rows, cols, domain=HEMISPHERE) -> np.ndarray:
    """Per-cell ``sin(theta) dtheta dphi`` as a ``(rows, cols)`` array."""
    theta, _ = grid_angles(rows, cols, domain)
    d_theta = _theta_extent(domain) / rows
    d_phi = 2.0 * np.pi / cols
    return np.repeat((np.sin(theta) * d_theta * d_phi)[:, None], cols, axis=1)


@dataclass(frozen=True, eq=False)
class EnvMapGrid:
    """Directional radiance on an elevation x azimuth grid.

    Row ``r`` covers elevation ``theta`` in ``[r, r+1) * Theta / rows`` where
    ``Theta`` is pi/2 (hemisphere around +z) or pi (sphere); column ``c``
    covers azimuth ``[c, c+1) * 2 pi / cols`` measured from +x towards +y.
    """

    radiance: np.ndarray
    domain: str = HEMISPHERE

    def __post_init__(self):
        rad = np.array(self.radiance, dtype=np.float64)
        if rad.ndim != 3 or rad.shape[2] != 3 or rad.shape[0] < 1 or rad.shape[1] < 1:
            raise ValueError(f"grid radiance must have shape (rows, cols, 3), got {rad.shape}")
        if not np.all(np.isfinite(rad)) or np.any(rad < 0):
            raise ValueError("grid radiance must be finite and non-negative")
        _theta_extent(self.domain)
        rad.flags.writeable = False
        object.__setattr__(self, "radiance", rad)

    @property
    def rows(self) -> int:
        return self.radiance.shape[0]

    @property
    def cols(self) -> int:
        return self.radiance.shape[1]

    def directions(self) -> np.ndarray:
        return grid_directions(self.rows, self.cols, self.domain)

    def solid_angles(self) -> np.ndarray:
        return grid_solid_angles(self.rows, self.cols, self.domain)

    def lookup(self, dirs) -> np.ndarray:
        """Nearest-cell radiance; directions outside the domain get zero."""
        d = np.asarray(dirs, dtype=np.float64)
        theta = np.arccos(np.clip(d[..., 2], -1.0, 1.0))
        phi = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2.0 * np.pi)
        extent = _theta_extent(self.domain)
        r = np.floor(theta / extent * self.rows).astype(np.int64)
        c = np.floor(phi / (2.0 * np.pi) * self.cols).astype(np.int64) % self.cols
        inside = r < self.rows
        if self.domain == SPHERE:
            r = np.minimum(r, self.rows - 1)
            inside = np.ones_like(inside)
        out = self.radiance[np.minimum(r, self.rows - 1), c]
        return np.where(inside[..., None], out, 0.0)


def grid_direction(grid: EnvMapGrid, r: int, c: int) -> np.ndarray:
    if not (0 <= r < grid.rows and 0 <= c < grid.cols):
        raise IndexError(f"cell ({r}, {c}) outside a {grid.rows}x{grid.cols} grid")
    theta = (r + 0.5) * _theta_extent(grid.domain) / grid.rows
    phi = (c + 0.5) * 2.0 * np.pi / grid.cols
    return spherical_to_vector(theta, phi)


def sg_to_grid(env: SgEnvironment, rows: int = 16, cols: int = 32, domain: str = HEMISPHERE) -> EnvMapGrid:
    if not isinstance(env, SgEnvironment) or len(env) < 1:
        raise ValueError("sg_to_grid needs a non-empty SgEnvironment")
    dirs = grid_directions(rows, cols, domain)
    return EnvMapGrid(eval_sg(env, dirs), domain)


# --------------------------------------------------------------------------
# Text serialisation: one lobe per line, "xi_x xi_y xi_z lambda F_r F_g F_b"
# --------------------------------------------------------------------------

def format_environment(env: SgEnvironment) -> str:
    lines = []
    for xi, lam, f in zip(env.xi, env.lam, env.intensity):
        vals = (*xi, lam, *f)
        lines.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(lines) + "\n"


def _parse_lobe_lines(lines, where):
    rows = []
    for lineno, line in lines:
        parts = line.split()
        if len(parts) != 7:
            raise ValueError(f"{where}:{lineno}: expected 7 numbers per lobe, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError:
            raise ValueError(f"{where}:{lineno}: non-numeric lobe field") from None
    arr = np.array(rows, dtype=np.float64).reshape(-1, 7)
    # hand-written files may carry rounded axes; exact repr() output is left alone
    norms = np.linalg.norm(arr[:, :3], axis=1, keepdims=True)
    xi = np.where(np.abs(norms - 1.0) > 1e-12, arr[:, :3] / norms, arr[:, :3])
    return xi, arr[:, 3], arr[:, 4:]


def _content_lines(text):
    return [(i + 1, ln.strip()) for i, ln in enumerate(text.splitlines())
            if ln.strip() and not ln.lstrip().startswith("#")]


def parse_environment(text: str, where: str = "<string>") -> SgEnvironment:
    xi, lam, f = _parse_lobe_lines(_content_lines(text), where)
    return SgEnvironment(xi, lam, f)


def write_environment(env: SgEnvironment, path) -> None:
    with open(path, "w") as f:
        f.write(format_environment(env))


def read_environment(path) -> SgEnvironment:
    with open(path) as f:
        return parse_environment(f.read(), os.fspath(path))
