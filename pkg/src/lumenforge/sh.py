"""Real spherical harmonics baseline (order 4: 25 basis functions, 75 RGB coefficients).

Convention: ``Y_l0 = K_l0 P_l^0(cos t)``, ``Y_lm = sqrt(2) K_lm cos(m p) P_l^m(cos t)``
for ``m > 0`` and ``sqrt(2) K_l|m| sin(|m| p) P_l^|m|(cos t)`` for ``m < 0``, with
``K_lm = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!)``. The associated Legendre functions
carry no Condon-Shortley ``(-1)^m`` factor. Coefficients are stored in the
order ``(l, m) = (0,0), (1,-1), (1,0), (1,1), (2,-2), ...``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

from .lighting import EnvMapGrid


def sh_index(l: int, m: int) -> int:
    return l * l + l + m


def _legendre(lmax, x):
    """P_l^m(x) for 0 <= m <= l <= lmax, without the Condon-Shortley phase."""
    x = np.asarray(x, dtype=np.float64)
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    p = {}
    p[0, 0] = np.ones_like(x)
    for m in range(1, lmax + 1):
        p[m, m] = (2 * m - 1) * s * p[m - 1, m - 1]
    for m in range(0, lmax):
        p[m + 1, m] = (2 * m + 1) * x * p[m, m]
    for m in range(0, lmax + 1):
        for l in range(m + 2, lmax + 1):
            p[l, m] = ((2 * l - 1) * x * p[l - 1, m] - (l + m - 1) * p[l - 2, m]) / (l - m)
    return p


def sh_basis(dirs, order: int = 4) -> np.ndarray:
    """Evaluate all ``(order+1)^2`` basis functions: ``(..., 3) -> (..., (order+1)^2)``."""
    d = np.asarray(dirs, dtype=np.float64)
    z = np.clip(d[..., 2], -1.0, 1.0)
    phi = np.arctan2(d[..., 1], d[..., 0])
    p = _legendre(order, z)
    out = np.empty(d.shape[:-1] + ((order + 1) ** 2,))
    for l in range(order + 1):
        for m in range(0, l + 1):
            k = np.sqrt((2 * l + 1) / (4 * np.pi) * factorial(l - m) / factorial(l + m))
            if m == 0:
                out[..., sh_index(l, 0)] = k * p[l, 0]
            else:
                out[..., sh_index(l, m)] = np.sqrt(2.0) * k * np.cos(m * phi) * p[l, m]
                out[..., sh_index(l, -m)] = np.sqrt(2.0) * k * np.sin(m * phi) * p[l, m]
    return out


@dataclass(frozen=True, eq=False)
class ShCoeffs:
    coeffs: np.ndarray
    order: int = 4

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64)
        n = (self.order + 1) ** 2
        if c.shape != (n, 3):
            raise ValueError(f"order {self.order} needs coefficients of shape ({n}, 3), got {c.shape}")
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @property
    def parameter_count(self) -> int:
        return self.coeffs.size


def sh_project(grid: EnvMapGrid, order: int = 4) -> ShCoeffs:
    """``c_lm = sum_cells L(dir) Y_lm(dir) d_omega``.

    Hemisphere grids are projected as if the lower hemisphere were black.
    """
    y = sh_basis(grid.directions(), order)
    w = grid.solid_angles()
    coeffs = np.einsum("rcn,rc,rck->nk", y, w, grid.radiance)
    return ShCoeffs(coeffs, order)


def sh_fit_lstsq(grid: EnvMapGrid, order: int = 4) -> ShCoeffs:
    """Solid-angle-weighted least-squares fit over the grid's own domain.

    Unlike :func:`sh_project`, this does not assume orthogonality, so it is the
    better-conditioned choice on a hemisphere.
    """
    y = sh_basis(grid.directions(), order).reshape(-1, (order + 1) ** 2)
    sw = np.sqrt(grid.solid_angles().reshape(-1, 1))
    coeffs, *_ = np.linalg.lstsq(y * sw, grid.radiance.reshape(-1, 3) * sw, rcond=None)
    return ShCoeffs(coeffs, order)


def sh_eval(coeffs: ShCoeffs, dirs) -> np.ndarray:
    return sh_basis(dirs, coeffs.order) @ coeffs.coeffs


def sh_to_grid_values(coeffs: ShCoeffs, rows, cols, domain) -> np.ndarray:
    """SH reconstruction sampled at cell centres (may be negative: ringing)."""
    from .lighting import grid_directions

    return sh_eval(coeffs, grid_directions(rows, cols, domain))
