"""Region-constrained spherical-Gaussian fitting of environment grids.

Each lobe ``k`` is parameterised by unconstrained ``(theta_hat, phi_hat,
lambda_hat, F_hat)``::

    lambda = exp(lambda_hat)          F = exp(F_hat)
    theta  = a tanh(theta_hat) + b_k  phi = c tanh(phi_hat) + d_k

with ``a = 3 pi / 8``, ``c = pi / 2`` and per-lobe region offsets
``b_k = pi/4 (row_k + 1/2)`` and ``d_k = pi/3 (k mod 6 + 1/2) - pi``, where
``row_k = k // 6`` by default (one lobe per cell of a 2x6 split of the
hemisphere) or ``k mod 2`` with ``offset_rule="printed"``.
The fit minimises a log-encoded L2 loss with L-BFGS and analytic gradients.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .lbfgs import LbfgsConfig, lbfgs_minimize
from .lighting import EnvMapGrid, SgEnvironment, grid_directions, grid_solid_angles, spherical_to_vector

log = logging.getLogger(__name__)

PRINTED = "printed"
ROW_MAJOR = "row-major"


@dataclass(frozen=True)
class SgFitConfig:
    lobe_count: int = 12
    region_rows: int = 2
    region_cols: int = 6
    theta_scale: float = 3 * np.pi / 8
    phi_scale: float = np.pi / 2
    lbfgs_history: int = 10
    max_iterations: int = 400
    gradient_tolerance: float = 1e-6
    # weight cells by solid angle so the dense rows near the pole don't dominate
    solid_angle_weighting: bool = True
    # "row-major": b_k uses k // region_cols, one lobe per region.
    # "printed": b_k uses k mod 2, so lobes k and k+6 share a region and,
    # starting from the symmetric initialisation, stay identical.
    offset_rule: str = ROW_MAJOR

    def __post_init__(self):
        if self.lobe_count != self.region_rows * self.region_cols:
            raise ValueError("lobe_count must equal region_rows * region_cols")
        if self.offset_rule not in (PRINTED, ROW_MAJOR):
            raise ValueError(f"unknown offset rule {self.offset_rule!r}")

    def lbfgs(self) -> LbfgsConfig:
        return LbfgsConfig(history=self.lbfgs_history, max_iterations=self.max_iterations,
                           gradient_tolerance=self.gradient_tolerance)


@dataclass(frozen=True, eq=False)
class UnconstrainedParams:
    theta_hat: np.ndarray
    phi_hat: np.ndarray
    lambda_hat: np.ndarray
    intensity_hat: np.ndarray

    def __post_init__(self):
        for name in ("theta_hat", "phi_hat", "lambda_hat"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64).reshape(-1))
        object.__setattr__(self, "intensity_hat",
                           np.asarray(self.intensity_hat, dtype=np.float64).reshape(-1, 3))
        k = self.theta_hat.shape[0]
        if not (self.phi_hat.shape[0] == self.lambda_hat.shape[0] == self.intensity_hat.shape[0] == k):
            raise ValueError("unconstrained parameter arrays disagree on lobe count")
        if not all(np.all(np.isfinite(a)) for a in self.arrays()):
            raise ValueError("unconstrained parameters must be finite")

    def arrays(self):
        return self.theta_hat, self.phi_hat, self.lambda_hat, self.intensity_hat

    def __len__(self):
        return self.theta_hat.shape[0]

    def to_vector(self) -> np.ndarray:
        """Pack as ``[theta_hat, phi_hat, lambda_hat, F_r, F_g, F_b]`` per lobe."""
        return np.column_stack([self.theta_hat, self.phi_hat, self.lambda_hat,
                                self.intensity_hat]).reshape(-1)

    @classmethod
    def from_vector(cls, x):
        p = np.asarray(x, dtype=np.float64).reshape(-1, 6)
        return cls(p[:, 0], p[:, 1], p[:, 2], p[:, 3:])

    @classmethod
    def initial(cls, lobe_count=12):
        z = np.zeros(lobe_count)
        return cls(z, z, np.full(lobe_count, np.log(np.pi / 2)), np.zeros((lobe_count, 3)))


def region_offsets(k: int, cfg: SgFitConfig = SgFitConfig()):
    """Elevation offset ``b_k`` and azimuth offset ``d_k`` for lobe ``k``."""
    if not 0 <= k < cfg.lobe_count:
        raise IndexError(f"lobe index {k} out of range for {cfg.lobe_count} lobes")
    row = k % 2 if cfg.offset_rule == PRINTED else k // cfg.region_cols
    b = np.pi / 4 * (row + 0.5)
    d = np.pi / 3 * (k % 6 + 0.5) - np.pi
    return b, d


def _offsets(cfg, k):
    bd = np.array([region_offsets(i, cfg) for i in range(k)])
    return bd[:, 0], bd[:, 1]


def constrain(u: UnconstrainedParams, cfg: SgFitConfig = SgFitConfig()) -> SgEnvironment:
    b, d = _offsets(cfg, len(u))
    theta = cfg.theta_scale * np.tanh(u.theta_hat) + b
    phi = cfg.phi_scale * np.tanh(u.phi_hat) + d
    return SgEnvironment(spherical_to_vector(theta, phi), np.exp(u.lambda_hat), np.exp(u.intensity_hat))


def _cell_weights(target: EnvMapGrid, weighted: bool):
    if weighted:
        return grid_solid_angles(target.rows, target.cols, target.domain)
    return np.ones((target.rows, target.cols))


def log_loss_and_grad(rec, target, weights):
    """Weighted mean of ``(log(rec+1) - log(target+1))^2`` and its gradient w.r.t. ``rec``."""
    norm = 3.0 * weights.sum()
    diff = np.log1p(rec) - np.log1p(target)
    w = weights[..., None]
    loss = float(np.sum(w * diff * diff) / norm)
    grad = 2.0 * w * diff / (1.0 + rec) / norm
    return loss, grad


def fit_loss(env: SgEnvironment, target: EnvMapGrid, weighted: bool = True) -> float:
    """Log-encoded L2 between ``env`` sampled at the cell centres and ``target``.

    With ``weighted`` each cell counts in proportion to its solid angle;
    otherwise it is a plain mean over cells and channels.
    """
    from .lighting import eval_sg

    rec = eval_sg(env, target.directions())
    loss, _ = log_loss_and_grad(rec, target.radiance, _cell_weights(target, weighted))
    return loss


class _Objective:
    """fit_loss over the packed unconstrained vector, with analytic gradient."""

    def __init__(self, target: EnvMapGrid, cfg: SgFitConfig):
        self.dirs = target.directions().reshape(-1, 3)
        self.target = target.radiance.reshape(-1, 3)
        self.weights = _cell_weights(target, cfg.solid_angle_weighting).reshape(-1)
        self.cfg = cfg
        self.b, self.d = _offsets(cfg, cfg.lobe_count)

    def __call__(self, x):
        cfg = self.cfg
        p = x.reshape(-1, 6)
        t_th, t_ph = np.tanh(p[:, 0]), np.tanh(p[:, 1])
        theta = cfg.theta_scale * t_th + self.b
        phi = cfg.phi_scale * t_ph + self.d
        lam = np.exp(p[:, 2])
        f = np.exp(p[:, 3:])
        st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
        xi = np.column_stack([st * cp, st * sp, ct])

        cos = self.dirs @ xi.T                       # (N, K)
        e = np.exp(lam * (cos - 1.0))                # (N, K)
        rec = e @ f                                  # (N, 3)
        loss, g_rec = log_loss_and_grad(rec, self.target, self.weights)

        g_e = g_rec @ f.T                            # dloss/de, (N, K)
        g_f = f * (e.T @ g_rec)                      # through F = exp(F_hat)
        ge_e = g_e * e
        g_lam = lam * np.sum(ge_e * (cos - 1.0), axis=0)
        g_xi = lam[:, None] * (ge_e.T @ self.dirs)   # (K, 3)
        dxi_dth = np.column_stack([ct * cp, ct * sp, -st])
        dxi_dph = np.column_stack([-st * sp, st * cp, np.zeros_like(st)])
        g_th = np.sum(g_xi * dxi_dth, axis=1) * cfg.theta_scale * (1.0 - t_th ** 2)
        g_ph = np.sum(g_xi * dxi_dph, axis=1) * cfg.phi_scale * (1.0 - t_ph ** 2)
        grad = np.column_stack([g_th, g_ph, g_lam, g_f]).reshape(-1)
        return loss, grad


def fit_objective(target: EnvMapGrid, cfg: SgFitConfig = SgFitConfig()):
    """The callable ``x -> (loss, grad)`` minimised by :func:`fit_grid`."""
    return _Objective(target, cfg)


@dataclass
class SgFitResult:
    environment: SgEnvironment
    loss: float
    trace: list
    params: UnconstrainedParams
    converged: bool = False
    line_search_failed: bool = False
    message: str = ""
    extra: dict = field(default_factory=dict)


def fit_grid(target: EnvMapGrid, cfg: SgFitConfig = SgFitConfig(), init: UnconstrainedParams | None = None) -> SgFitResult:
    """Fit ``cfg.lobe_count`` region-constrained lobes to ``target`` with L-BFGS."""
    objective = _Objective(target, cfg)
    x0 = (init or UnconstrainedParams.initial(cfg.lobe_count)).to_vector()
    res = lbfgs_minimize(objective, x0, cfg.lbfgs())
    if res.line_search_failed:
        log.warning("sg fit: line search failed, returning best iterate (loss %.6g)", res.loss)
    params = UnconstrainedParams.from_vector(res.x)
    return SgFitResult(environment=constrain(params, cfg), loss=res.loss, trace=res.trace,
                       params=params, converged=res.converged,
                       line_search_failed=res.line_search_failed, message=res.message)


def format_trace_csv(trace) -> str:
    lines = ["iteration,loss,gradient_norm"]
    lines += [f"{row.iteration},{row.loss!r},{row.gradient_norm!r}" for row in trace]
    return "\n".join(lines) + "\n"
