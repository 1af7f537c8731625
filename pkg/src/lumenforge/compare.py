"""Side-by-side comparison of a 12-lobe SG fit and an order-4 SH projection."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .brdf import BrdfConfig
from .lighting import HEMISPHERE, EnvMapGrid, SgEnvironment, eval_sg, grid_solid_angles, sg_to_grid, spherical_to_vector
from .renderlayer import build_quadrature, shade
from .sgfit import SgFitConfig, fit_grid, log_loss_and_grad
from .sh import sh_eval, sh_project

PROBE_ROUGHNESS = 0.2
PROBE_ALBEDO = (0.5, 0.5, 0.5)


def probe_views():
    """Fixed view set for the glossy probe: 4 elevations x 4 azimuths around +z."""
    theta = np.radians([5.0, 25.0, 45.0, 65.0])
    phi = np.arange(4) * np.pi / 2 + np.pi / 4
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    return spherical_to_vector(tt.reshape(-1), pp.reshape(-1))


def log_loss(rec, grid: EnvMapGrid) -> float:
    """Solid-angle-weighted log-encoded L2; negative reconstructions are clamped to 0 first."""
    w = grid_solid_angles(grid.rows, grid.cols, grid.domain)
    loss, _ = log_loss_and_grad(np.maximum(rec, 0.0), grid.radiance, w)
    return loss


def probe_render(radiance_cells, grid: EnvMapGrid, cfg: BrdfConfig = BrdfConfig()):
    """Diffuse + specular of a flat glossy probe (normal +z) lit by per-cell radiance.

    The quadrature uses the grid's own cells as directions, so the reference
    render sees the target map without resampling.
    """
    if grid.domain != HEMISPHERE:
        raise ValueError("the probe render needs a hemisphere grid")
    q = build_quadrature(grid.cols, grid.rows)
    views = probe_views()
    cells = np.maximum(np.asarray(radiance_cells, dtype=np.float64), 0.0).reshape(1, -1, 3)
    n = len(views)
    out = shade(np.tile(PROBE_ALBEDO, (n, 1)), np.tile([0.0, 0.0, 1.0], (n, 1)),
                np.full(n, PROBE_ROUGHNESS), views, lambda dirs: np.broadcast_to(cells, dirs.shape), q, cfg)
    return out.diffuse + out.specular


@dataclass
class ComparisonReport:
    sg_log_loss: float
    sh_log_loss: float
    sg_render_mse: float
    sh_render_mse: float
    sg_parameters: int
    sh_parameters: int
    sg_iterations: int

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in asdict(self).items())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def compare_sh_sg(grid: EnvMapGrid, cfg: SgFitConfig = SgFitConfig(), order: int = 4,
                  brdf: BrdfConfig = BrdfConfig()) -> ComparisonReport:
    fit = fit_grid(grid, cfg)
    dirs = grid.directions()
    sg_rec = eval_sg(fit.environment, dirs)
    coeffs = sh_project(grid, order)
    sh_rec = sh_eval(coeffs, dirs)
    ref = probe_render(grid.radiance, grid, brdf)
    sg_img = probe_render(sg_rec, grid, brdf)
    sh_img = probe_render(sh_rec, grid, brdf)
    return ComparisonReport(
        sg_log_loss=log_loss(sg_rec, grid), sh_log_loss=log_loss(sh_rec, grid),
        sg_render_mse=float(np.mean((sg_img - ref) ** 2)), sh_render_mse=float(np.mean((sh_img - ref) ** 2)),
        sg_parameters=6 * cfg.lobe_count, sh_parameters=coeffs.parameter_count,
        sg_iterations=len(fit.trace) - 1)


def localized_source_env(rng: np.random.Generator, sources=None) -> SgEnvironment:
    """1-3 narrow bright lobes (lambda in [20, 80]) over a soft ambient lobe."""
    k = int(rng.integers(1, 4)) if sources is None else sources
    theta = rng.uniform(0.1, 1.35, k)
    phi = rng.uniform(0.0, 2 * np.pi, k)
    xi = spherical_to_vector(theta, phi)
    lam = rng.uniform(20.0, 80.0, k)
    f = rng.uniform(2.0, 20.0, (k, 1)) * rng.uniform(0.7, 1.0, (k, 3))
    amb = rng.uniform(0.05, 0.5) * rng.uniform(0.8, 1.0, 3)
    return SgEnvironment(np.vstack([xi, [0.0, 0.0, 1.0]]), np.append(lam, 0.01), np.vstack([f, amb]))


def localized_source_grid(seed: int = 7, rows: int = 16, cols: int = 32) -> EnvMapGrid:
    """The bundled test map: one localized source plus ambient on a 16 x 32 hemisphere."""
    rng = np.random.Generator(np.random.Philox(seed))
    return sg_to_grid(localized_source_env(rng, sources=1), rows, cols)
