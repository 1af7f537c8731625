"""Hemisphere-quadrature rendering layer with analytic parameter gradients.

For every pixel the diffuse and specular images are

    I_d = sum_ij f_d L(l_ij) cos(theta_j) d_omega
    I_s = sum_ij f_s(v, l_ij) L(l_ij) cos(theta_j) d_omega

over a fixed midpoint grid of directions in the local shading frame,
rotated to world space. Lighting, normals and views all live in the
camera frame: x right, y up, camera looking down -z.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple

import numpy as np

from .brdf import ALPHA_FLOOR, BrdfConfig, SurfaceSample, fresnel_term, ndf_term, specular_from_cosines
from .imaging import HdrImage
from .lighting import SgEnvironment

DEFAULT_FOV_DEG = 63.4
THREADS_ENV = "LUMENFORGE_THREADS"
_CHUNK = 2048


@dataclass(frozen=True, eq=False)
class HemisphereQuadrature:
    """Midpoint rule on (elevation, azimuth); samples ordered elevation-major."""

    azimuth_bins: int
    elevation_bins: int
    directions: np.ndarray   # (M, 3) local-frame unit vectors, z = normal
    d_omega: np.ndarray      # (M,) solid angle per sample
    weights: np.ndarray      # (M,) cos(theta) * d_omega

    @property
    def size(self) -> int:
        return self.directions.shape[0]


@lru_cache(maxsize=16)
def build_quadrature(azimuth_bins: int = 16, elevation_bins: int = 8) -> HemisphereQuadrature:
    d_theta = (np.pi / 2) / elevation_bins
    d_phi = 2 * np.pi / azimuth_bins
    theta = (np.arange(elevation_bins) + 0.5) * d_theta
    phi = (np.arange(azimuth_bins) + 0.5) * d_phi
    tt, pp = np.meshgrid(theta, phi, indexing="ij")
    tt, pp = tt.reshape(-1), pp.reshape(-1)
    dirs = np.column_stack([np.sin(tt) * np.cos(pp), np.sin(tt) * np.sin(pp), np.cos(tt)])
    d_omega = np.sin(tt) * d_theta * d_phi
    q = HemisphereQuadrature(azimuth_bins, elevation_bins, dirs, d_omega, np.cos(tt) * d_omega)
    for arr in (q.directions, q.d_omega, q.weights):
        arr.flags.writeable = False
    return q


def local_frame(normal):
    """Right-handed orthonormal ``(t, b, n)`` with ``n = normal``.

    Uses the branchless construction of Duff et al. (2017); it is smooth
    except across the ``n_z = 0`` sign switch and exact at ``n = (0, 0, +-1)``.
    Accepts ``(3,)`` or ``(..., 3)``.
    """
    n = np.asarray(normal, dtype=np.float64)
    x, y, z = n[..., 0], n[..., 1], n[..., 2]
    sign = np.where(z >= 0, 1.0, -1.0)
    a = -1.0 / (sign + z)
    b = x * y * a
    t = np.stack([1.0 + sign * x * x * a, sign * b, -sign * x], axis=-1)
    bt = np.stack([b, sign + y * y * a, -y], axis=-1)
    return t, bt, n


def to_world(local_dirs, normal):
    """Rotate local-frame directions ``(M, 3)`` for each normal ``(N, 3)`` -> ``(N, M, 3)``."""
    t, b, n = local_frame(np.atleast_2d(normal))
    ld = np.asarray(local_dirs)
    return (t[:, None, :] * ld[None, :, 0:1] + b[:, None, :] * ld[None, :, 1:2]
            + n[:, None, :] * ld[None, :, 2:3])


# --------------------------------------------------------------------------
# Batched shading core
# --------------------------------------------------------------------------

Radiance = Callable[[np.ndarray], np.ndarray]


def sg_radiance(xi, lam, intensity) -> Radiance:
    """Per-pixel SG lighting: ``xi (N, K, 3)``, ``lam (N, K)``, ``intensity (N, K, 3)``."""
    def radiance(dirs):  # dirs (N, M, 3)
        cos = np.einsum("nmc,nkc->nmk", dirs, xi)
        e = np.exp(lam[:, None, :] * (cos - 1.0))
        return np.einsum("nmk,nkc->nmc", e, intensity)
    return radiance


def shared_radiance(fn) -> Radiance:
    """Lift a direction -> radiance function (e.g. a grid lookup) to the batched form."""
    def radiance(dirs):
        return fn(dirs)
    return radiance


class Shading(NamedTuple):
    diffuse: np.ndarray
    specular: np.ndarray
    valid: np.ndarray


def shade(albedo, normal, roughness, view, radiance: Radiance, q: HemisphereQuadrature,
          cfg: BrdfConfig = BrdfConfig(), visibility=None) -> Shading:
    """Quadrature-shade N points. ``visibility(dirs) -> (N, M)`` masks occluded samples.

    Points whose view lies at or below the surface get zero output and
    ``valid = False``.
    """
    albedo = np.asarray(albedo, dtype=np.float64).reshape(-1, 3)
    normal = np.asarray(normal, dtype=np.float64).reshape(-1, 3)
    view = np.asarray(view, dtype=np.float64).reshape(-1, 3)
    rough = np.broadcast_to(np.asarray(roughness, dtype=np.float64).reshape(-1), (normal.shape[0],))

    dirs = to_world(q.directions, normal)                     # (N, M, 3)
    n_dot_v = np.sum(normal * view, axis=1)                   # (N,)
    valid = n_dot_v > 0
    n_dot_l = np.broadcast_to(q.directions[:, 2], dirs.shape[:2])
    h = dirs + view[:, None, :]
    h /= np.maximum(np.linalg.norm(h, axis=2, keepdims=True), 1e-300)
    n_dot_h = np.einsum("nmc,nc->nm", h, normal)
    v_dot_h = np.einsum("nmc,nc->nm", h, view)
    fs = specular_from_cosines(n_dot_l, n_dot_v[:, None], n_dot_h, v_dot_h, rough[:, None], cfg)

    rad = radiance(dirs)
    if visibility is not None:
        rad = rad * visibility(dirs)[..., None]
    lw = rad * q.weights[None, :, None]
    diffuse = albedo / np.pi * lw.sum(axis=1)
    specular = np.einsum("nm,nmc->nc", fs, lw)
    diffuse[~valid] = 0.0
    specular[~valid] = 0.0
    return Shading(diffuse, specular, valid)


def render_pixel(s: SurfaceSample, view, env: SgEnvironment, q: HemisphereQuadrature | None = None,
                 cfg: BrdfConfig = BrdfConfig()) -> Shading:
    """Diffuse and specular radiance of one surface point under ``env``.

    Returns RGB ``diffuse`` and ``specular`` and a ``valid`` flag that is
    false (with zero output) when the view is below the surface.
    """
    q = q or build_quadrature()
    rad = sg_radiance(env.xi[None], env.lam[None], env.intensity[None])
    out = shade(s.albedo, s.normal, s.roughness, view, rad, q, cfg)
    return Shading(out.diffuse[0], out.specular[0], bool(out.valid[0]))


# --------------------------------------------------------------------------
# Gradients
# --------------------------------------------------------------------------

@dataclass
class RenderGradient:
    """Analytic partials of one pixel's ``(I_d, I_s)``.

    ``d_albedo[c]`` is dI_d[c]/dA[c] (I_s does not depend on A);
    ``d_roughness[c]`` is dI_s[c]/dR (I_d does not depend on R).
    Lobe partials are indexed ``[k, image, channel]`` with image 0 = diffuse,
    1 = specular; ``d_intensity[k, i, c]`` is w.r.t. ``F_k[c]``, the only
    intensity component that channel depends on. ``d_xi[k, i, c, :]`` is the
    axis gradient expressed along the tangent pair ``local_frame(xi_k)[:2]``.
    """

    diffuse: np.ndarray
    specular: np.ndarray
    valid: bool
    d_albedo: np.ndarray
    d_roughness: np.ndarray
    d_lambda: np.ndarray
    d_intensity: np.ndarray
    d_xi: np.ndarray


def _ndf_dr(n_dot_h, r):
    alpha = r * r
    if alpha < ALPHA_FLOOR:
        return np.zeros_like(n_dot_h)
    a2 = alpha * alpha
    den = n_dot_h ** 2 * (a2 - 1.0) + 1.0
    d_da2 = (den - 2.0 * a2 * n_dot_h ** 2) / (np.pi * den ** 3)
    return d_da2 * 4.0 * r ** 3


def render_pixel_grad(s: SurfaceSample, view, env: SgEnvironment, q: HemisphereQuadrature | None = None,
                      cfg: BrdfConfig = BrdfConfig()) -> RenderGradient:
    q = q or build_quadrature()
    view = np.asarray(view, dtype=np.float64)
    n = s.normal
    k_lobes = len(env)
    dirs = to_world(q.directions, n)[0]                 # (M, 3)
    n_dot_v = float(n @ view)
    if n_dot_v <= 0:
        z3 = np.zeros(3)
        return RenderGradient(z3, z3.copy(), False, z3.copy(), z3.copy(),
                              np.zeros((k_lobes, 2, 3)), np.zeros((k_lobes, 2, 3)),
                              np.zeros((k_lobes, 2, 3, 2)))
    w = q.weights
    nl = q.directions[:, 2]
    h = dirs + view
    h /= np.linalg.norm(h, axis=1, keepdims=True)
    nh = h @ n
    vh = h @ view
    r = s.roughness
    fs = specular_from_cosines(nl, n_dot_v, nh, vh, r, cfg)     # (M,)

    # d fs / dR through D and G (F does not depend on R)
    d = ndf_term(nh, r)
    f = fresnel_term(vh, cfg)
    k = (r + 1.0) ** 2 / 8.0
    g1l = nl / (nl * (1 - k) + k)
    g1v = n_dot_v / (n_dot_v * (1 - k) + k)
    dg1l = -nl * (1 - nl) / (nl * (1 - k) + k) ** 2
    dg1v = -n_dot_v * (1 - n_dot_v) / (n_dot_v * (1 - k) + k) ** 2
    dk_dr = (r + 1.0) / 4.0
    dg_dr = (dg1l * g1v + g1l * dg1v) * dk_dr
    denom = 4.0 * nl * n_dot_v
    dfs_dr = f * (_ndf_dr(nh, r) * g1l * g1v + d * dg_dr) / denom

    cos = dirs @ env.xi.T                                       # (M, K)
    e = np.exp(env.lam * (cos - 1.0))                           # (M, K)
    rad = e @ env.intensity                                     # (M, 3)
    a_pi = s.albedo / np.pi

    diffuse = a_pi * (w @ rad)
    specular = (fs * w) @ rad
    d_albedo = (w @ rad) / np.pi
    d_roughness = (dfs_dr * w) @ rad

    # per-image sample weights: diffuse uses w, specular uses fs * w
    img_w = np.stack([w, fs * w])                                # (2, M)
    chan_scale = np.stack([a_pi, np.ones(3)])                    # (2, 3)
    we = img_w @ e                                               # (2, K): sum_m w e_k
    d_intensity = we.T[:, :, None] * chan_scale[None]            # (K, 2, 3)
    wec = img_w @ (e * (cos - 1.0))                              # (2, K)
    d_lambda = (wec.T[:, :, None] * chan_scale[None]) * env.intensity[:, None, :]
    # d/dxi_k = lam_k F_kc * sum_m w e_k l
    wel = np.einsum("im,mk,mx->ikx", img_w, e, dirs)             # (2, K, 3)
    t, b, _ = local_frame(env.xi)                                # (K, 3)
    tang = np.stack([np.einsum("ikx,kx->ik", wel, t), np.einsum("ikx,kx->ik", wel, b)], axis=-1)
    scale = env.lam[:, None, None] * env.intensity[:, None, :] * chan_scale[None]   # (K, 2, 3)
    d_xi = scale[..., None] * np.transpose(tang, (1, 0, 2))[:, :, None, :]
    return RenderGradient(diffuse, specular, True, d_albedo, d_roughness, d_lambda, d_intensity, d_xi)


# --------------------------------------------------------------------------
# Images
# --------------------------------------------------------------------------

def _unit_map(arr, name):
    a = np.asarray(arr, dtype=np.float64)
    norms = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(np.abs(norms - 1.0) > 1e-3):
        raise ValueError(f"{name} must hold unit vectors")
    return a / norms


@dataclass(frozen=True, eq=False)
class GBuffer:
    """Per-pixel albedo ``(h, w, 3)``, unit normal ``(h, w, 3)``, roughness and depth ``(h, w)``.

    ``mask`` selects the pixels that are rendered (default: all).
    Depth is distance along the optical axis.
    """

    albedo: np.ndarray
    normal: np.ndarray
    roughness: np.ndarray
    depth: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        a = np.asarray(self.albedo, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3:
            raise ValueError("albedo map must be (h, w, 3)")
        hw = a.shape[:2]
        n = _unit_map(self.normal, "normal map")
        r = np.asarray(self.roughness, dtype=np.float64)
        dpt = np.asarray(self.depth, dtype=np.float64)
        m = np.ones(hw, dtype=bool) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if n.shape != a.shape or r.shape != hw or dpt.shape != hw or m.shape != hw:
            raise ValueError("G-buffer maps disagree on dimensions")
        if np.any(r < 0) or np.any(r > 1):
            raise ValueError("roughness must lie in [0, 1]")
        if np.any(a < 0):
            raise ValueError("albedo must be non-negative")
        if np.any(dpt[m] <= 0):
            raise ValueError("depth must be positive inside the mask")
        for name, arr in (("albedo", a), ("normal", n), ("roughness", r), ("depth", dpt), ("mask", m)):
            arr = np.array(arr)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return self.albedo.shape[:2]

    def replace(self, **changes) -> "GBuffer":
        fields = dict(albedo=self.albedo, normal=self.normal, roughness=self.roughness,
                      depth=self.depth, mask=self.mask)
        fields.update(changes)
        return GBuffer(**fields)

    @classmethod
    def uniform(cls, height, width, albedo=(0.5, 0.5, 0.5), normal=(0, 0, 1), roughness=0.5, depth=1.0):
        return cls(np.broadcast_to(np.asarray(albedo, float), (height, width, 3)),
                   np.broadcast_to(np.asarray(normal, float), (height, width, 3)),
                   np.full((height, width), roughness), np.full((height, width), depth))


@dataclass(frozen=True, eq=False)
class LightingGrid:
    """One SG environment per lighting cell: ``xi (R, C, K, 3)``, ``lam (R, C, K)``, ``intensity (R, C, K, 3)``."""

    xi: np.ndarray
    lam: np.ndarray
    intensity: np.ndarray

    def __post_init__(self):
        xi = np.array(self.xi, dtype=np.float64)
        lam = np.array(self.lam, dtype=np.float64)
        f = np.array(self.intensity, dtype=np.float64)
        if xi.ndim != 4 or xi.shape[3] != 3 or lam.shape != xi.shape[:3] or f.shape != xi.shape:
            raise ValueError("lighting grid arrays have inconsistent shapes")
        if np.any(np.abs(np.linalg.norm(xi, axis=-1) - 1.0) > 1e-6):
            raise ValueError("lobe axes must be unit length")
        if np.any(lam <= 0) or np.any(f < 0) or not np.all(np.isfinite(f)):
            raise ValueError("lobe bandwidths must be positive and intensities non-negative")
        for name, arr in (("xi", xi), ("lam", lam), ("intensity", f)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def rows(self) -> int:
        return self.lam.shape[0]

    @property
    def cols(self) -> int:
        return self.lam.shape[1]

    def cell(self, r, c) -> SgEnvironment:
        return SgEnvironment(self.xi[r, c], self.lam[r, c], self.intensity[r, c])

    @classmethod
    def uniform(cls, env: SgEnvironment, rows=1, cols=1):
        return cls(np.broadcast_to(env.xi, (rows, cols) + env.xi.shape),
                   np.broadcast_to(env.lam, (rows, cols) + env.lam.shape),
                   np.broadcast_to(env.intensity, (rows, cols) + env.intensity.shape))

    @classmethod
    def from_cells(cls, envs):
        """``envs`` is a nested ``rows x cols`` list of equal-size environments."""
        return cls(np.array([[e.xi for e in row] for row in envs]),
                   np.array([[e.lam for e in row] for row in envs]),
                   np.array([[e.intensity for e in row] for row in envs]))

    def stride_for(self, height, width) -> int:
        """Integer pixels-per-cell shared by both axes; a single cell covers any image."""
        if self.rows == 1 and self.cols == 1:
            return max(height, width)
        if height % self.rows or width % self.cols or height // self.rows != width // self.cols:
            raise ValueError(f"a {self.rows}x{self.cols} lighting grid does not tile a "
                             f"{height}x{width} image with a common integer stride")
        return height // self.rows

    def cell_index(self, height, width):
        """Per-pixel (row, col) cell indices by nearest-cell (block) assignment."""
        s = self.stride_for(height, width)
        rr = np.minimum(np.arange(height) // s, self.rows - 1)
        cc = np.minimum(np.arange(width) // s, self.cols - 1)
        return np.meshgrid(rr, cc, indexing="ij")


def camera_rays(height, width, fov_deg=DEFAULT_FOV_DEG) -> np.ndarray:
    """Unit ray directions from a pinhole at the origin through pixel centres.

    ``fov_deg`` is the horizontal field of view; the camera looks down -z.
    """
    tan_half = np.tan(np.radians(fov_deg) / 2.0)
    x = ((np.arange(width) + 0.5) / width * 2.0 - 1.0) * tan_half
    y = (1.0 - (np.arange(height) + 0.5) / height * 2.0) * tan_half * height / width
    xx, yy = np.meshgrid(x, y)
    d = np.stack([xx, yy, -np.ones_like(xx)], axis=-1)
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def view_directions(height, width, fov_deg: float | None = DEFAULT_FOV_DEG) -> np.ndarray:
    """Per-pixel unit vectors towards the camera; ``fov_deg=None`` is orthographic (+z)."""
    if fov_deg is None:
        return np.broadcast_to(np.array([0.0, 0.0, 1.0]), (height, width, 3)).copy()
    return -camera_rays(height, width, fov_deg)


def worker_count() -> int:
    env = os.environ.get(THREADS_ENV)
    n = os.cpu_count() or 1
    if env:
        try:
            n = min(n, max(1, int(env)))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return n


def render_image(g: GBuffer, lights: LightingGrid, fov_deg: float | None = DEFAULT_FOV_DEG,
                 q: HemisphereQuadrature | None = None, cfg: BrdfConfig = BrdfConfig(),
                 views=None):
    """Render diffuse and specular images; pixels outside ``g.mask`` are zero.

    ``views`` overrides the camera model with explicit per-pixel view vectors.
    """
    q = q or build_quadrature()
    h, w = g.shape
    if views is None:
        views = view_directions(h, w, fov_deg)
    views = np.asarray(views, dtype=np.float64)
    if views.shape != (h, w, 3):
        raise ValueError(f"view map shape {views.shape} does not match image {h}x{w}")
    rr, cc = lights.cell_index(h, w)
    idx = np.flatnonzero(g.mask.reshape(-1))
    alb = g.albedo.reshape(-1, 3)
    nrm = g.normal.reshape(-1, 3)
    rgh = g.roughness.reshape(-1)
    vws = views.reshape(-1, 3)
    cell_r, cell_c = rr.reshape(-1), cc.reshape(-1)

    diffuse = np.zeros((h * w, 3))
    specular = np.zeros((h * w, 3))

    def run(chunk):
        cr, cc_ = cell_r[chunk], cell_c[chunk]
        rad = sg_radiance(lights.xi[cr, cc_], lights.lam[cr, cc_], lights.intensity[cr, cc_])
        out = shade(alb[chunk], nrm[chunk], rgh[chunk], vws[chunk], rad, q, cfg)
        diffuse[chunk] = out.diffuse
        specular[chunk] = out.specular

    chunks = [idx[i:i + _CHUNK] for i in range(0, idx.size, _CHUNK)]
    workers = worker_count()
    if workers > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, chunks))
    else:
        for ch in chunks:
            run(ch)
    return HdrImage(diffuse.reshape(h, w, 3)), HdrImage(specular.reshape(h, w, 3))
