"""Ratio-image object insertion and material editing.

Insertion renders the supporting plane twice, with the new object
(``I_all``) and without it (``I_pl``), then multiplies the photograph by
their ratio on the plane so only the relative change (shadows) is
transferred; object pixels take the rendered object directly.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .brdf import BrdfConfig
from .imaging import HdrImage
from .lighting import SPHERE, sg_to_grid
from .renderlayer import (DEFAULT_FOV_DEG, GBuffer, HemisphereQuadrature, LightingGrid, build_quadrature,
                          camera_rays, render_image, shade, shared_radiance)

RATIO_FLOOR = 1e-4


def _bool_mask(m, shape, name):
    a = np.asarray(getattr(m, "data", m))
    if a.shape != shape:
        raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
    return a != 0


@dataclass(frozen=True, eq=False)
class InsertionSetup:
    """Photograph ``I``, renders ``I_all``/``I_pl`` and boolean masks ``M_obj`` within ``M_all``."""

    original: HdrImage
    with_object: HdrImage
    plane_only: HdrImage
    object_mask: np.ndarray
    combined_mask: np.ndarray

    def __post_init__(self):
        hw = self.original.data.shape[:2]
        for img in (self.with_object, self.plane_only):
            if img.data.shape[:2] != hw:
                raise ValueError("insertion images must share dimensions")
        obj = _bool_mask(self.object_mask, hw, "object mask")
        allm = _bool_mask(self.combined_mask, hw, "combined mask")
        if np.any(obj & ~allm):
            raise ValueError("object mask must lie inside the combined mask")
        object.__setattr__(self, "object_mask", obj)
        object.__setattr__(self, "combined_mask", allm)


def ratio_composite(setup: InsertionSetup) -> HdrImage:
    """Object pixels from ``I_all``; plane pixels ``I * ratio``; everything else ``I`` untouched.

    ``ratio = 1 + (I_all - I_pl) / max(I_pl, 1e-4)`` per channel, i.e.
    ``I_all / I_pl`` wherever the plane render is not dark, clamped at zero.
    """
    i = setup.original.data
    out = i.copy()
    plane = setup.combined_mask & ~setup.object_mask
    a = setup.with_object.data[plane].astype(np.float64)
    p = setup.plane_only.data[plane].astype(np.float64)
    ratio = np.maximum(0.0, 1.0 + (a - p) / np.maximum(p, RATIO_FLOOR))
    out[plane] = i[plane] * ratio
    out[setup.object_mask] = setup.with_object.data[setup.object_mask]
    return HdrImage(out)


# --------------------------------------------------------------------------
# Object insertion
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SphereObject:
    radius: float
    albedo: tuple = (0.8, 0.8, 0.8)
    roughness: float = 0.5

    def __post_init__(self):
        if not self.radius >= 0:
            raise ValueError("sphere radius must be non-negative")
        if not 0 <= self.roughness <= 1 or any(not 0 <= a <= 1 for a in self.albedo):
            raise ValueError("object albedo and roughness must lie in [0, 1]")


def _sphere_hit(origins, dirs, centre, radius):
    """Smallest positive ray parameter hitting the sphere, ``inf`` on a miss."""
    oc = origins - centre
    b = np.sum(dirs * oc, axis=-1)
    c = np.sum(oc * oc, axis=-1) - radius * radius
    disc = b * b - c
    root = np.sqrt(np.maximum(disc, 0.0))
    t0, t1 = -b - root, -b + root
    eps = 1e-9 * max(radius, 1.0)
    t = np.where(t0 > eps, t0, np.where(t1 > eps, t1, np.inf))
    return np.where((disc > 0) & (radius > 0), t, np.inf)


@dataclass
class InsertionRender:
    image: HdrImage
    with_object: HdrImage
    plane_only: HdrImage
    object_mask: np.ndarray
    plane_mask: np.ndarray


def insert_object(image: HdrImage, g: GBuffer, lights: LightingGrid, at, obj: SphereObject,
                  plane_mask=None, fov_deg: float = DEFAULT_FOV_DEG, env_rows: int = 512,
                  env_cols: int = 1024, q: HemisphereQuadrature | None = None,
                  cfg: BrdfConfig = BrdfConfig()) -> InsertionRender:
    """Insert a sphere resting on the plane through pixel ``at = (x, y)``.

    The plane takes its orientation, albedo and roughness from the G-buffer
    at ``at``; its point is the pixel's back-projected depth. Both renders use
    the lighting cell covering ``at`` expanded to an ``env_rows x env_cols``
    full-sphere map, with binary occlusion rays against the sphere (for the
    plane) and against the plane (for the sphere).
    """
    q = q or build_quadrature()
    h, w = g.shape
    if image.data.shape[:2] != (h, w):
        raise ValueError("image and G-buffer dimensions differ")
    x, y = int(at[0]), int(at[1])
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"insertion point {(x, y)} lies outside the {w}x{h} image")
    pmask = g.mask.copy() if plane_mask is None else _bool_mask(plane_mask, (h, w), "plane mask")
    if not pmask[y, x]:
        raise ValueError(f"insertion point {(x, y)} lies outside the plane mask")

    rays = camera_rays(h, w, fov_deg)
    n_p = g.normal[y, x]
    p0 = rays[y, x] * g.depth[y, x] / -rays[y, x, 2]
    if np.dot(n_p, -rays[y, x]) <= 0:
        raise ValueError("the plane at the insertion point faces away from the camera")
    centre = p0 + n_p * obj.radius

    ray_n = rays @ n_p
    with np.errstate(divide="ignore", invalid="ignore"):
        t_plane = np.where(ray_n < 0, (p0 @ n_p) / ray_n, np.inf)
    origin = np.zeros(3)
    t_obj = _sphere_hit(origin, rays, centre, obj.radius)
    obj_mask = np.isfinite(t_obj) & (t_obj < t_plane)
    plane_px = pmask & np.isfinite(t_plane) & ~obj_mask

    rr, cc = lights.cell_index(h, w)
    env = lights.cell(rr[y, x], cc[y, x])
    envmap = sg_to_grid(env, env_rows, env_cols, SPHERE)
    radiance = shared_radiance(envmap.lookup)

    with_obj = np.zeros((h, w, 3))
    plane_only = np.zeros((h, w, 3))

    idx = np.flatnonzero(plane_px)
    if idx.size:
        pts = rays.reshape(-1, 3)[idx] * t_plane.reshape(-1)[idx, None]
        n = np.broadcast_to(n_p, pts.shape)
        views = -rays.reshape(-1, 3)[idx]
        alb = np.broadcast_to(g.albedo[y, x], pts.shape)
        rough = np.full(idx.size, g.roughness[y, x])

        def unoccluded(dirs):
            t = _sphere_hit(pts[:, None, :], dirs, centre, obj.radius)
            return (~np.isfinite(t)).astype(np.float64)

        bare = shade(alb, n, rough, views, radiance, q, cfg)
        shadowed = shade(alb, n, rough, views, radiance, q, cfg, visibility=unoccluded)
        plane_only.reshape(-1, 3)[idx] = bare.diffuse + bare.specular
        with_obj.reshape(-1, 3)[idx] = shadowed.diffuse + shadowed.specular

    idx = np.flatnonzero(obj_mask)
    if idx.size:
        pts = rays.reshape(-1, 3)[idx] * t_obj.reshape(-1)[idx, None]
        n = (pts - centre) / obj.radius
        views = -rays.reshape(-1, 3)[idx]
        alb = np.broadcast_to(np.asarray(obj.albedo, dtype=np.float64), pts.shape)
        rough = np.full(idx.size, obj.roughness)

        def above_plane(dirs):
            return (dirs @ n_p >= 0).astype(np.float64)

        s = shade(alb, n, rough, views, radiance, q, cfg, visibility=above_plane)
        with_obj.reshape(-1, 3)[idx] = s.diffuse + s.specular

    i_all, i_pl = HdrImage(with_obj), HdrImage(plane_only)
    setup = InsertionSetup(image, i_all, i_pl, obj_mask, obj_mask | plane_px)
    return InsertionRender(ratio_composite(setup), i_all, i_pl, obj_mask, plane_px)


# --------------------------------------------------------------------------
# Material editing
# --------------------------------------------------------------------------

def _region(region, g: GBuffer):
    r = _bool_mask(region, g.shape, "edit region")
    if np.any(r & ~g.mask):
        raise ValueError("edit region must lie inside the G-buffer mask")
    return r


def render_region(g: GBuffer, lights: LightingGrid, region, fov_deg=DEFAULT_FOV_DEG,
                  q=None, cfg: BrdfConfig = BrdfConfig()):
    """Diffuse and specular renders restricted to ``region``."""
    return render_image(g.replace(mask=_region(region, g)), lights, fov_deg, q, cfg)


def _per_pixel(value, shape):
    return np.broadcast_to(np.asarray(value, dtype=np.float64), shape)


def edit_material(image: HdrImage, g: GBuffer, lights: LightingGrid, region, albedo=None, roughness=None,
                  fov_deg=DEFAULT_FOV_DEG, q=None, cfg: BrdfConfig = BrdfConfig()) -> HdrImage:
    """Replace the region's albedo and/or roughness and paste its fresh render into ``image``."""
    if image.data.shape[:2] != g.shape:
        raise ValueError("image and G-buffer dimensions differ")
    region = _region(region, g)
    h, w = g.shape
    new_a = g.albedo.copy()
    new_r = g.roughness.copy()
    if albedo is not None:
        new_a[region] = _per_pixel(albedo, (h, w, 3))[region]
    if roughness is not None:
        new_r[region] = _per_pixel(roughness, (h, w))[region]
    d, s = render_region(g.replace(albedo=new_a, roughness=new_r), lights, region, fov_deg, q, cfg)
    out = image.data.copy()
    out[region] = d.data[region] + s.data[region]
    return HdrImage(out)


def edit_specularity(image: HdrImage, g: GBuffer, lights: LightingGrid, region, roughness,
                     fov_deg=DEFAULT_FOV_DEG, q=None, cfg: BrdfConfig = BrdfConfig()) -> HdrImage:
    """Add the render difference caused by a new roughness to the photograph, clamped at zero."""
    if image.data.shape[:2] != g.shape:
        raise ValueError("image and G-buffer dimensions differ")
    region = _region(region, g)
    new_r = g.roughness.copy()
    new_r[region] = _per_pixel(roughness, g.shape)[region]
    d0, s0 = render_region(g, lights, region, fov_deg, q, cfg)
    d1, s1 = render_region(g.replace(roughness=new_r), lights, region, fov_deg, q, cfg)
    residual = (d1.data - d0.data) + (s1.data - s0.data)
    out = image.data + residual
    return HdrImage(np.maximum(out, 0.0))
