"""Microfacet BRDF: Lambertian diffuse plus a GGX/Schlick-Smith specular lobe.

All term functions are vectorised over numpy broadcasting. Specular
reflectance is achromatic and is added equally to every colour channel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

AS_WRITTEN = "as-written"
WITH_F0_OFFSET = "with-f0-offset"

# alpha = R^2 is floored here so that D stays finite at R = 0, n.h = 1.
ALPHA_FLOOR = 1e-4


@dataclass(frozen=True)
class BrdfConfig:
    """Fresnel base reflectance and formula variant.

    ``"as-written"`` uses ``(1 - f0) * 2^(...)`` with no additive ``f0``;
    ``"with-f0-offset"`` is the usual Schlick/Karis form ``f0 + (1 - f0) * 2^(...)``.
    """

    f0: float = 0.05
    fresnel_variant: str = AS_WRITTEN

    def __post_init__(self):
        if not 0.0 <= self.f0 <= 1.0:
            raise ValueError(f"f0 must be in [0, 1], got {self.f0}")
        if self.fresnel_variant not in (AS_WRITTEN, WITH_F0_OFFSET):
            raise ValueError(f"unknown fresnel variant {self.fresnel_variant!r}")


def _unit(v, name, tol=1e-6):
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (3,):
        raise ValueError(f"{name} must be a 3-vector")
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise ValueError(f"{name} must be unit length, |{name}| = {np.linalg.norm(v):.8g}")
    return v


@dataclass(frozen=True, eq=False)
class SurfaceSample:
    albedo: np.ndarray
    normal: np.ndarray
    roughness: float

    def __post_init__(self):
        a = np.asarray(self.albedo, dtype=np.float64).reshape(3)
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError("albedo components must lie in [0, 1]")
        object.__setattr__(self, "albedo", a)
        object.__setattr__(self, "normal", _unit(self.normal, "normal"))
        if not 0.0 <= float(self.roughness) <= 1.0:
            raise ValueError(f"roughness must be in [0, 1], got {self.roughness}")
        object.__setattr__(self, "roughness", float(self.roughness))


@dataclass(frozen=True, eq=False)
class ShadingGeometry:
    view: np.ndarray
    light: np.ndarray
    half: np.ndarray = field(init=False)

    def __post_init__(self):
        v = _unit(self.view, "view")
        l = _unit(self.light, "light")
        s = v + l
        norm = np.linalg.norm(s)
        if norm < 1e-12:
            raise ValueError("half vector undefined for opposite view and light")
        object.__setattr__(self, "view", v)
        object.__setattr__(self, "light", l)
        object.__setattr__(self, "half", s / norm)


def eval_diffuse(s: SurfaceSample) -> np.ndarray:
    return s.albedo / np.pi


def ndf_term(n_dot_h, roughness):
    """GGX normal distribution with alpha = roughness^2."""
    alpha = np.maximum(np.square(roughness), ALPHA_FLOOR)
    a2 = alpha * alpha
    denom = np.square(n_dot_h) * (a2 - 1.0) + 1.0
    return a2 / (np.pi * denom * denom)


def fresnel_term(v_dot_h, cfg: BrdfConfig = BrdfConfig()):
    x = np.asarray(v_dot_h, dtype=np.float64)
    f = (1.0 - cfg.f0) * np.exp2(-(5.55473 * x + 6.8316) * x)
    if cfg.fresnel_variant == WITH_F0_OFFSET:
        f = cfg.f0 + f
    return f


def smith_g1(n_dot_x, k):
    return n_dot_x / (n_dot_x * (1.0 - k) + k)


def geometry_term(n_dot_l, n_dot_v, roughness):
    """Schlick-Smith shadowing with k = (R + 1)^2 / 8; zero when either cosine is <= 0."""
    nl = np.asarray(n_dot_l, dtype=np.float64)
    nv = np.asarray(n_dot_v, dtype=np.float64)
    k = np.square(np.asarray(roughness, dtype=np.float64) + 1.0) / 8.0
    valid = (nl > 0) & (nv > 0)
    nl_c = np.where(valid, nl, 1.0)
    nv_c = np.where(valid, nv, 1.0)
    return np.where(valid, smith_g1(nl_c, k) * smith_g1(nv_c, k), 0.0)


def specular_from_cosines(n_dot_l, n_dot_v, n_dot_h, v_dot_h, roughness, cfg: BrdfConfig = BrdfConfig()):
    """D F G / (4 (N.l)(N.v)) from precomputed cosines; zero for back-facing l or v."""
    nl = np.asarray(n_dot_l, dtype=np.float64)
    nv = np.asarray(n_dot_v, dtype=np.float64)
    valid = (nl > 0) & (nv > 0)
    d = ndf_term(n_dot_h, roughness)
    f = fresnel_term(v_dot_h, cfg)
    g = geometry_term(nl, nv, roughness)
    denom = 4.0 * np.where(valid, nl * nv, 1.0)
    return np.where(valid, d * f * g / denom, 0.0)


def eval_specular(s: SurfaceSample, g: ShadingGeometry, cfg: BrdfConfig = BrdfConfig()) -> float:
    n = s.normal
    return float(specular_from_cosines(
        n @ g.light, n @ g.view, n @ g.half, g.view @ g.half, s.roughness, cfg))


def eval_full(s: SurfaceSample, g: ShadingGeometry, cfg: BrdfConfig = BrdfConfig()) -> np.ndarray:
    return eval_diffuse(s) + eval_specular(s, g, cfg)
