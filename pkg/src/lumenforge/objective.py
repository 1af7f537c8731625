"""Training-style losses and the albedo/lighting scale resolution.

Masks are arrays over the image plane ``(h, w)`` (nonzero = included) or
full image shape; images are ``(h, w, 3)`` arrays or :class:`HdrImage`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .lighting import SgEnvironment

log = logging.getLogger(__name__)

DETERMINANT_THRESHOLD = 1e-7
SPECULAR = "specular"
ALBEDO_MAX = "albedo-max"
_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class LossWeights:
    albedo: float = 1.5
    normal: float = 1.0
    roughness: float = 0.5
    depth: float = 0.5
    lighting: float = 10.0
    render: float = 10.0
    lam: float = 5e-4
    xi: float = 1.0
    intensity: float = 0.5

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v >= 0:
                raise ValueError(f"loss weight {k} must be non-negative, got {v}")


def _arr(img):
    return np.asarray(getattr(img, "data", img), dtype=np.float64)


def _mask_like(mask, shape):
    """Float 0/1 weights broadcast to ``shape``; ``None`` selects everything."""
    if mask is None:
        return np.ones(shape)
    m = (np.asarray(getattr(mask, "data", mask)) != 0).astype(np.float64)
    if m.shape != shape:
        if m.shape != shape[:m.ndim]:
            raise ValueError(f"mask shape {m.shape} does not match image shape {shape}")
        m = m.reshape(m.shape + (1,) * (len(shape) - m.ndim))
        m = np.broadcast_to(m, shape)
    return m


def _same_shape(*arrays):
    s = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != s:
            raise ValueError(f"image shapes differ: {s} vs {a.shape}")


def golden_section(f, lo, hi, tol=1e-10, max_iter=200):
    """Minimise a unimodal scalar function on ``[lo, hi]``; returns ``(x, f(x))``."""
    if hi < lo:
        raise ValueError("empty search interval")
    a, b = float(lo), float(hi)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    best = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    fx, x = min(best)
    return x, fx


def scale_invariant_l2(pred, gt, mask=None):
    """``(loss, c)`` with ``c = <gt, pred> / <pred, pred>`` over the mask.

    The loss is the mean squared residual over masked elements.
    """
    p, g = _arr(pred), _arr(gt)
    _same_shape(p, g)
    m = _mask_like(mask, p.shape)
    n = m.sum()
    if n == 0:
        return 0.0, 0.0
    pp = float(np.sum(m * p * p))
    c = float(np.sum(m * g * p)) / pp if pp > 0 else 0.0
    r = (g - c * p) * m
    return float(np.sum(r * r) / n), c


def log_encoded_depth_loss(gt_depth, pred_depth, mask=None, bounds=(1e-3, 1e3)):
    """Scale-invariant log-encoded depth loss ``(loss, c)``.

    ``loss = sum(((log(D+1) - log(c D~ + 1)) * m)^2) / |m|`` with ``c`` found by
    golden-section search over ``log c`` in ``bounds``. ``mask`` is usually the
    union of object and area-light masks.
    """
    d, p = _arr(gt_depth), _arr(pred_depth)
    _same_shape(d, p)
    m = _mask_like(mask, d.shape) > 0
    if np.any(d[m] <= 0) or np.any(p[m] <= 0):
        raise ValueError("depth must be positive under the mask")
    n = int(m.sum())
    if n == 0:
        return 0.0, 1.0
    a, b = np.log1p(d[m]), p[m]

    def loss(log_c):
        r = a - np.log1p(np.exp(log_c) * b)
        return float(np.dot(r, r) / n)

    lo, hi = np.log(bounds[0]), np.log(bounds[1])
    log_c, value = golden_section(loss, lo, hi)
    return value, float(np.exp(log_c))


def _solve_two(i, i_d, i_s, m):
    """Non-negative least squares for ``i ~ c_d i_d + c_s i_s``; returns ``(c_d, c_s, singular)``."""
    dd = float(np.sum(m * i_d * i_d))
    ss = float(np.sum(m * i_s * i_s))
    ds = float(np.sum(m * i_d * i_s))
    yd = float(np.sum(m * i * i_d))
    ys = float(np.sum(m * i * i_s))
    det = dd * ss - ds * ds
    if det <= 1e-12 * max(dd * ss, np.finfo(float).tiny):
        return (max(0.0, yd / dd) if dd > 0 else 0.0), 0.0, True
    c_d = (yd * ss - ys * ds) / det
    c_s = (ys * dd - yd * ds) / det
    if c_d >= 0 and c_s >= 0:
        return c_d, c_s, False
    # the unconstrained optimum left the quadrant: best point on an edge
    cands = [(0.0, 0.0)]
    if dd > 0:
        cands.append((max(0.0, yd / dd), 0.0))
    if ss > 0:
        cands.append((0.0, max(0.0, ys / ss)))

    def sse(c):
        r = (i - c[0] * i_d - c[1] * i_s) * m
        return float(np.sum(r * r))

    c = min(cands, key=sse)
    return c[0], c[1], False


def render_loss(image, diffuse, specular, mask=None):
    """Scale-invariant rendering loss ``(loss, c_diff, c_spec)``.

    Coefficients minimise the masked residual of ``I - c_d I_d - c_s I_s``
    subject to both being non-negative. Collinear ``I_d``/``I_s`` fall back
    to a regression on ``I_d`` alone.
    """
    i, i_d, i_s = _arr(image), _arr(diffuse), _arr(specular)
    _same_shape(i, i_d, i_s)
    m = _mask_like(mask, i.shape)
    n = m.sum()
    if n == 0:
        return 0.0, 0.0, 0.0
    c_d, c_s, _ = _solve_two(i, i_d, i_s, m)
    r = (i - c_d * i_d - c_s * i_s) * m
    return float(np.sum(r * r) / n), c_d, c_s


@dataclass
class SgParamLosses:
    """Per-lobe losses and the shared scales used for bandwidth and intensity."""

    lam: np.ndarray
    xi: np.ndarray
    intensity: np.ndarray
    lam_scale: float = 1.0
    intensity_scale: float = 1.0


def _shared_log_scale(target, pred):
    """Shared ``c`` minimising ``sum (log(t+1) - log(c p + 1))^2``; returns ``(c, residuals^2)``."""
    a, b = np.log1p(target), pred

    def loss(log_c):
        r = a - np.log1p(np.exp(log_c) * b)
        return float(np.sum(r * r))

    log_c, _ = golden_section(loss, np.log(1e-3), np.log(1e3))
    c = float(np.exp(log_c))
    return c, (a - np.log1p(c * b)) ** 2


def sg_param_losses(pred: SgEnvironment, gt: SgEnvironment) -> SgParamLosses:
    """Direction L2 per lobe plus log-encoded bandwidth/intensity losses with one shared scale each."""
    if len(pred) != len(gt):
        raise ValueError(f"lobe count mismatch: {len(pred)} predicted vs {len(gt)} reference")
    l_xi = np.sum((pred.xi - gt.xi) ** 2, axis=1)
    c_lam, r_lam = _shared_log_scale(gt.lam, pred.lam)
    c_f, r_f = _shared_log_scale(gt.intensity, pred.intensity)
    return SgParamLosses(r_lam, l_xi, r_f.sum(axis=1), c_lam, c_f)


@dataclass
class LossComponents:
    albedo: float = 0.0
    normal: float = 0.0
    roughness: float = 0.0
    depth: float = 0.0
    lighting: float = 0.0
    render: float = 0.0
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    xi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    intensity: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def with_sg(cls, sg: SgParamLosses, **scalars):
        return cls(lam=sg.lam, xi=sg.xi, intensity=sg.intensity, **scalars)


def total_loss(c: LossComponents, w: LossWeights = LossWeights()) -> float:
    total = (w.albedo * c.albedo + w.normal * c.normal + w.roughness * c.roughness
             + w.depth * c.depth + w.lighting * c.lighting + w.render * c.render)
    total += (w.lam * np.sum(c.lam) + w.xi * np.sum(c.xi) + w.intensity * np.sum(c.intensity))
    if not np.isfinite(total):
        raise ValueError("loss components must be finite")
    return float(total)


@dataclass(frozen=True)
class ScaleSolution:
    c_d: float
    c_s: float
    c_a: float
    c_l: float
    branch: str
    determinant: float


def resolve_scales(image, diffuse, specular, albedo, mask=None) -> ScaleSolution:
    """Split the regressed render coefficients into albedo and lighting scales.

    With ``D = [(I_d.I_d)(I_s.I_s) - (I_d.I_s)^2] / K`` over the ``K`` masked
    pixels: if ``D > 1e-7`` the specular coefficient fixes the lighting
    scale (``c_l = c_s``, ``c_a = c_d / c_l``); otherwise the albedo is
    normalised to peak at one (``c_a = 1 / max(A)``, ``c_l = c_d / c_a``).
    """
    i, i_d, i_s = _arr(image), _arr(diffuse), _arr(specular)
    a = _arr(albedo)
    _same_shape(i, i_d, i_s)
    m = _mask_like(mask, i.shape)
    c_d, c_s, _ = _solve_two(i, i_d, i_s, m)
    k = int(np.count_nonzero(m[..., 0] if m.ndim == 3 else m))   # pixels, not channels
    dd = float(np.sum(m * i_d * i_d))
    ss = float(np.sum(m * i_s * i_s))
    ds = float(np.sum(m * i_d * i_s))
    det = max(0.0, dd * ss - ds * ds) / max(k, 1)

    if det > DETERMINANT_THRESHOLD:
        if c_s > 0:
            return ScaleSolution(c_d, c_s, c_d / c_s, c_s, SPECULAR, det)
        log.warning("specular coefficient is zero; falling back to albedo normalisation")
    am = a[_mask_like(mask, a.shape) > 0] if a.shape == i.shape else a
    peak = float(np.max(am)) if am.size else 0.0
    if peak <= 0:
        raise ValueError("albedo is zero everywhere; the scale cannot be resolved")
    c_a = 1.0 / peak
    return ScaleSolution(c_d, c_s, c_a, c_d / c_a, ALBEDO_MAX, det)
