"""Tileable SVBRDF texture synthesis.

1. Pick the crop whose boundary pixels carry the least gradient across the
   boundary (prefix sums make every window O(1)).
2. Make it tile in x: overlap the strip right of the crop with the crop's
   left columns and choose per pixel which source to keep with a graph cut
   whose cost rewards matching the source gradients across the seam.
3. Repeat in y, tying each row's left and right boundary pixels to the same
   source so the x tiling survives.

Gradients are forward differences, zero on the last row/column.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .maxflow import FlowNetwork, InfeasibleCutError

__all__ = ["SvbrdfTexture", "TexSynthConfig", "SeamProblem", "SeamLabels", "TileResult",
           "InfeasibleCutError", "boundary_gradient_energy", "find_optimal_patch", "seam_energy",
           "seam_costs", "seam_problem", "min_cut_seam", "labeling_cost", "make_tileable",
           "tiling_energy", "patch_variants", "tile", "center_crop"]


@dataclass(frozen=True, eq=False)
class SvbrdfTexture:
    albedo: np.ndarray      # (h, w, 3)
    normal: np.ndarray      # (h, w, 3) unit vectors
    roughness: np.ndarray   # (h, w)

    def __post_init__(self):
        a = np.array(self.albedo, dtype=np.float64)
        n = np.array(self.normal, dtype=np.float64)
        r = np.array(self.roughness, dtype=np.float64)
        if a.ndim != 3 or a.shape[2] != 3 or n.shape != a.shape or r.shape != a.shape[:2]:
            raise ValueError("texture maps must be (h, w, 3), (h, w, 3) and (h, w)")
        if np.any(np.abs(np.linalg.norm(n, axis=2) - 1.0) > 1e-3):
            raise ValueError("normal map must hold unit vectors")
        if np.any(r < 0) or np.any(r > 1):
            raise ValueError("roughness must lie in [0, 1]")
        for name, arr in (("albedo", a), ("normal", n), ("roughness", r)):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def shape(self):
        return self.roughness.shape

    def maps(self):
        """``(albedo, normal, roughness)`` as ``(h, w, c)`` arrays."""
        return self.albedo, self.normal, self.roughness[..., None]

    def crop(self, r0, c0, h, w) -> "SvbrdfTexture":
        s = np.s_[r0:r0 + h, c0:c0 + w]
        return SvbrdfTexture(self.albedo[s], self.normal[s], self.roughness[s])

    @classmethod
    def from_maps(cls, maps):
        a, n, r = maps
        return cls(a, n, r[..., 0] if r.ndim == 3 else r)

    @classmethod
    def gray(cls, values, roughness=None):
        """Albedo-only texture from a 2-D array (flat normals, constant roughness by default)."""
        v = np.asarray(values, dtype=np.float64)
        n = np.zeros(v.shape + (3,))
        n[..., 2] = 1.0
        r = np.full(v.shape, 0.5) if roughness is None else roughness
        return cls(np.repeat(v[..., None], 3, axis=2), n, r)


@dataclass(frozen=True)
class TexSynthConfig:
    lambda_albedo: float = 1.0
    lambda_normal: float = 1.0
    lambda_roughness: float = 1.0
    patch_size: int | None = None
    overlap_width: int | None = None
    epsilon_floor: float = 0.1

    def __post_init__(self):
        w = self.weights()
        if min(w) < 0 or sum(w) == 0:
            raise ValueError("channel weights must be non-negative and not all zero")
        if self.overlap_width is not None and self.overlap_width < 2:
            raise ValueError("overlap width must be at least 2")

    def weights(self):
        return self.lambda_albedo, self.lambda_normal, self.lambda_roughness

    def overlap_for(self, patch_size: int) -> int:
        if self.overlap_width is not None:
            return self.overlap_width
        return max(4, patch_size // 8)


def _groups(tex, cfg: TexSynthConfig):
    """Weighted channel groups; a bare array counts as one group of weight 1."""
    if isinstance(tex, SvbrdfTexture):
        return list(zip(cfg.weights(), tex.maps()))
    a = np.asarray(tex, dtype=np.float64)
    return [(1.0, a[..., None] if a.ndim == 2 else a)]


def _grad_magnitudes(tex, cfg):
    """Weighted L1 forward-difference magnitudes ``(gx, gy)``, each ``(h, w)``."""
    groups = _groups(tex, cfg)
    h, w = groups[0][1].shape[:2]
    gx = np.zeros((h, w))
    gy = np.zeros((h, w))
    for lam, m in groups:
        if lam == 0:
            continue
        gx[:, :-1] += lam * np.abs(np.diff(m, axis=1)).sum(axis=2)
        gy[:-1, :] += lam * np.abs(np.diff(m, axis=0)).sum(axis=2)
    return gx, gy


def _window(window):
    if len(window) == 3:
        r, c, s = window
        return int(r), int(c), int(s), int(s)
    r, c, h, w = window
    return int(r), int(c), int(h), int(w)


def boundary_gradient_energy(tex, window, cfg: TexSynthConfig = TexSynthConfig()) -> float:
    """Gradient across the boundary of ``window = (row, col, size)`` or ``(row, col, h, w)``.

    Sums the x-gradient magnitude over the left and right boundary columns and
    the y-gradient magnitude over the top and bottom boundary rows.
    """
    r, c, h, w = _window(window)
    gx, gy = _grad_magnitudes(tex, cfg)
    H, W = gx.shape
    if r < 0 or c < 0 or h < 1 or w < 1 or r + h > H or c + w > W:
        raise ValueError(f"window {window} does not fit a {H}x{W} texture")
    e = gx[r:r + h, c].sum() + gy[r, c:c + w].sum()
    if w > 1:
        e += gx[r:r + h, c + w - 1].sum()
    if h > 1:
        e += gy[r + h - 1, c:c + w].sum()
    return float(e)


def _window_energies(gx, gy, h, w):
    """Boundary energy of every ``h x w`` window, indexed by its top-left corner."""
    H, W = gx.shape
    col = np.vstack([np.zeros((1, W)), np.cumsum(gx, axis=0)])   # prefix sums down columns
    row = np.hstack([np.zeros((H, 1)), np.cumsum(gy, axis=1)])   # prefix sums along rows
    vert = col[h:, :] - col[:-h, :]                             # (H-h+1, W): column runs of length h
    horiz = row[:, w:] - row[:, :-w]                            # (H, W-w+1): row runs of length w
    nr, nc = H - h + 1, W - w + 1
    e = vert[:, :nc] + horiz[:nr, :]
    if w > 1:
        e = e + vert[:, w - 1:w - 1 + nc]
    if h > 1:
        e = e + horiz[h - 1:h - 1 + nr, :]
    return e


def find_optimal_patch(tex, patch_size, cfg: TexSynthConfig = TexSynthConfig(), margin=(0, 0)):
    """Top-left ``(row, col)`` of the minimum-energy window; ties go to the smallest (row, col).

    ``margin = (before, after)`` keeps that many pixels of context around the
    window on every side. ``patch_size`` may be an int or ``(h, w)``.
    """
    ph, pw = (patch_size, patch_size) if np.isscalar(patch_size) else patch_size
    before, after = margin
    gx, gy = _grad_magnitudes(tex, cfg)
    H, W = gx.shape
    if ph + before + after > H or pw + before + after > W:
        raise ValueError(f"a {ph}x{pw} patch with margin {margin} does not fit a {H}x{W} texture")
    e = _window_energies(gx, gy, ph, pw)
    e = e[before:H - ph + 1 - after, before:W - pw + 1 - after]
    i = int(np.argmin(e))                                      # first minimum in row-major order
    r, c = divmod(i, e.shape[1])
    return r + before, c + before


# --------------------------------------------------------------------------
# Seam costs
# --------------------------------------------------------------------------

def _pair_cost(a_p, a_q, b_p, b_q, eps):
    """Cost of taking ``p`` from source ``a`` and its successor ``q`` from source ``b``.

    Arrays carry channels on the last axis; L1 norms are taken over channels.
    """
    cross = b_q - a_p
    own_a = a_q - a_p
    own_b = b_q - b_p
    ta = np.abs(cross - own_a).sum(axis=-1) / np.maximum(np.abs(own_a).sum(axis=-1), eps)
    tb = np.abs(cross - own_b).sum(axis=-1) / np.maximum(np.abs(own_b).sum(axis=-1), eps)
    return np.minimum(ta, tb)


def seam_energy(patch1, patch2, p, q, cfg: TexSynthConfig = TexSynthConfig()) -> float:
    """Cost of the cut between neighbours ``p`` (label 1) and ``q`` (label 2).

    ``q`` must follow ``p`` by one step along a row or a column. The cost
    compares the cross-patch gradient with each patch's own gradient,
    normalised by that gradient (floored at ``cfg.epsilon_floor``), keeps the
    smaller of the two, and sums the weighted channel groups.
    """
    (pr, pc), (qr, qc) = p, q
    if (qr - pr, qc - pc) not in ((0, 1), (1, 0)):
        raise ValueError("q must be the right or lower neighbour of p")
    total = 0.0
    for (lam, m1), (_, m2) in zip(_groups(patch1, cfg), _groups(patch2, cfg)):
        total += lam * float(_pair_cost(m1[pr, pc], m1[qr, qc], m2[pr, pc], m2[qr, qc], cfg.epsilon_floor))
    return total


def seam_costs(patch1, patch2, axis: int, cfg: TexSynthConfig = TexSynthConfig()):
    """Vectorised pair costs ``(c12, c21)`` between each pixel and its successor along ``axis``.

    ``c12`` is the cost when the first pixel has label 1 and its successor
    label 2; ``c21`` the reverse. Shapes are the image shape shortened by one
    along ``axis``.
    """
    c12 = c21 = 0.0
    for (lam, m1), (_, m2) in zip(_groups(patch1, cfg), _groups(patch2, cfg)):
        if m1.shape != m2.shape:
            raise ValueError("patches must have equal shapes")
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(None, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        c12 = c12 + lam * _pair_cost(m1[lo], m1[hi], m2[lo], m2[hi], cfg.epsilon_floor)
        c21 = c21 + lam * _pair_cost(m2[lo], m2[hi], m1[lo], m1[hi], cfg.epsilon_floor)
    return c12, c21


# --------------------------------------------------------------------------
# Graph cut
# --------------------------------------------------------------------------

@dataclass(eq=False)
class SeamProblem:
    """Binary labelling of an ``h x w`` overlap.

    ``right12[r, c]`` is paid when ``(r, c)`` has label 1 and ``(r, c+1)``
    label 2, ``right21`` for the reverse; ``down12``/``down21`` likewise for
    ``(r, c)`` and ``(r+1, c)``. ``force1``/``force2`` pin labels and
    ``ties`` lists pixel pairs that must share a label.
    """

    right12: np.ndarray
    right21: np.ndarray
    down12: np.ndarray
    down21: np.ndarray
    force1: np.ndarray | None = None
    force2: np.ndarray | None = None
    ties: list = field(default_factory=list)

    def __post_init__(self):
        h, w1 = np.shape(self.right12)
        self.shape = (h, w1 + 1)
        for name in ("right12", "right21", "down12", "down21"):
            a = np.asarray(getattr(self, name), dtype=np.float64)
            want = (h, w1) if name.startswith("right") else (h - 1, w1 + 1)
            if a.shape != want:
                raise ValueError(f"{name} has shape {a.shape}, expected {want}")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise ValueError("seam costs must be finite and non-negative")
            setattr(self, name, a)
        for name in ("force1", "force2"):
            m = getattr(self, name)
            setattr(self, name, np.zeros(self.shape, bool) if m is None else np.asarray(m, bool))


@dataclass
class SeamLabels:
    labels: np.ndarray   # (h, w) int8 in {1, 2}
    cost: float


def labeling_cost(problem: SeamProblem, labels) -> float:
    """Total seam cost of a labelling; ``inf`` if it violates a hard constraint."""
    lab = np.asarray(labels)
    if np.any(lab[problem.force1] != 1) or np.any(lab[problem.force2] != 2):
        return float("inf")
    for (a, b) in problem.ties:
        if lab[tuple(a)] != lab[tuple(b)]:
            return float("inf")
    l, r = lab[:, :-1], lab[:, 1:]
    u, d = lab[:-1, :], lab[1:, :]
    cost = (problem.right12[(l == 1) & (r == 2)].sum() + problem.right21[(l == 2) & (r == 1)].sum()
            + problem.down12[(u == 1) & (d == 2)].sum() + problem.down21[(u == 2) & (d == 1)].sum())
    return float(cost)


def min_cut_seam(problem: SeamProblem) -> SeamLabels:
    """Globally minimal labelling via max-flow (label 1 = source side).

    Raises :class:`InfeasibleCutError` when the hard constraints contradict
    each other.
    """
    h, w = problem.shape
    idx = np.arange(h * w).reshape(h, w)
    net = FlowNetwork(h * w)
    # a cut edge u->v (u source side, v sink side) is paid when L_u = 1, L_v = 2
    for r, c in product(range(h), range(w - 1)):
        net.add_edge(idx[r, c], idx[r, c + 1], problem.right12[r, c], problem.right21[r, c])
    for r, c in product(range(h - 1), range(w)):
        net.add_edge(idx[r, c], idx[r + 1, c], problem.down12[r, c], problem.down21[r, c])
    for (a, b) in problem.ties:
        net.add_edge(idx[tuple(a)], idx[tuple(b)], np.inf, np.inf)
    for v in idx[problem.force1]:
        net.add_terminal(v, source_cap=np.inf)
    for v in idx[problem.force2]:
        net.add_terminal(v, sink_cap=np.inf)
    flow = net.max_flow()
    labels = np.where(net.source_side().reshape(h, w), 1, 2).astype(np.int8)
    cost = labeling_cost(problem, labels)
    if not np.isfinite(cost):
        raise InfeasibleCutError("hard constraints cannot be satisfied")
    if not np.isclose(cost, flow, rtol=1e-9, atol=1e-9):
        raise RuntimeError(f"cut cost {cost} disagrees with max-flow value {flow}")
    return SeamLabels(labels, cost)


def seam_problem(patch1, patch2, cfg: TexSynthConfig, axis: int, ties=()) -> SeamProblem:
    """Overlap problem whose first slice along ``axis`` is pinned to label 1 and last to label 2."""
    r12, r21 = seam_costs(patch1, patch2, 1, cfg)
    d12, d21 = seam_costs(patch1, patch2, 0, cfg)
    shape = r12.shape[0], r12.shape[1] + 1
    f1 = np.zeros(shape, bool)
    f2 = np.zeros(shape, bool)
    if axis == 1:
        f1[:, 0] = True
        f2[:, -1] = True
    else:
        f1[0, :] = True
        f2[-1, :] = True
    return SeamProblem(r12, r21, d12, d21, f1, f2, list(ties))


# --------------------------------------------------------------------------
# Tileable synthesis
# --------------------------------------------------------------------------

@dataclass
class TileResult:
    texture: SvbrdfTexture
    window: tuple
    overlap: int
    seam_x: SeamLabels
    seam_y: SeamLabels


def _stitch(maps, size, ov, axis, cfg, tie_ends=False):
    """Make ``maps`` periodic with period ``size`` along ``axis``.

    ``maps`` extend one pixel before the period and ``ov + 1`` after it.
    Overlap index ``j`` in ``[-1, ov]`` pairs the continuation beyond the
    period (label 1, index ``size + j``) with the period's own start (label 2,
    index ``j``); the two end slices are pinned.
    """
    def take(m, start):
        sl = [slice(None)] * m.ndim
        sl[axis] = slice(1 + start, 1 + start + ov + 2)
        return m[tuple(sl)]

    p1 = [take(m, size - 1) for m in maps]
    p2 = [take(m, -1) for m in maps]
    ties = []
    if tie_ends:
        width = p1[0].shape[1]
        ties = [((i, 0), (i, width - 1)) for i in range(p1[0].shape[0])]
    prob = seam_problem(SvbrdfTexture.from_maps(p1), SvbrdfTexture.from_maps(p2), cfg, axis, ties)
    seam = min_cut_seam(prob)
    choose1 = seam.labels == 1
    out = []
    for m, a, b in zip(maps, p1, p2):
        sl = [slice(None)] * m.ndim
        sl[axis] = slice(1, 1 + size)
        period = m[tuple(sl)].copy()
        mix = np.where(choose1[..., None], a, b)
        sl = [slice(None)] * m.ndim
        sl[axis] = slice(1, 1 + ov)
        dst = [slice(None)] * m.ndim
        dst[axis] = slice(0, ov)
        period[tuple(dst)] = mix[tuple(sl)]
        out.append(period)
    return out, seam


def make_tileable(tex: SvbrdfTexture, patch_size: int | None = None,
                  cfg: TexSynthConfig = TexSynthConfig()) -> TileResult:
    """Crop the best ``patch_size`` window and cut seams so it tiles in x and y."""
    p = patch_size or cfg.patch_size
    if not p:
        raise ValueError("a patch size is required")
    ov = cfg.overlap_for(p)
    if ov >= p:
        raise ValueError(f"overlap {ov} must be smaller than the patch size {p}")
    r0, c0 = find_optimal_patch(tex, p, cfg, margin=(1, ov + 1))
    ext = tex.crop(r0 - 1, c0 - 1, p + ov + 2, p + ov + 2)
    maps = ext.maps()
    strip, seam_x = _stitch(maps, p, ov, 1, cfg)
    tile, seam_y = _stitch(strip, p, ov, 0, cfg, tie_ends=True)
    return TileResult(SvbrdfTexture.from_maps(tile), (r0, c0), ov, seam_x, seam_y)


def tile(tex: SvbrdfTexture, reps=3) -> SvbrdfTexture:
    a, n, r = tex.maps()
    rep = (reps, reps, 1)
    return SvbrdfTexture.from_maps((np.tile(a, rep), np.tile(n, rep), np.tile(r, rep)))


def tiling_energy(tex: SvbrdfTexture, reps=3, cfg: TexSynthConfig = TexSynthConfig()) -> float:
    """Gradient across the internal tile boundaries of a ``reps x reps`` tiling."""
    h, w = tex.shape
    gx, gy = _grad_magnitudes(tile(tex, reps), cfg)
    cols = [k * w - 1 for k in range(1, reps)]
    rows = [k * h - 1 for k in range(1, reps)]
    return float(gx[:, cols].sum() + gy[rows, :].sum())


def center_crop(tex: SvbrdfTexture, size: int) -> SvbrdfTexture:
    h, w = tex.shape
    return tex.crop((h - size) // 2, (w - size) // 2, size, size)


def patch_variants(tex: SvbrdfTexture, cfg: TexSynthConfig = TexSynthConfig(), fractions=(2, 3, 4)):
    """Tileable patches of 1/2, 1/3 and 1/4 of the smaller texture side."""
    side = min(tex.shape)
    return [make_tileable(tex, side // f, cfg) for f in fractions]
