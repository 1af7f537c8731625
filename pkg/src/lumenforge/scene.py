"""On-disk scene inputs: G-buffer directories, lighting grids and texture maps.

A G-buffer directory holds ``albedo.pfm``, ``normal.pfm`` (raw signed
vectors), ``roughness.pfm`` and ``depth.pfm`` (greyscale or equal-channel
colour) plus an optional binary ``mask.png``.

A lighting-grid file starts with ``# lighting-grid <rows> <cols> <lobes>``
followed by ``rows * cols * lobes`` lobe lines in row-major cell order; a
file without that header is a single environment shared by every pixel.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .imaging import load_pfm_array, read_binary_mask, read_png, save_pfm_array, write_binary_mask
from .lighting import SgEnvironment, _content_lines, _parse_lobe_lines, format_environment
from .renderlayer import GBuffer, LightingGrid
from .texsynth import SvbrdfTexture

GBUFFER_FILES = ("albedo.pfm", "normal.pfm", "roughness.pfm", "depth.pfm")
GRID_HEADER = "# lighting-grid"


def _scalar_map(path):
    a = load_pfm_array(path).astype(np.float64)
    return a[..., 0] if a.ndim == 3 else a


def read_gbuffer(directory) -> GBuffer:
    d = Path(directory)
    missing = [f for f in GBUFFER_FILES if not (d / f).is_file()]
    if missing:
        raise FileNotFoundError(f"{d}: G-buffer is missing {', '.join(missing)}")
    albedo = load_pfm_array(d / "albedo.pfm").astype(np.float64)
    normal = load_pfm_array(d / "normal.pfm").astype(np.float64)
    if albedo.ndim != 3 or normal.ndim != 3:
        raise ValueError(f"{d}: albedo and normal maps must be colour PFMs")
    mask = read_binary_mask(d / "mask.png") if (d / "mask.png").is_file() else None
    return GBuffer(albedo, normal, _scalar_map(d / "roughness.pfm"), _scalar_map(d / "depth.pfm"), mask)


def write_gbuffer(g: GBuffer, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    save_pfm_array(g.albedo, d / "albedo.pfm")
    save_pfm_array(g.normal, d / "normal.pfm")
    save_pfm_array(g.roughness, d / "roughness.pfm")
    save_pfm_array(g.depth, d / "depth.pfm")
    if not np.all(g.mask):
        write_binary_mask(g.mask, d / "mask.png")


def format_lighting_grid(lights: LightingGrid) -> str:
    k = lights.lam.shape[2]
    parts = [f"{GRID_HEADER} {lights.rows} {lights.cols} {k}\n"]
    for r in range(lights.rows):
        for c in range(lights.cols):
            parts.append(format_environment(lights.cell(r, c)))
    return "".join(parts)


def parse_lighting(text: str, where: str = "<string>") -> LightingGrid:
    first = next((ln.strip() for ln in text.splitlines() if ln.strip()), "")
    lines = _content_lines(text)
    if not first.startswith(GRID_HEADER):
        xi, lam, f = _parse_lobe_lines(lines, where)
        return LightingGrid.uniform(SgEnvironment(xi, lam, f))
    try:
        rows, cols, k = (int(t) for t in first[len(GRID_HEADER):].split())
    except ValueError:
        raise ValueError(f"{where}: header must read '{GRID_HEADER} <rows> <cols> <lobes>'") from None
    if len(lines) != rows * cols * k:
        raise ValueError(f"{where}: expected {rows * cols * k} lobe lines, found {len(lines)}")
    xi, lam, f = _parse_lobe_lines(lines, where)
    return LightingGrid(xi.reshape(rows, cols, k, 3), lam.reshape(rows, cols, k), f.reshape(rows, cols, k, 3))


def read_lighting(path) -> LightingGrid:
    """Lighting grid from a file, or from ``lights.txt`` inside a directory."""
    p = Path(path)
    if p.is_dir():
        p = p / "lights.txt"
    with open(p) as f:
        return parse_lighting(f.read(), os.fspath(p))


def write_lighting(lights: LightingGrid, path) -> None:
    with open(path, "w") as f:
        f.write(format_lighting_grid(lights))


# --------------------------------------------------------------------------
# Texture maps (PNG values are used as stored; normals are (n + 1) / 2 encoded)
# --------------------------------------------------------------------------

def _load_map(path) -> np.ndarray:
    if os.fspath(path).lower().endswith(".pfm"):
        a = load_pfm_array(path).astype(np.float64)
        return a if a.ndim == 3 else np.repeat(a[..., None], 3, axis=2)
    return np.asarray(read_png(path).data, dtype=np.float64)


def read_texture(albedo_path, normal_path, roughness_path) -> SvbrdfTexture:
    albedo = _load_map(albedo_path)
    normal = _load_map(normal_path)
    if not os.fspath(normal_path).lower().endswith(".pfm"):
        normal = normal * 2.0 - 1.0
    norms = np.linalg.norm(normal, axis=2, keepdims=True)
    if np.any(norms < 1e-6):
        raise ValueError(f"{normal_path}: normal map has zero-length vectors")
    rough = _load_map(roughness_path)[..., 0]
    if albedo.shape != normal.shape or rough.shape != albedo.shape[:2]:
        raise ValueError("albedo, normal and roughness maps have different sizes")
    return SvbrdfTexture(albedo, normal / norms, rough)


def write_texture_pngs(tex: SvbrdfTexture, directory, prefix="") -> dict:
    from .imaging import write_png

    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {"albedo": d / f"{prefix}albedo.png", "normal": d / f"{prefix}normal.png",
             "roughness": d / f"{prefix}roughness.png"}
    write_png(np.clip(tex.albedo, 0, 1), paths["albedo"])
    write_png((tex.normal + 1.0) / 2.0, paths["normal"])
    write_png(np.repeat(tex.roughness[..., None], 3, axis=2), paths["roughness"])
    return paths
