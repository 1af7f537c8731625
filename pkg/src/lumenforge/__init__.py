"""Numerical core for single-image indoor inverse rendering."""

__version__ = "0.1.0"

from .brdf import BrdfConfig, ShadingGeometry, SurfaceSample, eval_diffuse, eval_full, eval_specular
from .imaging import HdrImage, LdrImage, MaskImage, read_pfm, write_pfm
from .lighting import EnvMapGrid, SgEnvironment, SgLobe, eval_sg, raw_to_hdr, sg_to_grid
from .renderlayer import GBuffer, LightingGrid, build_quadrature, render_image, render_pixel, render_pixel_grad
from .sgfit import SgFitConfig, fit_grid

__all__ = [
    "BrdfConfig", "ShadingGeometry", "SurfaceSample", "eval_diffuse", "eval_full", "eval_specular",
    "HdrImage", "LdrImage", "MaskImage", "read_pfm", "write_pfm",
    "EnvMapGrid", "SgEnvironment", "SgLobe", "eval_sg", "raw_to_hdr", "sg_to_grid",
    "GBuffer", "LightingGrid", "build_quadrature", "render_image", "render_pixel", "render_pixel_grad",
    "SgFitConfig", "fit_grid",
]
