"""Command-line entry point: ``lumenforge <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 computation error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__

log = logging.getLogger("lumenforge")

EXIT_OK, EXIT_USAGE, EXIT_COMPUTE = 0, 1, 2
DEFAULT_SEED = 42


class UsageError(Exception):
    """Bad flags or unusable paths, detected before any computation."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# argument helpers
# --------------------------------------------------------------------------

def _floats(n):
    def parse(text):
        try:
            vals = tuple(float(t) for t in text.split(","))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}") from None
        if len(vals) != n:
            raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
        return vals
    return parse


def _ints(n):
    def parse(text):
        vals = _floats(n)(text)
        if any(v != int(v) for v in vals):
            raise argparse.ArgumentTypeError(f"expected {n} integers, got {text!r}")
        return tuple(int(v) for v in vals)
    return parse


def _sphere(text):
    kind, _, rad = text.partition(":")
    try:
        r = float(rad)
    except ValueError:
        r = -1.0
    if kind != "sphere" or not r > 0:
        raise argparse.ArgumentTypeError(f"object must look like sphere:<radius>, got {text!r}")
    return r


def _resolution(text):
    try:
        rows, cols = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <rows>x<cols>, got {text!r}") from None
    return rows, cols


def _need_file(path, what):
    if path is not None and not Path(path).is_file():
        raise UsageError(f"{what} {path} does not exist")


def _need_dir(path, what):
    if not Path(path).is_dir():
        raise UsageError(f"{what} {path} is not a directory")


def _need_parent(path):
    parent = Path(path).resolve().parent
    if not parent.is_dir():
        raise UsageError(f"output directory {parent} does not exist")


def _need_lights(path):
    p = Path(path)
    if not (p.is_file() or (p / "lights.txt").is_file()):
        raise UsageError(f"lighting input {path} is neither a file nor a directory with lights.txt")


def _report(args, fields: dict):
    if args.json:
        sys.stdout.write(json.dumps(fields, indent=2, sort_keys=True, default=float) + "\n")
    else:
        sys.stdout.write("".join(f"{k} = {v}\n" for k, v in fields.items()))


def _save_image(img, path, gamma):
    from .imaging import linear_to_ldr, write_pfm, write_png

    if str(path).lower().endswith(".pfm"):
        write_pfm(img, path)
    else:
        write_png(linear_to_ldr(img, gamma), path)


def _brdf(args):
    from .brdf import BrdfConfig

    return BrdfConfig(fresnel_variant=args.fresnel)


def _quadrature(args):
    from .renderlayer import build_quadrature

    return build_quadrature(args.azimuth_bins, args.elevation_bins)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_fit_sg(args):
    from .imaging import read_pfm
    from .lighting import EnvMapGrid, write_environment
    from .sgfit import SgFitConfig, fit_grid, format_trace_csv

    _need_file(args.input, "input map")
    _need_parent(args.out)
    if args.trace:
        _need_parent(args.trace)
    if args.lobes != 12:
        raise UsageError("only the 2x6 region layout (--lobes 12) is supported")
    grid = EnvMapGrid(read_pfm(args.input).data, args.domain)
    cfg = SgFitConfig(max_iterations=args.max_iterations, offset_rule=args.offset_rule)
    res = fit_grid(grid, cfg)
    write_environment(res.environment, args.out)
    if args.trace:
        Path(args.trace).write_text(format_trace_csv(res.trace))
    _report(args, {"loss": res.loss, "iterations": len(res.trace) - 1, "converged": res.converged,
                   "line_search_failed": res.line_search_failed, "message": res.message})


def cmd_render(args):
    from .imaging import write_pfm
    from .renderlayer import render_image
    from .scene import read_gbuffer, read_lighting

    _need_dir(args.gbuffer, "G-buffer")
    _need_lights(args.lights)
    for p in (args.out_diffuse, args.out_specular):
        _need_parent(p)
    g = read_gbuffer(args.gbuffer)
    lights = read_lighting(args.lights)
    fov = None if args.orthographic else args.fov
    d, s = render_image(g, lights, fov, _quadrature(args), _brdf(args))
    write_pfm(d, args.out_diffuse)
    write_pfm(s, args.out_specular)
    _report(args, {"height": g.shape[0], "width": g.shape[1], "diffuse_mean": float(d.data.mean()),
                   "specular_mean": float(s.data.mean())})


def _scene_inputs(args):
    from .imaging import load_image
    from .scene import read_gbuffer, read_lighting

    _need_file(args.image, "image")
    _need_dir(args.gbuffer, "G-buffer")
    _need_lights(args.lights)
    _need_parent(args.out)
    return load_image(args.image, args.gamma), read_gbuffer(args.gbuffer), read_lighting(args.lights)


def cmd_insert(args):
    from .composite import SphereObject, insert_object
    from .imaging import read_binary_mask

    _need_file(args.plane_mask, "plane mask")
    image, g, lights = _scene_inputs(args)
    plane = read_binary_mask(args.plane_mask) if args.plane_mask else None
    obj = SphereObject(args.object, tuple(args.albedo), args.rough)
    rows, cols = args.env_resolution
    res = insert_object(image, g, lights, args.at, obj, plane, args.fov, rows, cols,
                        _quadrature(args), _brdf(args))
    _save_image(res.image, args.out, args.gamma)
    _report(args, {"object_pixels": int(res.object_mask.sum()), "plane_pixels": int(res.plane_mask.sum())})


def cmd_edit_material(args):
    from .composite import edit_material
    from .imaging import read_binary_mask

    _need_file(args.region, "region mask")
    image, g, lights = _scene_inputs(args)
    region = read_binary_mask(args.region)
    out = edit_material(image, g, lights, region, args.albedo, args.rough, args.fov,
                        _quadrature(args), _brdf(args))
    _save_image(out, args.out, args.gamma)
    _report(args, {"region_pixels": int(region.sum())})


def cmd_edit_specular(args):
    from .composite import edit_specularity
    from .imaging import read_binary_mask

    _need_file(args.region, "region mask")
    image, g, lights = _scene_inputs(args)
    region = read_binary_mask(args.region)
    out = edit_specularity(image, g, lights, region, args.rough, args.fov, _quadrature(args), _brdf(args))
    _save_image(out, args.out, args.gamma)
    _report(args, {"region_pixels": int(region.sum())})


def cmd_tile(args):
    from .imaging import write_png
    from .scene import read_texture, write_texture_pngs
    from .texsynth import TexSynthConfig, make_tileable, patch_variants, tile, tiling_energy

    for p, what in ((args.albedo, "albedo map"), (args.normal, "normal map"), (args.rough, "roughness map")):
        _need_file(p, what)
    out = Path(args.out)
    if out.exists() and not out.is_dir():
        raise UsageError(f"output {out} exists and is not a directory")
    _need_parent(out)
    tex = read_texture(args.albedo, args.normal, args.rough)
    cfg = TexSynthConfig(args.lambda_albedo, args.lambda_normal, args.lambda_roughness,
                         overlap_width=args.overlap)
    if args.variants:
        results = list(zip(("half_", "third_", "quarter_"), patch_variants(tex, cfg)))
    else:
        if not args.patch:
            raise UsageError("--patch is required unless --variants is given")
        results = [("", make_tileable(tex, args.patch, cfg))]
    fields = {}
    for prefix, res in results:
        write_texture_pngs(res.texture, out, prefix)
        write_png(np.clip(tile(res.texture, 3).albedo, 0, 1), out / f"{prefix}preview.png")
        fields[f"{prefix}patch"] = res.texture.shape[0]
        fields[f"{prefix}window"] = f"{res.window[0]},{res.window[1]}"
        fields[f"{prefix}seam_cost_x"] = res.seam_x.cost
        fields[f"{prefix}seam_cost_y"] = res.seam_y.cost
        fields[f"{prefix}tiling_energy"] = tiling_energy(res.texture, 3, cfg)
    _report(args, fields)


def cmd_compare(args):
    from .compare import compare_sh_sg
    from .imaging import read_pfm
    from .lighting import EnvMapGrid
    from .sgfit import SgFitConfig

    if args.input is None:
        ref = resources.files("lumenforge") / "data" / "localized_env.pfm"
        with resources.as_file(ref) as p:
            data = read_pfm(p).data
    else:
        _need_file(args.input, "input map")
        data = read_pfm(args.input).data
    report = compare_sh_sg(EnvMapGrid(data, args.domain), SgFitConfig(offset_rule=args.offset_rule))
    sys.stdout.write(report.to_json() if args.json else report.to_text())


def _loss_weights(path):
    from dataclasses import fields

    from .objective import LossWeights

    if path is None:
        return LossWeights()
    names = {f.name for f in fields(LossWeights)}
    values = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in names:
            raise UsageError(f"{path}:{n}: expected '<weight> = <value>' with weight in {sorted(names)}")
        try:
            values[key] = float(val)
        except ValueError:
            raise UsageError(f"{path}:{n}: {val.strip()!r} is not a number") from None
    return LossWeights(**values)


def cmd_eval_loss(args):
    from .compare import log_loss
    from .imaging import read_pfm
    from .lighting import sg_to_grid
    from .objective import (LossComponents, log_encoded_depth_loss, render_loss, scale_invariant_l2,
                            sg_param_losses, total_loss)
    from .renderlayer import render_image
    from .scene import read_gbuffer, read_lighting

    _need_dir(args.gt, "ground-truth directory")
    _need_dir(args.pred, "prediction directory")
    _need_file(args.weights, "weights file")
    weights = _loss_weights(args.weights)
    gt, pred = read_gbuffer(args.gt), read_gbuffer(args.pred)
    if gt.shape != pred.shape:
        raise ValueError(f"ground truth is {gt.shape} but prediction is {pred.shape}")
    m = gt.mask
    n = max(int(m.sum()), 1)
    comp = LossComponents()
    comp.albedo, _ = scale_invariant_l2(pred.albedo, gt.albedo, m)
    comp.normal = float(np.sum(((pred.normal - gt.normal) ** 2)[m]) / (3 * n))
    comp.roughness = float(np.sum(((pred.roughness - gt.roughness) ** 2)[m]) / n)
    comp.depth, c_depth = log_encoded_depth_loss(gt.depth, pred.depth, m)
    fields = {}
    gt_l, pred_l = Path(args.gt) / "lights.txt", Path(args.pred) / "lights.txt"
    if gt_l.is_file() and pred_l.is_file():
        lg, lp = read_lighting(gt_l), read_lighting(pred_l)
        if (lg.rows, lg.cols) != (lp.rows, lp.cols):
            raise ValueError("lighting grids differ in size")
        lighting, lam, xi, inten = [], 0.0, 0.0, 0.0
        for r in range(lg.rows):
            for c in range(lg.cols):
                eg, ep = lg.cell(r, c), lp.cell(r, c)
                lighting.append(log_loss(sg_to_grid(ep).radiance, sg_to_grid(eg)))
                sp = sg_param_losses(ep, eg)
                lam, xi, inten = lam + sp.lam, xi + sp.xi, inten + sp.intensity
        cells = lg.rows * lg.cols
        comp.lighting = float(np.mean(lighting))
        comp.lam, comp.xi, comp.intensity = lam / cells, xi / cells, inten / cells
        image_path = Path(args.gt) / "image.pfm"
        if image_path.is_file():
            d, s = render_image(pred, lp, args.fov)
            comp.render, c_diff, c_spec = render_loss(read_pfm(image_path).data, d.data, s.data, m)
            fields.update(render_c_diffuse=c_diff, render_c_specular=c_spec)
    fields = {"albedo": comp.albedo, "normal": comp.normal, "roughness": comp.roughness, "depth": comp.depth,
              "depth_scale": c_depth, "lighting": comp.lighting, "render": comp.render,
              "sg_lambda": float(np.sum(comp.lam)), "sg_direction": float(np.sum(comp.xi)),
              "sg_intensity": float(np.sum(comp.intensity)), **fields,
              "total": total_loss(comp, weights)}
    _report(args, fields)


def cmd_matmap_sample(args):
    from .matmap import build_from_phong, read_observations_csv, read_table, sample_conditional, write_table

    if (args.table is None) == (args.observations is None):
        raise UsageError("give exactly one of --table or --observations")
    _need_file(args.table, "table")
    _need_file(args.observations, "observations CSV")
    if args.save_table:
        _need_parent(args.save_table)
    if (args.key is None) == (args.phong is None):
        raise UsageError("give exactly one of --key or --phong")
    table = read_table(args.table) if args.table else build_from_phong(read_observations_csv(args.observations))
    if args.save_table:
        write_table(table, args.save_table)
    key = args.key if args.key is not None else table.key_for(*args.phong)
    values = sample_conditional(table, key, args.seed, size=args.count)
    if args.json:
        sys.stdout.write(json.dumps({"key": list(key), "samples": [float(v) for v in values]}) + "\n")
    else:
        sys.stdout.write("".join(f"{float(v)!r}\n" for v in values))


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="random seed (default 42)")
    common.add_argument("--json", action="store_true", help="machine-readable report")
    common.add_argument("--gamma", type=float, default=2.2, help="display gamma for LDR images")
    common.add_argument("-v", "--verbose", action="store_true")

    render_opts = _Parser(add_help=False)
    render_opts.add_argument("--fov", type=float, default=63.4, help="horizontal field of view in degrees")
    render_opts.add_argument("--azimuth-bins", type=int, default=16)
    render_opts.add_argument("--elevation-bins", type=int, default=8)
    render_opts.add_argument("--fresnel", choices=("as-written", "with-f0-offset"), default="as-written")

    p = _Parser(prog="lumenforge", description="Inverse-rendering numerics: SG lighting, "
                "rendering layer, compositing, tileable textures and material mapping.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="<command>", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("fit-sg", parents=[common], help="fit 12 SG lobes to an environment map")
    s.add_argument("--input", required=True, help="environment map (PFM)")
    s.add_argument("--out", required=True, help="output SG text file")
    s.add_argument("--lobes", type=int, default=12)
    s.add_argument("--trace", help="write the iteration trace as CSV")
    s.add_argument("--domain", choices=("hemisphere", "sphere"), default="hemisphere")
    s.add_argument("--max-iterations", type=int, default=400)
    s.add_argument("--offset-rule", choices=("row-major", "printed"), default="row-major")
    s.set_defaults(func=cmd_fit_sg)

    s = sub.add_parser("render", parents=[common, render_opts], help="render diffuse/specular images")
    s.add_argument("--gbuffer", required=True)
    s.add_argument("--lights", required=True)
    s.add_argument("--out-diffuse", required=True)
    s.add_argument("--out-specular", required=True)
    s.add_argument("--orthographic", action="store_true", help="view every pixel along +z")
    s.set_defaults(func=cmd_render)

    def scene_flags(s):
        s.add_argument("--image", required=True, help="photograph (PFM or PNG)")
        s.add_argument("--gbuffer", required=True)
        s.add_argument("--lights", required=True)
        s.add_argument("--out", required=True, help="output image (PNG or PFM)")

    s = sub.add_parser("insert", parents=[common, render_opts], help="insert a sphere with ratio compositing")
    scene_flags(s)
    s.add_argument("--at", type=_ints(2), required=True, help="insertion pixel x,y")
    s.add_argument("--object", type=_sphere, required=True, help="sphere:<radius>")
    s.add_argument("--albedo", type=_floats(3), default=(0.8, 0.8, 0.8))
    s.add_argument("--rough", type=float, default=0.5)
    s.add_argument("--plane-mask", help="binary PNG of the supporting plane (default: G-buffer mask)")
    s.add_argument("--env-resolution", type=_resolution, default=(512, 1024))
    s.set_defaults(func=cmd_insert)

    s = sub.add_parser("edit-material", parents=[common, render_opts], help="replace a region's material")
    scene_flags(s)
    s.add_argument("--region", required=True, help="binary PNG of the region")
    s.add_argument("--albedo", type=_floats(3))
    s.add_argument("--rough", type=float)
    s.set_defaults(func=cmd_edit_material)

    s = sub.add_parser("edit-specular", parents=[common, render_opts], help="change a region's roughness")
    scene_flags(s)
    s.add_argument("--region", required=True)
    s.add_argument("--rough", type=float, required=True)
    s.set_defaults(func=cmd_edit_specular)

    s = sub.add_parser("tile", parents=[common], help="make an SVBRDF texture tileable")
    s.add_argument("--albedo", required=True)
    s.add_argument("--normal", required=True)
    s.add_argument("--rough", required=True)
    s.add_argument("--patch", type=int)
    s.add_argument("--variants", action="store_true", help="1/2, 1/3 and 1/4 size patches")
    s.add_argument("--overlap", type=int)
    s.add_argument("--lambda-albedo", type=float, default=1.0)
    s.add_argument("--lambda-normal", type=float, default=1.0)
    s.add_argument("--lambda-roughness", type=float, default=1.0)
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_tile)

    s = sub.add_parser("compare-sh-sg", parents=[common], help="SG fit vs SH projection report")
    s.add_argument("--input", help="environment map (PFM); default: bundled localized-source map")
    s.add_argument("--domain", choices=("hemisphere", "sphere"), default="hemisphere")
    s.add_argument("--offset-rule", choices=("row-major", "printed"), default="row-major")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("eval-loss", parents=[common], help="loss report between two G-buffer directories")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--weights", help="key = value overrides of the loss weights")
    s.add_argument("--fov", type=float, default=63.4)
    s.set_defaults(func=cmd_eval_loss)

    s = sub.add_parser("matmap-sample", parents=[common], help="sample roughness for a Phong key")
    s.add_argument("--table")
    s.add_argument("--observations", help="CSV of phong_exponent,phong_intensity,roughness")
    s.add_argument("--save-table")
    s.add_argument("--key", type=_ints(2), help="decile key e,i")
    s.add_argument("--phong", type=_floats(2), help="raw exponent,intensity")
    s.add_argument("--count", type=int, default=1)
    s.set_defaults(func=cmd_matmap_sample)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        sys.stderr.write(f"lumenforge {args.command}: error: {exc}\n")
        return EXIT_USAGE
    except (ValueError, KeyError, OSError, ArithmeticError, RuntimeError) as exc:
        sys.stderr.write(f"lumenforge {args.command}: {type(exc).__name__}: {exc}\n")
        return EXIT_COMPUTE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
