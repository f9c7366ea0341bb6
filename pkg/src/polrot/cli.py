"""``polrot`` command line: simulate, decompose, condition, visualize, separate, graycode.

Angles on the command line are in degrees; they are converted to radians once,
when the angle set is built. Exit codes: 0 success, 1 I/O error,
2 configuration error, 3 degenerate angle set, 4 a requested verification failed.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from .decompose import (
    ANGLE_PRESETS,
    AngleSet,
    DegenerateAngleSet,
    angle_preset,
    decompose_stack,
    validate_angle_set,
)
from .imaging import (
    CaptureManifest,
    ManifestError,
    PFMError,
    load_manifest,
    load_stacks,
    output_dir,
    read_pfm,
    save_manifest,
    save_stack,
    write_pfm,
)

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_VERIFY = 0, 1, 2, 3, 4
GROUND_TRUTH = ("i_u", "i_f", "phi_f", "i_r", "phi_r")
INTENSITIES = ("i_u", "i_f", "i_r")


class ConfigError(Exception):
    pass


def parse_angles(text: str) -> AngleSet:
    """A preset name or inline ``"c:l,c:l,..."`` degree pairs."""
    if text in ANGLE_PRESETS:
        return angle_preset(text)
    try:
        pairs = [tuple(float(v) for v in item.split(":")) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"bad angle list {text!r}; expected a preset {sorted(ANGLE_PRESETS)} or 'c:l,c:l,...'")
    if not pairs or any(len(p) != 2 for p in pairs):
        raise ConfigError(f"bad angle list {text!r}; each item must be 'theta_c:theta_l' in degrees")
    try:
        # repeated pairs are legitimate (averaged captures); rank decides sufficiency
        return AngleSet.from_degrees(pairs, allow_repeats=True)
    except ValueError as exc:
        raise ConfigError(str(exc))


def _parse_param(items) -> dict:
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"recipe parameter {item!r} must look like key=value")
        try:
            params[key] = json.loads(value)
        except json.JSONDecodeError:
            params[key] = value
    return params


def _emit(args, report: dict, lines: list[str]) -> None:
    if args.json:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        for line in lines:
            print(line)


def _out(args) -> Path:
    path = output_dir(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _scene_from_args(args):
    from .synthetic import generate_scene

    return generate_scene(args.recipe, width=args.size, height=args.height, seed=args.seed, **_parse_param(args.param))


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(args) -> int:
    from .separation import checker_patterns
    from .structured_light import generate_patterns
    from .synthetic import NoiseSpec, render_observations, render_patterned

    angles = parse_angles(args.angles)
    scene = _scene_from_args(args)
    noise = NoiseSpec(args.sigma, args.seed)
    out = _out(args)

    records = save_stack(render_observations(scene, angles, noise), out)
    scene_block = {"recipe": scene.recipe, "calibration": scene.calib.to_json(), "noise_sigma": args.sigma}
    ph, pw = scene.projector_shape
    if args.patterns == "graycode":
        codes = generate_patterns(args.bits, pw, ph)
        for stack in render_patterned(scene, angles, codes.patterns, noise, ids=codes.ids):
            records += save_stack(stack, out, prefix=stack.pattern_id, role="graycode")
        scene_block["graycode_bits"] = args.bits
    elif args.patterns == "checker":
        shifts = [(0, 0), (0, args.checker_period)]
        pats = checker_patterns((ph, pw), args.checker_period, shifts)
        ids = [f"checker{j}" for j in range(len(pats))]
        for stack in render_patterned(scene, angles, pats, noise, ids=ids):
            records += save_stack(stack, out, prefix=stack.pattern_id, role="checker")
        scene_block["checker"] = {"period": args.checker_period, "shifts": [list(s) for s in shifts]}
    save_manifest(CaptureManifest(records, scene_block), out / "manifest.json")
    for name in GROUND_TRUTH:
        write_pfm(out / f"gt_{name}.pfm", getattr(scene, name))

    report = {"frames": len(records), "out": str(out), "recipe": scene.recipe["name"], "shape": [scene.height, scene.width]}
    _emit(args, report, [f"wrote {len(records)} frames, manifest.json and {len(GROUND_TRUTH)} ground-truth maps to {out}"])
    return EXIT_OK


def _angle_report_lines(rep) -> list[str]:
    return [rep.summary()]


def cmd_condition(args) -> int:
    if args.polcam is not None:
        try:
            light = [float(v) for v in args.polcam.split(",") if v.strip()]
        except ValueError:
            raise ConfigError(f"bad light-polarizer list {args.polcam!r}")
        angles = AngleSet.polarization_camera(light)
    else:
        angles = parse_angles(args.angles)
    rep = validate_angle_set(angles)
    report = rep.as_dict()
    report["angles_deg"] = [list(p) for p in angles.degrees()]
    _emit(args, report, _angle_report_lines(rep))
    return EXIT_OK if rep.rank >= 5 else EXIT_DEGENERATE


def _crop(a, size):
    h, w = a.shape[:2]
    r0, c0 = max(0, (h - size) // 2), max(0, (w - size) // 2)
    return a[r0 : r0 + size, c0 : c0 + size]


def _oracle_check(stack, size) -> float:
    from .oracle import brute_force_fit

    frames = np.stack([_crop(f, size) for f in stack.frames])
    est = decompose_stack(type(stack)(frames, stack.angles))
    worst = 0.0
    for r, c in np.ndindex(frames.shape[1:3]):
        if not est.valid[r, c]:
            continue
        ref = brute_force_fit(frames[:, r, c], stack.angles)
        for i_name, p_name in (("i_f", "phi_f"), ("i_r", "phi_r")):
            a = getattr(est, i_name)[r, c] * np.exp(2j * getattr(est, p_name)[r, c])
            b = getattr(ref, i_name) * np.exp(2j * getattr(ref, p_name))
            worst = max(worst, abs(a - b), abs(getattr(est, i_name)[r, c] - getattr(ref, i_name)))
        worst = max(worst, abs(est.i_u_raw[r, c] - ref.i_u_raw))
    return float(worst)


def _verify(images, directory: Path, tol: float) -> dict:
    errors = {}
    for name in GROUND_TRUTH:
        gt = read_pfm(directory / f"gt_{name}.pfm").astype(np.float64)
        est = images[name]
        if name.startswith("phi"):
            weight = read_pfm(directory / f"gt_i_{name[-1]}.pfm").astype(np.float64)
            mask = weight > 1e-3 * max(float(np.max(weight)), 1e-300)
            d = np.angle(np.exp(2j * (est - gt))) / 2.0
            errors[name] = float(np.max(np.abs(d[mask]))) if np.any(mask) else 0.0
        else:
            errors[name] = float(np.nanmax(np.abs(est - gt)) / max(float(np.max(gt)), 1e-12))
    return {"errors": errors, "tolerance": tol, "pass": all(v <= tol for v in errors.values())}


def cmd_decompose(args) -> int:
    manifest = load_manifest(args.manifest)
    stacks = load_stacks(manifest, role="regular", saturation_level=args.saturation)
    if len(stacks) != 1:
        raise ConfigError("decompose expects exactly one unpatterned stack in the manifest")
    stack = next(iter(stacks.values()))
    rep = validate_angle_set(stack.angles)
    report = {"angle_set": rep.as_dict()}
    lines = _angle_report_lines(rep)
    if rep.rank < 5:
        _emit(args, report, lines)
        return EXIT_DEGENERATE

    d = decompose_stack(stack, saturation=args.saturation)
    out = _out(args)
    images = d.images()
    for name, img in images.items():
        write_pfm(out / f"{name}.pfm", img)
    report["valid_fraction"] = float(np.mean(d.valid))
    report["physical_fraction"] = float(np.mean(d.physical))
    lines.append(f"valid pixels {report['valid_fraction']:.4f}, physically consistent {report['physical_fraction']:.4f}")
    status = EXIT_OK
    if args.verify_against is not None:
        ver = _verify(images, Path(args.verify_against), args.verify_tol)
        report["verify"] = ver
        errs = ", ".join(f"{k} {v:.3e}" for k, v in ver["errors"].items())
        lines.append(f"verify against ground truth: {errs} -> {'pass' if ver['pass'] else 'FAIL'}")
        if not ver["pass"]:
            status = EXIT_VERIFY
    if args.oracle:
        diff = _oracle_check(stack, args.oracle_size)
        report["oracle_max_abs_diff"] = diff
        lines.append(f"closed form vs brute force max abs diff {diff:.3e}")
    _emit(args, report, lines)
    return status


def cmd_visualize(args) -> int:
    from PIL import Image

    from .visualize import auto_scale, phase_to_rgb, to_uint8

    src = Path(args.input)
    out = _out(args) if args.out is not None else src
    report = {}
    for label, i_name, p_name in (("forward", "i_f", "phi_f"), ("reverse", "i_r", "phi_r")):
        intensity = read_pfm(src / f"{i_name}.pfm").astype(np.float64)
        phase = read_pfm(src / f"{p_name}.pfm").astype(np.float64)
        scale = args.scale if args.scale is not None else auto_scale(intensity)
        rgb = phase_to_rgb(phase, intensity, scale)
        Image.fromarray(to_uint8(rgb), mode="RGB").save(out / f"phase_{label}.png")
        write_pfm(out / f"phase_{label}.pfm", rgb.astype(np.float32))
        report[label] = {"scale": scale}
    _emit(args, report, [f"{k}: phase_{k}.png (brightness scale {v['scale']:.6g})" for k, v in report.items()])
    return EXIT_OK


def cmd_separate(args) -> int:
    from .separation import PatternedStack, combined_decompose

    manifest = load_manifest(args.manifest)
    stacks = load_stacks(manifest, role="checker", saturation_level=args.saturation)
    info = (manifest.scene or {}).get("checker", {})
    period = int(info.get("period", 8))
    shifts = tuple(tuple(s) for s in info.get("shifts", [(0, 0), (0, period)]))
    grid = combined_decompose(PatternedStack(list(stacks.values()), period, shifts))
    out = _out(args)
    for name, img in grid.cells().items():
        write_pfm(out / f"{name}.pfm", img)
    energy = {f"{part}_{comp}": v for (part, comp), v in grid.energy().items()}
    lines = [f"{'':8s}{'i_u':>14s}{'i_f':>14s}{'i_r':>14s}"]
    for part in ("direct", "global"):
        lines.append(f"{part:8s}" + "".join(f"{energy[f'{part}_{c}']:14.6g}" for c in INTENSITIES))
    _emit(args, {"energy": energy}, lines)
    return EXIT_OK


def _graycode_from_manifest(path, threshold, components):
    from .structured_light import decode_stacks
    from .synthetic import generate_scene

    manifest = load_manifest(path)
    if not manifest.scene or "recipe" not in manifest.scene:
        raise ConfigError("graycode ingest needs a manifest with a scene recipe for calibration and planes")
    scene = generate_scene(manifest.scene["recipe"])
    stacks = load_stacks(manifest, role="graycode")
    ordered = [stacks[k] for k in stacks]
    return scene, {c: decode_stacks(ordered, c, threshold) for c in components}


def cmd_graycode(args) -> int:
    from .structured_light import decode_stacks, generate_patterns, plane_fit_metric, triangulate
    from .synthetic import NoiseSpec, render_patterned

    components = ("raw", args.component)
    if args.manifest is not None:
        scene, cmaps = _graycode_from_manifest(args.manifest, args.threshold, components)
    else:
        scene = _scene_from_args(args)
        angles = parse_angles(args.angles)
        ph, pw = scene.projector_shape
        codes = generate_patterns(args.bits, pw, ph)
        stacks = render_patterned(scene, angles, codes.patterns, NoiseSpec(args.sigma, args.seed), ids=codes.ids)
        cmaps = {c: decode_stacks(stacks, c, args.threshold) for c in components}

    out = _out(args)
    report = {"component": args.component, "tolerance_mm": args.tol_mm}
    for comp, cmap in cmaps.items():
        cloud = triangulate(cmap, scene.calib)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            if args.fit_planes:
                prop = plane_fit_metric(cloud, tol_mm=args.tol_mm, labels=scene.plane_labels, fit=True)
            else:
                prop = plane_fit_metric(cloud, scene.planes, args.tol_mm)
        (out / f"cloud_{comp}.xyz").write_text(cloud.to_xyz(), encoding="ascii")
        write_pfm(out / f"columns_{comp}.pfm", cmap.column.astype(np.float32))
        report[comp] = {"proportion": prop, "points": len(cloud), "valid_fraction": float(np.mean(cmap.valid))}
    report["difference"] = report[args.component]["proportion"] - report["raw"]["proportion"]
    lines = [
        f"raw {report['raw']['proportion']:.4f}",
        f"{args.component} {report[args.component]['proportion']:.4f}",
        f"difference {report['difference']:+.4f}",
    ]
    if args.component == "reverse":
        cmap = cmaps["reverse"]
        mirrored = scene.source_map[..., 1]
        sel = cmap.valid & (mirrored >= 0)
        agree = float(np.mean(cmap.column[sel] == mirrored[sel])) if np.any(sel) else 0.0
        report["mirrored_code_agreement"] = agree
        lines.append(f"reverse decode matches mirrored code map on {agree:.4f} of decoded pixels")
    _emit(args, report, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def _scene_args(p, default_recipe="v-groove"):
    p.add_argument("--recipe", default=default_recipe, help="scene recipe name")
    p.add_argument("--size", type=int, default=64, help="image width in pixels")
    p.add_argument("--height", type=int, default=None, help="image height (default: --size)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma", type=float, default=0.0, help="Gaussian noise standard deviation")
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="recipe parameter (JSON value)")
    p.add_argument("--angles", default="pol-cam-2", help="preset name or 'c:l,...' degree pairs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="polrot", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.set_defaults(func=func)
        p.add_argument("--json", action="store_true", help="print a machine-readable report")
        return p

    p = add("simulate", cmd_simulate, "render a synthetic capture with ground truth")
    _scene_args(p)
    p.add_argument("--out", default=None, help="output directory (default $POLROT_OUT or ./polrot-out)")
    p.add_argument("--patterns", choices=("none", "graycode", "checker"), default="none")
    p.add_argument("--bits", type=int, default=10)
    p.add_argument("--checker-period", type=int, default=8)

    p = add("decompose", cmd_decompose, "decompose a captured stack into components")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    p.add_argument("--saturation", type=float, default=None)
    p.add_argument("--verify-against", default=None, metavar="DIR", help="directory with gt_*.pfm maps")
    p.add_argument("--verify-tol", type=float, default=1e-5)
    p.add_argument("--oracle", action="store_true", help="compare with the brute-force fit on a center crop")
    p.add_argument("--oracle-size", type=int, default=16)

    p = add("condition", cmd_condition, "rank and condition number of an angle set")
    p.add_argument("--angles", default="min-5")
    p.add_argument("--polcam", default=None, metavar="L1,L2,...", help="polarization-camera set for these light angles")

    p = add("visualize", cmd_visualize, "false-color phase images from decomposed maps")
    p.add_argument("input", help="directory written by 'decompose'")
    p.add_argument("--out", default=None)
    p.add_argument("--scale", type=float, default=None, help="brightness scale (default: 99th percentile)")

    p = add("separate", cmd_separate, "direct/global separation combined with decomposition")
    p.add_argument("manifest")
    p.add_argument("--out", default=None)
    p.add_argument("--saturation", type=float, default=None)

    p = add("graycode", cmd_graycode, "Gray-code 3D scan: raw intensity vs a decomposed component")
    _scene_args(p)
    p.add_argument("--manifest", default=None, help="ingest graycode frames instead of simulating")
    p.add_argument("--out", default=None)
    p.add_argument("--bits", type=int, default=10)
    p.add_argument("--threshold", type=float, default=None, help="decode threshold (default 2%% of max)")
    p.add_argument("--component", choices=("forward", "reverse", "unpolarized"), default="forward")
    p.add_argument("--tol-mm", type=float, default=1.0)
    p.add_argument("--fit-planes", action="store_true", help="fit reference planes to the cloud")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    from .synthetic import UnknownRecipe

    try:
        return args.func(args)
    except DegenerateAngleSet as exc:
        print(f"polrot: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (OSError, PFMError) as exc:
        print(f"polrot: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ManifestError, UnknownRecipe, ValueError, KeyError) as exc:
        print(f"polrot: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
