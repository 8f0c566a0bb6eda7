"""Batch pipeline driver: simulate, normalize, retrieve, recon, metrics.

Usage::

    xpct <command> CONFIG [flag overrides]

Every command reads one YAML config file (schema version 1). Relative
paths inside the config resolve against the config file's directory, so
a committed config runs from any working directory. Command-line flags
override the matching config keys before validation. The whole file is
schema-checked before any work starts; unknown keys anywhere are
rejected.

Schema, with defaults where they exist::

    version: 1
    geometry:                       # needed by simulate, retrieve, recon
      energy_ev: 20000.0            # exactly one of energy_ev / wavelength_m
      pixel_width_m: 1.29e-6
      distances_m: [0.01, 0.2, 0.4]
      n_rows: 80
      n_cols: 128
      n_views: 128                  # evenly spaced over 180 degrees
    simulate:
      phantom: phantom.txt          # sphere list, see tomo.load_phantom
      out_dir: data
      supersample: 4
      noise_pct: 0.1
      seed: 0
    normalize:
      raw: raw.stack                # intensity stack
      bright: bright.stack          # single-image flat field
      dark: dark.stack              # single-image dark field
      out: normalized.stack
    retrieve:
      inputs: [data/measured_00.stack, ...]   # one stack per distance
      out_dir: recon
      method: cnlpr                 # unlpr | cnlpr
      constraint: one-alpha         # one-alpha | one-gamma | tropt
      delta: 1.67e-6                # material decrement (cnlpr, paganin init)
      beta: 4.77e-9                 # material absorption index
      t_low: 0.01                   # tropt transmission floor
      init: zero                    # zero | paganin | ctf
      nu: 1.0e-8                    # CTF fixed-rule regularization strength
      alpha_prime: 50.0             # explicit CTF regularization (overrides nu)
      history: 64                   # solver settings
      max_iters: 10000
      m_consecutive: 5
      obj_tol_pct: 1.0
      recon_tol_pct: 0.5
      threads: 1
    recon:
      phase: recon/phase.stack
      out: recon/delta.stack
    metrics:
      estimate: recon/delta.stack
      truth: data/truth_delta.stack # needed by nrmse / ssim
      nrmse: true
      ssim: true
      mask: masks/foreground.stack            # optional metric restriction
      background_mask: masks/background.stack # background subtraction
      material_masks:
        SiC: masks/sic.stack
      mtf:
        image_index: 40
        center_row: 40.0
        center_col: 64.0
        radius_px: 15.0
        out: mtf.txt
      out: report.txt               # report also goes to stdout

simulate writes measured_XX.stack per distance plus truth_phase,
truth_absorption, truth_delta, and truth_label stacks. retrieve writes
phase.stack, absorption.stack, and one trace_viewXXXX.txt per view;
Paganin initialization uses the first listed distance. metrics emits
key = value lines.

Exit codes: 0 success, 2 invalid config or inputs, 3 numerical failure
in any view, 4 unreadable or unwritable files.

Views are independent, so retrieve parallelizes over them with a thread
pool of size `threads`; each view's solve is pure numpy (the FFT work
runs outside the interpreter lock) and results are assembled in view
order, so any thread count produces identical output files.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from .analysis import RegionMask, background_subtract, mtf_from_disc, nrmse, ssim
from .core import (
    DomainError,
    MaterialModel,
    NumericalFailure,
    ScanGeometry,
    StackFormatError,
    ValidationError,
    wavelength_from_energy,
)
from .lbfgs import SolverSettings
from .linpr import CtfRegularization, ctf_retrieve, normalize, paganin_retrieve
from .nlpr import CONSTRAINT_MODES, choose_constraint, cnlpr_retrieve, unlpr_retrieve
from .stackio import ImageStack, load_stack, save_stack
from .tomo import (
    evenly_spaced_angles,
    fbp_reconstruct,
    load_phantom,
    project_phantom,
    simulate_scan,
    voxelize_phantom,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_METHODS = ("unlpr", "cnlpr")
_INITS = ("zero", "paganin", "ctf")

_REQUIRED = object()


# ---------------------------------------------------------------------------
# config parsing


def _require_mapping(node, where):
    if not isinstance(node, dict):
        raise ValidationError(f"{where} must be a mapping, got {type(node).__name__}")


def _reject_unknown(node, allowed, where):
    unknown = sorted(set(node) - set(allowed))
    if unknown:
        keys = ", ".join(repr(k) for k in unknown)
        raise ValidationError(f"unknown key(s) {keys} in {where}")


def _fetch(node, key, where, default):
    """Value of node[key], treating an absent key or a null value as default."""
    v = node.get(key)
    if v is None:
        if default is _REQUIRED:
            raise ValidationError(f"{where}.{key} is required")
        return default
    return v


def _get_float(node, key, where, default=_REQUIRED):
    v = _fetch(node, key, where, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ValidationError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def _get_int(node, key, where, default=_REQUIRED):
    v = _fetch(node, key, where, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"{where}.{key} must be an integer, got {v!r}")
    return v


def _get_bool(node, key, where, default=_REQUIRED):
    v = _fetch(node, key, where, default)
    if v is None:
        return None
    if not isinstance(v, bool):
        raise ValidationError(f"{where}.{key} must be true or false, got {v!r}")
    return v


def _get_str(node, key, where, default=_REQUIRED, choices=None):
    v = _fetch(node, key, where, default)
    if v is None:
        return None
    if not isinstance(v, str):
        raise ValidationError(f"{where}.{key} must be a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ValidationError(
            f"{where}.{key} must be one of {', '.join(choices)}, got {v!r}"
        )
    return v


def _get_float_list(node, key, where):
    v = _fetch(node, key, where, _REQUIRED)
    if not isinstance(v, list) or not v:
        raise ValidationError(f"{where}.{key} must be a non-empty list of numbers")
    out = []
    for i, item in enumerate(v):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ValidationError(f"{where}.{key}[{i}] must be a number, got {item!r}")
        out.append(float(item))
    return out


def _get_path(node, key, base, where, default=_REQUIRED):
    v = _get_str(node, key, where, default)
    if v is None:
        return None
    return v if os.path.isabs(v) else os.path.join(base, v)


def _get_path_list(node, key, base, where):
    v = _fetch(node, key, where, _REQUIRED)
    if not isinstance(v, list) or not v:
        raise ValidationError(f"{where}.{key} must be a non-empty list of paths")
    out = []
    for i, item in enumerate(v):
        if not isinstance(item, str):
            raise ValidationError(f"{where}.{key}[{i}] must be a path, got {item!r}")
        out.append(item if os.path.isabs(item) else os.path.join(base, item))
    return out


def _parse_geometry(node, base):
    _require_mapping(node, "geometry")
    _reject_unknown(
        node,
        ("energy_ev", "wavelength_m", "pixel_width_m", "distances_m", "n_rows", "n_cols", "n_views"),
        "geometry",
    )
    has_energy = "energy_ev" in node
    if has_energy == ("wavelength_m" in node):
        raise ValidationError("geometry needs exactly one of energy_ev / wavelength_m")
    if has_energy:
        wavelength = wavelength_from_energy(_get_float(node, "energy_ev", "geometry"))
    else:
        wavelength = _get_float(node, "wavelength_m", "geometry")
    n_views = _get_int(node, "n_views", "geometry")
    return ScanGeometry(
        wavelength_m=wavelength,
        pixel_width_m=_get_float(node, "pixel_width_m", "geometry"),
        distances_m=tuple(_get_float_list(node, "distances_m", "geometry")),
        n_rows=_get_int(node, "n_rows", "geometry"),
        n_cols=_get_int(node, "n_cols", "geometry"),
        view_angles_rad=evenly_spaced_angles(n_views),
    )


def _parse_simulate(node, base):
    _require_mapping(node, "simulate")
    _reject_unknown(node, ("phantom", "out_dir", "supersample", "noise_pct", "seed"), "simulate")
    return {
        "phantom": _get_path(node, "phantom", base, "simulate"),
        "out_dir": _get_path(node, "out_dir", base, "simulate"),
        "supersample": _get_int(node, "supersample", "simulate", default=4),
        "noise_pct": _get_float(node, "noise_pct", "simulate", default=0.1),
        "seed": _get_int(node, "seed", "simulate", default=0),
    }


def _parse_normalize(node, base):
    _require_mapping(node, "normalize")
    _reject_unknown(node, ("raw", "bright", "dark", "out"), "normalize")
    return {key: _get_path(node, key, base, "normalize") for key in ("raw", "bright", "dark", "out")}


def _parse_retrieve(node, base):
    _require_mapping(node, "retrieve")
    _reject_unknown(
        node,
        (
            "inputs",
            "out_dir",
            "method",
            "constraint",
            "delta",
            "beta",
            "t_low",
            "init",
            "nu",
            "alpha_prime",
            "history",
            "max_iters",
            "m_consecutive",
            "obj_tol_pct",
            "recon_tol_pct",
            "threads",
        ),
        "retrieve",
    )
    method = _get_str(node, "method", "retrieve", choices=_METHODS)
    init = _get_str(node, "init", "retrieve", default="zero", choices=_INITS)
    params = {
        "inputs": _get_path_list(node, "inputs", base, "retrieve"),
        "out_dir": _get_path(node, "out_dir", base, "retrieve"),
        "method": method,
        "constraint": _get_str(node, "constraint", "retrieve", default=None, choices=CONSTRAINT_MODES),
        "delta": _get_float(node, "delta", "retrieve", default=None),
        "beta": _get_float(node, "beta", "retrieve", default=None),
        "t_low": _get_float(node, "t_low", "retrieve", default=0.01),
        "init": init,
        "nu": _get_float(node, "nu", "retrieve", default=1e-8),
        "alpha_prime": _get_float(node, "alpha_prime", "retrieve", default=None),
        "threads": _get_int(node, "threads", "retrieve", default=1),
        "settings": SolverSettings(
            history=_get_int(node, "history", "retrieve", default=64),
            max_iters=_get_int(node, "max_iters", "retrieve", default=10_000),
            m_consecutive=_get_int(node, "m_consecutive", "retrieve", default=5),
            obj_tol_pct=_get_float(node, "obj_tol_pct", "retrieve", default=1.0),
            recon_tol_pct=_get_float(node, "recon_tol_pct", "retrieve", default=0.5),
        ),
    }
    if params["threads"] < 1:
        raise ValidationError(f"retrieve.threads must be >= 1, got {params['threads']}")
    needs_material = method == "cnlpr" or init == "paganin"
    if needs_material and (params["delta"] is None or params["beta"] is None):
        raise ValidationError(
            f"retrieve with method={method}, init={init} needs both delta and beta"
        )
    if method == "cnlpr" and params["constraint"] is None:
        raise ValidationError("retrieve.constraint is required for method cnlpr")
    return params


def _parse_recon(node, base):
    _require_mapping(node, "recon")
    _reject_unknown(node, ("phase", "out"), "recon")
    return {
        "phase": _get_path(node, "phase", base, "recon"),
        "out": _get_path(node, "out", base, "recon"),
    }


def _parse_mtf(node, base):
    _require_mapping(node, "metrics.mtf")
    _reject_unknown(
        node, ("image_index", "center_row", "center_col", "radius_px", "out"), "metrics.mtf"
    )
    return {
        "image_index": _get_int(node, "image_index", "metrics.mtf", default=0),
        "center_row": _get_float(node, "center_row", "metrics.mtf"),
        "center_col": _get_float(node, "center_col", "metrics.mtf"),
        "radius_px": _get_float(node, "radius_px", "metrics.mtf"),
        "out": _get_path(node, "out", base, "metrics.mtf"),
    }


def _parse_metrics(node, base):
    _require_mapping(node, "metrics")
    _reject_unknown(
        node,
        ("estimate", "truth", "nrmse", "ssim", "mask", "background_mask", "material_masks", "mtf", "out"),
        "metrics",
    )
    materials = node.get("material_masks", {})
    _require_mapping(materials, "metrics.material_masks")
    material_masks = {}
    for name, path in materials.items():
        if not isinstance(name, str) or not isinstance(path, str):
            raise ValidationError("metrics.material_masks must map material names to paths")
        material_masks[name] = path if os.path.isabs(path) else os.path.join(base, path)
    return {
        "estimate": _get_path(node, "estimate", base, "metrics"),
        "truth": _get_path(node, "truth", base, "metrics", default=None),
        "nrmse": _get_bool(node, "nrmse", "metrics", default=False),
        "ssim": _get_bool(node, "ssim", "metrics", default=False),
        "mask": _get_path(node, "mask", base, "metrics", default=None),
        "background_mask": _get_path(node, "background_mask", base, "metrics", default=None),
        "material_masks": material_masks,
        "mtf": _parse_mtf(node["mtf"], base) if node.get("mtf") is not None else None,
        "out": _get_path(node, "out", base, "metrics", default=None),
    }


_SECTIONS = {
    "geometry": _parse_geometry,
    "simulate": _parse_simulate,
    "normalize": _parse_normalize,
    "retrieve": _parse_retrieve,
    "recon": _parse_recon,
    "metrics": _parse_metrics,
}


def load_config(path):
    """Parse a YAML run config. Returns (raw mapping, config directory)."""
    with open(path, encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ValidationError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    _require_mapping(raw, "config")
    _reject_unknown(raw, ("version",) + tuple(_SECTIONS), "config")
    version = _get_int(raw, "version", "config")
    if version != SCHEMA_VERSION:
        raise ValidationError(f"config version {version} is not supported (expected {SCHEMA_VERSION})")
    return raw, os.path.dirname(os.path.abspath(path))


def validate_config(raw, base):
    """Schema-check every section present. Returns parsed sections."""
    return {name: _SECTIONS[name](raw[name], base) for name in _SECTIONS if name in raw}


# ---------------------------------------------------------------------------
# shared pieces


def _close(a, b):
    return np.isclose(a, b, rtol=1e-9, atol=1e-12)


def _need_geometry(parsed, command):
    if "geometry" not in parsed:
        raise ValidationError(f"{command} needs a geometry section in the config")
    return parsed["geometry"]


def _write_stack(images, kind, geometry, path, distances=None, angles=None):
    stack = ImageStack(
        images=images,
        kind=kind,
        wavelength_m=geometry.wavelength_m,
        pixel_width_m=geometry.pixel_width_m,
        distances_m=geometry.distances_m if distances is None else distances,
        view_angles_rad=geometry.view_angles_rad if angles is None else angles,
    )
    save_stack(stack, path)
    print(f"wrote {path}")


def _load_mask(path, shape, label):
    stack = load_stack(path)
    if stack.images.shape != shape:
        raise ValidationError(f"mask {path} has shape {stack.images.shape}, expected {shape}")
    return RegionMask(mask=stack.images, label=label)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(parsed):
    params = parsed["simulate"]
    geometry = _need_geometry(parsed, "simulate")
    phantom = load_phantom(params["phantom"])
    out_dir = params["out_dir"]
    os.makedirs(out_dir, exist_ok=True)

    y = simulate_scan(
        phantom,
        geometry,
        supersample=params["supersample"],
        noise_pct=params["noise_pct"],
        seed=params["seed"],
    )
    for l in range(geometry.n_distances):
        _write_stack(
            y[l],
            "sqrt-normalized",
            geometry,
            os.path.join(out_dir, f"measured_{l:02d}.stack"),
            distances=(geometry.distances_m[l],),
        )

    absorption, phase = project_phantom(phantom, geometry, supersample=params["supersample"])
    _write_stack(phase, "phase", geometry, os.path.join(out_dir, "truth_phase.stack"), distances=())
    _write_stack(
        absorption, "absorption", geometry, os.path.join(out_dir, "truth_absorption.stack"), distances=()
    )
    _write_stack(
        voxelize_phantom(phantom, geometry, value="delta"),
        "volume",
        geometry,
        os.path.join(out_dir, "truth_delta.stack"),
        distances=(),
        angles=(),
    )
    _write_stack(
        voxelize_phantom(phantom, geometry, value="label"),
        "volume",
        geometry,
        os.path.join(out_dir, "truth_label.stack"),
        distances=(),
        angles=(),
    )
    print(
        f"simulate: {len(phantom.spheres)} spheres, {geometry.n_views} views, "
        f"{geometry.n_distances} distances, noise {params['noise_pct']}%, seed {params['seed']}"
    )
    return EXIT_OK


def cmd_normalize(parsed):
    params = parsed["normalize"]
    raw = load_stack(params["raw"])
    bright = load_stack(params["bright"])
    dark = load_stack(params["dark"])
    for name, stack in (("bright", bright), ("dark", dark)):
        if stack.images.shape[0] != 1:
            raise ValidationError(
                f"normalize.{name} must hold a single image, got {stack.images.shape[0]}"
            )
    y = normalize(raw.images, bright.images[0], dark.images[0])
    out = ImageStack(
        images=y,
        kind="sqrt-normalized",
        wavelength_m=raw.wavelength_m,
        pixel_width_m=raw.pixel_width_m,
        distances_m=raw.distances_m,
        view_angles_rad=raw.view_angles_rad,
    )
    save_stack(out, params["out"])
    print(f"wrote {params['out']}")
    return EXIT_OK


def _load_measurements(params, geometry):
    """Load and cross-check one measurement stack per distance.

    Returns an (n_distances, n_views, n_rows, n_cols) array.
    """
    if len(params["inputs"]) != geometry.n_distances:
        raise ValidationError(
            f"retrieve.inputs lists {len(params['inputs'])} stacks but the geometry "
            f"has {geometry.n_distances} distances"
        )
    views = np.empty((geometry.n_distances, geometry.n_views, geometry.n_rows, geometry.n_cols))
    for i, path in enumerate(params["inputs"]):
        stack = load_stack(path)
        if stack.kind != "sqrt-normalized":
            raise ValidationError(
                f"{path}: kind is {stack.kind!r}, expected 'sqrt-normalized' "
                "(run normalize first)"
            )
        expected = (geometry.n_views, geometry.n_rows, geometry.n_cols)
        if stack.images.shape != expected:
            raise ValidationError(
                f"{path}: shape {stack.images.shape} does not match geometry {expected}"
            )
        if len(stack.distances_m) != 1 or not _close(stack.distances_m[0], geometry.distances_m[i]):
            raise ValidationError(
                f"{path}: header distance {stack.distances_m} does not match "
                f"config distance {geometry.distances_m[i]}"
            )
        if not _close(stack.wavelength_m, geometry.wavelength_m) or not _close(
            stack.pixel_width_m, geometry.pixel_width_m
        ):
            raise ValidationError(f"{path}: wavelength or pixel width differs from the config")
        views[i] = stack.images
    return views


def _make_init(params, geometry, ys_view):
    kind = params["init"]
    if kind == "zero":
        return None
    if kind == "paganin":
        phase0, absorption0 = paganin_retrieve(
            ys_view[0],
            geometry.wavelength_m,
            geometry.pixel_width_m,
            geometry.distances_m[0],
            params["delta"],
            params["beta"],
        )
    else:
        if params["alpha_prime"] is not None:
            reg = CtfRegularization(mode="explicit", value=params["alpha_prime"])
        else:
            reg = CtfRegularization(mode="fixed", nu=params["nu"])
        phase0, absorption0 = ctf_retrieve(
            ys_view,
            geometry.wavelength_m,
            geometry.pixel_width_m,
            geometry.distances_m,
            regularization=reg,
        )
    if params["method"] == "unlpr":
        return (absorption0, phase0)
    return phase0


def cmd_retrieve(parsed):
    params = parsed["retrieve"]
    geometry = _need_geometry(parsed, "retrieve")
    measurements = _load_measurements(params, geometry)
    settings = params["settings"]
    constraint = None
    if params["method"] == "cnlpr":
        material = MaterialModel(delta=params["delta"], beta=params["beta"])
        constraint = choose_constraint(params["constraint"], material, geometry, params["t_low"])

    def solve_view(k):
        ys_view = measurements[:, k]
        init = _make_init(params, geometry, ys_view)
        try:
            if params["method"] == "unlpr":
                return unlpr_retrieve(ys_view, geometry, init=init, settings=settings)
            return cnlpr_retrieve(ys_view, geometry, constraint, init=init, settings=settings)
        except NumericalFailure as exc:
            raise NumericalFailure(f"view {k}: {exc}") from exc

    out_dir = params["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    n_views = geometry.n_views
    absorption = np.empty((n_views, geometry.n_rows, geometry.n_cols))
    phase = np.empty_like(absorption)
    traces = []

    def collect(results):
        for k, (view_absorption, view_phase, trace) in enumerate(results):
            absorption[k] = view_absorption
            phase[k] = view_phase
            traces.append(trace)
            print(
                f"view {k:4d}: {trace.termination}, {trace.n_iterations} iterations, "
                f"objective {trace.final_objective:.6e}"
            )

    started = time.perf_counter()
    if params["threads"] == 1:
        collect(map(solve_view, range(n_views)))
    else:
        with ThreadPoolExecutor(max_workers=params["threads"]) as pool:
            collect(pool.map(solve_view, range(n_views)))
    wall_s = time.perf_counter() - started

    _write_stack(phase, "phase", geometry, os.path.join(out_dir, "phase.stack"))
    _write_stack(absorption, "absorption", geometry, os.path.join(out_dir, "absorption.stack"))
    for k, trace in enumerate(traces):
        with open(os.path.join(out_dir, f"trace_view{k:04d}.txt"), "w", encoding="utf-8") as f:
            f.write(trace.to_text())

    counts = Counter(trace.termination for trace in traces)
    total_iters = sum(trace.n_iterations for trace in traces)
    summary = ", ".join(f"{name}={counts[name]}" for name in sorted(counts))
    print(f"retrieve: {n_views} views, {total_iters} iterations, {wall_s:.2f} s wall, {summary}")
    if counts.get("numerical-failure", 0) > 0:
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_recon(parsed):
    params = parsed["recon"]
    geometry = _need_geometry(parsed, "recon")
    stack = load_stack(params["phase"])
    if stack.kind != "phase":
        raise ValidationError(f"{params['phase']}: kind is {stack.kind!r}, expected 'phase'")
    if stack.images.shape[0] != geometry.n_views:
        raise ValidationError(
            f"{params['phase']}: {stack.images.shape[0]} views but the geometry "
            f"lists {geometry.n_views}"
        )
    volume = fbp_reconstruct(stack.images, geometry)
    _write_stack(volume, "volume", geometry, params["out"], distances=(), angles=())
    return EXIT_OK


def cmd_metrics(parsed):
    params = parsed["metrics"]
    estimate = load_stack(params["estimate"]).images
    lines = []

    if params["nrmse"] or params["ssim"]:
        if params["truth"] is None:
            raise ValidationError("metrics.truth is required when nrmse or ssim is requested")
        truth = load_stack(params["truth"]).images
        mask = _load_mask(params["mask"], estimate.shape, "metric") if params["mask"] else None
        if estimate.ndim == 3:
            lines.append("# nrmse/ssim convention: full 3D grid, not per-slice averages")
        if params["nrmse"]:
            lines.append(f"nrmse = {nrmse(estimate, truth, mask=mask):.12e}")
        if params["ssim"]:
            lines.append(f"ssim = {ssim(estimate, truth, mask=mask):.12e}")

    if params["material_masks"] or params["background_mask"]:
        if not params["material_masks"] or not params["background_mask"]:
            raise ValidationError(
                "background subtraction needs both material_masks and background_mask"
            )
        background = _load_mask(params["background_mask"], estimate.shape, "background")
        for name, path in params["material_masks"].items():
            material = _load_mask(path, estimate.shape, name)
            value = background_subtract(estimate, material, background)
            lines.append(f"background_delta[{name}] = {value:.12e}")

    if params["mtf"] is not None:
        mtf = params["mtf"]
        index = mtf["image_index"]
        if not 0 <= index < estimate.shape[0]:
            raise ValidationError(
                f"metrics.mtf.image_index {index} out of range for {estimate.shape[0]} images"
            )
        curve = mtf_from_disc(
            estimate[index], (mtf["center_row"], mtf["center_col"]), mtf["radius_px"]
        )
        with open(mtf["out"], "w", encoding="utf-8") as f:
            f.write(curve.to_text())
        lines.append(f"mtf_curve = {mtf['out']}")

    report = "\n".join(lines) + "\n" if lines else ""
    sys.stdout.write(report)
    if params["out"] is not None:
        with open(params["out"], "w", encoding="utf-8") as f:
            f.write(report)
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "normalize": cmd_normalize,
    "retrieve": cmd_retrieve,
    "recon": cmd_recon,
    "metrics": cmd_metrics,
}


# ---------------------------------------------------------------------------
# argument parsing


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="xpct",
        description="Phase-contrast tomography pipeline: simulate, normalize, retrieve, recon, metrics.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="simulate a phantom scan")
    p_sim.add_argument("config")
    p_sim.add_argument("--seed", type=int, default=None)
    p_sim.add_argument("--noise-pct", type=float, default=None)
    p_sim.add_argument("--supersample", type=int, default=None)

    p_norm = sub.add_parser("normalize", help="flat/dark correction to sqrt-normalized contrast")
    p_norm.add_argument("config")

    p_ret = sub.add_parser("retrieve", help="per-view phase retrieval")
    p_ret.add_argument("config")
    p_ret.add_argument("--method", choices=_METHODS, default=None)
    p_ret.add_argument("--constraint", choices=CONSTRAINT_MODES, default=None)
    p_ret.add_argument("--delta", type=float, default=None)
    p_ret.add_argument("--beta", type=float, default=None)
    p_ret.add_argument("--t-low", type=float, default=None)
    p_ret.add_argument("--init", choices=_INITS, default=None)
    p_ret.add_argument("--nu", type=float, default=None)
    p_ret.add_argument("--alpha-prime", type=float, default=None)
    p_ret.add_argument("--history", type=int, default=None)
    p_ret.add_argument("--max-iters", type=int, default=None)
    p_ret.add_argument("--m-consecutive", type=int, default=None)
    p_ret.add_argument("--obj-tol-pct", type=float, default=None)
    p_ret.add_argument("--recon-tol-pct", type=float, default=None)
    p_ret.add_argument("--threads", type=int, default=None)

    p_rec = sub.add_parser("recon", help="FBP reconstruction of the decrement volume")
    p_rec.add_argument("config")

    p_met = sub.add_parser("metrics", help="evaluation report")
    p_met.add_argument("config")
    p_met.add_argument("--nrmse", action="store_true", default=False)
    p_met.add_argument("--ssim", action="store_true", default=False)

    return parser


_OVERRIDE_KEYS = {
    "simulate": ("seed", "noise_pct", "supersample"),
    "retrieve": (
        "method",
        "constraint",
        "delta",
        "beta",
        "t_low",
        "init",
        "nu",
        "alpha_prime",
        "history",
        "max_iters",
        "m_consecutive",
        "obj_tol_pct",
        "recon_tol_pct",
        "threads",
    ),
    "metrics": ("nrmse", "ssim"),
}


def _apply_overrides(raw, args):
    keys = _OVERRIDE_KEYS.get(args.command, ())
    overrides = {}
    for key in keys:
        value = getattr(args, key)
        if value is not None and value is not False:
            overrides[key] = value
    if not overrides:
        return
    section = raw.setdefault(args.command, {})
    _require_mapping(section, args.command)
    section.update(overrides)


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_OK
    try:
        raw, base = load_config(args.config)
        _apply_overrides(raw, args)
        parsed = validate_config(raw, base)
        if args.command not in parsed:
            raise ValidationError(f"config has no {args.command} section")
        return _COMMANDS[args.command](parsed)
    except (ValidationError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalFailure as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except StackFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
