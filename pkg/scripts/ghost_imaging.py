#!/usr/bin/env python3
"""
Ghost Imaging: lensless thermal-light correlation imaging of multi-slit objects.

Commands:
    render  : coincidence rate and fluctuation correlation over the reference detector
    sweep   : visibility versus slit number, slit width ratio or source size
    oracle  : Monte Carlo speckle check of the deterministic fluctuation correlation

Usage:
    python scripts/ghost_imaging.py render --config scene.cfg --out render.csv
    python scripts/ghost_imaging.py sweep --sweep slits --values 2,3,4,5 --out slits.csv
    python scripts/ghost_imaging.py sweep --sweep width --values 0.2:0.8:0.1 --out width.csv
    python scripts/ghost_imaging.py oracle --realizations 20000 --seed 7 --out oracle.csv

Every command writes a CSV table plus `<stem>.manifest.json` next to it.
Exit status: 0 on success, 1 on any bench error, 2 on bad usage.
"""

import argparse
import logging
import math
import os
import sys
import time
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from optics.config import SceneConfig, load_scene_config, scene_from_config  # noqa: E402
from optics.errors import GhostImagingError, SceneValidationError  # noqa: E402
from optics.scene import MM, Scene, validate_scene  # noqa: E402
from results_schema import ResultStore, RunManifest  # noqa: E402
from simulation.analysis import (  # noqa: E402
    sweep_slit_number,
    sweep_source_size,
    sweep_width_ratio,
    visibility,
)
from simulation.correlation import Normalization, full_profile, normalized  # noqa: E402
from simulation.speckle_oracle import (  # noqa: E402
    ORACLE_DEFAULTS,
    SpeckleEnsembleSpec,
    coarse_oracle_scene,
    compare_with_deterministic,
    estimate_correlations,
    gaussian_moment_residual,
)

logger = logging.getLogger("ghost_imaging")

LOG_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"
SWEEP_KINDS = ("slits", "width", "source")


# ─── Helpers ─────────────────────────────────────────────────────────────────

def load_scene(config_path: Optional[str]) -> Scene:
    """Scene from a config file (bench defaults when no file is given), validated."""
    config = load_scene_config(config_path) if config_path else SceneConfig()
    scene = scene_from_config(config)
    violations = validate_scene(scene)
    if violations:
        raise SceneValidationError(violations)
    logger.info(f"Scene: n={scene.mask.slit_count}, w={scene.mask.slit_width_m / MM:g} mm, "
                f"d={scene.mask.slit_pitch_m / MM:g} mm, a={scene.source.a_m / MM:g} mm; "
                f"grids {scene.source_grid.sample_count}/{scene.object_grid.sample_count}/"
                f"{scene.detector_grid.sample_count}")
    return scene


def _expand_range(text: str) -> List[float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"range must be start:stop:step, got {text!r}")
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ValueError(f"range {text!r} needs step > 0 and stop >= start")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + i * step, 12) for i in range(count)]


def parse_values(text: str, kind: str) -> List[Any]:
    """Comma list and/or start:stop:step ranges (stop inclusive); integers for slits."""
    if not text or not text.strip():
        raise ValueError("--values is empty")
    values: List[float] = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            raise ValueError(f"empty entry in --values {text!r}")
        try:
            values.extend(_expand_range(item) if ":" in item else [float(item)])
        except ValueError as e:
            raise ValueError(f"bad --values entry {item!r}: {e}") from None

    if kind == "slits":
        ints = []
        for v in values:
            if v != int(v):
                raise ValueError(f"slit counts must be integers, got {v!r}")
            ints.append(int(v))
        return ints
    return values


def _flags(args: argparse.Namespace) -> Dict[str, Any]:
    return {k: v for k, v in vars(args).items() if v is not None}


# ─── Commands ────────────────────────────────────────────────────────────────

def cmd_render(args: argparse.Namespace, store: ResultStore) -> RunManifest:
    scene = load_scene(args.config)
    profile = full_profile(scene, n_jobs=args.jobs)
    vis = visibility(profile)

    table = pd.DataFrame({
        "u2_m": profile.u2_positions,
        "g2_raw": profile.g2,
        "g2_peak_norm": normalized(profile, Normalization.PEAK).g2,
        "delta_g2_raw": profile.delta_g2,
        "delta_g2_background_norm": normalized(profile, Normalization.BACKGROUND).delta_g2,
    })
    manifest = RunManifest.for_scene("render", _flags(args), scene, results={
        "visibility": vis.visibility,
        "peak_position_m": vis.peak_position_m,
        "peak_delta_g2": vis.peak_delta_g2,
        "background_at_peak": vis.background_at_peak,
        "mean_intensity_test": profile.mean_intensity_test,
    })
    store.save_table(table, args.out)
    logger.info(f"V = {vis.visibility:.6f} at u2 = {vis.peak_position_m:.3e} m; {len(table)} rows -> {args.out}")
    return manifest


def cmd_sweep(args: argparse.Namespace, store: ResultStore) -> RunManifest:
    if args.sweep is None or args.values is None:
        raise ValueError("sweep needs --sweep and --values")
    values = parse_values(args.values, args.sweep)
    scene = load_scene(args.config)
    keep = bool(args.verbose)

    if args.sweep == "slits":
        result = sweep_slit_number(scene, values, n_jobs=args.jobs, keep_profiles=keep)
    elif args.sweep == "width":
        result = sweep_width_ratio(scene, values, n_jobs=args.jobs, keep_profiles=keep)
    else:
        result = sweep_source_size(scene, [v * MM for v in values], n_jobs=args.jobs, keep_profiles=keep)

    flags = [result.is_excluded(v) for v in result.parameter_values]
    table = pd.DataFrame({
        "parameter_value": result.parameter_values,
        "visibility": result.visibilities,
        "excluded_flag": flags,
    })
    store.save_table(table, args.out)

    if keep:
        stem, ext = os.path.splitext(args.out)
        for i, profile in enumerate(result.profiles):
            point = pd.DataFrame({
                "u2_m": profile.u2_positions,
                "g2_raw": profile.g2,
                "delta_g2_raw": profile.delta_g2,
            })
            store.save_table(point, f"{stem}.point{i:03d}{ext or '.csv'}")
        logger.info(f"Wrote {len(values)} per-point profiles next to {args.out}")

    return RunManifest.for_scene("sweep", _flags(args), scene, results={
        "parameter_name": result.parameter_name,
        "parameter_values": result.parameter_values,
        "visibilities": result.visibilities,
        "excluded_points": [v for v, flag in zip(result.parameter_values, flags) if flag],
    })


def cmd_oracle(args: argparse.Namespace, store: ResultStore) -> RunManifest:
    minimum = ORACLE_DEFAULTS["min_cli_realizations"]
    if args.realizations < minimum:
        raise ValueError(f"--realizations must be >= {minimum}, got {args.realizations}")

    scene = coarse_oracle_scene(load_scene(args.config))
    deterministic = full_profile(scene, check_sampling=False)
    spec = SpeckleEnsembleSpec(args.realizations, args.seed, scene.source_grid, scene.source)
    estimate = estimate_correlations(spec, scene, n_jobs=args.jobs)
    comparison = compare_with_deterministic(estimate, deterministic)
    moment_z = gaussian_moment_residual(estimate)

    table = pd.DataFrame({
        "u2_m": comparison.u2_positions,
        "delta_g2_deterministic": comparison.delta_g2_deterministic,
        "delta_g2_mc": comparison.delta_g2_mc,
        "mc_stderr": comparison.mc_stderr,
        "z_score": comparison.z_scores,
    })
    store.save_table(table, args.out)

    fraction = comparison.fraction_within_gate
    level = logging.INFO if fraction >= ORACLE_DEFAULTS["required_fraction"] else logging.WARNING
    logger.log(level, f"Oracle: {fraction:.3f} of points within {comparison.z_gate:g} sigma")

    return RunManifest.for_scene(
        "oracle", _flags(args), scene,
        seed=args.seed,
        realizations=args.realizations,
        results={
            "fraction_within_gate": fraction,
            "z_gate": comparison.z_gate,
            "gaussian_moment_fraction_within_gate": float(np.mean(np.abs(moment_z) <= comparison.z_gate)),
            "batch_count": estimate.batch_count,
        },
    )


COMMANDS = {"render": cmd_render, "sweep": cmd_sweep, "oracle": cmd_oracle}


# ─── Entry point ─────────────────────────────────────────────────────────────

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Ghost Imaging: thermal-light correlation imaging simulator")
    parser.add_argument("command", choices=sorted(COMMANDS), help="What to compute")
    parser.add_argument("--config", type=str, default=None, help="Scene config file (key = value)")
    parser.add_argument("--out", type=str, required=True, help="Output CSV path")
    parser.add_argument("--sweep", choices=SWEEP_KINDS, default=None, help="Sweep parameter")
    parser.add_argument("--values", type=str, default=None,
                        help="Sweep values: comma list and/or start:stop:step (source sizes in mm)")
    parser.add_argument("--realizations", type=int, default=ORACLE_DEFAULTS["realizations"],
                        help="Monte Carlo realizations")
    parser.add_argument("--seed", type=int, default=0, help="Monte Carlo seed (unsigned 64-bit)")
    parser.add_argument("--jobs", type=int, default=1, help="Worker processes")
    parser.add_argument("--verbose", action="store_true", help="Debug logging; per-point sweep profiles")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format=LOG_FORMAT,
        datefmt="%H:%M:%S",
    )

    store = ResultStore()
    started = time.monotonic()
    try:
        manifest = COMMANDS[args.command](args, store)
        manifest.duration_s = time.monotonic() - started
        store.save_manifest(manifest, args.out)
    except SceneValidationError as e:
        for violation in e.violations:
            logger.error(f"Invalid scene: {violation}")
        return 1
    except (GhostImagingError, ValueError, OSError) as e:
        logger.error(str(e))
        return 1

    logger.info(f"{args.command} finished in {manifest.duration_s:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
