"""Batch command-line interface.

Subcommands:
  detect  run the full detection pipeline from a config file
  synth   render a synthetic scene to ENVI files plus its truth mask
  eval    score stored maps against a stored truth mask

Config files are flat ``key = value`` text (see ``parse_config``); CLI flags
override config values.  Exit status is 0 on success and 1 on any pipeline
failure, with the failing stage named on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from .cubeio import ScalarField, read_float_raster, write_float_raster, write_gray_pgm
from .errors import OilSpillError
from .evaluate import evaluate_maps
from .pipeline import PipelineConfig, run, stage_seed
from .scenegen import SceneSpec, default_scene_spec, generate_scene

_BOOL_WORDS = {"true": True, "yes": True, "1": True, "false": False, "no": False, "0": False}

_INT_KEYS = {
    "components", "trees", "tree_subsample", "kpca_subsample", "seed", "threads",
    "scene_width", "scene_height", "scene_bands", "scene_severe_bands", "scene_blobs",
}
_FLOAT_KEYS = {
    "train_fraction", "beta", "gamma",
    "scene_oil_fraction", "scene_noise_sigma", "scene_oil_strength", "scene_severe_factor",
}
_PATH_KEYS = {"header", "raster", "reference_mask", "water_mask", "output_dir"}
_BOOL_KEYS = {"skip_band_screen", "skip_erw"}


def parse_config(text: str, base_dir: Path | None = None) -> PipelineConfig:
    """Build a PipelineConfig from flat key = value text.

    Unknown keys are an error; relative paths resolve against ``base_dir``.
    Scene keys (scene_width, scene_height, scene_bands, scene_severe_bands,
    scene_oil_fraction, scene_noise_sigma, scene_oil_strength,
    scene_severe_factor, scene_blobs) shape the synthetic scene when
    ``input = synthetic``.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"config line {lineno} is not 'key = value': {line!r}")
        key, value = stripped.split("=", 1)
        raw[key.strip().lower()] = value.strip()

    fields: dict = {}
    scene_kwargs: dict = {}
    for key, value in raw.items():
        if key == "input":
            fields["input_kind"] = value.lower()
        elif key in _PATH_KEYS:
            path = Path(value)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            fields[_PATH_FIELD[key]] = path
        elif key in _BOOL_KEYS:
            if value.lower() not in _BOOL_WORDS:
                raise ValueError(f"'{key}' must be boolean, got {value!r}")
            fields[key] = _BOOL_WORDS[value.lower()]
        elif key in _INT_KEYS:
            target = _SCENE_FIELD.get(key)
            if target:
                scene_kwargs[target] = int(value)
            else:
                fields[key] = int(value)
        elif key in _FLOAT_KEYS:
            target = _SCENE_FIELD.get(key)
            if target:
                scene_kwargs[target] = float(value)
            else:
                fields[key] = float(value)
        else:
            raise ValueError(f"unknown config key '{key}'")

    if scene_kwargs or fields.get("input_kind", "synthetic") == "synthetic":
        fields["scene"] = default_scene_spec(**scene_kwargs)
    return PipelineConfig(**fields)


_PATH_FIELD = {
    "header": "header_path",
    "raster": "raster_path",
    "reference_mask": "reference_mask",
    "water_mask": "water_mask",
    "output_dir": "output_dir",
}
_SCENE_FIELD = {
    "scene_width": "width",
    "scene_height": "height",
    "scene_bands": "band_count",
    "scene_severe_bands": "severe_band_count",
    "scene_oil_fraction": "oil_fraction",
    "scene_noise_sigma": "noise_sigma",
    "scene_oil_strength": "oil_strength",
    "scene_severe_factor": "severe_noise_factor",
    "scene_blobs": "blob_count",
}


def load_config(path: Path) -> PipelineConfig:
    path = Path(path)
    return parse_config(path.read_text(), base_dir=path.parent)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except OilSpillError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oilspill",
                                     description="Unsupervised oil-slick detection")
    sub = parser.add_subparsers(dest="command", required=True)

    detect = sub.add_parser("detect", help="run the detection pipeline")
    detect.add_argument("--config", required=True, type=Path)
    detect.add_argument("--seed", type=int, default=None)
    detect.add_argument("--skip-band-screen", action="store_true")
    detect.add_argument("--skip-erw", action="store_true")
    detect.add_argument("--threads", type=int, default=None)
    detect.add_argument("--out", type=Path, default=None)
    detect.set_defaults(handler=_cmd_detect)

    synth = sub.add_parser("synth", help="render a synthetic scene to disk")
    synth.add_argument("--config", required=True, type=Path)
    synth.add_argument("--out", required=True, type=Path)
    synth.set_defaults(handler=_cmd_synth)

    evalp = sub.add_parser("eval", help="score stored maps against a truth mask")
    evalp.add_argument("--scores", required=True, type=Path)
    evalp.add_argument("--detection", required=True, type=Path)
    evalp.add_argument("--truth", required=True, type=Path)
    evalp.set_defaults(handler=_cmd_eval)
    return parser


def _cmd_detect(args) -> int:
    config = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.skip_band_screen:
        overrides["skip_band_screen"] = True
    if args.skip_erw:
        overrides["skip_erw"] = True
    if args.threads is not None:
        overrides["threads"] = args.threads
    if args.out is not None:
        overrides["output_dir"] = args.out
    if overrides:
        config = dataclasses.replace(config, **overrides)

    artifacts = run(config)
    summary = {
        "output_dir": str(artifacts.output_dir),
        "auc": artifacts.eval_report.auc if artifacts.eval_report else None,
        "dp": artifacts.eval_report.dp if artifacts.eval_report else None,
    }
    print(json.dumps(summary, sort_keys=True))
    return 0


def _cmd_synth(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cube, truth = generate_scene(config.scene, stage_seed(config.seed, "scene"))
    _write_envi_scene(cube, config.scene, out)
    truth_field = ScalarField(truth.mask.astype(np.float64))
    write_float_raster(truth_field, out / "truth.f32")
    write_gray_pgm(truth_field, 0.0, 1.0, out / "truth.pgm")
    mid = ScalarField(cube.values[cube.band_count // 2])
    write_gray_pgm(mid, float(mid.values.min()), float(mid.values.max()),
                   out / "preview_band.pgm")
    print(json.dumps({"output_dir": str(out), "oil_fraction": truth.oil_fraction},
                     sort_keys=True))
    return 0


def _cmd_eval(args) -> int:
    scores = read_float_raster(args.scores)
    detection = read_float_raster(args.detection)
    truth = read_float_raster(args.truth)
    report = evaluate_maps(scores, detection, truth)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def _write_envi_scene(cube, scene: SceneSpec, out: Path) -> None:
    # Minimal BSQ float32 dump so `detect` can consume synthetic scenes from
    # disk; this is a synth-tool convenience, not a general ENVI writer.
    (out / "scene.img").write_bytes(cube.values.astype("<f4").tobytes())
    header = (
        "ENVI\n"
        f"samples = {scene.width}\n"
        f"lines = {scene.height}\n"
        f"bands = {scene.band_count}\n"
        "interleave = bsq\n"
        "data type = 4\n"
        "byte order = 0\n"
        "header offset = 0\n"
    )
    (out / "scene.hdr").write_text(header)


if __name__ == "__main__":
    raise SystemExit(main())
