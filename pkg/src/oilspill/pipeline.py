"""End-to-end batch pipeline: load or synthesize a scene, screen noisy bands,
reduce dimension, score isolation probability, pseudo-label, classify, refine,
and evaluate.

Every stochastic stage draws from an independent substream derived from the
master seed and a fixed stage name, so toggling one stage (for ablations)
never perturbs another stage's randomness and identical configs give
byte-identical artifacts.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import band_screen, erw, evaluate, iforest, kpca, pseudo_label, svm
from .band_screen import NoiseReport
from .cubeio import (
    HyperspectralCube,
    ScalarField,
    read_envi_cube,
    read_float_raster,
    write_float_raster,
    write_gray_pgm,
)
from .errors import MissingReference, StageError
from .evaluate import EvalReport
from .scenegen import SceneSpec, default_scene_spec, generate_scene

log = logging.getLogger(__name__)

_SEED_MASK = (1 << 64) - 1


def stage_seed(master: int, name: str) -> int:
    """Deterministic 64-bit seed for one named stage of one run."""
    digest = hashlib.sha256(f"{name}:{master & _SEED_MASK}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class PipelineConfig:
    input_kind: str = "synthetic"              # "synthetic" | "envi"
    header_path: Path | None = None
    raster_path: Path | None = None
    reference_mask: Path | None = None
    water_mask: Path | None = None
    scene: SceneSpec = field(default_factory=default_scene_spec)
    components: int = 25
    trees: int = 800
    tree_subsample: int = 256
    train_fraction: float = 0.01
    beta: float = 710.0
    gamma: float = 1e-5
    kpca_subsample: int = 1000
    seed: int = 0
    skip_band_screen: bool = False
    skip_erw: bool = False
    threads: int = 1
    output_dir: Path = Path("out")

    def __post_init__(self):
        if self.input_kind not in ("synthetic", "envi"):
            raise ValueError(f"unknown input kind '{self.input_kind}'")
        if self.input_kind == "envi" and self.header_path is None:
            raise ValueError("envi input requires a header path")
        for name in ("components", "trees", "tree_subsample", "kpca_subsample", "threads"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.train_fraction <= 1:
            raise ValueError("train_fraction must lie in (0, 1]")
        if self.beta <= 0 or self.gamma <= 0:
            raise ValueError("beta and gamma must be positive")

    def params_dict(self) -> dict:
        return {
            "input": self.input_kind,
            "components": self.components,
            "trees": self.trees,
            "tree_subsample": self.tree_subsample,
            "train_fraction": self.train_fraction,
            "beta": self.beta,
            "gamma": self.gamma,
            "kpca_subsample": self.kpca_subsample,
            "seed": self.seed,
            "skip_band_screen": self.skip_band_screen,
            "skip_erw": self.skip_erw,
            "threads": self.threads,
        }


@dataclass
class RunArtifacts:
    noise_report: NoiseReport | None
    score_map: ScalarField
    initial_map: ScalarField
    refined: erw.RefinedProbabilities | None
    detection: ScalarField
    eval_report: EvalReport | None
    timings: dict[str, float]
    selected_cost: float
    selected_gamma: float
    output_dir: Path


def run(config: PipelineConfig) -> RunArtifacts:
    """Execute the whole pipeline; artifacts are flushed as stages finish."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    timings: dict[str, float] = {}

    cube, truth, active = _timed(timings, "load", _load_input, config, out)

    noise_report = None
    if config.skip_band_screen:
        screened = cube
    else:
        screened, noise_report = _timed(timings, "band_screen", band_screen.screen_bands, cube)

    stack = _timed(timings, "kpca", _reduce_dimension, config, screened, active)

    score_map = _timed(timings, "iforest", _score_pixels, config, stack, active)
    _write_field(score_map, out, "score")

    labels = _timed(timings, "pseudo_label", _label_pixels, config, score_map, active)

    initial_map, cost, gam = _timed(timings, "svm", _classify, config, stack, labels, active)
    _write_field(initial_map, out, "initial")

    refined, detection = _timed(timings, "erw", _refine, config, stack, initial_map, active)
    if refined is not None:
        _write_field(refined.p_oil, out, "refined_oil")
    _write_field(detection, out, "detection")

    eval_report = _timed(timings, "eval", _evaluate, truth, refined, initial_map,
                         detection, active)

    artifacts = RunArtifacts(
        noise_report=noise_report,
        score_map=score_map,
        initial_map=initial_map,
        refined=refined,
        detection=detection,
        eval_report=eval_report,
        timings=timings,
        selected_cost=cost,
        selected_gamma=gam,
        output_dir=out,
    )
    _write_metrics(artifacts, config)
    return artifacts


@dataclass(frozen=True)
class AblationResult:
    switch: str
    on_report: EvalReport
    off_report: EvalReport
    on_artifacts: RunArtifacts
    off_artifacts: RunArtifacts

    @property
    def auc_delta(self) -> float:
        return self.on_report.auc - self.off_report.auc

    @property
    def dp_delta(self) -> float:
        return self.on_report.dp - self.off_report.dp


def run_ablation(config: PipelineConfig, switch: str) -> AblationResult:
    """Run the pipeline with one stage enabled and disabled, same seed."""
    if switch not in ("band_screen", "erw"):
        raise ValueError(f"unknown ablation switch '{switch}'")
    if config.input_kind == "envi" and config.reference_mask is None:
        raise MissingReference("ablation comparison needs a reference mask")

    flag = "skip_band_screen" if switch == "band_screen" else "skip_erw"
    base = Path(config.output_dir)
    on_cfg = replace(config, **{flag: False, "output_dir": base / f"{switch}_on"})
    off_cfg = replace(config, **{flag: True, "output_dir": base / f"{switch}_off"})

    on_art = run(on_cfg)
    off_art = run(off_cfg)
    if on_art.eval_report is None or off_art.eval_report is None:
        raise MissingReference("ablation runs produced no evaluation report")
    return AblationResult(
        switch=switch,
        on_report=on_art.eval_report,
        off_report=off_art.eval_report,
        on_artifacts=on_art,
        off_artifacts=off_art,
    )


# --- stages ---


def _load_input(config: PipelineConfig, out: Path):
    """Returns (cube, reference mask or None, active-pixel indices or None)."""
    if config.input_kind == "synthetic":
        cube, truth = generate_scene(config.scene, stage_seed(config.seed, "scene"))
        mask = truth.mask
        _write_field(ScalarField(mask.astype(np.float64)), out, "truth")
    else:
        cube = read_envi_cube(config.header_path, config.raster_path)
        mask = None
        if config.reference_mask is not None:
            mask = (read_float_raster(config.reference_mask).values > 0.5).astype(np.uint8)
            if mask.shape != (cube.height, cube.width):
                raise ValueError("reference mask shape differs from the scene")
    return cube, mask, _active_pixels(config, cube)


def _active_pixels(config: PipelineConfig, cube: HyperspectralCube) -> np.ndarray | None:
    """Flat indices of pixels inside the optional water mask, or None for all."""
    if config.water_mask is None:
        return None
    water = read_float_raster(config.water_mask).values > 0.5
    if water.shape != (cube.height, cube.width):
        raise ValueError("water mask shape differs from the scene")
    active = np.flatnonzero(water.ravel())
    if len(active) == 0:
        raise ValueError("water mask excludes every pixel")
    return active


def _reduce_dimension(config: PipelineConfig, screened: HyperspectralCube,
                      active: np.ndarray | None) -> kpca.ReducedStack:
    spectra = screened.pixel_matrix()
    pool = spectra if active is None else spectra[active]
    m = min(config.kpca_subsample, len(pool))
    rng = np.random.default_rng(np.random.SeedSequence(stage_seed(config.seed, "kpca-subsample")))
    subsample = pool[rng.choice(len(pool), size=m, replace=False)]

    bandwidth = kpca.median_bandwidth(subsample, seed=stage_seed(config.seed, "kpca-pairs"))
    n_components = min(config.components, m)
    if n_components < config.components:
        log.warning("subsample of %d limits components to %d", m, n_components)
    model = kpca.fit_kpca(subsample, n_components, bandwidth)
    return kpca.project(model, screened)


def _score_pixels(config: PipelineConfig, stack: kpca.ReducedStack,
                  active: np.ndarray | None) -> ScalarField:
    matrix = stack.as_matrix()
    pool = matrix if active is None else matrix[active]
    subsample = min(config.tree_subsample, len(pool))
    if subsample < config.tree_subsample:
        log.warning("scene has %d pixels; tree subsample reduced to %d", len(pool), subsample)
    forest = iforest.build_forest(pool, config.trees, subsample,
                                  stage_seed(config.seed, "forest"))
    if active is None:
        return iforest.score_field(forest, stack)
    scores = np.zeros(stack.height * stack.width)
    scores[active] = iforest.score_matrix(forest, pool)
    return ScalarField(scores.reshape(stack.height, stack.width))


def _label_pixels(config: PipelineConfig, score_map: ScalarField,
                  active: np.ndarray | None) -> pseudo_label.PseudoLabelSet:
    if active is None:
        ids, _ = pseudo_label.kmeans_two(score_map, stage_seed(config.seed, "kmeans"))
        labels = pseudo_label.assign_classes(ids, score_map)
        return pseudo_label.sample_training(labels, config.train_fraction,
                                            stage_seed(config.seed, "train-sample"))
    flat_scores = score_map.values.ravel()[active]
    active_field = ScalarField(flat_scores[None, :])
    ids, _ = pseudo_label.kmeans_two(active_field, stage_seed(config.seed, "kmeans"))
    labels_active = pseudo_label.assign_classes(ids, active_field).ravel()
    subset = pseudo_label.sample_training(labels_active[None, :], config.train_fraction,
                                          stage_seed(config.seed, "train-sample"))
    full = np.zeros(score_map.height * score_map.width, dtype=np.uint8)
    full[active] = labels_active
    return pseudo_label.PseudoLabelSet(
        full_labels=full.reshape(score_map.values.shape),
        train_indices=active[subset.train_indices],
        train_labels=subset.train_labels,
    )


def _classify(config: PipelineConfig, stack: kpca.ReducedStack,
              labels: pseudo_label.PseudoLabelSet,
              active: np.ndarray | None) -> tuple[ScalarField, float, float]:
    matrix = stack.as_matrix()
    features = matrix[labels.train_indices]
    targets = labels.train_labels
    cost, gamma = svm.cross_validate(features, targets, svm.default_grid(),
                                     stage_seed(config.seed, "cv-folds"))
    model = svm.train_svm(features, targets, cost, gamma,
                          stage_seed(config.seed, "platt"))
    if active is None:
        return svm.predict_field(model, stack), cost, gamma
    proba = np.zeros(stack.height * stack.width)
    proba[active] = svm.predict_proba(model, matrix[active])
    return ScalarField(proba.reshape(stack.height, stack.width)), cost, gamma


def _refine(config: PipelineConfig, stack: kpca.ReducedStack, initial_map: ScalarField,
            active: np.ndarray | None) -> tuple[erw.RefinedProbabilities | None, ScalarField]:
    if config.skip_erw:
        detection = ScalarField((initial_map.values > 0.5).astype(np.float64))
        return None, detection
    guidance = ScalarField(stack.component(0))
    mask = None
    if active is not None:
        mask = np.zeros(stack.height * stack.width, dtype=bool)
        mask[active] = True
        mask = mask.reshape(stack.height, stack.width)
    graph = erw.build_graph(guidance, config.beta, mask=mask)
    refined = erw.refine(initial_map, graph, config.gamma)
    return refined, erw.argmax_map(refined)


def _evaluate(truth: np.ndarray | None, refined: erw.RefinedProbabilities | None,
              initial_map: ScalarField, detection: ScalarField,
              active: np.ndarray | None) -> EvalReport | None:
    if truth is None:
        return None
    scores = refined.p_oil.values if refined is not None else initial_map.values
    if active is None:
        return evaluate.evaluate_maps(scores, detection.values, truth)
    flat = active
    return evaluate.evaluate_maps(scores.ravel()[flat], detection.values.ravel()[flat],
                                  truth.ravel()[flat])


# --- bookkeeping ---


def _timed(timings: dict, stage: str, fn, *args):
    start = time.perf_counter()
    try:
        result = fn(*args)
    except Exception as exc:
        raise StageError(stage, exc) from exc
    timings[stage] = time.perf_counter() - start
    return result


def _write_field(fld: ScalarField, out: Path, name: str) -> None:
    write_float_raster(fld, out / f"{name}.f32")
    write_gray_pgm(fld, 0.0, 1.0, out / f"{name}.pgm")


def _write_metrics(artifacts: RunArtifacts, config: PipelineConfig) -> None:
    report = artifacts.eval_report
    payload = {
        "noise": artifacts.noise_report.to_dict() if artifacts.noise_report else None,
        "params": {
            **config.params_dict(),
            "svm": {"cost": artifacts.selected_cost, "gamma": artifacts.selected_gamma},
        },
        "auc": report.auc if report else None,
        "dp": report.dp if report else None,
        "counts": (
            {"tp": report.tp, "fp": report.fp, "tn": report.tn, "fn": report.fn}
            if report else None
        ),
        "timings": artifacts.timings,
    }
    text = json.dumps(payload, indent=2, sort_keys=True)
    (artifacts.output_dir / "metrics.json").write_text(text + "\n")
