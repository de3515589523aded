import json

import numpy as np
import pytest

from oilspill import evaluate
from oilspill.cli import parse_config
from oilspill.cubeio import read_float_raster
from oilspill.errors import MissingReference, StageError
from oilspill.pipeline import PipelineConfig, run, run_ablation, stage_seed
from oilspill.scenegen import default_scene_spec


def small_config(tmp_path, **overrides) -> PipelineConfig:
    scene = overrides.pop("scene", None) or default_scene_spec(
        width=48, height=48, band_count=16, severe_band_count=3,
        oil_fraction=0.12, oil_strength=0.03, blob_count=2,
    )
    defaults = dict(
        scene=scene, components=8, trees=60, tree_subsample=128,
        kpca_subsample=400, seed=3, output_dir=tmp_path / "out",
    )
    defaults.update(overrides)
    return PipelineConfig(**defaults)


class TestStageSeed:
    def test_deterministic(self):
        assert stage_seed(7, "forest") == stage_seed(7, "forest")

    def test_name_and_master_sensitivity(self):
        assert stage_seed(7, "forest") != stage_seed(7, "kmeans")
        assert stage_seed(7, "forest") != stage_seed(8, "forest")


class TestConfigValidation:
    def test_defaults_match_contract(self):
        config = PipelineConfig()
        assert config.components == 25
        assert config.trees == 800
        assert config.tree_subsample == 256
        assert config.train_fraction == 0.01
        assert config.beta == 710.0
        assert config.gamma == 1e-5
        assert config.kpca_subsample == 1000
        assert config.seed == 0
        assert not config.skip_band_screen and not config.skip_erw

    def test_envi_requires_header(self):
        with pytest.raises(ValueError):
            PipelineConfig(input_kind="envi")

    def test_bad_fraction(self):
        with pytest.raises(ValueError):
            PipelineConfig(train_fraction=0.0)

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            PipelineConfig(trees=0)


class TestParseConfig:
    def test_round_trip_of_keys(self, tmp_path):
        text = """
        # example run
        input = synthetic
        components = 7
        trees = 50
        tree_subsample = 64
        train_fraction = 0.05
        beta = 420
        gamma = 1e-4
        kpca_subsample = 300
        seed = 11
        skip_erw = true
        output_dir = results
        scene_width = 40
        scene_height = 32
        scene_bands = 12
        scene_severe_bands = 2
        """
        config = parse_config(text, base_dir=tmp_path)
        assert config.components == 7
        assert config.trees == 50
        assert config.train_fraction == 0.05
        assert config.gamma == 1e-4
        assert config.skip_erw and not config.skip_band_screen
        assert config.output_dir == tmp_path / "results"
        assert config.scene.width == 40 and config.scene.band_count == 12

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError):
            parse_config("mystery = 1")

    def test_malformed_line_rejected(self):
        with pytest.raises(ValueError):
            parse_config("seed 12")

    def test_bad_boolean(self):
        with pytest.raises(ValueError):
            parse_config("skip_erw = maybe")


@pytest.fixture(scope="module")
def finished_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("pipeline")
    config = small_config(tmp)
    return config, run(config)


class TestRun:
    def test_eval_report_present_for_synthetic(self, finished_run):
        _, artifacts = finished_run
        assert artifacts.eval_report is not None
        assert 0.0 <= artifacts.eval_report.auc <= 1.0

    def test_artifact_files_written_and_loadable(self, finished_run):
        config, artifacts = finished_run
        out = config.output_dir
        for name in ("truth", "score", "initial", "refined_oil", "detection"):
            assert (out / f"{name}.f32").exists(), name
            assert (out / f"{name}.pgm").exists(), name
            read_float_raster(out / f"{name}.f32")  # loadable, invariants hold

        metrics = json.loads((out / "metrics.json").read_text())
        assert set(metrics) == {"noise", "params", "auc", "dp", "counts", "timings"}
        assert metrics["noise"]["kept"] == list(artifacts.noise_report.kept)
        assert metrics["params"]["trees"] == 60

    def test_detection_matches_refined_argmax(self, finished_run):
        _, artifacts = finished_run
        expected = (artifacts.refined.p_oil.values > artifacts.refined.p_sea.values)
        np.testing.assert_array_equal(artifacts.detection.values, expected.astype(float))

    def test_score_map_in_unit_interval(self, finished_run):
        _, artifacts = finished_run
        assert artifacts.score_map.values.min() > 0
        assert artifacts.score_map.values.max() <= 1

    def test_timings_cover_stages(self, finished_run):
        _, artifacts = finished_run
        assert {"load", "band_screen", "kpca", "iforest",
                "pseudo_label", "svm", "erw", "eval"} <= set(artifacts.timings)

    def test_skip_erw_thresholds_initial_map(self, tmp_path):
        config = small_config(tmp_path, skip_erw=True)
        artifacts = run(config)
        assert artifacts.refined is None
        np.testing.assert_array_equal(
            artifacts.detection.values,
            (artifacts.initial_map.values > 0.5).astype(float))
        assert not (config.output_dir / "refined_oil.f32").exists()

    def test_skip_band_screen_keeps_all_bands(self, tmp_path):
        config = small_config(tmp_path, skip_band_screen=True)
        artifacts = run(config)
        assert artifacts.noise_report is None
        metrics = json.loads((config.output_dir / "metrics.json").read_text())
        assert metrics["noise"] is None

    def test_stage_error_identifies_stage(self, tmp_path):
        config = small_config(tmp_path, input_kind="envi",
                              header_path=tmp_path / "missing.hdr")
        with pytest.raises(StageError) as excinfo:
            run(config)
        assert excinfo.value.stage == "load"

    def test_substreams_isolate_stages(self, tmp_path):
        # toggling the ERW stage must not perturb upstream randomness
        on = run(small_config(tmp_path, output_dir=tmp_path / "a"))
        off = run(small_config(tmp_path, skip_erw=True, output_dir=tmp_path / "b"))
        np.testing.assert_array_equal(on.score_map.values, off.score_map.values)
        np.testing.assert_array_equal(on.initial_map.values, off.initial_map.values)

    def test_byte_identical_reruns(self, tmp_path):
        config_a = small_config(tmp_path, output_dir=tmp_path / "r1")
        config_b = small_config(tmp_path, output_dir=tmp_path / "r2")
        run(config_a)
        run(config_b)
        for name in ("truth.f32", "score.f32", "initial.f32", "refined_oil.f32",
                     "detection.f32", "score.pgm", "detection.pgm"):
            assert (tmp_path / "r1" / name).read_bytes() == \
                   (tmp_path / "r2" / name).read_bytes(), name


class TestWaterMask:
    def test_mask_restricts_all_stages(self, tmp_path):
        from oilspill.cubeio import ScalarField, write_float_raster
        mask = np.ones((48, 48))
        mask[:, 40:] = 0.0  # exclude a dry strip
        mask_path = tmp_path / "water.f32"
        write_float_raster(ScalarField(mask), mask_path)
        config = small_config(tmp_path, water_mask=mask_path)
        artifacts = run(config)
        assert np.all(artifacts.score_map.values[:, 40:] == 0)
        assert np.all(artifacts.initial_map.values[:, 40:] == 0)
        assert np.all(artifacts.detection.values[:, 40:] == 0)
        # counts restricted to live pixels
        r = artifacts.eval_report
        assert r.tp + r.fp + r.tn + r.fn == 48 * 40


class TestAblation:
    def test_erw_ablation_reports_and_deltas(self, tmp_path):
        config = small_config(tmp_path)
        result = run_ablation(config, "erw")
        assert result.switch == "erw"
        assert result.auc_delta == result.on_report.auc - result.off_report.auc
        assert (tmp_path / "out" / "erw_on" / "metrics.json").exists()
        assert (tmp_path / "out" / "erw_off" / "metrics.json").exists()
        assert result.off_artifacts.refined is None

    def test_band_screen_ablation_runs(self, tmp_path):
        config = small_config(tmp_path)
        result = run_ablation(config, "band_screen")
        assert result.on_artifacts.noise_report is not None
        assert result.off_artifacts.noise_report is None

    def test_unknown_switch(self, tmp_path):
        with pytest.raises(ValueError):
            run_ablation(small_config(tmp_path), "kpca")

    def test_envi_without_reference_rejected(self, tmp_path):
        config = small_config(tmp_path, input_kind="envi",
                              header_path=tmp_path / "x.hdr")
        with pytest.raises(MissingReference):
            run_ablation(config, "erw")

    def test_erw_reduces_isolated_positives(self, tmp_path):
        config = small_config(tmp_path)
        result = run_ablation(config, "erw")
        before = evaluate.count_isolated_positives(
            result.on_artifacts.initial_map.values > 0.5)
        after = evaluate.count_isolated_positives(result.on_artifacts.detection.values)
        assert after < before
