from pathlib import Path

import pytest

from model_backend.config import BackendConfig, from_env, with_overrides


class TestDefaults:
    def test_plain_construction(self):
        c = BackendConfig()
        assert c.engine == "auto"
        assert c.device == "cpu"
        assert c.max_side == 1024
        assert c.detector_weights is None

    def test_bad_engine_rejected(self):
        with pytest.raises(ValueError):
            BackendConfig(engine="turbo")

    def test_bad_max_side_rejected(self):
        with pytest.raises(ValueError):
            BackendConfig(max_side=0)


class TestEngineResolution:
    def test_auto_without_weights_is_heuristic(self):
        assert BackendConfig().resolved_engine() == "heuristic"

    def test_auto_with_both_weights_is_models(self):
        c = BackendConfig(detector_weights=Path("d.pth"), segmenter_weights=Path("s.pth"))
        assert c.resolved_engine() == "models"

    def test_auto_with_one_weight_is_heuristic(self):
        c = BackendConfig(detector_weights=Path("d.pth"))
        assert c.resolved_engine() == "heuristic"

    def test_explicit_choice_wins(self):
        c = BackendConfig(engine="heuristic", detector_weights=Path("d.pth"), segmenter_weights=Path("s.pth"))
        assert c.resolved_engine() == "heuristic"


class TestStartupValidation:
    def test_heuristic_needs_nothing(self):
        BackendConfig(engine="heuristic").validate_startup()

    def test_models_missing_files_fail(self, tmp_path):
        c = BackendConfig(
            engine="models",
            detector_weights=tmp_path / "d.pth",
            segmenter_weights=tmp_path / "s.pth",
        )
        with pytest.raises(FileNotFoundError):
            c.validate_startup()

    def test_models_unset_weights_fail(self):
        with pytest.raises(ValueError):
            BackendConfig(engine="models").validate_startup()

    def test_models_with_existing_files_pass(self, tmp_path):
        det = tmp_path / "d.pth"
        seg = tmp_path / "s.pth"
        det.write_bytes(b"w")
        seg.write_bytes(b"w")
        BackendConfig(engine="models", detector_weights=det, segmenter_weights=seg).validate_startup()


class TestEnvironment:
    def test_from_env_reads_prefixed_vars(self):
        env = {
            "MODEL_BACKEND_ENGINE": "heuristic",
            "MODEL_BACKEND_DEVICE": "cuda:1",
            "MODEL_BACKEND_MAX_SIDE": "640",
            "MODEL_BACKEND_DETECTOR_WEIGHTS": "/w/dino.pth",
            "MODEL_BACKEND_SEGMENTER_WEIGHTS": "/w/sam.pth",
            "MODEL_BACKEND_SAM_MODEL_TYPE": "vit_b",
            "UNRELATED": "ignored",
        }
        c = from_env(env)
        assert c.engine == "heuristic"
        assert c.device == "cuda:1"
        assert c.max_side == 640
        assert c.detector_weights == Path("/w/dino.pth")
        assert c.segmenter_weights == Path("/w/sam.pth")
        assert c.sam_model_type == "vit_b"

    def test_from_env_defaults_when_unset(self):
        c = from_env({})
        assert c == BackendConfig()

    def test_overrides_beat_env(self):
        c = with_overrides(from_env({"MODEL_BACKEND_DEVICE": "cpu"}), device="cuda:0", max_side=512)
        assert c.device == "cuda:0"
        assert c.max_side == 512

    def test_none_overrides_ignored(self):
        base = from_env({})
        assert with_overrides(base, device=None, engine=None) == base

    def test_override_paths_coerced(self):
        c = with_overrides(BackendConfig(), detector_weights="/w/d.pth")
        assert c.detector_weights == Path("/w/d.pth")
