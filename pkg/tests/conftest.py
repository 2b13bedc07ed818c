import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "ci", deadline=None, max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("ci")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    """Smallest architecture that still exercises every layer type."""
    from csicl.model import ModelConfig

    return ModelConfig(input_width=4, mlp_widths=(6, 8), feature_width=8,
                       n_heads=2, n_blocks=1, n_classes=2, dropout_rate=0.0)


@pytest.fixture
def micro_experiment(tmp_path):
    """Beyond-desk-scale-small experiment for fast end-to-end tests."""
    from csicl import harness as hz
    from csicl import train as tr

    return hz.ExperimentConfig(
        n_domains=2, n_per_class=4, n_trials=1, base_seed=7,
        variants=("proposed", "bl_ft"),
        scene={"packet_rate": 10.0, "n_subcarriers": 8},
        train=tr.TrainConfig(iterations=25, batch_size=8),
        n_classes=4, exemplars_per_class=2, importance_samples=6,
        temporal_width=8, mlp_widths=(32, 32), feature_width=32, n_heads=4,
        n_blocks=1, workdir=str(tmp_path / "work"))
