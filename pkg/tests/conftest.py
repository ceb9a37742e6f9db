"""Shared fixtures: a tiny generated dataset and gradient-check helpers."""

import numpy as np
import pytest

from dictseg.config import RunConfig
from dictseg.gradcheck import check_gradients
from dictseg.rng import Rng
from dictseg.synthetic import generate

# Central differences in float64 resolve gradients to roughly sqrt(eps);
# 1e-6 leaves comfortable headroom for the eps=1e-5 default.
GRAD_TOL = 1e-6


@pytest.fixture(scope="session")
def tiny_config(tmp_path_factory) -> RunConfig:
    """A 32x32, 4-class, noise-free config with its dataset on disk."""
    root = tmp_path_factory.mktemp("tiny-data")
    cfg = RunConfig(
        image_size=32,
        n_classes=4,
        samples_train=8,
        samples_val=4,
        samples_test=4,
        heterogeneity=0.0,
        homogeneity=0.0,
        data_root=str(root),
        out_dir=str(tmp_path_factory.mktemp("tiny-out")),
        epochs=1,
    )
    generate(cfg.synthetic_config(), cfg.data_root)
    return cfg


@pytest.fixture
def rng() -> Rng:
    return Rng(0)


def assert_grads_match(loss_fn, params, tol: float = GRAD_TOL, **kwargs) -> None:
    worst = check_gradients(loss_fn, params, **kwargs)
    assert worst < tol, f"worst relative gradient error {worst:.3e} >= {tol:.0e}"


def rand(rng: Rng, *shape) -> np.ndarray:
    return rng.normal(shape)
