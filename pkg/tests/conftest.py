import numpy as np
import pytest

from consonet.dataset import generate_dataset
from consonet.integrators import IntegratorConfig
from consonet.models import M3, ModelSpec, TrainConfig, train
from consonet.random_fields import GrfSpec, SamplingRanges


@pytest.fixture(scope="session")
def small_ds():
    # coarse solver settings: these tests exercise plumbing, not accuracy
    return generate_dataset(
        24, 20, 12, SamplingRanges(), GrfSpec(), 0.5,
        IntegratorConfig(rtol=1e-5, atol=1e-8), seed=9001, nz=40, nt=60, workers=2,
    )


@pytest.fixture(scope="session")
def small_val():
    return generate_dataset(
        8, 20, 12, SamplingRanges(), GrfSpec(), 0.5,
        IntegratorConfig(rtol=1e-5, atol=1e-8), seed=9002, nz=40, nt=60,
        role="val", workers=2,
    )


@pytest.fixture(scope="session")
def medium_ds():
    # production-resolution dataset for training-behavior tests
    return generate_dataset(
        200, 100, 50, SamplingRanges(), GrfSpec(), 0.5,
        IntegratorConfig(), seed=7100, workers=2,
    )


@pytest.fixture(scope="session")
def medium_val():
    return generate_dataset(
        40, 100, 50, SamplingRanges(), GrfSpec(), 0.5,
        IntegratorConfig(), seed=7200, role="val", workers=2,
    )


@pytest.fixture(scope="session")
def m3_model(medium_ds, medium_val):
    spec = ModelSpec(variant=M3)
    state = train(spec, medium_ds, medium_val,
                  TrainConfig(epochs=50, batch_size=1024), seed=7300)
    return spec, state


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
