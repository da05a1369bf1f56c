import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cprism.dataset import (
    CATEGORICAL,
    NUMERICAL,
    CovariateSpec,
    ObservationalDataset,
    binarize,
)
from cprism.estimators import PropensityModel

settings.register_profile(
    "ci", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ci")


def make_dataset(columns, kinds, treatment, outcome, unit_ids=None):
    """Direct dataset construction for fixtures; kinds maps name -> kind."""
    schema = [CovariateSpec(name=name, kind=kinds[name]) for name in columns]
    cols = {}
    for name, values in columns.items():
        if kinds[name] == NUMERICAL:
            cols[name] = np.asarray(values, dtype=np.float64)
        else:
            cols[name] = np.asarray([str(v) for v in values], dtype=object)
    return ObservationalDataset(
        schema=schema,
        columns=cols,
        treatment=np.asarray(treatment, dtype=np.uint8),
        outcome=np.asarray(outcome, dtype=np.float64),
        treatment_name="T",
        outcome_name="Y",
        unit_ids=unit_ids,
    )


def uniform_score_model(n, score=0.5):
    return PropensityModel(
        coefficients=np.zeros(1),
        scores=np.full(n, float(score)),
        clip_lo=0.01,
        clip_hi=0.99,
        converged=True,
        n_iter=0,
    )


def model_with_scores(scores):
    scores = np.asarray(scores, dtype=np.float64)
    return PropensityModel(
        coefficients=np.zeros(1),
        scores=scores,
        clip_lo=0.01,
        clip_hi=0.99,
        converged=True,
        n_iter=0,
    )


@pytest.fixture
def toy_dataset():
    """8 units, one categorical and one numerical covariate, both arms."""
    return make_dataset(
        columns={
            "sex": ["female", "male", "female", "male", "female", "male", "female", "male"],
            "age": [20.0, 30.0, 15.0, 40.0, 22.0, 35.0, 18.0, 28.0],
        },
        kinds={"sex": CATEGORICAL, "age": NUMERICAL},
        treatment=[1, 0, 1, 0, 1, 0, 1, 0],
        outcome=[3.0, 1.0, 5.0, 1.0, 4.0, 2.0, 6.0, 0.0],
    )


@pytest.fixture
def toy_binarized(toy_dataset):
    schema, matrix = binarize(toy_dataset, bucket_count=4)
    return toy_dataset, schema, matrix
