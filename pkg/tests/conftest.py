import json

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_document():
    """A fast synthetic experiment."""
    return {
        "n_clients": 6,
        "clients_per_round": 2,
        "rounds": 40,
        "seed": 3,
        "availability": {"kind": "bernoulli", "pi": [0.2, 0.4, 0.6, 0.8, 0.9, 1.0]},
        "selection": {"kind": "reactive_reweight", "mode": "inclusion_proportional", "lambda": 0.7},
        "workload": {"kind": "synthetic", "mu_constant": 0.5, "noise": "uniform_bounded", "sigma": 0.2},
    }


@pytest.fixture
def quadratic_document():
    """A fast quadratic experiment with surrogates."""
    return {
        "n_clients": 8,
        "clients_per_round": 2,
        "rounds": 30,
        "seed": 5,
        "accrual": "availability_only",
        "availability": {"kind": "bernoulli", "pi_groups": [[4, 0.3], [4, 0.9]]},
        "selection": {"kind": "reactive_reweight", "mode": "inclusion_proportional", "lambda": 0.7},
        "workload": {
            "kind": "quadratic", "dimension": 2, "spread": 0.1, "initial": [0.0, 1.0],
            "clusters": [{"count": 4, "center": [-1.0, 0.0]}, {"count": 4, "center": [1.0, 0.0]}],
            "utility_signal": "global_benefit",
        },
        "surrogate": {"enabled": True, "eta0": 0.5, "decay": 0.5},
    }


@pytest.fixture
def write_config(tmp_path):
    def write(document, name="config.json"):
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path
    return write
