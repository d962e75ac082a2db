import json

import pytest


def desk_env_config(tmp_path, name="env_config.json", **overrides):
    """A small training environment: short horizon, tiny state, balanced
    noise, no fixed costs, no yield loss."""
    cfg = {
        "env": {"T": 60, "L": 2, "m": 2, "Q": 5.0, "n_max": 6, "yield_max": 0.0},
        "costs": {"c_hat": 0.0, "h_hat": 1.0, "b_hat": 100.0, "w_hat": 2.0},
        "demand": {
            "kind": "lifecycle",
            "peak": 20.0,
            "base": 0.0,
            "fractions": [0.30, 0.30, 0.40],
            "noise": {"kind": "balanced", "level": 0.15},
        },
        "policies": [{"kind": "out", "s": 5}],
        "eval": {"episodes": 500, "seed": 99},
        "bridge": {"normalize": True},
    }
    for key, value in overrides.items():
        cfg[key] = value
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def env_config(tmp_path):
    return desk_env_config(tmp_path)
