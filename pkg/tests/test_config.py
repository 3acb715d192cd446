import json

import pytest
from hypothesis import given, strategies as st

from stochavg.config import ExperimentConfig
from stochavg.errors import ConfigError

walker = {"experiment": "walker", "seed": 7, "model": {"n": 10, "a": 1.0, "sigma": 1.0},
          "run": {"horizon": 1.0, "n_paths": 100}}


def test_round_trip():
    cfg = ExperimentConfig.from_dict(walker)
    again = ExperimentConfig.loads(cfg.dumps())
    assert again == cfg and again.dumps() == cfg.dumps()
    assert again.hash() == cfg.hash() and len(cfg.hash()) == 16


def test_load_from_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(walker))
    assert ExperimentConfig.load(p).seed == 7


def test_seed_is_mandatory():
    d = {k: v for k, v in walker.items() if k != "seed"}
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(d)
    assert exc.value.key == "seed"


@pytest.mark.parametrize("patch,key", [
    ({"model": {"n": 10, "a": 1.0, "sigma": 1.0, "bogus": 1}}, "model.bogus"),
    ({"run": {"horizon": -1.0, "n_paths": 100}}, "run.horizon"),
    ({"run": {"horizon": 1.0}}, "run.n_paths"),
    ({"experiment": "nope"}, "experiment"),
    ({"model": {"n": 2.5, "a": 1.0, "sigma": 1.0}}, "model.n"),
])
def test_errors_name_the_key(patch, key):
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict({**walker, **patch})
    assert exc.value.key == key
    assert str(exc.value).startswith(key)


def test_unbalanced_kernel_is_a_config_error():
    d = {"experiment": "brwre", "seed": 1,
         "model": {"n": 10, "alpha": 0.5, "sigma_e": 0.3, "kernel": {"rates": [[0, 2], [1, 0]]}, "x0": [1, 1]},
         "run": {"horizon": 1.0, "n_paths": 2}}
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_dict(d)
    assert exc.value.key == "model.kernel"


def test_builders():
    cfg = ExperimentConfig.from_dict({"experiment": "sde", "seed": 1,
                                      "model": {"alpha": 0.5, "sigma_e": 0.3,
                                                "kernel": {"builder": "cycle", "k": 3, "rate": 1.0}},
                                      "run": {"horizon": 1.0, "dt": 0.01, "n_paths": 2, "grid_points": 3}})
    spec = cfg.sde_spec()
    assert spec.sigma_e2 == pytest.approx(0.09) and spec.sigma_b2 == pytest.approx(0.91)
    assert cfg.kernel().size == 3 and list(cfg.x0(cfg.kernel())) == [1, 1, 1]
    assert list(cfg.grid()) == [0.0, 0.5, 1.0]


@given(st.integers(0, 2**63), st.integers(1, 500), st.floats(0.01, 10), st.floats(-3, 3))
def test_round_trip_property(seed, n, horizon, a):
    d = {"experiment": "walker", "seed": seed, "model": {"n": n, "a": a, "sigma": 1.0},
         "run": {"horizon": horizon, "n_paths": 10}, "output": {"csv": "x.csv"}}
    cfg = ExperimentConfig.from_dict(d)
    assert ExperimentConfig.loads(cfg.dumps()) == cfg
