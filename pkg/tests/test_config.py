import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distdpo.config import MODES, ConfigError, RunConfig, config_from_dict, dump_config, parse_config


def test_empty_document_gives_reference_defaults():
    cfg = parse_config("")
    assert cfg == parse_config("{}") == RunConfig()
    assert cfg.fed.num_clients == 5 and cfg.fed.batch_size == 4 and cfg.dpo.beta == 0.2
    assert cfg.fed.step_size == 1e-4 and cfg.fed.clip_norm == 1.0 and cfg.fed.rounds == 80
    assert cfg.fed.local_steps == 3 and cfg.dec.local_steps == 5
    assert cfg.seeds == (42, 43, 44)
    assert cfg.data.pairs_per_client == 120


def test_participation_above_client_count():
    with pytest.raises(ConfigError, match="participation exceeds client count"):
        parse_config('{"fed": {"num_clients": 5, "participation": 7}}')


def test_unknown_fields_are_named():
    with pytest.raises(ConfigError, match="'fed.foo'"):
        parse_config('{"fed": {"foo": 1}}')
    with pytest.raises(ConfigError, match="'colour'"):
        parse_config('{"colour": "red"}')


def test_other_errors():
    with pytest.raises(ConfigError):
        parse_config("{not json")
    with pytest.raises(ConfigError):
        parse_config('{"mode": "train"}')
    with pytest.raises(ConfigError):
        parse_config('{"fed": 3}')
    with pytest.raises(ConfigError):
        parse_config('{"mode": "sweep:topology", "seeds": [1, 2]}')
    with pytest.raises(ConfigError):
        parse_config('{"dpo": {"ref_theta": [0.0, 1.0]}}')
    with pytest.raises(ConfigError, match="batch_size exceeds"):
        parse_config('{"data": {"pairs_per_client": 3}}')
    with pytest.raises(ConfigError, match="participation exceeds client count"):
        parse_config('{"mode": "sweep:participation", "sweep": {"grid": [1, 6]}}')


def test_integers_are_accepted_for_reals():
    cfg = parse_config('{"fed": {"step_size": 1}}')
    assert cfg.fed.step_size == 1.0 and isinstance(cfg.fed.step_size, float)


pos_real = st.floats(1e-6, 10.0, allow_nan=False)


@st.composite
def run_configs(draw):
    N = draw(st.integers(1, 12))
    d = draw(st.integers(1, 10))
    vector = st.lists(st.floats(-5, 5, allow_nan=False), min_size=d, max_size=d)
    lb_n = 2 * draw(st.integers(1, 6))
    rounds = draw(st.integers(1, 300))
    mode = draw(st.sampled_from(MODES))
    grid = draw(st.none() | st.lists(st.integers(1, N), min_size=1, max_size=4))
    return {
        "mode": mode,
        "master_seed": draw(st.integers(0, 2**64 - 1)),
        "seeds": draw(st.lists(st.integers(0, 2**32), min_size=3, max_size=5)),
        "output_dir": draw(st.text("abcxyz/_-", min_size=1, max_size=12)),
        "workers": draw(st.integers(1, 8)),
        "record_elapsed": draw(st.booleans()),
        "instance": {
            "num_states": draw(st.integers(1, 8)),
            "num_actions": draw(st.integers(1, 8)),
            "horizon": draw(st.integers(1, 10)),
            "feature_dim": d,
            "phi_bound": draw(pos_real),
        },
        "data": {
            "pairs_per_client": draw(st.integers(16, 500)),
            "reward_scale": draw(st.floats(0, 10)),
            "perturbation_scale": draw(st.floats(0, 10)),
            "seed": draw(st.integers(0, 2**32)),
            "behavior_scale": draw(st.floats(0, 3)),
        },
        "dpo": {"beta": draw(pos_real), "loss_offset": draw(st.floats(-1, 1)), "ref_theta": draw(st.none() | vector)},
        "fed": {
            "num_clients": N,
            "participation": draw(st.integers(1, N)),
            "local_steps": draw(st.integers(1, 10)),
            "rounds": rounds,
            "step_size": draw(pos_real),
            "batch_size": draw(st.integers(1, 16)),
            "clip_norm": draw(st.none() | pos_real),
            "q_max": draw(st.integers(0, 6)),
            "weighting": draw(st.sampled_from(["uniform", "data_size"])),
            "shared_minibatch_seed": draw(st.booleans()),
        },
        "dec": {
            "topology": draw(st.sampled_from(["path", "ring", "star", "complete"])),
            "scheme": draw(st.sampled_from([None, "metropolis"])),
            "rounds": rounds,
            "step_size": draw(pos_real),
            "batch_size": draw(st.integers(1, 16)),
            "local_steps": draw(st.integers(1, 6)),
            "clip_norm": draw(st.none() | pos_real),
            "shared_minibatch_seed": draw(st.booleans()),
        },
        "lowerbound": {
            "n_clients": lb_n,
            "alpha": draw(pos_real),
            "noise_std": draw(st.floats(0, 2)),
            "E_grid": draw(st.lists(st.integers(1, 8), min_size=1, max_size=4)),
            "S_grid": draw(st.lists(st.integers(1, lb_n), min_size=1, max_size=4)),
            "seeds": draw(st.lists(st.integers(0, 100), min_size=1, max_size=5)),
            "rounds": rounds,
            "base_step": draw(pos_real),
            "rule": draw(st.sampled_from(["inverse_E", "constant"])),
            "tail": draw(st.integers(1, rounds)),
        },
        "sweep": {
            "grid": grid,
            "tail": draw(st.integers(1, 20)),
            "floor_tail": draw(st.integers(1, 30)),
        },
        "constants": {
            "num_samples": draw(st.integers(2, 10_000)),
            "inflate": draw(st.booleans()),
            "theta": draw(st.none() | vector),
        },
        "gradcheck": {"num_instances": draw(st.integers(1, 50)), "step": draw(pos_real), "tol": draw(pos_real)},
    }


@settings(max_examples=100, deadline=None)
@given(doc=run_configs())
def test_round_trip(doc):
    cfg = config_from_dict(doc)
    text = dump_config(cfg)
    assert parse_config(text) == cfg
    assert json.loads(dump_config(parse_config(text))) == json.loads(text)
