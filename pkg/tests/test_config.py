import json

import pytest

from lkdl.config import load_config, parse_override, apply_overrides, validate, ExperimentConfig

def test_defaults():
    config = validate({"dataset": "data.json"})
    assert config.pipeline == "lkdl" and config.learner.type == "per_class"
    assert config.rng.algorithm == "PCG64" and config.rng.version == 1
    assert config.sampler.landmark_count(1000) == 200

def test_overrides_parse_json_scalars():
    assert parse_override("sampler.c_over_n=0.1") == (["sampler", "c_over_n"], 0.1)
    assert parse_override("output=runs/a") == (["output"], "runs/a")
    assert parse_override("corruption=null") == (["corruption"], None)
    raw = apply_overrides({"dataset": "d"}, ["learner.q=5", "kernel.kind=polynomial", "kernel.degree=4"])
    config = validate(raw)
    assert config.learner.q == 5 and str(config.kernel.spec()) == "poly:4"
    with pytest.raises(ValueError):
        parse_override("no-equals")

def test_learner_union():
    config = validate({"dataset": "d", "learner": {"type": "lcksvd", "m": 30, "q": 4, "variant": "LC1"}})
    assert config.learner.m == 30 and config.learner.tau2 == pytest.approx(1e-4)

@pytest.mark.parametrize("raw", [
    {"dataset": "d", "sampler": {"c": 10, "c_over_n": 0.1}},
    {"dataset": "d", "sampler": {"c_over_n": 1.5}},
    {"dataset": "d", "repeats": 0},
    {"dataset": "d", "rng": {"algorithm": "MT19937"}},
    {"dataset": "d", "pipeline": "kernel_baseline", "learner": {"type": "lcksvd", "m": 4, "q": 1}},
    {"dataset": "d", "unknown": 1},
    {},
])
def test_invalid_configs(raw):
    with pytest.raises(ValueError):
        validate(raw)

def test_load_config_with_flags(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"dataset": "d", "seed": 3, "repeats": 2}))
    config = load_config(str(path), ["k=8"], seed=11, output=str(tmp_path / "out"))
    assert (config.seed, config.k, config.repeats) == (11, 8, 2)
    assert config.output == str(tmp_path / "out")

def test_repeat_seeds_are_reproducible_and_distinct():
    config = ExperimentConfig(dataset="d", seed=5)
    seeds = [config.repeat_seed(i) for i in range(10)]
    assert seeds == [config.repeat_seed(i) for i in range(10)]
    assert len(set(seeds)) == 10

@pytest.mark.parametrize("text,expected", [
    ("linear", "linear"),
    ("poly:4", "poly:4"),
    ("poly:2:1", "poly:2:1"),
    ("gaussian:0.5", "gaussian:0.5"),
])
def test_kernel_descriptions(text, expected):
    assert str(validate({"dataset": "d", "kernel": text}).kernel.spec()) == expected

def test_kernel_description_errors():
    with pytest.raises(ValueError, match="kernel"):
        validate({"dataset": "d", "kernel": "cosine"})

def test_kernel_flag_overrides_file(tmp_path):
    path = str(tmp_path / "config.json")
    with open(path, "w") as handle:
        json.dump({"dataset": "d", "kernel": {"kind": "gaussian", "sigma": 2.0}}, handle)
    config = load_config(path, kernel="poly:3")
    assert config.kernel.kind == "polynomial" and config.kernel.degree == 3
