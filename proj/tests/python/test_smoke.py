import math

import pytest

import tuna


def test_relative_range_and_verdict():
    assert math.isclose(tuna.relative_range([80, 100, 120]), 0.4)
    v = tuna.classify([80, 100, 120])
    assert v["is_unstable"]
    assert not tuna.classify([100, 100, 100])["is_unstable"]


def test_aggregate_penalizes_unstable():
    assert tuna.aggregate([80, 100, 120]) == 40.0
    assert tuna.aggregate([95, 100, 105]) == 95.0
    assert tuna.aggregate([50, 60], threshold=0.15, direction="minimize") == 120.0
    assert tuna.apply_penalty(10.0, "minimize") == 20.0


def test_errors_are_translated():
    with pytest.raises(tuna.DomainError):
        tuna.relative_range([])
    with pytest.raises(tuna.TunaError):
        tuna.relative_range([-1.0, 1.0])


def test_cluster_size():
    assert tuna.binomial(10, 3) == 120
    assert tuna.min_cluster_size([0.5], 1, 0.95) == 6
    p = tuna.cluster_detection([0.5], 1, 6)
    assert math.isclose(p, 1 - 2 * 0.5**6)
    assert math.isclose(tuna.detection_probability(10, 10, 5), 1.0)


def test_tune_smoke(tmp_path):
    out = tmp_path / "run"
    r = tuna.tune(out_dir=out, mode="tuna", env="planted-unstable", seed=3, trials=40, ei_candidates=200)
    assert r["trials"] <= 40
    assert r["best"] is not None
    assert len(r["curve"]) > 0
    assert (out / "best.json").exists()
    summary = tuna.analyze_run(out)
    assert isinstance(summary, dict)


def test_tune_is_deterministic():
    a = tuna.tune(mode="traditional", env="smooth", seed=5, trials=15, ei_candidates=200)
    b = tuna.tune(mode="traditional", env="smooth", seed=5, trials=15, ei_candidates=200)
    assert a["transcript"] == b["transcript"]


def test_unknown_option_rejected():
    with pytest.raises(TypeError):
        tuna.tune(colour="blue")
    with pytest.raises(tuna.UsageError):
        tuna.tune(threshold=0.5, trials=5)
