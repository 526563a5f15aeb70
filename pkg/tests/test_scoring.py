"""Weighted suitability scoring."""

from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mascap.scoring import MissingFactor, ScoringConfig, score_candidates

FACTORS = ("availability", "proximity", "utilization")


def test_two_robot_example():
    # Robot 1: proximity 2, utilization .92; Robot 3: proximity 6, utilization .35
    cands = [("Robot1", {"availability": 1, "proximity": 2, "utilization": 0.92}),
             ("Robot3", {"availability": 1, "proximity": 6, "utilization": 0.35})]
    ranking = score_candidates(cands, ScoringConfig.default())
    # hand computation: (1 + (1 - 2/6) + .92) / 3 and (1 + 0 + .35) / 3
    assert ranking[0] == ("Robot1", pytest.approx((1 + 2 / 3 + 0.92) / 3))
    assert ranking[0][1] == pytest.approx(0.862, abs=5e-4)
    assert ranking[1] == ("Robot3", pytest.approx(0.45))


def test_complement_prefers_idle():
    cands = [("busy", {"availability": 1, "proximity": 1, "utilization": 0.9}),
             ("idle", {"availability": 1, "proximity": 1, "utilization": 0.1})]
    assert score_candidates(cands, ScoringConfig.default())[0][0] == "busy"
    assert score_candidates(cands, ScoringConfig.default(True))[0][0] == "idle"


def test_missing_factor_raises():
    with pytest.raises(MissingFactor):
        score_candidates([("a", {"availability": 1})], ScoringConfig.default())


def test_bad_configs_rejected():
    with pytest.raises(ValueError):
        ScoringConfig({"a": 0.0}, {"a": ("identity",)})
    with pytest.raises(ValueError):
        ScoringConfig({"a": 1.0}, {"a": ("bogus",)})
    with pytest.raises(ValueError):
        ScoringConfig({"a": 1.0}, {})


def test_empty_candidate_list():
    assert score_candidates([], ScoringConfig.default()) == []


def test_config_round_trip():
    cfg = ScoringConfig.default(True)
    assert ScoringConfig.from_dict(cfg.to_dict()) == cfg


candidate_sets = st.lists(
    st.fixed_dictionaries({
        "availability": st.sampled_from([0, 1]),
        "proximity": st.integers(1, 12),
        "utilization": st.floats(0, 1),
    }), min_size=1, max_size=8)


@given(candidate_sets, st.floats(1e-3, 1e3))
def test_scaling_weights_keeps_ranking(rows, c):
    cands = [(f"R{i}", row) for i, row in enumerate(rows)]
    cfg = ScoringConfig.default()
    base = [cid for cid, _ in score_candidates(cands, cfg)]
    scaled = [cid for cid, _ in score_candidates(cands, cfg.scaled(c))]
    assert base == scaled
