"""Fuzzy evaluation axes, aggregation, labels, and the weight sweep."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metaorch.envsim import Domain, EnvConfig, Environment
from metaorch.fuzzy import (
    DEFAULT_THRESHOLDS,
    DEFAULT_WEIGHTS,
    FuzzyWeights,
    QualityLabel,
    completeness,
    confidence,
    evaluate,
    evaluate_roster,
    relevance,
    sensitivity_sweep,
)

finite_scores = st.floats(min_value=-50, max_value=50, allow_nan=False)


def test_completeness_clamp_boundaries():
    assert completeness(-3.0) == 0.0
    assert completeness(1.0) == 1.0
    assert completeness(-4.0) == 0.0
    assert completeness(2.0) == 1.0
    assert completeness(-1.0) == 0.5


def test_relevance_clamp_boundaries():
    assert relevance(-2.0) == 0.0
    assert relevance(1.0) == 1.0
    assert relevance(-5.0) == 0.0
    assert relevance(-0.5) == 0.5


def test_confidence_floor_and_ceiling():
    assert confidence(0.0, 0.0) == 0.1
    assert confidence(1.0, 0.0) == 1.0
    assert confidence(1.0, 5.0) == 1.0
    assert confidence(0.5, -10.0) == 0.1
    assert confidence(0.8, 0.5) == pytest.approx(0.9, abs=1e-15)


def test_thousand_random_inputs_match_one_line_oracles():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        s = float(rng.uniform(-8, 8))
        r = float(rng.uniform(0, 1))
        n = float(rng.uniform(-3, 3))
        assert abs(completeness(s) - min(1.0, max(0.0, (s + 3) / 4))) <= 1e-12
        assert abs(relevance(s) - min(1.0, max(0.0, (s + 2) / 3))) <= 1e-12
        assert abs(confidence(r, n) - min(1.0, max(0.1, r + n / 5))) <= 1e-12


@given(finite_scores)
def test_axes_stay_in_range(score):
    assert 0.0 <= completeness(score) <= 1.0
    assert 0.0 <= relevance(score) <= 1.0


@given(st.floats(0, 1), st.floats(-20, 20, allow_nan=False))
def test_confidence_stays_in_range(reliability, noise):
    assert 0.1 <= confidence(reliability, noise) <= 1.0


@given(finite_scores, finite_scores)
def test_completeness_and_relevance_monotone(a, b):
    lo, hi = sorted((a, b))
    assert completeness(lo) <= completeness(hi)
    assert relevance(lo) <= relevance(hi)


@settings(max_examples=50)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(-5, 5), st.floats(-5, 5))
def test_confidence_monotone(r1, r2, n1, n2):
    r_lo, r_hi = sorted((r1, r2))
    n_lo, n_hi = sorted((n1, n2))
    assert confidence(r_lo, n_lo) <= confidence(r_hi, n_lo)
    assert confidence(r_lo, n_lo) <= confidence(r_lo, n_hi)


def test_non_finite_inputs_rejected():
    with pytest.raises(ValueError):
        completeness(math.nan)
    with pytest.raises(ValueError):
        relevance(math.inf)
    with pytest.raises(ValueError):
        confidence(0.5, math.nan)
    with pytest.raises(ValueError):
        confidence(1.5, 0.0)


def test_weight_validation():
    with pytest.raises(ValueError):
        FuzzyWeights(0.5, 0.5, 0.5).validate()
    with pytest.raises(ValueError):
        FuzzyWeights(-0.2, 1.0, 0.2).validate()
    FuzzyWeights(1.0, 0.0, 0.0).validate()  # degenerate but legal
    assert abs(sum(DEFAULT_WEIGHTS.as_tuple()) - 1.0) < 1e-12


def test_label_boundaries_take_higher_label():
    assert DEFAULT_THRESHOLDS.label(0.85) is QualityLabel.EXCELLENT
    assert DEFAULT_THRESHOLDS.label(0.8499999) is QualityLabel.GOOD
    assert DEFAULT_THRESHOLDS.label(0.65) is QualityLabel.GOOD
    assert DEFAULT_THRESHOLDS.label(0.45) is QualityLabel.FAIR
    assert DEFAULT_THRESHOLDS.label(0.4499) is QualityLabel.POOR


def test_evaluate_aggregates_with_default_weights():
    env = Environment(EnvConfig())
    task = env.generate_task(Domain.GENERAL, 0)
    agent = env.agents[0]
    outcome = env.raw_score(agent, task)
    scores = evaluate(outcome, agent)
    expected = (
        0.4 * completeness(outcome.score)
        + 0.4 * relevance(outcome.score)
        + 0.2 * confidence(agent.reliability, outcome.noise)
    )
    assert abs(scores.quality - expected) <= 1e-12
    assert scores.label is DEFAULT_THRESHOLDS.label(scores.quality)


def test_evaluate_rejects_mismatched_agent():
    env = Environment(EnvConfig())
    task = env.generate_task(Domain.GENERAL, 1)
    outcome = env.raw_score(env.agents[0], task)
    with pytest.raises(ValueError):
        evaluate(outcome, env.agents[1])


def test_evaluate_roster_covers_all_agents_in_order():
    env = Environment(EnvConfig())
    task = env.generate_task(Domain.EMERGENCY, 4)
    roster = evaluate_roster(env, task)
    assert len(roster) == env.n_agents
    for agent, scores in zip(env.agents, roster):
        direct = evaluate(env.raw_score(agent, task), agent)
        assert scores == direct


def test_sensitivity_sweep_self_delta_zero():
    rows = sensitivity_sweep([DEFAULT_WEIGHTS], lambda w: 0.77)
    assert rows[0][1] == 0.77 and rows[0][2] == 0.0


def test_sensitivity_sweep_reports_deltas():
    def fake_eval(w: FuzzyWeights) -> float:
        return 0.8 if w == DEFAULT_WEIGHTS else 0.75

    rows = sensitivity_sweep([FuzzyWeights(0.5, 0.3, 0.2), DEFAULT_WEIGHTS], fake_eval)
    assert rows[0][2] == pytest.approx(-0.05)
    assert rows[1][2] == 0.0


def test_sensitivity_sweep_rejects_empty_and_invalid():
    with pytest.raises(ValueError):
        sensitivity_sweep([], lambda w: 0.5)
    with pytest.raises(ValueError):
        sensitivity_sweep([FuzzyWeights(0.9, 0.2, 0.2)], lambda w: 0.5)
