import numpy as np
import pytest
from pydantic import ValidationError

from services.engine import DetectionConfig, SamplingState, compare_sprt_variant, llr_update, run_trial
from services.errors import ConfigurationError, InvalidStateError
from services.gmrf import Hypothesis, HypothesisPair, independence_pair, joint_llr, tree_covariance_completion
from services.graph_core import Graph
from services.info_measures import MeasureContext
from services.policies.factory import make_policy


def tree_pair(n, correlations):
    tree = Graph(n, frozenset(correlations))
    return independence_pair(tree_covariance_completion(correlations, tree, np.ones(n)))


def identical_pair(n):
    pair = independence_pair(np.eye(n))
    return HypothesisPair(pair.f0, pair.f0)


# DetectionConfig

def test_thresholds():
    config = DetectionConfig(alpha=0.1, beta=0.1)
    assert config.lower_threshold == pytest.approx(-2.302585, abs=1e-6)
    assert config.upper_threshold == pytest.approx(2.302585, abs=1e-6)


@pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
def test_config_rejects_budgets_outside_unit_interval(alpha):
    with pytest.raises(ValidationError):
        DetectionConfig(alpha=alpha, beta=0.1)


# llr_update

def test_llr_update_identical_conditionals():
    ctx = MeasureContext(identical_pair(3), [(0, 0.4)])
    assert llr_update(1.25, 1, -0.7, ctx) == 1.25


def test_first_sample_with_identical_marginals():
    ctx = MeasureContext(tree_pair(2, {(0, 1): 0.8}))
    assert llr_update(0.0, 0, 1.3, ctx) == pytest.approx(0.0, abs=1e-15)


def test_llr_fold_equals_joint_llr():
    rng = np.random.default_rng(7)
    pair = tree_pair(6, {(0, 1): 0.6, (1, 2): -0.4, (1, 3): 0.5, (4, 5): 0.7})
    state = SamplingState(pair, pair.f1.sample(rng))
    for node in rng.permutation(6):
        state.observe(node)
        assert state.llr == pytest.approx(joint_llr(state.values, state.path, pair), abs=1e-8)


def test_state_rejects_repeated_node():
    pair = tree_pair(2, {(0, 1): 0.5})
    state = SamplingState(pair, np.zeros(2))
    state.observe(0)
    with pytest.raises(InvalidStateError):
        state.observe(0)


# run_trial

def test_identical_models_force_stop_at_n():
    pair = identical_pair(5)
    result = run_trial(pair, Hypothesis.H0, make_policy("chernoff", pair), DetectionConfig(alpha=0.1, beta=0.1),
                       np.random.default_rng(0))
    assert result.stopping_time == 5
    assert result.forced_stop
    assert result.decision == Hypothesis.H1
    assert sorted(result.path) == list(range(5))


def test_trial_invariants():
    pair = tree_pair(8, {(0, 1): 0.7, (1, 2): 0.6, (3, 4): 0.5, (5, 6): 0.2})
    config = DetectionConfig(alpha=0.05, beta=0.05)
    for name in ("chernoff", "correlation", "correlation-exhaustive", "random"):
        for seed in range(10):
            result = run_trial(pair, seed % 2, make_policy(name, pair), config, np.random.default_rng(seed), seed=seed)
            assert len(result.path) == len(set(result.path)) == result.stopping_time <= 8
            assert (result.decision == Hypothesis.H1) == (result.final_llr >= 0)
            assert result.final_llr == pytest.approx(joint_llr(result.values, result.path, pair), abs=1e-8)
            if not result.forced_stop:
                assert result.final_llr <= config.lower_threshold or result.final_llr >= config.upper_threshold


def test_neighbourhood_policy_rejected_on_cyclic_pair():
    acyclic = tree_pair(3, {(0, 1): 0.5})
    policy = make_policy("correlation", acyclic)
    cyclic = independence_pair(np.array([[1.0, 0.4, 0.3], [0.4, 1.0, 0.4], [0.3, 0.4, 1.0]]))
    with pytest.raises(ConfigurationError):
        run_trial(cyclic, Hypothesis.H1, policy, DetectionConfig(alpha=0.1, beta=0.1), np.random.default_rng(0))


def test_strong_edge_found_first():
    correlations = {(10, 37): 0.95}
    pair = tree_pair(50, correlations)
    policy = make_policy("correlation", pair)
    config = DetectionConfig(alpha=0.1, beta=0.1)
    results = [run_trial(pair, Hypothesis.H1, policy, config, np.random.default_rng(seed)) for seed in range(200)]
    assert all(set(r.path[:2]) == {10, 37} for r in results)
    assert np.mean([r.decision == Hypothesis.H1 for r in results]) >= 0.8


def test_tighter_budgets_never_stop_earlier():
    pair = tree_pair(12, {(i, i + 1): 0.5 for i in range(11)})
    loose = DetectionConfig(alpha=0.2, beta=0.2)
    tight = DetectionConfig(alpha=0.05, beta=0.05)
    for name in ("chernoff", "correlation"):
        policy = make_policy(name, pair)
        for seed in range(30):
            a = run_trial(pair, seed % 2, policy, loose, np.random.default_rng(seed))
            b = run_trial(pair, seed % 2, policy, tight, np.random.default_rng(seed))
            assert b.stopping_time >= a.stopping_time


def test_trial_is_deterministic():
    pair = tree_pair(6, {(0, 1): 0.6, (2, 3): 0.3})
    policy = make_policy("random", pair)
    config = DetectionConfig(alpha=0.1, beta=0.1)
    a = run_trial(pair, 1, policy, config, np.random.default_rng(42))
    b = run_trial(pair, 1, policy, config, np.random.default_rng(42))
    assert a == b


# compare_sprt_variant

def test_sprt_variant_identical_models():
    pair = identical_pair(4)
    comparison = compare_sprt_variant(pair, 0, make_policy("random", pair), DetectionConfig(alpha=0.1, beta=0.1),
                                      np.random.default_rng(3))
    assert comparison.bounded.stopping_time == 4
    assert comparison.bounded.decision == Hypothesis.H1
    assert comparison.unbounded_decision is None
    assert not comparison.agree


def test_sprt_variant_disagrees_exactly_on_forced_stops():
    pair = tree_pair(6, {(0, 1): 0.6, (1, 2): 0.6, (3, 4): 0.4})
    policy = make_policy("correlation", pair)
    config = DetectionConfig(alpha=0.05, beta=0.05)
    for seed in range(50):
        comparison = compare_sprt_variant(pair, seed % 2, policy, config, np.random.default_rng(seed))
        assert comparison.agree == (not comparison.bounded.forced_stop)
