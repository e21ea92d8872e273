"""Long Monte Carlo checks at desk scale; run with `pytest -m slow`."""

import numpy as np
import pytest

from dependencies import default_workers
from services.engine import DetectionConfig
from services.experiments.exponents import estimate_error_exponents, mean_samples_outside
from services.experiments.monte_carlo import binomial_se, monte_carlo
from services.experiments.scenarios import gen_cluster, gen_random_tree, gen_replicated_subgraph, gen_two_cluster
from services.feasibility import feasibility_lower_bound
from services.policies.factory import make_policy

pytestmark = pytest.mark.slow

Z95 = 1.96


def significantly_less(a_mean, a_se, b_mean, b_se) -> bool:
    return b_mean - a_mean > Z95 * np.hypot(a_se, b_se)


def test_error_control_on_homogeneous_tree():
    scenario = gen_random_tree(200, 0.3, np.random.default_rng(2024))
    config = DetectionConfig(alpha=0.1, beta=0.1)
    trials = 2000
    stats = monte_carlo(scenario, make_policy("correlation", scenario.pair), config, trials, 1, workers=default_workers())
    assert stats.p_fa <= 0.1 + 3 * stats.se_fa
    assert stats.p_md <= 0.1 + 3 * stats.se_md

    exit_rate = 1.0 - stats.forced_stop_rate
    bound = feasibility_lower_bound(scenario.pair, config).lower_bound
    assert exit_rate >= bound - 3 * binomial_se(exit_rate, 2 * trials)


def test_policy_ordering_on_replicated_blocks():
    scenario = gen_replicated_subgraph(100, 0.5, 0.1)
    config = DetectionConfig(alpha=0.1, beta=0.1)
    runs = {
        name: monte_carlo(scenario, make_policy(name, scenario.pair), config, 2000, 3, workers=default_workers())
        for name in ("correlation", "chernoff", "random")
    }
    for faster, slower in (("correlation", "chernoff"), ("chernoff", "random")):
        a, b = runs[faster], runs[slower]
        assert significantly_less(a.avg_delay_weighted, a.se_weighted, b.avg_delay_weighted, b.se_weighted), (faster, slower)


@pytest.mark.parametrize("p", [30, 60, 120])
def test_cluster_delay_gap(p):
    n = 3000
    scenario = gen_cluster(n, p, 0.5, np.random.default_rng(p))
    config = DetectionConfig(alpha=0.1, beta=0.1)

    chernoff = monte_carlo(scenario, make_policy("chernoff", scenario.pair), config, 200, 4, workers=default_workers())
    spent = mean_samples_outside(chernoff, scenario.cluster)
    assert 0.2 * n / p <= spent <= 1.2 * n / p

    correlation = monte_carlo(scenario, make_policy("correlation", scenario.pair), config, 200, 4, workers=default_workers())
    for result in correlation.results:
        assert result.path[0] in scenario.cluster


def test_two_cluster_delay_ratio():
    scenario = gen_two_cluster(1000, 50, 0.5, 0.2, np.random.default_rng(9))
    config = DetectionConfig(alpha=0.1, beta=0.1)
    chernoff = monte_carlo(scenario, make_policy("chernoff", scenario.pair), config, 300, 5, workers=default_workers())
    correlation = monte_carlo(scenario, make_policy("correlation", scenario.pair), config, 300, 5, workers=default_workers())
    assert significantly_less(correlation.avg_delay_h1, correlation.se1, chernoff.avg_delay_h1, chernoff.se1)


def test_exponent_trend_on_replicated_blocks():
    scenario = gen_replicated_subgraph(100, 0.5, 0.1)
    budgets = [DetectionConfig(alpha=a, beta=a) for a in (0.3, 0.2, 0.1, 0.05)]
    curves = {
        name: estimate_error_exponents(scenario, make_policy(name, scenario.pair), budgets, 500, 6, workers=default_workers())
        for name in ("correlation", "random")
    }
    proposed = [point.exp_fa for point in curves["correlation"]]
    baseline = [point.exp_fa for point in curves["random"]]
    assert np.mean(proposed) >= np.mean(baseline)
    # delay grows as the budget tightens
    delays = [point.stats.avg_delay_weighted for point in curves["correlation"]]
    assert delays == sorted(delays)
