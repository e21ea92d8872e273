import logging
import os
from pathlib import Path

import numpy as np

from services.errors import ConfigurationError
from services.experiments.scenarios import (
    Scenario,
    gen_cluster,
    gen_nearest_neighbor,
    gen_random_tree,
    gen_replicated_subgraph,
    gen_two_cluster,
    scenario_from_models,
)
from services.gmrf import HypothesisPair
from utils.config import GENERATOR_PARAMS, ExperimentConfig, ScenarioSpec
from utils.model_files import load_model_file

logger = logging.getLogger(__name__)

# scenario generation draws from its own stream so trial seeds stay base_seed + k
SCENARIO_STREAM = 1


def scenario_rng(seed: int) -> np.random.Generator:
    return np.random.default_rng([seed, SCENARIO_STREAM])


def default_workers() -> int:
    value = os.getenv("QD_WORKERS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        raise ConfigurationError(f"QD_WORKERS: expected an integer, got '{value}'")


def _with_priors(scenario: Scenario, prior0: float) -> Scenario:
    if scenario.pair.prior0 == prior0:
        return scenario
    pair = HypothesisPair(scenario.pair.f0, scenario.pair.f1, prior0=prior0, prior1=1.0 - prior0)
    return Scenario(pair, scenario.name, scenario.metadata, scenario.cluster)


def build_scenario(spec: ScenarioSpec, seed: int, prior0: float = 0.5, base_dir: str | None = None) -> Scenario:
    """Scenario described by a config section; generators draw from the scenario stream of `seed`."""
    if spec.generator is None:
        root = Path(base_dir or ".")
        f0 = load_model_file(str(root / spec.model0))
        f1 = load_model_file(str(root / spec.model1))
        return scenario_from_models(f0, f1, prior0=prior0)

    rng = scenario_rng(seed)
    params = spec.parameters()
    if spec.generator == "nearest-neighbor":
        scenario = gen_nearest_neighbor(params["n"], params["M"], params["a"], rng)
    elif spec.generator == "replicated-subgraph":
        scenario = gen_replicated_subgraph(params["copies"], params["strong_corr"], params["weak_corr"])
    elif spec.generator == "cluster":
        scenario = gen_cluster(params["n"], params["p"], params["sigma_A"], rng)
    elif spec.generator == "two-cluster":
        scenario = gen_two_cluster(params["n"], params["p"], params["a_corr"], params["b_corr"], rng)
    else:
        scenario = gen_random_tree(params["n"], params["corr"], rng)
    return _with_priors(scenario, prior0)


def scenario_for(config: ExperimentConfig, base_dir: str | None = None, **overrides) -> Scenario:
    """Scenario of `config`, with generator parameters replaced by `overrides` (parameter sweeps)."""
    spec = config.scenario
    if overrides:
        allowed = GENERATOR_PARAMS.get(spec.generator, ())
        unknown = [key for key in overrides if key not in allowed]
        if unknown:
            raise ConfigurationError(f"sweep.parameter: '{unknown[0]}' is not a parameter of this scenario")
        spec = ScenarioSpec.model_validate({**spec.model_dump(), **overrides})
    return build_scenario(spec, config.seed, config.prior0, base_dir)
