import logging
from pathlib import Path
from typing import Optional

import numpy as np
import typer

from dependencies import default_workers, scenario_for
from routers.common import (
    AlphaOption,
    BetaOption,
    ConfigOption,
    OutOption,
    PolicyOption,
    SeedOption,
    SubsetOption,
    TrialsOption,
    WorkersOption,
    emit,
    load_experiment,
    report_error,
)
from services.errors import ConfigurationError
from services.experiments.baselines import np_baseline
from services.experiments.exponents import error_exponents
from services.experiments.monte_carlo import CSV_COLUMNS, monte_carlo
from services.policies.factory import make_policy

router = typer.Typer()
logger = logging.getLogger(__name__)

SWEEP_COLUMNS = CSV_COLUMNS + ["exp_fa", "exp_fa_is_bound", "exp_md", "exp_md_is_bound"]
PARAMETER_COLUMNS = SWEEP_COLUMNS + ["parameter", "value"]
DEFAULT_COMPARE = ("correlation", "chernoff", "random")

# NP calibration draws from its own stream of the run seed
NP_STREAM = 2


@router.command("simulate")
def simulate(
    config: Path = ConfigOption,
    policy: Optional[str] = PolicyOption,
    alpha: Optional[float] = AlphaOption,
    beta: Optional[float] = BetaOption,
    trials: Optional[int] = TrialsOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
    max_subset_size: Optional[int] = SubsetOption,
    workers: Optional[int] = WorkersOption,
):
    """Monte Carlo delay and error rates of one policy on one scenario."""
    try:
        cfg, base_dir = load_experiment(
            config, policy=policy, alpha=alpha, beta=beta, trials=trials, seed=seed,
            output=out, max_subset_size=max_subset_size, workers=workers,
        )
        scenario = scenario_for(cfg, base_dir)
        stats = monte_carlo(
            scenario, make_policy(cfg.policy, scenario.pair), cfg.detection_config(),
            cfg.trials, cfg.seed, workers=cfg.workers or default_workers(),
        )
        emit([stats.to_row()], CSV_COLUMNS, cfg.output)
    except Exception as e:
        report_error("simulate", e)


@router.command("compare-policies")
def compare_policies(
    config: Path = ConfigOption,
    alpha: Optional[float] = AlphaOption,
    beta: Optional[float] = BetaOption,
    trials: Optional[int] = TrialsOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
    max_subset_size: Optional[int] = SubsetOption,
    workers: Optional[int] = WorkersOption,
):
    """One CSV row per policy, all runs sharing the same seeds."""
    try:
        cfg, base_dir = load_experiment(
            config, alpha=alpha, beta=beta, trials=trials, seed=seed,
            output=out, max_subset_size=max_subset_size, workers=workers,
        )
        scenario = scenario_for(cfg, base_dir)
        detection = cfg.detection_config()
        policies = cfg.compare.policies if cfg.compare else DEFAULT_COMPARE
        rows = []
        for name in policies:
            stats = monte_carlo(
                scenario, make_policy(name, scenario.pair), detection, cfg.trials, cfg.seed,
                workers=cfg.workers or default_workers(),
            )
            rows.append(stats.to_row())
        if cfg.compare and cfg.compare.np_sample_size:
            result = np_baseline(
                scenario, cfg.compare.np_sample_size, cfg.alpha, cfg.compare.np_calibration_trials,
                np.random.default_rng([cfg.seed, NP_STREAM]), test_trials=cfg.trials,
            )
            rows.append(result.to_row(scenario, detection, cfg.seed))
        emit(rows, CSV_COLUMNS, cfg.output)
    except Exception as e:
        report_error("compare-policies", e)


@router.command("sweep")
def sweep(
    config: Path = ConfigOption,
    policy: Optional[str] = PolicyOption,
    trials: Optional[int] = TrialsOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
    max_subset_size: Optional[int] = SubsetOption,
    workers: Optional[int] = WorkersOption,
):
    """
    Delay and error exponents over the [sweep] budgets (alpha = beta) and, when given, over the
    values of one scenario parameter.
    """
    try:
        cfg, base_dir = load_experiment(
            config, policy=policy, trials=trials, seed=seed, output=out,
            max_subset_size=max_subset_size, workers=workers,
        )
        spec = cfg.sweep
        if spec is None or (not spec.alphas and spec.parameter is None):
            raise ConfigurationError("sweep: the [sweep] section needs 'alphas' or 'parameter' with 'values'")
        budgets = spec.alphas or (cfg.alpha,)
        values = spec.values if spec.parameter else (None,)
        columns = PARAMETER_COLUMNS if spec.parameter else SWEEP_COLUMNS
        n_workers = cfg.workers or default_workers()

        rows = []
        for value in values:
            scenario = scenario_for(cfg, base_dir, **({spec.parameter: value} if spec.parameter else {}))
            policy_obj = make_policy(cfg.policy, scenario.pair)
            for budget in budgets:
                stats = monte_carlo(
                    scenario, policy_obj, cfg.detection_config(alpha=budget, beta=budget),
                    cfg.trials, cfg.seed, workers=n_workers,
                )
                point = error_exponents(stats)
                row = stats.to_row()
                row.update(
                    exp_fa=point.exp_fa, exp_fa_is_bound=point.exp_fa_is_bound,
                    exp_md=point.exp_md, exp_md_is_bound=point.exp_md_is_bound,
                )
                if spec.parameter:
                    row.update(parameter=spec.parameter, value=value)
                rows.append(row)
        emit(rows, columns, cfg.output)
    except Exception as e:
        report_error("sweep", e)
