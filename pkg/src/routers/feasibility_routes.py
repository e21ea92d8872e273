import logging
from pathlib import Path
from typing import Optional

import typer

from dependencies import scenario_for
from routers.common import AlphaOption, BetaOption, ConfigOption, OutOption, SeedOption, emit, load_experiment, report_error
from services.feasibility import feasibility_lower_bound

router = typer.Typer()
logger = logging.getLogger(__name__)

FEASIBILITY_COLUMNS = [
    "scenario", "n", "alpha", "beta", "prior0", "prior1",
    "bhattacharyya", "kappa_n", "raw_bound", "lower_bound", "asymptotically_feasible",
]


@router.command("feasibility")
def feasibility(
    config: Path = ConfigOption,
    alpha: Optional[float] = AlphaOption,
    beta: Optional[float] = BetaOption,
    seed: Optional[int] = SeedOption,
    out: Optional[str] = OutOption,
):
    """Bhattacharyya feasibility bound of the configured scenario; no trials are run."""
    try:
        cfg, base_dir = load_experiment(config, alpha=alpha, beta=beta, seed=seed, output=out)
        scenario = scenario_for(cfg, base_dir)
        pair = scenario.pair
        report = feasibility_lower_bound(pair, cfg.detection_config())
        logger.info(f"Feasibility of {scenario.name}: lower bound {report.lower_bound:.4g}, kappa_n {report.kappa_n:.4g}")
        emit(
            [{
                "scenario": scenario.name,
                "n": pair.node_count,
                "alpha": cfg.alpha,
                "beta": cfg.beta,
                "prior0": pair.prior0,
                "prior1": pair.prior1,
                "bhattacharyya": report.bhattacharyya,
                "kappa_n": report.kappa_n,
                "raw_bound": report.raw_bound,
                "lower_bound": report.lower_bound,
                "asymptotically_feasible": report.asymptotically_feasible,
            }],
            FEASIBILITY_COLUMNS,
            cfg.output,
        )
    except Exception as e:
        report_error("feasibility", e)
