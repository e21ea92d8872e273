import logging

from services.errors import ConfigurationError
from services.gmrf import HypothesisPair
from services.graph_core import is_acyclic
from services.policies.base import SelectionPolicy
from services.policies.chernoff import ChernoffPolicy
from services.policies.correlation import ExhaustiveCorrelationPolicy, NeighborhoodCorrelationPolicy
from services.policies.random_policy import RandomPolicy

logger = logging.getLogger(__name__)

POLICY_NAMES = ("chernoff", "correlation", "correlation-exhaustive", "random")


def make_policy(name: str, pair: HypothesisPair, closed_form: bool = False) -> SelectionPolicy:
    """
    Build the selection policy registered under `name`.

    "correlation" is the neighbourhood search when the union graph is acyclic and falls back to
    the exhaustive search otherwise.
    """
    if name == "chernoff":
        return ChernoffPolicy(pair, closed_form=closed_form)
    if name == "correlation":
        if is_acyclic(pair.union_graph):
            return NeighborhoodCorrelationPolicy(pair)
        logger.warning("Union dependency graph is cyclic; correlation rule falls back to exhaustive search")
        return ExhaustiveCorrelationPolicy(pair)
    if name == "correlation-exhaustive":
        return ExhaustiveCorrelationPolicy(pair)
    if name == "random":
        return RandomPolicy(pair)
    raise ConfigurationError(f"policy: unknown policy '{name}', expected one of {', '.join(POLICY_NAMES)}")
