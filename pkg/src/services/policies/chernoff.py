import logging

import numpy as np

from services.gmrf import HypothesisPair, is_unit_independence_test
from services.graph_core import is_acyclic
from services.info_measures import PieceConditionals, gmrf_closed_form_measures
from services.policies.base import SelectionContext, SelectionPolicy

logger = logging.getLogger(__name__)


class ChernoffPolicy(SelectionPolicy):
    """
    Chernoff rule: sample the node with the largest immediate information D_l^i(t) under the
    current ML hypothesis l.
    """

    name = "chernoff"

    def __init__(self, pair: HypothesisPair, closed_form: bool = False):
        """
        :param pair: hypothesis pair the policy scores against
        :param closed_form: use the correlation-coefficient closed forms where they apply
        """
        super().__init__(pair)
        self.closed_form = closed_form
        if closed_form and not (is_unit_independence_test(pair) and is_acyclic(pair.union_graph)):
            logger.warning("Closed-form Chernoff measures need a unit-variance acyclic test; using conditional KL")
            self.closed_form = False

    def piece_scores(self, mctx, direction, piece, max_subset_size):
        if self.closed_form:
            measures = [gmrf_closed_form_measures(mctx, node) for node in piece.nodes]
            return np.array([m.j1 if direction == 1 else m.j0 for m in measures])
        return PieceConditionals(mctx, piece).node_kl(direction)


def chernoff_select(ctx: SelectionContext, rng: np.random.Generator) -> int:
    return ChernoffPolicy(ctx.measure_ctx.pair).select(ctx, rng)
