import numpy as np

from services.errors import InvalidStateError
from services.policies.base import SelectionContext, SelectionPolicy


class RandomPolicy(SelectionPolicy):
    """Non-adaptive baseline: a uniformly random unobserved node."""

    name = "random"

    def select(self, ctx: SelectionContext, rng: np.random.Generator) -> int:
        if ctx.remaining.size == 0:
            raise InvalidStateError("No remaining nodes to select from")
        return int(ctx.remaining[rng.integers(ctx.remaining.size)])


def random_select(ctx: SelectionContext, rng: np.random.Generator) -> int:
    return RandomPolicy(ctx.measure_ctx.pair).select(ctx, rng)
