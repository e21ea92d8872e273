"""
Model file format for one hypothesis.

    n = 3
    mean = 0 0 0            # optional, zeros by default
    [covariance]            # dense rows ...
    1 0.5 0.25
    0.5 1 0.5
    0.25 0.5 1

or, for tree-structured models,

    n = 3
    variances = 1 1 1       # optional, ones by default
    [tree]                  # "i j rho" per edge
    0 1 0.5
    1 2 0.5
"""

import logging

import numpy as np

from services.errors import ConfigurationError
from services.gmrf import GaussianModel, tree_covariance_completion
from services.graph_core import Graph

logger = logging.getLogger(__name__)


def _numbers(text: str, where: str, errors: list) -> list[float]:
    try:
        return [float(x) for x in text.split()]
    except ValueError:
        errors.append(f"{where}: expected numbers, got '{text.strip()}'")
        return []


def parse_model_file(text: str, source: str = "<model>") -> GaussianModel:
    header, rows, errors = {}, [], []
    block = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{line_no}"
        if line in ("[covariance]", "[tree]"):
            if block is not None:
                errors.append(f"{where}: only one [covariance] or [tree] block is allowed")
            block = line[1:-1]
            continue
        if block is None:
            if "=" not in line:
                errors.append(f"{where}: expected 'key = value', got '{raw.strip()}'")
                continue
            key, value = (part.strip() for part in line.split("=", 1))
            if key not in ("n", "mean", "variances"):
                errors.append(f"{where}: {key}: unknown key")
                continue
            header[key] = (value, where)
        else:
            rows.append((_numbers(line, where, errors), where))

    if "n" not in header:
        errors.append(f"{source}: n: missing node count")
    if block is None:
        errors.append(f"{source}: missing [covariance] or [tree] block")
    if errors:
        raise ConfigurationError(errors)

    value, where = header["n"]
    try:
        n = int(value)
    except ValueError:
        raise ConfigurationError(f"{where}: n: expected an integer, got '{value}'")
    if n < 1:
        raise ConfigurationError(f"{where}: n: must be positive, got {n}")

    def vector(key, default):
        if key not in header:
            return default
        text, at = header[key]
        numbers = _numbers(text, at, errors)
        if len(numbers) != n:
            errors.append(f"{at}: {key}: expected {n} values, got {len(numbers)}")
            return default
        return np.asarray(numbers)

    mean = vector("mean", np.zeros(n))
    variances = vector("variances", np.ones(n))

    if block == "covariance":
        if "variances" in header:
            errors.append(f"{header['variances'][1]}: variances: only allowed with a [tree] block")
        if len(rows) != n or any(len(r) != n for r, _ in rows):
            errors.append(f"{source}: covariance: expected {n} rows of {n} values")
        if errors:
            raise ConfigurationError(errors)
        covariance = np.array([r for r, _ in rows])
    else:
        correlations = {}
        for numbers, at in rows:
            if len(numbers) != 3 or not all(np.isfinite(x) and float(x).is_integer() for x in numbers[:2]):
                errors.append(f"{at}: tree: expected 'i j rho'")
                continue
            correlations[(int(numbers[0]), int(numbers[1]))] = numbers[2]
        if errors:
            raise ConfigurationError(errors)
        try:
            tree = Graph(n, frozenset(correlations))
            covariance = tree_covariance_completion(correlations, tree, variances)
        except ValueError as e:
            raise ConfigurationError(f"{source}: tree: {e}")

    try:
        model = GaussianModel(mean, covariance)
    except ValueError as e:
        raise ConfigurationError(f"{source}: {e}")
    logger.info(f"Loaded {n}-node model from {source}")
    return model


def format_model_file(model: GaussianModel) -> str:
    """Dense model file text for `model`."""
    out = [f"n = {model.node_count}", "mean = " + " ".join(repr(float(x)) for x in model.mean), "[covariance]"]
    out.extend(" ".join(repr(float(x)) for x in row) for row in model.covariance)
    return "\n".join(out) + "\n"


def load_model_file(path: str) -> GaussianModel:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as e:
        raise ConfigurationError(f"{path}: cannot read model file: {e.strerror}")
    return parse_model_file(text, source=path)
