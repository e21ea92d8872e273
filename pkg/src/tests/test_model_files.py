import numpy as np
import pytest
from numpy.testing import assert_allclose

from services.errors import ConfigurationError
from utils.model_files import format_model_file, load_model_file, parse_model_file

TREE = """\
n = 3
variances = 1 4 1
[tree]
0 1 0.5
1 2 -0.5
"""

DENSE = """\
n = 2
mean = 1 -1
[covariance]
1 0.6
0.6 1
"""


def test_tree_model():
    model = parse_model_file(TREE)
    assert_allclose(model.covariance[0, 1], 0.5 * 2)
    assert_allclose(model.covariance[0, 2], -0.25)
    assert model.dependency_graph.edges == {(0, 1), (1, 2)}


def test_dense_model():
    model = parse_model_file(DENSE)
    assert_allclose(model.mean, [1, -1])
    assert_allclose(model.covariance, [[1, 0.6], [0.6, 1]])


def test_format_and_reload(tmp_path):
    model = parse_model_file(TREE)
    path = tmp_path / "m.txt"
    path.write_text(format_model_file(model))
    reloaded = load_model_file(str(path))
    assert_allclose(reloaded.covariance, model.covariance)
    assert_allclose(reloaded.mean, model.mean)


def test_errors_carry_line_numbers():
    with pytest.raises(ConfigurationError, match="m:4: tree: expected 'i j rho'"):
        parse_model_file("n = 3\n[tree]\n0 1 0.5\n1 2\n", source="m")


def test_missing_pieces():
    with pytest.raises(ConfigurationError) as excinfo:
        parse_model_file("mean = 0 0\n", source="m")
    assert excinfo.value.errors == ["m: n: missing node count", "m: missing [covariance] or [tree] block"]


def test_wrong_dimensions():
    with pytest.raises(ConfigurationError, match="expected 2 rows of 2 values"):
        parse_model_file("n = 2\n[covariance]\n1 0\n")
    with pytest.raises(ConfigurationError, match="mean: expected 3 values"):
        parse_model_file("n = 3\nmean = 0 0\n[tree]\n0 1 0.1\n")


def test_invalid_correlation_and_non_spd():
    with pytest.raises(ConfigurationError, match="tree"):
        parse_model_file("n = 2\n[tree]\n0 1 1.2\n")
    with pytest.raises(ConfigurationError, match="positive definite"):
        parse_model_file("n = 2\n[covariance]\n1 2\n2 1\n")


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigurationError, match="cannot read model file"):
        load_model_file(str(tmp_path / "missing.txt"))


@pytest.mark.parametrize("row", ["0 inf 0.5", "nan 1 0.5", "0 1.5 0.5", "-inf 1 0.2"])
def test_non_integer_node_ids_name_the_line(row):
    with pytest.raises(ConfigurationError) as excinfo:
        parse_model_file(f"n = 2\n[tree]\n{row}\n", source="m")
    assert excinfo.value.errors == ["m:3: tree: expected 'i j rho'"]
