import numpy as np
import pytest

from finslab import catalog, jets
from finslab.expressions import ExpressionError, compile_expression
from finslab.metric import PseudoFinslerMetric


def test_numeric_and_jet_evaluation_agree():
    f = compile_expression("sqrt(y0^2 + y1^2) + b*sin(x1)*y0", 2, {"b": 0.2})
    x = np.array([[0.1, 0.4]])
    y = np.array([[0.6, -0.8]])
    numeric = f(list(x.T), list(y.T))
    xs, ys = jets.variables(x, y, 2, 1)
    assert f(xs, ys).value == pytest.approx(numeric)


def test_subscript_form_and_constants():
    f = compile_expression("x[0] * y[1] + pi - e", 2)
    assert f([2.0, 0.0], [0.0, 3.0]) == pytest.approx(6.0 + np.pi - np.e)


@pytest.mark.parametrize("text, fragment", [
    ("y2", "out of range"),
    ("z0", "unknown name"),
    ("__import__('os')", "unsupported"),
    ("y0.real", "unsupported"),
    ("y0 ** y1", "literal"),
    ("lambda: 1", "unsupported"),
    ("y0 +", "syntax"),
    ("", "empty"),
    ("tan(y0)", "unsupported"),
])
def test_rejected_constructs(text, fragment):
    with pytest.raises(ExpressionError, match=fragment):
        compile_expression(text, 2)


def test_expression_metric_matches_catalog():
    n = 3
    f = compile_expression("(sqrt(y0^2+y1^2+y2^2) + 0.3*y0)^2", n)
    user = PseudoFinslerMetric(lambda x, y: f(x, y), n, box=[[-1, 1]] * n)
    ref = catalog.randers(n=3, b=[0.3, 0, 0])
    rng = np.random.default_rng(3)
    x = rng.uniform(-1, 1, (5, n))
    y = rng.normal(size=(5, n))
    np.testing.assert_allclose(user.berwald.values(x, y), ref.berwald.values(x, y),
                               atol=1e-13)
