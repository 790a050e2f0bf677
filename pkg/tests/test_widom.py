import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import renyi_mp, widom_mp
from szegolab.model import make_domain
from szegolab.testfn import identity, linear_combination, poly_basis, renyi
from szegolab.widom import WidomError, entropy_slope, n0, predict_trace, sigma0, widom_functional


def test_n0_conventions():
    assert n0(1.0, 1, "as_printed") == pytest.approx(1 / (2 * math.sqrt(math.pi)), rel=1e-15)
    assert n0(1.0, 1, "weyl") == pytest.approx(1 / math.pi, rel=1e-15)
    assert n0(1.0, 1) == n0(1.0, 1, "weyl")
    assert n0(0.0, 2) == 0.0
    with pytest.raises(WidomError):
        n0(1.0, 1, "other")


def test_sigma0():
    assert sigma0(3.7, 1) == 2.0
    assert sigma0(4 * math.pi, 2) == pytest.approx(4 / math.sqrt(math.pi), rel=1e-15)
    assert sigma0(4 * math.pi, 3) == pytest.approx(2.0, rel=1e-15)


def test_widom_golden_values():
    assert widom_functional(identity()) == 0.0
    assert widom_functional(poly_basis(1)) == pytest.approx(1 / (4 * math.pi ** 2), abs=1e-12)
    assert widom_functional(renyi(1, "bits")) == pytest.approx(1 / (12 * math.log(2)), abs=1e-10)


@pytest.mark.parametrize("alpha", [0.6, 2.0, 5.0])
def test_widom_renyi_closed_form(alpha):
    assert widom_functional(renyi(alpha), tol=1e-12) == pytest.approx((1 + 1 / alpha) / 24, abs=1e-11)


@pytest.mark.parametrize("alpha", [0.6, 1.0, 2.0, 5.0])
def test_widom_against_mpmath(alpha):
    assert widom_functional(renyi(alpha)) == pytest.approx(widom_mp(renyi_mp(alpha)), abs=1e-8)


def test_widom_polynomial_against_mpmath():
    def a2(lam):
        return lam * (lam * (1 - lam)) ** 2
    assert widom_functional(poly_basis(2, "a")) == pytest.approx(widom_mp(a2), abs=1e-10)


_basis = [poly_basis(n, k) for n in (1, 2, 3) for k in ("s", "a")] + [identity()]
_values = [widom_functional(h) for h in _basis]


@settings(max_examples=500, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=len(_basis), max_size=len(_basis)))
def test_widom_linearity(coeffs):
    h = linear_combination(coeffs, _basis)
    expect = sum(c * v for c, v in zip(coeffs, _values))
    assert widom_functional(h) == pytest.approx(expect, abs=1e-9)


@settings(max_examples=500, deadline=None)
@given(st.lists(st.floats(0, 5), min_size=3, max_size=3))
def test_widom_positivity_on_concave_combinations(coeffs):
    # non-negative combinations of s_n are non-negative with h(1) = 0
    h = linear_combination(coeffs, [poly_basis(n) for n in (1, 2, 3)])
    assert widom_functional(h) >= -1e-12


def test_predict_trace_examples():
    dom = make_domain("interval", -1, 1)
    p = predict_trace(poly_basis(1), 4.0, dom)
    assert p.a_pred == 0.0 and p.b_pred == pytest.approx(1 / math.pi ** 2, rel=1e-10)
    assert predict_trace(identity(), 2.5, dom).b_pred == 0.0
    assert predict_trace(renyi(1), 9.0, dom).b_pred == pytest.approx(1 / 3, rel=1e-10)
    # scaled domains report the unscaled coefficients
    from szegolab.model import scale_domain
    assert predict_trace(renyi(1), 9.0, scale_domain(dom, 7)).b_pred == pytest.approx(1 / 3, rel=1e-10)


def test_entropy_slope():
    dom1 = make_domain("interval", -1, 1)
    with pytest.raises(WidomError):
        entropy_slope(1.0, 4.0, dom1)
    assert entropy_slope(2.0, 4.0, dom1) == pytest.approx(0.25, rel=1e-10)
    sq = make_domain("square", 1.0)
    expect = 4 / math.sqrt(math.pi) / 12 * 8
    assert entropy_slope(1.0, 4 * math.pi, sq) == pytest.approx(expect, rel=1e-10)
