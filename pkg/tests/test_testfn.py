import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from szegolab import testfn as tf
from szegolab.testfn import check_membership, from_name, identity, linear_combination, poly_basis, renyi, \
    shift_to_vanishing


def test_renyi_values():
    assert renyi(1, "bits")(0.5) == pytest.approx(1.0, rel=1e-15)
    assert renyi(2, "bits")(0.5) == pytest.approx(1.0, rel=1e-15)
    for a in (0.4, 1, 2, 5):
        assert renyi(a)(0.0) == 0.0
        assert renyi(a)(1.0) == 0.0


@given(st.floats(0.0, 1.0), st.sampled_from([0.5, 1.0, 2.0, 5.0]))
def test_renyi_mirror_symmetry_is_exact(lam, alpha):
    # only pairs where 1 - lam is exact in floating point
    assume(1.0 - (1.0 - lam) == lam)
    h = renyi(alpha)
    assert h(lam) == h(1.0 - lam)


def test_poly_basis_values():
    assert poly_basis(1)(0.5) == 0.25
    assert poly_basis(1, "a")(0.5) == 0.125
    assert poly_basis(2)(0.5) == 0.0625
    with pytest.raises(tf.TestFunctionError):
        poly_basis(0)


def test_shift_to_vanishing():
    h = shift_to_vanishing(identity())
    assert np.all(h(np.linspace(0, 1, 7)) == 0.0)
    s1 = poly_basis(1)
    assert shift_to_vanishing(s1) is s1
    # lam^2 = lam - s_1
    lam2 = linear_combination([1.0, -1.0], [identity(), poly_basis(1)], label="lam^2")
    shifted = shift_to_vanishing(lam2)
    assert shifted(0.5) == pytest.approx(-0.25, abs=1e-15)


def test_from_name():
    assert from_name("renyi:2:bits").label == "renyi:2:bits"
    assert from_name("s:3")(0.5) == 0.5 ** 6
    assert from_name("id")(0.3) == 0.3
    for bad in ("bogus", "renyi:x", "s:0"):
        with pytest.raises(tf.TestFunctionError, match="bogus|renyi|s:0"):
            from_name(bad)


def test_membership_examples():
    assert check_membership(renyi(2), 1).in_H_d
    assert not check_membership(renyi(1), 1).in_H_d
    rep = check_membership(identity(), 2)
    assert rep.in_H_d and not rep.in_H_d0


@pytest.mark.parametrize("alpha", [0.4, 0.6, 1.0, 1.5, 2.0, 5.0])
@pytest.mark.parametrize("d", [1, 2, 3])
def test_membership_rule(alpha, d):
    assert check_membership(renyi(alpha), d).in_H_d == (d > 1.0 / alpha)


def test_membership_estimated_exponent():
    rep = check_membership(renyi(0.4), 2)
    assert rep.estimated_alpha == pytest.approx(0.4, abs=0.02)
    assert rep.cross_check_ok


def test_membership_rejects_bad_dimension():
    with pytest.raises(tf.TestFunctionError):
        check_membership(poly_basis(1), 0)
