import math

import numpy as np
import pytest

from szegolab.model import ModelConfig, ModelError, make_domain, make_potential, scale_domain


@pytest.mark.parametrize("kind,params,vol,surf", [
    ("interval", (-1, 1), 2.0, 2.0),
    ("square", (1.0,), 4.0, 8.0),
    ("disk", (1.0,), math.pi, 2.0 * math.pi),
])
def test_domain_measures(kind, params, vol, surf):
    dom = make_domain(kind, *params)
    assert dom.volume == pytest.approx(vol, rel=1e-15)
    assert dom.surface == pytest.approx(surf, rel=1e-15)


def test_scale_domain():
    dom = scale_domain(make_domain("interval", -1, 1), 10)
    assert dom.params == (-10.0, 10.0) and dom.volume == 20.0
    assert scale_domain(make_domain("square", 1.0), 5).surface == 40.0
    base = make_domain("disk", 2.0)
    assert scale_domain(base, 1.0) == base
    assert scale_domain(scale_domain(base, 3.0), 2.0).unscaled == base


def test_scale_domain_rejects_shrinking():
    with pytest.raises(ModelError):
        scale_domain(make_domain("interval", -1, 1), 0.5)


def test_domain_validation():
    with pytest.raises(ModelError):
        make_domain("interval", 0.5, 1)
    with pytest.raises(ModelError):
        make_domain("triangle", 1)
    with pytest.raises(ModelError):
        make_domain("square", -1)


def test_zero_potential():
    V = make_potential("zero")
    assert np.all(V(np.linspace(-5, 5, 11)) == 0.0)
    assert V.support == 0.0 and V.is_zero


def test_square_well():
    V = make_potential("square", v0=-5, a=1)
    assert V(np.array([0.5]))[0] == -5.0
    assert V(np.array([2.0]))[0] == 0.0
    assert V.sup_norm == 5.0


def test_bump():
    V = make_potential("bump", v0=3, a=1)
    vals = V(np.array([0.0, 1.0, -1.0, 0.999999]))
    assert vals[0] == pytest.approx(3.0)
    assert vals[1] == 0.0 and vals[2] == 0.0
    assert 0.0 <= vals[3] < 1e-100


def test_config_guards():
    dom = make_domain("interval", -1, 1)
    with pytest.raises(ModelError):
        ModelConfig(E=-1.0, domain=dom)
    with pytest.raises(ModelError):
        ModelConfig(E=4.0, domain=dom, engine="lattice", spacing=0.1)
    with pytest.raises(ModelError):
        ModelConfig(E=4.0, domain=dom, potential=make_potential("square", d=2, v0=1, a=1))


def test_box_rule_is_on_grid_and_covers_region():
    cfg = ModelConfig(E=4.0, domain=make_domain("interval", -1, 1), engine="lattice", spacing=0.05)
    for L in (3.0, 17.3, 120.0):
        R = cfg.box_for(L)
        assert R >= L + 5.0
        assert abs(R / 0.05 - round(R / 0.05)) < 1e-9
    fixed = ModelConfig(E=4.0, domain=make_domain("interval", -1, 1), engine="lattice",
                        spacing=0.05, box_half_width=20.0)
    with pytest.raises(ModelError):
        fixed.box_for(18.0)
