import math

import numpy as np
import pytest

from szegolab import lattice
from szegolab.cache import EigenCache
from szegolab.lattice import (block_norm_decay, fermi_projection, ids_estimate, lattice_operator, sturm_count,
                              truncate_spectrum)
from szegolab.model import ModelConfig, ModelError, Potential, make_domain, make_potential, scale_domain
from szegolab.spectrum import SpectrumError, clip_unit

ZERO1 = Potential(1, "zero")


def _op1(R, h, V=ZERO1):
    return lattice_operator(1, h, R, V)


def test_three_site_spectrum():
    op = lattice_operator(1, 1.0, 2.0, ZERO1)
    assert op.n_sites == 3
    ev = np.linalg.eigvalsh(op.matrix())
    np.testing.assert_allclose(ev, [2 - math.sqrt(2), 2, 2 + math.sqrt(2)], rtol=1e-14)


def test_constant_potential_shifts_spectrum():
    c = 0.37
    V = make_potential("square", v0=c, a=10.0)
    op0, opc = _op1(5.0, 0.5), _op1(5.0, 0.5, V)
    np.testing.assert_allclose(np.linalg.eigvalsh(opc.matrix()), np.linalg.eigvalsh(op0.matrix()) + c,
                               atol=1e-12)


def test_two_dimensional_ground_state():
    n, h = 9, 0.5
    op = lattice_operator(2, h, h * (n + 1) / 2, Potential(2, "zero"))
    assert op.n_side == n
    lam = (2 / h ** 2) * 2 * (1 - math.cos(math.pi / (n + 1)))
    assert np.linalg.eigvalsh(op.matrix())[0] == pytest.approx(lam, rel=1e-12)


def test_projection_limits():
    op = _op1(3.0, 0.5)
    assert fermi_projection(op, 1e-3).count == 0
    full = fermi_projection(op, 1e3)
    np.testing.assert_allclose(full.matrix(), np.eye(op.n_sites), atol=1e-12)


@pytest.mark.parametrize("V", [ZERO1, make_potential("square", v0=-5, a=1)])
def test_projection_rank_and_idempotence(V):
    op = _op1(10.0, 0.1, V)
    fp = fermi_projection(op, 4.0)
    ev = np.linalg.eigvalsh(op.matrix())
    assert fp.count == int(np.sum(ev < 4.0))
    assert np.trace(fp.matrix()) == pytest.approx(fp.count, abs=1e-9)
    idem, sym = fp.residuals()
    assert idem < 1e-12 and sym < 1e-14
    assert sturm_count(op.diagonal(), op.offdiag, 4.0) == fp.count


def test_closed_form_matches_lapack():
    for d, R, h in ((1, 20.0, 0.05), (2, 2.0, 0.1)):
        op = lattice_operator(d, h, R, Potential(d, "zero"))
        a = fermi_projection(op, 4.3, "closed_form")
        b = fermi_projection(op, 4.3, "lapack")
        assert a.count == b.count
        np.testing.assert_allclose(a.energies, b.energies, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(a.matrix(), b.matrix(), atol=1e-9)


def test_degenerate_fermi_level_rejected():
    op = _op1(2.0, 0.5)
    E = float(np.linalg.eigvalsh(op.matrix())[1])
    with pytest.raises(lattice.DegenerateFermiLevel):
        fermi_projection(op, E)


def test_site_cap():
    with pytest.raises(ModelError):
        lattice_operator(1, 0.01, 100.0, ZERO1, site_cap=1000)


def test_truncation_whole_box_returns_projector_spectrum():
    op = _op1(10.0, 0.1)
    fp = fermi_projection(op, 4.0)
    region = make_domain("interval", -9.999, 9.999)
    spectrum = truncate_spectrum(fp, region, op)
    assert np.sum(spectrum.eigenvalues > 0.5) == fp.count
    assert np.all((spectrum.eigenvalues < 1e-10) | (spectrum.eigenvalues > 1 - 1e-10))


def test_truncated_trace_matches_density():
    E, h = 4.0, 0.05
    op = _op1(200.0, h)
    fp = fermi_projection(op, E)
    region = scale_domain(make_domain("interval", -1, 1), 20.0)
    spectrum = truncate_spectrum(fp, region, op)
    expect = math.sqrt(E) / math.pi * region.volume
    assert spectrum.trace == pytest.approx(expect, rel=0.02)


def test_truncated_trace_monotone_in_region():
    op = _op1(40.0, 0.1, make_potential("square", v0=-5, a=1))
    fp = fermi_projection(op, 4.0)
    traces = [truncate_spectrum(fp, scale_domain(make_domain("interval", -1, 1), L), op).trace
              for L in (1.0, 2.0, 4.0, 8.0, 16.0)]
    assert np.all(np.diff(traces) >= -1e-12)


def test_clip_policy():
    np.testing.assert_array_equal(clip_unit(np.array([-5e-7, 0.5, 1 + 5e-7])), [0.0, 0.5, 1.0])
    with pytest.raises(SpectrumError):
        clip_unit(np.array([-1e-3, 0.5]))


def test_ids_estimate():
    assert ids_estimate(0.0) == 0.0
    est = ids_estimate(1.0, 1)
    assert 0.315 <= est <= 0.322
    assert ids_estimate(4.0, 1) / est == pytest.approx(2.0, rel=5e-3)


def test_ids_estimate_against_continuum_box_formula():
    # Dirichlet box [-R, R]: eigenvalues (n pi / 2R)^2, n >= 1
    R, E = 1000.0, 1.0
    count = math.floor(2 * R * math.sqrt(E) / math.pi)
    assert ids_estimate(E, 1, R=R) == pytest.approx(count / (2 * R), abs=1e-3)


def test_ids_estimate_two_dimensions():
    assert ids_estimate(4.0, 2) == pytest.approx(4.0 / (4 * math.pi), rel=5e-3)


def test_block_norm_decay_free_is_zero():
    op = _op1(60.0, 0.1)
    fp = fermi_projection(op, 4.0)
    res = block_norm_decay(fp, fp, op)
    assert np.all(res.norms == 0.0)


def test_block_norm_decay_square_well():
    V = make_potential("square", v0=-5, a=1)
    op = _op1(60.0, 0.05, V)
    op0 = _op1(60.0, 0.05)
    fp, fp0 = fermi_projection(op, 4.5), fermi_projection(op0, 4.5)
    res = block_norm_decay(fp, fp0, op)
    np.testing.assert_allclose(res.norms, res.norms.T, rtol=1e-10, atol=1e-14)
    assert res.exponent == pytest.approx(1.0, abs=0.3)


def test_cache_replay(tmp_path):
    op = _op1(30.0, 0.05, make_potential("square", v0=-5, a=1))
    cache = EigenCache(tmp_path)
    a = fermi_projection(op, 4.0, cache=cache)
    b = fermi_projection(op, 4.0, cache=cache)
    assert cache.misses == 1 and cache.hits == 1
    np.testing.assert_array_equal(a.vectors, b.vectors)
    # the key includes E
    fermi_projection(op, 4.2, cache=cache)
    assert cache.misses == 2


def test_cache_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("SZEGO_CACHE_DIR", str(tmp_path / "env"))
    cache = EigenCache.from_config(str(tmp_path / "cfg"))
    assert cache.directory == tmp_path / "env"
