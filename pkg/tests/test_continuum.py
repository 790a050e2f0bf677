import math
import pickle

import numpy as np
import pytest

from oracles import chain_projection_columns
from szegolab import continuum
from szegolab.continuum import (ContinuumError, bound_states, free_kernel, nystrom_spectrum, perturbed_kernel,
                                solve_scattering)
from szegolab.lattice import fermi_projection, lattice_operator
from szegolab.model import make_domain, make_potential, scale_domain

WELL = make_potential("square", v0=-5, a=1)


@pytest.fixture(scope="module")
def well_kernel():
    return perturbed_kernel(WELL, 4.0, extent=10.0)


def test_free_kernel_values():
    K = free_kernel(4.0, 1)
    assert K(0.3, 0.3) == pytest.approx(2 / math.pi, rel=1e-15)
    assert abs(K(0.0, math.pi / 2)) < 1e-16
    K2 = free_kernel(4.0, 2)
    assert K2(np.zeros(2), np.zeros(2)) == pytest.approx(4 / (4 * math.pi), rel=1e-15)


def test_free_kernel_series_is_continuous():
    K = free_kernel(9.0, 1)
    d = np.array([0.0, 1e-9, 1e-6, 3.3e-5, 3.4e-5, 1e-3])
    exact = np.where(d == 0, 3 / math.pi, np.sin(3 * d) / (math.pi * np.where(d == 0, 1, d)))
    np.testing.assert_allclose(K(d, 0.0), exact, rtol=1e-14)


def test_free_scattering():
    s = solve_scattering(make_potential("zero"), 1.3)
    assert s.t == 1 and s.r == 0


@pytest.mark.parametrize("k", [0.4, 1.0, 2.0, 3.3])
def test_square_well_transmission(k):
    v0, a = -5.0, 1.0
    kp = math.sqrt(k * k - v0)
    expect = 1 / (1 + v0 ** 2 * math.sin(2 * kp * a) ** 2 / (4 * k * k * kp * kp))
    s = solve_scattering(WELL, k)
    assert abs(s.t) ** 2 == pytest.approx(expect, abs=1e-9)
    assert s.flux_defect < 1e-9


@pytest.mark.parametrize("V", [make_potential("square", v0=5, a=1), make_potential("bump", v0=-3, a=1.5),
                               make_potential("wells", wells=((-2.0, -4.0, 0.5), (1.5, 2.0, 0.7)))])
def test_flux_conservation(V):
    for k in (0.3, 1.1, 2.0):
        s = solve_scattering(V, k)
        assert s.flux_defect < 1e-9
        assert abs(s.r_right) ** 2 + abs(s.t_right) ** 2 == pytest.approx(1.0, abs=1e-9)


def test_repulsive_has_no_bound_states():
    assert bound_states(make_potential("square", v0=5, a=1)) == []
    assert bound_states(make_potential("zero")) == []


def test_square_well_bound_states():
    states = bound_states(WELL)
    # even: k' tan(k' a) = kappa, odd: -k' cot(k' a) = kappa, with k'^2 + kappa^2 = 5
    z0 = math.sqrt(5.0)
    n_even = math.floor(z0 / math.pi) + 1
    n_odd = math.floor(z0 / math.pi + 0.5)
    assert len(states) == n_even + n_odd
    op = lattice_operator(1, 0.02, 30.0, WELL)
    lat = np.linalg.eigvalsh(op.matrix())
    assert int(np.sum(lat < 0)) == len(states)
    x = np.linspace(-30, 30, 600001)
    for b in states:
        assert np.trapezoid(b(x) ** 2, x) == pytest.approx(1.0, abs=1e-8)
        kp = math.sqrt(5.0 + b.energy)
        even = kp * math.tan(kp) - b.kappa
        odd = -kp / math.tan(kp) - b.kappa
        assert min(abs(even), abs(odd)) < 1e-9


def test_perturbed_kernel_reduces_to_free(rng):
    K = perturbed_kernel(make_potential("zero"), 4.0, extent=8.0)
    F = free_kernel(4.0, 1)
    x, y = rng.uniform(-8, 8, (2, 200))
    np.testing.assert_allclose(K(x, y), F(x, y), atol=1e-8)


def test_perturbed_kernel_positive_diagonal_and_symmetric(well_kernel, rng):
    x = rng.uniform(-10, 10, 300)
    assert np.all(well_kernel(x, x) >= 0)
    y = rng.uniform(-10, 10, 300)
    np.testing.assert_array_equal(well_kernel(x, y), well_kernel(y, x))


def test_perturbed_kernel_matches_infinite_chain(well_kernel, rng):
    h = 0.02
    cols = np.arange(150, 1050, 9)
    x, P = chain_projection_columns(WELL, 4.0, h, 12.0, cols)
    rows = rng.integers(150, 1050, 100)
    which = rng.integers(0, cols.size, 100)
    lattice_vals = P[rows, which] / h
    err = np.abs(lattice_vals - well_kernel(x[rows], x[cols[which]]))
    assert err.max() < 1e-3


def test_chain_oracle_reproduces_free_kernel(rng):
    h = 0.02
    cols = np.arange(150, 1050, 9)
    x, P = chain_projection_columns(make_potential("zero"), 4.0, h, 12.0, cols)
    rows = rng.integers(150, 1050, 100)
    which = rng.integers(0, cols.size, 100)
    F = free_kernel(4.0, 1)
    assert np.max(np.abs(P[rows, which] / h - F(x[rows], x[cols[which]]))) < 1e-3


def test_kernel_pickles(well_kernel):
    K2 = pickle.loads(pickle.dumps(well_kernel))
    np.testing.assert_array_equal(K2(np.array([0.3]), np.array([-2.0])),
                                  well_kernel(np.array([0.3]), np.array([-2.0])))


def test_kernel_extent_enforced(well_kernel):
    with pytest.raises(ContinuumError):
        nystrom_spectrum(well_kernel, scale_domain(make_domain("interval", -1, 1), 20.0))


def test_nystrom_free_trace():
    E = 4.0
    dom = scale_domain(make_domain("interval", -1, 1), 50.0)  # k_F |Lambda_L| = 200
    spectrum = nystrom_spectrum(free_kernel(E, 1), dom)
    assert spectrum.trace == pytest.approx(200 / math.pi, rel=5e-3)
    # eigenvalue count above 1/2 tracks the trace
    assert abs(np.sum(spectrum.eigenvalues > 0.5) - spectrum.trace) < 0.05 * spectrum.trace


def test_nystrom_small_interval_rank_one():
    E = 4.0
    dom = make_domain("interval", -0.01, 0.01)
    ev = np.sort(nystrom_spectrum(free_kernel(E, 1), dom).eigenvalues)
    assert ev[-1] == pytest.approx(2 * 0.02 / math.pi, rel=1e-3)
    assert ev[-2] < 1e-6


def test_nystrom_node_density_guard():
    with pytest.raises(ContinuumError):
        nystrom_spectrum(free_kernel(4.0, 1), make_domain("interval", -1, 1), nodes_per_wavelength=4)


def test_nystrom_two_dimensional_traces():
    E = 16.0
    for dom in (make_domain("square", 1.0), make_domain("disk", 1.0)):
        spectrum = nystrom_spectrum(free_kernel(E, 2), dom, nodes_per_wavelength=8)
        assert spectrum.trace == pytest.approx(E / (4 * math.pi) * dom.volume, rel=1e-6)


def test_nystrom_perturbed_matches_lattice(well_kernel):
    # truncated traces of the continuum and a fine lattice agree to the lattice accuracy
    dom = scale_domain(make_domain("interval", -1, 1), 5.0)
    cont = nystrom_spectrum(well_kernel, dom).trace
    op = lattice_operator(1, 0.02, 400.0, WELL)
    from szegolab.lattice import truncate_spectrum
    lat = truncate_spectrum(fermi_projection(op, 4.0), dom, op).trace
    assert lat == pytest.approx(cont, rel=5e-3)
