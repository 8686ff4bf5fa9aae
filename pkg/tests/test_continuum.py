"""Finite-volume solver: conservation, positivity, decay, convergence."""

import numpy as np
import pytest

from annihilate.continuum import (Grid, GridDensityPair, force_field,
                                  run_continuum, step_fv, to_measure)
from annihilate.kernels import eval_prime
from annihilate.measures import wasserstein2
from annihilate.scenario import scenario_from_dict


def bump_density(grid, center, width, mass):
    """Smooth compactly supported cell-averaged bump (cosine profile)."""
    edges = grid.x_min + np.arange(grid.cells + 1) * grid.dx
    u = np.clip((edges - (center - width / 2)) / width, 0.0, 1.0)
    F = u - np.sin(2 * np.pi * u) / (2 * np.pi)
    return mass * np.diff(F) / grid.dx


def overlap_scenario(cells=256):
    return scenario_from_dict(dict(
        name="overlap",
        kernels={"V": "log", "W": "reglog(0.1)"},
        initial={"blocks": [
            dict(sign=1, mass=0.5, profile="cosine", support=[-1.1, -0.1]),
            dict(sign=-1, mass=0.5, profile="cosine", support=[0.1, 1.1])]},
        sim=dict(T=1.0),
        continuum=dict(x_min=-4.0, x_max=4.0, cells=cells, cfl=0.4),
    ))


def test_zero_kappa_gives_zero_field_and_frozen_step(attract_pair):
    grid = Grid(-2.0, 2.0, 128)
    rho = bump_density(grid, 0.0, 1.0, 0.5)
    dens = GridDensityPair(grid, rho, rho.copy())   # rho+ = rho-: kappa = 0
    u = force_field(dens, attract_pair, "+")
    assert np.all(u == 0.0)
    out = step_fv(dens, attract_pair, 1e-3)
    assert np.array_equal(out.rho_plus, dens.rho_plus)
    assert np.array_equal(out.rho_minus, dens.rho_minus)


def test_symmetric_bump_antisymmetric_field(log_pair):
    grid = Grid(-2.0, 2.0, 128)
    dens = GridDensityPair(grid, bump_density(grid, 0.0, 1.0, 1.0), np.zeros(128))
    u = force_field(dens, log_pair, "+")
    assert np.allclose(u, -u[::-1], atol=1e-12)


def test_force_field_against_fine_quadrature(log_pair):
    """Far-separated same-sign bumps repel; the field each bump induces on
    the other is smooth and must match a 10x-resolution midpoint quadrature."""
    grid = Grid(-4.0, 4.0, 160)
    left = bump_density(grid, -2.0, 1.0, 0.5)
    right = bump_density(grid, 2.0, 1.0, 0.5)
    dens = GridDensityPair(grid, left + right, np.zeros(grid.cells))
    u = force_field(dens, log_pair, "+")
    # field induced by the left bump alone, evaluated on the right bump's
    # cells, is a smooth convolution: the coarse sum must match the fine one
    u_left_only = force_field(GridDensityPair(grid, left, np.zeros(grid.cells)),
                              log_pair, "+")

    fine = Grid(-4.0, 4.0, 1600)
    rho_f = bump_density(fine, -2.0, 1.0, 0.5)
    mask = right > 1e-6
    for i in np.flatnonzero(mask):
        x = grid.centers[i]
        ref = -np.sum(rho_f * eval_prime(log_pair.V, x - fine.centers)) * fine.dx
        assert u_left_only[i] == pytest.approx(ref, rel=1e-3, abs=1e-6)
    # mutual repulsion: the left bump pushes the right bump rightward
    # (V'(x - y) < 0 for x > y, so -rho * V' > 0), and the bumps spread
    assert np.all(u_left_only[mask] > 0)
    assert u[np.flatnonzero(left > 1e-6)[0]] < 0 < u[np.flatnonzero(right > 1e-6)[-1]]


def test_step_conserves_species_masses():
    sc = overlap_scenario()
    dens = sc.continuum_initial()
    out = step_fv(dens, sc.pair, 1e-3)
    assert out.mass("+") == pytest.approx(dens.mass("+"), abs=1e-14)
    assert out.mass("-") == pytest.approx(dens.mass("-"), abs=1e-14)


def test_cfl_violation_raises():
    sc = overlap_scenario()
    with pytest.raises(ValueError):
        step_fv(sc.continuum_initial(), sc.pair, 10.0)


def test_run_conservation_positivity_kappa_decay():
    sc = overlap_scenario()
    snaps = run_continuum(sc.continuum_initial(), sc.pair, T=1.5, cfl=0.4,
                          snapshot_times=[0.5, 1.0, 1.5])
    assert [round(s.t, 10) for s in snaps] == [0.0, 0.5, 1.0, 1.5]
    m0p, m0m = snaps[0].mass("+"), snaps[0].mass("-")
    for s in snaps:
        assert s.mass("+") == pytest.approx(m0p, abs=1e-12)
        assert s.mass("-") == pytest.approx(m0m, abs=1e-12)
        assert np.all(s.rho_plus >= 0) and np.all(s.rho_minus >= 0)
    tv = [s.kappa_mass for s in snaps]
    assert all(b <= a + 1e-12 for a, b in zip(tv, tv[1:]))
    assert tv[-1] < tv[0]      # annihilation actually happened


def test_zero_species_stays_zero(log_pair):
    grid = Grid(-2.0, 2.0, 128)
    dens = GridDensityPair(grid, bump_density(grid, 0.0, 1.0, 1.0), np.zeros(128))
    snaps = run_continuum(dens, log_pair, T=0.3, cfl=0.4)
    assert np.all(snaps[-1].rho_minus == 0.0)


def test_single_species_support_spreads(log_pair):
    grid = Grid(-3.0, 3.0, 256)
    dens = GridDensityPair(grid, bump_density(grid, 0.0, 1.0, 1.0), np.zeros(256))
    snaps = run_continuum(dens, log_pair, T=0.5, cfl=0.4, snapshot_times=[0.25, 0.5])
    def radius(s):
        live = s.grid.centers[s.rho_plus > 1e-9]
        return live.max() - live.min()
    r = [radius(s) for s in snaps]
    assert r[0] < r[1] < r[2]


def test_self_convergence_first_order():
    dists = []
    for cells in (128, 256, 512):
        sc = overlap_scenario(cells)
        snaps = run_continuum(sc.continuum_initial(), sc.pair, T=1.0, cfl=0.4)
        dists.append(snaps[-1])
    ds = []
    for a, b in zip(dists, dists[1:]):
        ds.append(np.hypot(wasserstein2(to_measure(a, "+"), to_measure(b, "+")),
                           wasserstein2(to_measure(a, "-"), to_measure(b, "-"))))
    assert ds[1] < ds[0]
    assert 0.3 < ds[1] / ds[0] < 0.7          # first order in dx


def test_to_measure_roundtrip():
    sc = overlap_scenario(128)
    dens = sc.continuum_initial()
    mp = to_measure(dens, "+")
    assert mp.mass == pytest.approx(dens.mass("+"), abs=1e-14)
    empty = GridDensityPair(Grid(0.0, 1.0, 8), np.zeros(8), np.zeros(8))
    assert to_measure(empty, "+").size == 0
