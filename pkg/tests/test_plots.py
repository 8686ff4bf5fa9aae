"""Figure rendering smoke tests: every plot function produces a PNG."""

import numpy as np

from annihilate.analysis import convergence_study
from annihilate.continuum import run_continuum
from annihilate.dynamics import ParticleState, SimConfig, run
from annihilate.plots import (plot_continuum, plot_convergence, plot_energy,
                              plot_trajectory, save_figure)
from annihilate.scenario import scenario_from_dict


def tiny_scenario():
    return scenario_from_dict(dict(
        name="tiny",
        kernels={"V": "log", "W": "reglog(0.2)"},
        initial={"blocks": [dict(sign=1, mass=0.5, profile="uniform",
                                 support=[-1.0, -0.2]),
                            dict(sign=-1, mass=0.5, profile="uniform",
                                 support=[0.2, 1.0])]},
        n_list=[8, 16],
        sim=dict(T=0.2, tol_step=1e-7, eps_annihilate=1e-7),
        continuum=dict(x_min=-3.0, x_max=3.0, cells=64, cfl=0.4)))


def test_all_figures_render(tmp_path):
    sc = tiny_scenario()
    traj = run(sc.build_state(8), sc.pair, sc.sim)
    snaps = run_continuum(sc.continuum_initial(), sc.pair, 0.2, cfl=0.4,
                          snapshot_times=[0.1, 0.2])
    table = convergence_study(sc)
    for name, fig in (("traj", plot_trajectory(traj)),
                      ("energy", plot_energy(traj)),
                      ("cont", plot_continuum(snaps)),
                      ("conv", plot_convergence(table))):
        path = tmp_path / f"{name}.png"
        save_figure(fig, path)
        assert path.stat().st_size > 0
