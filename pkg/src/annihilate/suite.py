"""The default scenario battery and the adversarial negative control.

Ten scenarios spanning the kernel families, one and two species, calm and
colliding configurations, and particle counts up to 400.  Every inequality
check is expected to pass on each of them; the negative control is an
open-loop fixed-step run tuned to violate energy monotonicity, asserting
that the checks can actually fail.
"""

from __future__ import annotations


from .analysis import check_energy_monotone
from .dynamics import ParticleState, SimConfig, Trajectory, run
from .kernels import KernelPair, KernelSpec
from .scenario import Scenario, scenario_from_dict

__all__ = ["default_suite", "negative_control_trajectory"]


def _sc(name: str, **doc) -> Scenario:
    doc.setdefault("name", name)
    return scenario_from_dict(doc, default_name=name)


def default_suite() -> list[Scenario]:
    """Ten check scenarios; ``build_state()``/``sim`` feed them straight
    into the integrator."""
    sims = dict(dt_init=1e-3, tol_step=1e-8, eps_annihilate=1e-7, record_every=4)
    return [
        _sc("log_gas_small",
            kernels={"V": "log", "W": "zero"},
            initial={"blocks": [dict(sign=1, mass=1.0, profile="uniform", support=[-1.0, 1.0])]},
            n=32, sim=dict(T=1.0, **sims)),
        _sc("log_gas_large",
            kernels={"V": "log", "W": "zero"},
            initial={"blocks": [dict(sign=1, mass=1.0, profile="cosine", support=[-1.0, 1.0])]},
            n=400, sim=dict(T=0.5, **{**sims, "record_every": 20})),
        _sc("wall_gas",
            kernels={"V": "wall", "W": "zero"},
            initial={"blocks": [dict(sign=1, mass=1.0, profile="uniform", support=[-2.0, 2.0])]},
            n=64, sim=dict(T=1.0, **sims)),
        _sc("two_species_separated",
            kernels={"V": "log", "W": "reglog(0.3)"},
            initial={"blocks": [dict(sign=1, mass=0.5, profile="uniform", support=[-2.0, -1.0]),
                                dict(sign=-1, mass=0.5, profile="uniform", support=[1.0, 2.0])]},
            n=60, sim=dict(T=0.5, **sims)),
        _sc("two_species_colliding",
            kernels={"V": "log", "W": "reglog(0.1)"},
            initial={"blocks": [dict(sign=1, mass=0.5, profile="uniform", support=[-1.1, -0.1]),
                                dict(sign=-1, mass=0.5, profile="uniform", support=[0.1, 1.1])]},
            n=100, sim=dict(T=2.0, **{**sims, "eps_annihilate": 1e-6, "record_every": 10})),
        _sc("interleaved_quartet",
            kernels={"V": "log", "W": "reglog(0.1)"},
            initial={"positions": [-0.45, -0.2, 0.1, 0.5], "charges": [1, -1, 1, -1]},
            sim=dict(T=6.0, **{**sims, "eps_annihilate": 1e-8})),
        _sc("asymmetric_masses",
            kernels={"V": "log", "W": "reglog(0.2)"},
            initial={"blocks": [dict(sign=1, mass=0.75, profile="uniform", support=[-1.5, -0.2]),
                                dict(sign=-1, mass=0.25, profile="uniform", support=[0.2, 1.0])]},
            n=80, sim=dict(T=1.0, **sims)),
        _sc("tight_same_sign",
            kernels={"V": "log", "W": "zero"},
            initial={"blocks": [dict(sign=1, mass=1.0, profile="uniform", support=[0.0, 0.1])]},
            n=16, sim=dict(T=0.2, **sims)),
        _sc("wall_two_species",
            kernels={"V": "wall", "W": "reglog(0.2)"},
            initial={"blocks": [dict(sign=1, mass=0.5, profile="cosine", support=[-1.4, -0.2]),
                                dict(sign=-1, mass=0.5, profile="cosine", support=[0.2, 1.4])]},
            n=100, sim=dict(T=1.0, **sims)),
        _sc("reglog_wide_delta",
            kernels={"V": "log", "W": "reglog(0.5)"},
            initial={"blocks": [dict(sign=-1, mass=0.5, profile="uniform", support=[-1.0, -0.1]),
                                dict(sign=1, mass=0.5, profile="uniform", support=[0.1, 1.0])]},
            n=50, sim=dict(T=1.0, **sims)),
    ]


_CONTROL_DTS = (0.42, 0.41, 0.43, 0.40, 0.44, 0.39, 0.45, 0.38, 0.46, 0.35, 0.5)


def negative_control_trajectory() -> Trajectory:
    """A run engineered to violate energy monotonicity.

    Open-loop forward Euler with a huge fixed step on a same-sign log
    triple: the middle particle overshoots toward its left neighbour, and
    the energy of the near-coincident pair jumps up.  Scans a short fixed-dt
    ladder and returns the first violating trajectory.
    """
    pair = KernelPair.build(KernelSpec("log", "V"), KernelSpec("zero", "W"))
    for dt in _CONTROL_DTS:
        state = ParticleState.initial([0.0, 1.0, 1.1], [1, 1, 1])
        cfg = SimConfig(T=6 * dt, fixed_dt=dt, fixed_method="euler",
                        record_every=1, eps_annihilate=0.0)
        traj = run(state, pair, cfg)
        if not check_energy_monotone(traj).passed:
            return traj
    raise RuntimeError("negative control failed to produce an energy increase")
