"""Scenario files: reproducible experiment descriptions.

A scenario is one TOML file holding the kernel pair, the initial data
(either explicit positions/charges or signed density blocks), particle
counts, integration controls, and the continuum grid.  Block initial data
is expanded deterministically: each block of mass m_b receives n * m_b
particles placed at the quantiles (i - 1/2)/n_b of the block's profile, so
refining n keeps the block count, the energy, and the moments uniformly
bounded.  Loading validates the separation assumption: no opposite-sign
pair may start at the same position.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .continuum import Grid, GridDensityPair
from .dynamics import ParticleState, SimConfig
from .kernels import KernelPair, parse_kernel

__all__ = ["Block", "Scenario", "ScenarioError", "load_scenario"]

_PROFILES = ("uniform", "cosine")


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate."""


@dataclass(frozen=True)
class Block:
    """One signed density block: sign, mass fraction, profile on a support."""

    sign: int
    mass: float
    profile: str
    support: tuple[float, float]

    def __post_init__(self):
        if self.sign not in (-1, 1):
            raise ScenarioError(f"block sign must be +-1, got {self.sign}")
        if not 0 < self.mass <= 1:
            raise ScenarioError(f"block mass must be in (0, 1], got {self.mass}")
        if self.profile not in _PROFILES:
            raise ScenarioError(f"unknown profile {self.profile!r}; choose from {_PROFILES}")
        a, b = self.support
        if not b > a:
            raise ScenarioError(f"block support must be an interval, got {self.support}")

    # Profile CDF on the unit interval u = (x - a)/width.
    def _cdf(self, u: float) -> float:
        if self.profile == "uniform":
            return u
        return u - math.sin(2.0 * math.pi * u) / (2.0 * math.pi)

    def quantile(self, q: float) -> float:
        """Inverse CDF by bisection (brentq) against the profile CDF."""
        a, b = self.support
        u = brentq(lambda v: self._cdf(v) - q, 0.0, 1.0, xtol=1e-15, rtol=8.9e-16)
        return a + (b - a) * u

    def cell_masses(self, grid: Grid) -> np.ndarray:
        """Exact block mass per grid cell, by CDF differences."""
        a, b = self.support
        w = b - a
        edges = grid.x_min + np.arange(grid.cells + 1) * grid.dx
        u = np.clip((edges - a) / w, 0.0, 1.0)
        if self.profile == "uniform":
            F = u
        else:
            F = u - np.sin(2.0 * np.pi * u) / (2.0 * np.pi)
        return self.mass * np.diff(F)


@dataclass(frozen=True)
class Scenario:
    name: str
    pair: KernelPair
    sim: SimConfig
    positions: np.ndarray | None = None       # explicit initial data ...
    charges: np.ndarray | None = None
    blocks: tuple[Block, ...] = ()            # ... or block initial data
    n: int | None = None
    n_list: tuple[int, ...] = ()
    grid: Grid | None = None
    cfl: float = 0.4
    seed: int = 0
    outdir: str = "out"
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def explicit(self) -> bool:
        return self.positions is not None

    def build_state(self, n: int | None = None) -> ParticleState:
        """Initial particle state, either the explicit one or n quantiles."""
        if self.explicit:
            return ParticleState.initial(self.positions, self.charges)
        if n is None:
            n = self.n
        if n is None:
            raise ScenarioError("block scenario needs a particle count n")
        xs: list[float] = []
        bs: list[int] = []
        for blk in self.blocks:
            nb_f = n * blk.mass
            nb = round(nb_f)
            if abs(nb_f - nb) > 1e-9 or nb < 1:
                raise ScenarioError(
                    f"n={n} is incompatible with block mass {blk.mass}: "
                    f"n*mass = {nb_f} is not a positive integer")
            for i in range(nb):
                xs.append(blk.quantile((i + 0.5) / nb))
                bs.append(blk.sign)
        return ParticleState.initial(np.asarray(xs), np.asarray(bs))

    def continuum_initial(self) -> GridDensityPair:
        if not self.blocks:
            raise ScenarioError("continuum initial data requires block initial data")
        if self.grid is None:
            raise ScenarioError(f"scenario {self.name!r} declares no continuum grid")
        rp = np.zeros(self.grid.cells)
        rm = np.zeros(self.grid.cells)
        for blk in self.blocks:
            masses = blk.cell_masses(self.grid)
            lost = blk.mass - float(masses.sum())
            if abs(lost) > 1e-12:
                raise ScenarioError(
                    f"block {blk.support} sticks out of the grid (missing mass {lost:g})")
            (rp if blk.sign == 1 else rm)[:] += masses / self.grid.dx
        return GridDensityPair(self.grid, rp, rm, t=0.0)

    def with_sim(self, **kw) -> "Scenario":
        return replace(self, sim=replace(self.sim, **kw))


def _validate_explicit(positions: np.ndarray, charges: np.ndarray) -> None:
    if positions.size != charges.size:
        raise ScenarioError("positions and charges must have equal length")
    if not np.all(np.abs(charges) == 1):
        raise ScenarioError("initial charges must all be +1 or -1")
    for i in range(positions.size - 1):
        if positions[i + 1] == positions[i] and charges[i] * charges[i + 1] == -1:
            raise ScenarioError(
                f"separation assumption violated: opposite-sign pair "
                f"(index {i}, {i + 1}) starts at the same position {positions[i]}")
    if not np.all(np.diff(positions) > 0):
        raise ScenarioError("explicit positions must be strictly increasing")


def _validate_blocks(blocks: tuple[Block, ...]) -> None:
    total = sum(b.mass for b in blocks)
    if abs(total - 1.0) > 1e-12:
        raise ScenarioError(f"block masses must sum to 1, got {total}")
    for b1, b2 in zip(blocks, blocks[1:]):
        if b2.support[0] < b1.support[1]:
            raise ScenarioError(
                f"block supports overlap: {b1.support} and {b2.support}")


def load_scenario(path) -> Scenario:
    """Parse and validate one scenario file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except FileNotFoundError:
        raise ScenarioError(f"scenario file not found: {path}")
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: TOML parse error: {exc}")
    return scenario_from_dict(doc, default_name=path.stem)


def scenario_from_dict(doc: dict, default_name: str = "scenario") -> Scenario:
    try:
        kern = doc["kernels"]
        pair = KernelPair.build(parse_kernel(kern["V"], "V"), parse_kernel(kern["W"], "W"))
    except KeyError as exc:
        raise ScenarioError(f"missing kernel table entry: {exc}")
    except ValueError as exc:
        raise ScenarioError(f"bad [kernels] table: {exc}")

    sim_doc = dict(doc.get("sim", {}))
    if "T" not in sim_doc:
        raise ScenarioError("sim.T (time horizon) is required")
    try:
        sim = SimConfig(**sim_doc)
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"bad [sim] table: {exc}")

    init = doc.get("initial", {})
    positions = charges = None
    blocks: tuple[Block, ...] = ()
    if "positions" in init or "charges" in init:
        if "positions" not in init or "charges" not in init:
            raise ScenarioError("explicit initial data needs both positions and charges")
        positions = np.asarray(init["positions"], dtype=float)
        charges = np.asarray(init["charges"], dtype=int)
        _validate_explicit(positions, charges)
    if "blocks" in init:
        if positions is not None:
            raise ScenarioError("give either explicit positions or blocks, not both")
        blocks = tuple(
            Block(sign=int(b["sign"]), mass=float(b["mass"]),
                  profile=str(b.get("profile", "uniform")),
                  support=(float(b["support"][0]), float(b["support"][1])))
            for b in init["blocks"]
        )
        _validate_blocks(blocks)
    if positions is None and not blocks:
        raise ScenarioError("scenario declares no initial data")

    grid = None
    cfl = 0.4
    if "continuum" in doc:
        c = doc["continuum"]
        try:
            grid = Grid(float(c["x_min"]), float(c["x_max"]), int(c["cells"]))
        except (KeyError, ValueError) as exc:
            raise ScenarioError(f"bad [continuum] table: {exc}")
        cfl = float(c.get("cfl", 0.4))

    return Scenario(
        name=str(doc.get("name", default_name)),
        pair=pair,
        sim=sim,
        positions=positions,
        charges=charges,
        blocks=blocks,
        n=int(doc["n"]) if "n" in doc else None,
        n_list=tuple(int(v) for v in doc.get("n_list", ())),
        grid=grid,
        cfl=cfl,
        seed=int(doc.get("seed", 0)),
        outdir=str(doc.get("output", {}).get("directory", "out")),
        raw=doc,
    )
