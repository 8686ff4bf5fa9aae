"""Interaction potentials for same-sign (V) and opposite-sign (W) particles.

Four families are supported:

* ``log``      -- V(r) = -log|r|, the Coulomb/vortex potential on the line.
* ``wall``     -- V(r) = r coth r - log(2 sinh r), the dislocation-wall
  potential: logarithmically singular at 0, positive, decreasing on (0, oo)
  with integrable tails.
* ``reglog``   -- W(r) = log(r^2 + delta^2)/2, a smooth attractive
  regularisation of +log|r| on the length scale delta.
* ``zero``     -- W identically 0 (single-species dynamics).

A V-role kernel must blow up at the origin (only ``log`` and ``wall``
qualify); a W-role kernel must be finite and C^1 at the origin (only
``reglog`` and ``zero`` qualify).  Kernels are immutable and can be shared
freely between threads and processes.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "KernelSpec",
    "KernelPair",
    "ValidationReport",
    "ClauseResult",
    "eval_kernel",
    "eval_prime",
    "parse_kernel",
    "validate_assumptions",
    "default_sample_grid",
]

V_ROLE = "V"
W_ROLE = "W"

_V_FAMILIES = ("log", "wall")
_W_FAMILIES = ("reglog", "zero")

# Switch-over radii for the numerically stable branches of the wall kernel.
_WALL_SERIES_RADIUS = 1e-4
_WALL_TAIL_RADIUS = 20.0
_WALL_CONST = 1.0 - math.log(2.0)  # r coth r - log(2 sinh r) = -log|r| + this + O(r^2)


@dataclass(frozen=True)
class KernelSpec:
    """One interaction potential: a family tag, its role, and parameters.

    ``delta`` is the regularisation length of the ``reglog`` family and must
    be positive there; other families take no parameter.  Role compatibility
    (singular families for V, regular ones for W) is enforced when a
    :class:`KernelPair` is built, so that deliberately invalid specs can
    still be constructed and fed to :func:`validate_assumptions`, which
    reports the violation as data rather than raising.
    """

    family: str
    role: str
    delta: float | None = None

    def __post_init__(self):
        if self.family not in _V_FAMILIES + _W_FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.role not in (V_ROLE, W_ROLE):
            raise ValueError(f"kernel role must be 'V' or 'W', got {self.role!r}")
        if self.family == "reglog":
            if self.delta is None or not self.delta > 0:
                raise ValueError("reglog kernel requires delta > 0")
        elif self.delta is not None:
            raise ValueError(f"family {self.family!r} takes no delta parameter")

    @property
    def role_is_valid(self) -> bool:
        """Whether the family is admissible for the declared role."""
        if self.role == V_ROLE:
            return self.family in _V_FAMILIES
        return self.family in _W_FAMILIES

    def label(self) -> str:
        if self.family == "reglog":
            return f"reglog({self.delta:g})"
        return self.family


def parse_kernel(text: str, role: str) -> KernelSpec:
    """Parse the scenario-file kernel syntax: ``log``, ``wall``, ``zero``,
    ``reglog(delta)``."""
    text = text.strip()
    m = re.fullmatch(r"reglog\(\s*([^)]+?)\s*\)", text)
    if m:
        return KernelSpec("reglog", role, delta=float(m.group(1)))
    if text in _V_FAMILIES + _W_FAMILIES:
        if text == "reglog":
            raise ValueError("reglog requires a delta, e.g. 'reglog(0.1)'")
        return KernelSpec(text, role)
    raise ValueError(f"cannot parse kernel {text!r}")


def _wall_value(r: np.ndarray) -> np.ndarray:
    """r coth r - log(2 sinh r), branch-selected for stability.

    Near 0 the two terms are both ~ -log|r| apart and the direct difference
    loses all digits, so we use the expansion
    -log|r| + (1 - log 2) + r^2/6 - r^4/60 + O(r^6); beyond r ~ 20 the
    hyperbolics overflow and the tail (2r + 1) e^{-2r} + O(e^{-4r}) is used.
    """
    a = np.abs(r)
    out = np.empty_like(a)
    small = a < _WALL_SERIES_RADIUS
    large = a > _WALL_TAIL_RADIUS
    mid = ~(small | large)
    with np.errstate(divide="ignore"):
        out[small] = -np.log(a[small]) + _WALL_CONST + a[small] ** 2 / 6.0
    am = a[mid]
    out[mid] = am / np.tanh(am) - np.log(2.0 * np.sinh(am))
    al = a[large]
    out[large] = (2.0 * al + 1.0) * np.exp(-2.0 * al)
    return out


def _wall_prime(r: np.ndarray) -> np.ndarray:
    """d/dr [r coth r - log(2 sinh r)] = -r / sinh(r)^2, with V'(0) = 0."""
    a = np.abs(r)
    out = np.empty_like(a)
    large = a > _WALL_TAIL_RADIUS
    small = ~large
    s = np.sinh(a[small])
    with np.errstate(divide="ignore", invalid="ignore"):
        out[small] = np.where(a[small] == 0.0, 0.0, -a[small] / (s * s))
    out[large] = -4.0 * a[large] * np.exp(-2.0 * a[large])
    return out * np.sign(r)


def eval_kernel(kernel: KernelSpec, r):
    """Evaluate the potential at separation ``r`` (scalar or array).

    Evaluating a V-role kernel exactly at 0 is a domain error: the energy of
    a same-sign coincidence is +infinity and must be handled by the caller.
    """
    arr = np.asarray(r, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if kernel.role == V_ROLE and np.any(arr == 0.0):
        raise ValueError(f"V-kernel {kernel.label()} evaluated at r = 0")
    if kernel.family == "log":
        out = -np.log(np.abs(arr))
    elif kernel.family == "wall":
        out = _wall_value(arr)
    elif kernel.family == "reglog":
        out = 0.5 * np.log(arr * arr + kernel.delta**2)
    else:  # zero
        out = np.zeros_like(arr)
    return float(out[0]) if scalar else out


def eval_prime(kernel: KernelSpec, r):
    """Evaluate the derivative at ``r`` (scalar or array).

    Total on all of R: singular families return exactly 0 at r = 0 by the
    convention V'(0) := 0 that also makes the particle force sums skip the
    self term.
    """
    arr = np.asarray(r, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if kernel.family == "log":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(arr == 0.0, 0.0, -1.0 / np.where(arr == 0.0, 1.0, arr))
    elif kernel.family == "wall":
        out = _wall_prime(arr)
    elif kernel.family == "reglog":
        out = arr / (arr * arr + kernel.delta**2)
    else:  # zero
        out = np.zeros_like(arr)
    return float(out[0]) if scalar else out


def default_sample_grid(lo: float = 1e-8, hi: float = 1e4, points: int = 2001) -> np.ndarray:
    """Logarithmic probe grid over several decades, symmetric about 0,
    excluding 0 itself."""
    pos = np.logspace(math.log10(lo), math.log10(hi), points)
    return np.concatenate([-pos[::-1], pos])


def _sup_r_prime(kernel: KernelSpec, grid: np.ndarray) -> float:
    emp = float(np.max(np.abs(grid * eval_prime(kernel, grid)))) if grid.size else 0.0
    # Known suprema: |r V'| = 1 for log; r^2/sinh^2 r <= 1 for wall;
    # r^2/(r^2 + d^2) -> 1 for reglog (approached at infinity); 0 for zero.
    analytic = {"log": 1.0, "wall": 1.0, "reglog": 1.0, "zero": 0.0}[kernel.family]
    return max(emp, analytic)


def _quad_lower_const(V: KernelSpec, W: KernelSpec, grid: np.ndarray) -> float:
    """Estimated C with (V+W)(r) >= -C r^2 on the probe grid.

    The constant exists for admissible pairs because V+W -> +oo at 0 and the
    tails are at most logarithmic.  It is estimated, not certified: the grid
    supremum is padded by a factor 2 and floored at 1/(2e), the exact
    constant of -log|r| alone.
    """
    vals = eval_kernel(V, grid) + eval_kernel(W, grid)
    with np.errstate(divide="ignore"):
        ratio = np.where(vals < 0.0, -vals / (grid * grid), 0.0)
    return max(2.0 * float(np.max(ratio)), 1.0 / (2.0 * math.e))


def _growth_const(V: KernelSpec, W: KernelSpec, grid: np.ndarray) -> float:
    """Empirical C with |V| + |W| <= C(|log|r|| + 1) on the probe grid."""
    vals = np.abs(eval_kernel(V, grid)) + np.abs(eval_kernel(W, grid))
    denom = np.abs(np.log(np.abs(grid))) + 1.0
    return float(np.max(vals / denom))


@dataclass(frozen=True)
class KernelPair:
    """A validated (V, W) pair together with its certified bounds.

    ``bound_rVprime``/``bound_rWprime`` bound |r V'(r)| and |r W'(r)| on all
    of R; ``bound_W0`` is W(0); ``quad_lower_const`` is the estimated C in
    (V+W)(r) >= -C r^2 and ``growth_const`` the C in the logarithmic growth
    bound.  Build instances through :meth:`build`, which computes the bounds
    by grid maximisation combined with the families' known asymptotics.
    """

    V: KernelSpec
    W: KernelSpec
    bound_rVprime: float
    bound_rWprime: float
    bound_W0: float
    quad_lower_const: float = 0.0
    growth_const: float = 0.0

    @classmethod
    def build(cls, V: KernelSpec, W: KernelSpec, grid: np.ndarray | None = None) -> "KernelPair":
        if V.role != V_ROLE or W.role != W_ROLE:
            raise ValueError("KernelPair.build expects a V-role and a W-role spec")
        if not V.role_is_valid:
            raise ValueError(f"{V.label()} does not diverge at 0 and cannot serve as V")
        if not W.role_is_valid:
            raise ValueError(f"{W.label()} is singular at 0 and cannot serve as W")
        if grid is None:
            grid = default_sample_grid()
        return cls(
            V=V,
            W=W,
            bound_rVprime=_sup_r_prime(V, grid),
            bound_rWprime=_sup_r_prime(W, grid),
            bound_W0=eval_kernel(W, 0.0),
            quad_lower_const=_quad_lower_const(V, W, grid),
            growth_const=_growth_const(V, W, grid),
        )

    def label(self) -> str:
        return f"V={self.V.label()}, W={self.W.label()}"


@dataclass(frozen=True)
class ClauseResult:
    name: str
    passed: bool
    detail: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ValidationReport:
    """Machine check of the standing kernel assumptions on a sample grid.

    Failures are data, not exceptions: each clause carries a pass flag plus
    the measured quantities, so an inadmissible pair (say, a bounded kernel
    in the V slot) produces a readable report instead of an error.
    """

    clauses: tuple[ClauseResult, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def clause(self, name: str) -> ClauseResult:
        for c in self.clauses:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "passed": self.passed,
            "clauses": [
                {"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.clauses
            ],
        }


def validate_assumptions(pair: KernelPair, sample_grid: np.ndarray | None = None) -> ValidationReport:
    """Check evenness, |r K'| boundedness, divergence of V at 0, logarithmic
    growth, and the quadratic lower bound of V+W, on ``sample_grid``."""
    grid = default_sample_grid() if sample_grid is None else np.asarray(sample_grid, float)
    grid = grid[grid != 0.0]
    clauses = []

    even_err = 0.0
    for k in (pair.V, pair.W):
        vals_p = eval_kernel(k, grid)
        vals_m = eval_kernel(k, -grid)
        scale = np.maximum(np.abs(vals_p), 1.0)
        even_err = max(even_err, float(np.max(np.abs(vals_p - vals_m) / scale)))
    clauses.append(ClauseResult("evenness", even_err <= 1e-14, {"max_relative_asymmetry": even_err}))

    sup_rv = float(np.max(np.abs(grid * eval_prime(pair.V, grid))))
    sup_rw = float(np.max(np.abs(grid * eval_prime(pair.W, grid))))
    clauses.append(
        ClauseResult(
            "r_prime_bounded",
            sup_rv <= pair.bound_rVprime * (1 + 1e-12) and sup_rw <= pair.bound_rWprime + 1e-12,
            {"sup_rVprime": sup_rv, "sup_rWprime": sup_rw,
             "bound_rVprime": pair.bound_rVprime, "bound_rWprime": pair.bound_rWprime},
        )
    )

    # Divergence of V at 0: sample a decade ladder shrinking to 0 and require
    # strict growth without bound.
    ladder = np.logspace(-1, -8, 8)
    vvals = eval_kernel(pair.V, ladder)
    diverges = bool(np.all(np.diff(vvals) > 0) and vvals[-1] > 10.0)
    clauses.append(ClauseResult("V_diverges_at_0", diverges, {"V_at_1e-8": float(vvals[-1])}))

    growth = _growth_const(pair.V, pair.W, grid)
    clauses.append(
        ClauseResult(
            "log_growth",
            math.isfinite(growth) and growth <= max(2.0 * pair.growth_const, 10.0),
            {"empirical_growth_const": growth, "stored_growth_const": pair.growth_const},
        )
    )

    vw = eval_kernel(pair.V, grid) + eval_kernel(pair.W, grid)
    with np.errstate(divide="ignore"):
        quad = float(np.max(np.where(vw < 0.0, -vw / (grid * grid), 0.0)))
    clauses.append(
        ClauseResult(
            "quadratic_lower_bound",
            math.isfinite(quad) and quad <= pair.quad_lower_const + 1e-12,
            {"empirical_quad_const": quad, "stored_quad_const": pair.quad_lower_const},
        )
    )

    return ValidationReport(tuple(clauses))
