"""
Solutions of the hyperbolic equations behind the constructions: closed-form Liouville
conformal factors, and Goursat integration in characteristic coordinates of

    λ_st = −(L0/2) e^{2λ} + (ε/2) e^{−2λ}                 (scalar)
    (f1)_st = L0 e^{−f1−f2},  (f2)_st = −(ε/2) e^{f1+2f2}   (system)

with data prescribed on the two characteristics s = s0 and t = t0.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import FrozenSet, Sequence, Tuple, Union

import numpy as np

from exprdsl import Expr, differentiate
from fields import DomainError, Grid, ScalarField, derivative

logger = logging.getLogger(__name__)

BLOW_UP = 1e8
CORNER_TOL = 1e-10
SUPPRESSIBLE = frozenset({"curvature", "epsilon"})


class SingularDomainError(DomainError):
    pass


class NonPositiveFactorError(DomainError):
    pass


class BlowUpError(DomainError):
    pass


class GoursatDataError(ValueError):
    pass


@dataclass(frozen=True)
class Boundary:
    """Goursat data of one unknown: along_s is the trace on t = t0, along_t the trace on s = s0."""
    along_s: Expr
    along_t: Expr


@dataclass(frozen=True)
class GoursatProblem:
    kind: str  # "scalar" or "system"
    grid: Grid
    L0: float
    epsilon: int
    boundaries: Tuple[Boundary, ...]
    # Test hook: drop the L0 term ("curvature") and/or the ε term ("epsilon") of the right-hand side
    suppress: FrozenSet[str] = field(default=frozenset(), kw_only=True)

    def __post_init__(self):
        if self.kind not in ("scalar", "system"):
            raise GoursatDataError(f"kind must be 'scalar' or 'system', got '{self.kind}'")
        if self.grid.coord_kind != "st":
            raise GoursatDataError("Goursat problems are posed on an st-grid")
        if self.epsilon not in (1, -1):
            raise GoursatDataError(f"epsilon must be +1 or -1, got {self.epsilon}")
        expected = 1 if self.kind == "scalar" else 2
        if len(self.boundaries) != expected:
            raise GoursatDataError(f"{self.kind} problem needs {expected} boundary pairs, got {len(self.boundaries)}")
        unknown = set(self.suppress) - SUPPRESSIBLE
        if unknown:
            raise GoursatDataError(f"cannot suppress {sorted(unknown)}")
        s0, t0 = self.grid.min1, self.grid.min2
        for k, b in enumerate(self.boundaries, start=1):
            first = float(b.along_s.call(s0))
            second = float(b.along_t.call(t0))
            if abs(first - second) > CORNER_TOL:
                raise GoursatDataError(
                    f"boundary data of component {k} disagree at the corner ({s0}, {t0}): {first} vs {second}")

    @classmethod
    def scalar(cls, grid: Grid, L0: float, epsilon: int, along_s: Expr, along_t: Expr,
               *, suppress: Sequence[str] = ()) -> "GoursatProblem":
        return cls("scalar", grid, float(L0), int(epsilon), (Boundary(along_s, along_t),),
                   suppress=frozenset(suppress))

    @classmethod
    def system(cls, grid: Grid, L0: float, epsilon: int, f1: Tuple[Expr, Expr], f2: Tuple[Expr, Expr],
               *, suppress: Sequence[str] = ()) -> "GoursatProblem":
        return cls("system", grid, float(L0), int(epsilon), (Boundary(*f1), Boundary(*f2)),
                   suppress=frozenset(suppress))

    def rhs(self, *values):
        """Right-hand side of the characteristic equation(s) at the given values."""
        curvature = "curvature" not in self.suppress
        eps_term = "epsilon" not in self.suppress
        if self.kind == "scalar":
            (lam,) = values
            out = 0.0
            if curvature:
                out = out - 0.5 * self.L0 * np.exp(2.0 * lam)
            if eps_term:
                out = out + 0.5 * self.epsilon * np.exp(-2.0 * lam)
            return (out + 0.0 * lam,)
        f1, f2 = values
        g1 = self.L0 * np.exp(-f1 - f2) if curvature else 0.0 * f1
        g2 = -0.5 * self.epsilon * np.exp(f1 + 2.0 * f2) if eps_term else 0.0 * f2
        return (g1, g2)


# =============================
# Closed-form Liouville solutions
# =============================

def liouville_closed_form(L0: float, p: Expr, q: Expr, grid: Grid) -> ScalarField:
    """
    Conformal factor λ with λ_uu − λ_vv + L0 e^{2λ} = 0 from two functions of one variable.

    L0 > 0:  e^{2λ} = 2 p'(√L0 s) q'(√L0 t) / (p(√L0 s) − q(√L0 t))²
    L0 < 0:  e^{2λ} = 2 p'(√|L0| s) q'(√|L0| t) / (p(√|L0| s) + q(√|L0| t))²
    L0 = 0:  λ = p(s) + q(t)

    The grid may be of either kind; s and t are taken at every node.
    """
    coords = grid.coordinates()
    s, t = coords["s"], coords["t"]
    if L0 == 0:
        return ScalarField(grid, np.asarray(p.call(s)) + np.asarray(q.call(t)))

    k = math.sqrt(abs(L0))
    P, Q = np.asarray(p.call(k * s)), np.asarray(q.call(k * t))
    dP = np.asarray(differentiate(p, p.variables[0]).call(k * s))
    dQ = np.asarray(differentiate(q, q.variables[0]).call(k * t))
    P, Q, dP, dQ = np.broadcast_arrays(P, Q, dP, dQ)
    denominator = P - Q if L0 > 0 else P + Q

    singular = np.abs(denominator) <= 1e-14 * np.maximum(1.0, np.maximum(np.abs(P), np.abs(Q)))
    if np.any(singular):
        i, j = (int(x) for x in np.argwhere(singular)[0])
        raise SingularDomainError("closed-form denominator vanishes", (i, j), grid.point(i, j))
    factor = 2.0 * dP * dQ / denominator ** 2
    bad = ~(factor > 0)
    if np.any(bad):
        i, j = (int(x) for x in np.argwhere(bad)[0])
        raise NonPositiveFactorError("e^{2λ} is not positive (p'q' <= 0)", (i, j), grid.point(i, j))
    return ScalarField(grid, 0.5 * np.log(factor))


# =============================
# Goursat solvers
# =============================

def _traces(prob: GoursatProblem) -> list:
    s = prob.grid.axis_coords(1)
    t = prob.grid.axis_coords(2)
    out = []
    for b in prob.boundaries:
        values = np.empty(prob.grid.shape)
        values[:, 0] = np.broadcast_to(b.along_s.call(s), s.shape)
        values[0, :] = np.broadcast_to(b.along_t.call(t), t.shape)
        values[0, 0] = float(b.along_s.call(s[0]))
        out.append(values)
    return out


def _sweep(prob: GoursatProblem) -> list:
    """
    Characteristic-rectangle rule, one anti-diagonal of cells at a time.

    Predictor with the three known corners averaged, one correction with all four corners.
    """
    grid = prob.grid
    n1, n2 = grid.shape
    hh = grid.h1 * grid.h2
    sols = _traces(prob)
    logger.debug("Goursat %s sweep on %dx%d grid, h_s*h_t=%.3g", prob.kind, n1, n2, hh)

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(2, n1 + n2 - 1):
            # cells whose upper corner (i, j) has i + j = k, with i, j >= 1
            i = np.arange(max(1, k - n2 + 1), min(n1 - 1, k - 1) + 1)
            j = k - i
            corners = [(sol[i - 1, j], sol[i, j - 1], sol[i - 1, j - 1]) for sol in sols]
            base = [a + b - c for a, b, c in corners]
            avg3 = [(a + b + c) / 3.0 for a, b, c in corners]
            predicted = [b + hh * g for b, g in zip(base, prob.rhs(*avg3))]
            avg4 = [(a + b + c + p) / 4.0 for (a, b, c), p in zip(corners, predicted)]
            for sol, b, g in zip(sols, base, prob.rhs(*avg4)):
                sol[i, j] = b + hh * g
            for sol in sols:
                new = sol[i, j]
                bad = ~np.isfinite(new) | (np.abs(new) > BLOW_UP)
                if np.any(bad):
                    at = int(np.flatnonzero(bad)[0])
                    cell = (int(i[at]), int(j[at]))
                    raise BlowUpError(f"solution exceeds {BLOW_UP:g} or is not finite", cell, grid.point(*cell))
    return sols


def goursat_scalar(prob: GoursatProblem) -> ScalarField:
    if prob.kind != "scalar":
        raise GoursatDataError("goursat_scalar needs a scalar problem")
    (lam,) = _sweep(prob)
    return ScalarField(prob.grid, lam)


def goursat_system(prob: GoursatProblem) -> Tuple[ScalarField, ScalarField]:
    if prob.kind != "system":
        raise GoursatDataError("goursat_system needs a system problem")
    f1, f2 = _sweep(prob)
    return ScalarField(prob.grid, f1), ScalarField(prob.grid, f2)


def self_residual(prob: GoursatProblem,
                  solution: Union[ScalarField, Tuple[ScalarField, ...]]) -> Tuple[ScalarField, ...]:
    """Finite-difference f_st minus the right-hand side, per component."""
    parts = (solution,) if isinstance(solution, ScalarField) else tuple(solution)
    rhs = prob.rhs(*(f.values for f in parts))
    return tuple(derivative(f, "st") - np.broadcast_to(g, f.grid.shape) for f, g in zip(parts, rhs))
