"""
Builders turning free data (conformal factor, gauge functions, sign choices) into the
fundamental data of a time-like surface with zero mean curvature vector.

Each builder re-checks the equation its conformal factor has to solve before building.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from exprdsl import EvaluationError, Expr, differentiate
from fields import SQRT2, DomainError, Grid, ScalarField, derivative, diff, resample, sample
from invariants import AmbientSpec, FamilyMismatchError, FundamentalData, Tolerances

logger = logging.getLogger(__name__)

CASES = ("case_i", "case_ii", "flat_normal", "one_lift", "lorentzian")


class PreconditionError(ValueError):
    def __init__(self, what: str, max_residual: float, tolerance: float):
        super().__init__(f"{what}: max residual {max_residual:.3e} exceeds tolerance {tolerance:.3e}")
        self.what = what
        self.max_residual = max_residual
        self.tolerance = tolerance


def _sign(name: str, value: int) -> int:
    if value not in (1, -1):
        raise ValueError(f"sign '{name}' must be +1 or -1, got {value!r}")
    return int(value)


@dataclass(frozen=True)
class SignChoice:
    epsilon: int = 1
    eps_prime_plus: int = 1
    eps_prime_minus: int = 1
    eps_prime: int = 1
    eps_double_prime: int = 1

    def __post_init__(self):
        for name in ("epsilon", "eps_prime_plus", "eps_prime_minus", "eps_prime", "eps_double_prime"):
            _sign(name, getattr(self, name))

    def to_json(self) -> Dict[str, int]:
        return {"epsilon": self.epsilon, "eps_prime_plus": self.eps_prime_plus,
                "eps_prime_minus": self.eps_prime_minus, "eps_prime": self.eps_prime,
                "eps_double_prime": self.eps_double_prime}


@dataclass(frozen=True, eq=False)
class ConstructionState:
    """Intermediate fields of the flat-normal and one-lift constructions."""
    R: Optional[ScalarField] = None
    P_plus: Optional[ScalarField] = None
    P_minus: Optional[ScalarField] = None
    Q_plus: Optional[ScalarField] = None
    Q_minus: Optional[ScalarField] = None
    P_tilde_minus: Optional[ScalarField] = None
    c: Optional[float] = None
    extra: Dict[str, ScalarField] = field(default_factory=dict)


# =============================
# Helpers
# =============================

def _exp(f: ScalarField) -> ScalarField:
    return f.map(np.exp)


def _require(ambient: AmbientSpec, family: str):
    if ambient.family != family:
        raise FamilyMismatchError(f"this construction needs a {family} ambient, got '{ambient.family}'")


def _check(what: str, residual: ScalarField, tol: float, margin: int):
    worst = residual.max_abs(margin)
    logger.debug("precondition %s: max residual %.3e (tol %.3e)", what, worst, tol)
    if worst > tol:
        raise PreconditionError(what, worst, tol)


def _precondition_tol(tolerances: Tolerances, grid: Grid, *terms: ScalarField) -> float:
    m = max(f.max_abs() for f in terms) if terms else 0.0
    return tolerances.precondition_tol(grid.h, max(1.0, m * m))


def _on_grid(e: Expr, arg: np.ndarray, grid: Grid) -> ScalarField:
    """Evaluate a one-variable function at an argument array laid out on the grid."""
    try:
        values = e.call(arg)
    except EvaluationError as exc:
        if exc.index is None:
            raise DomainError(exc.message) from exc
        i, j = (int(k) for k in np.unravel_index(exc.index, grid.shape))
        raise DomainError(exc.message, (i, j), grid.point(i, j)) from exc
    return ScalarField(grid, np.broadcast_to(np.asarray(values, dtype=float), grid.shape).copy())


def _gauge_derivatives(gamma: Expr, grid: Grid):
    """γ, γ_u, γ_v on an uv-grid, differentiated symbolically."""
    names = set(gamma.variables)
    if names <= {"u", "v"}:
        du = differentiate(gamma, "u") if "u" in names else None
        dv = differentiate(gamma, "v") if "v" in names else None
        zero = ScalarField.constant(grid, 0.0)
        return (sample(gamma, grid),
                sample(du, grid) if du is not None else zero,
                sample(dv, grid) if dv is not None else zero)
    if names <= {"s", "t"}:
        ds = sample(differentiate(gamma, "s"), grid) if "s" in names else ScalarField.constant(grid, 0.0)
        dt = sample(differentiate(gamma, "t"), grid) if "t" in names else ScalarField.constant(grid, 0.0)
        return sample(gamma, grid), (ds + dt) / SQRT2, (ds - dt) / SQRT2
    raise ValueError(f"gauge function must be declared over (u, v) or (s, t), got {gamma.variables}")


def _gauss_residual(lam: ScalarField, L0: float) -> ScalarField:
    """λ_uu − λ_vv + L0 e^{2λ}."""
    return diff(lam, 1, 2) - diff(lam, 2, 2) + L0 * lam.map(lambda v: np.exp(2.0 * v))


def _check_liouville(lam: ScalarField, ambient: AmbientSpec, tolerances: Tolerances):
    residual = _gauss_residual(lam, ambient.L0)
    tol = _precondition_tol(tolerances, lam.grid, derivative(lam, "u"), derivative(lam, "v"),
                            ambient.L0 * _exp(2.0 * lam))
    _check("conformal factor does not satisfy λ_uu − λ_vv + L0 e^{2λ} = 0", residual, tol, tolerances.margin)


def _from_xy(ambient: AmbientSpec, lam: ScalarField, X_plus, X_minus, Y_plus, Y_minus,
             mu1: ScalarField, mu2: ScalarField) -> FundamentalData:
    return FundamentalData(
        ambient=ambient,
        lam=lam,
        alpha1=0.5 * (X_plus + X_minus),
        alpha2=0.5 * (Y_plus + Y_minus),
        beta1=0.5 * (Y_plus - Y_minus),
        beta2=0.5 * (X_plus - X_minus),
        mu1=mu1,
        mu2=mu2,
    )


# =============================
# Builders
# =============================

def build_case_i(lam: ScalarField, gamma: Expr, p_plus: Expr, p_minus: Expr, epsilon: int,
                 *, ambient: AmbientSpec, tolerances: Optional[Tolerances] = None) -> FundamentalData:
    """
    Surfaces on which the shape operator of a light-like normal field vanishes.

    α1 ± α2 = p±(u ± v) e^{−λ−εγ}, βk = ε αk, μ1 = γ_u, μ2 = γ_v.
    """
    tolerances = tolerances or Tolerances()
    _require(ambient, "neutral")
    epsilon = _sign("epsilon", epsilon)
    _check_liouville(lam, ambient, tolerances)

    grid = lam.grid
    u, v = grid.mesh()
    g, g_u, g_v = _gauge_derivatives(gamma, grid)
    weight = _exp(-lam - epsilon * g)
    plus = _on_grid(p_plus, u + v, grid) * weight
    minus = _on_grid(p_minus, u - v, grid) * weight
    alpha1 = 0.5 * (plus + minus)
    alpha2 = 0.5 * (plus - minus)
    logger.info("built case (i) data on %dx%d grid (epsilon=%+d)", grid.n1, grid.n2, epsilon)
    return FundamentalData(ambient, lam, alpha1, alpha2, epsilon * alpha1, epsilon * alpha2, g_u, g_v)


def build_case_ii(lam: ScalarField, gamma: Expr, phi: Expr, psi: Expr, epsilon: int,
                  *, ambient: AmbientSpec, tolerances: Optional[Tolerances] = None) -> FundamentalData:
    """
    Surfaces on which the shape operator of every normal field is zero or light-like.

    α1 = (φ e^γ + ψ e^{−γ}) / 2e^λ, β1 = −(φ e^γ − ψ e^{−γ}) / 2e^λ at u + εv,
    (α2, β2) = ε (α1, β1), μ1 = γ_u, μ2 = γ_v.
    """
    tolerances = tolerances or Tolerances()
    _require(ambient, "neutral")
    epsilon = _sign("epsilon", epsilon)
    _check_liouville(lam, ambient, tolerances)

    grid = lam.grid
    u, v = grid.mesh()
    g, g_u, g_v = _gauge_derivatives(gamma, grid)
    w = u + epsilon * v
    up = _on_grid(phi, w, grid) * _exp(g)
    down = _on_grid(psi, w, grid) * _exp(-g)
    half = 0.5 * _exp(-lam)
    alpha1 = half * (up + down)
    beta1 = -(half * (up - down))
    logger.info("built case (ii) data on %dx%d grid (epsilon=%+d)", grid.n1, grid.n2, epsilon)
    return FundamentalData(ambient, lam, alpha1, epsilon * alpha1, beta1, epsilon * beta1, g_u, g_v)


def flat_normal_state(lam: ScalarField, P_plus: ScalarField, c: float) -> ConstructionState:
    """R = −2λ, P− = R − P+ − c, Q+ = R − P+, Q− = P+ + c."""
    R = -2.0 * lam
    return ConstructionState(R=R, P_plus=P_plus, P_minus=R - P_plus - c, Q_plus=R - P_plus,
                             Q_minus=P_plus + c, c=float(c))


def build_flat_normal(lam: ScalarField, P_plus: ScalarField, c: float, signs: SignChoice,
                      *, ambient: AmbientSpec, tolerances: Optional[Tolerances] = None) -> FundamentalData:
    """
    Surfaces with flat normal connection and K ≠ L0.

    λ solves λ_uu − λ_vv = −L0 e^{2λ} + ε e^{−2λ}; P+ is the free gauge and c a constant.
    """
    tolerances = tolerances or Tolerances()
    _require(ambient, "neutral")
    eps = signs.epsilon
    residual = _gauss_residual(lam, ambient.L0) - eps * _exp(-2.0 * lam)
    tol = _precondition_tol(tolerances, lam.grid, derivative(lam, "u"), derivative(lam, "v"),
                            ambient.L0 * _exp(2.0 * lam), _exp(-2.0 * lam))
    _check("conformal factor does not satisfy λ_uu − λ_vv = −L0 e^{2λ} + ε e^{−2λ}",
           residual, tol, tolerances.margin)
    if P_plus.grid != lam.grid:
        P_plus = resample(P_plus, lam.grid)

    st = flat_normal_state(lam, P_plus, c)
    D = st.Q_plus - st.Q_minus
    E = st.P_plus - st.P_minus
    D_s = derivative(D, "s")
    E_t = derivative(E, "t")
    mu1 = (D_s - E_t) / (2.0 * SQRT2)
    mu2 = (D_s + E_t) / (2.0 * SQRT2)

    X_plus = 0.5 * signs.eps_prime_plus * (_exp(st.P_plus) + eps * _exp(st.Q_plus))
    Y_plus = 0.5 * signs.eps_prime_plus * (_exp(st.P_plus) - eps * _exp(st.Q_plus))
    X_minus = 0.5 * signs.eps_prime_minus * (_exp(st.P_minus) + eps * _exp(st.Q_minus))
    Y_minus = 0.5 * signs.eps_prime_minus * (_exp(st.P_minus) - eps * _exp(st.Q_minus))
    logger.info("built flat-normal data (epsilon=%+d, c=%g)", eps, c)
    return _from_xy(ambient, lam, X_plus, X_minus, Y_plus, Y_minus, mu1, mu2)


def one_lift_state(f1: ScalarField, f2: ScalarField, P_tilde_minus: ScalarField) -> ConstructionState:
    """Q+ = f2 + P̃−, P+ = f1 + f2 − P̃−, λ = −(P+ + P̃−)/2 stored under extra['lam']."""
    Q_plus = f2 + P_tilde_minus
    P_plus = f1 + f2 - P_tilde_minus
    return ConstructionState(P_plus=P_plus, Q_plus=Q_plus, P_tilde_minus=P_tilde_minus,
                             extra={"lam": -0.5 * (P_plus + P_tilde_minus)})


def one_lift_residuals(f1: ScalarField, f2: ScalarField, L0: float, epsilon: int):
    """(f1)_st − L0 e^{−f1−f2} and (f2)_st + (ε/2) e^{f1+2f2} by finite differences."""
    r1 = derivative(f1, "st") - L0 * _exp(-f1 - f2)
    r2 = derivative(f2, "st") + 0.5 * epsilon * _exp(f1 + 2.0 * f2)
    return r1, r2


def build_one_lift(f1: ScalarField, f2: ScalarField, P_tilde_minus: ScalarField, signs: SignChoice,
                   *, ambient: AmbientSpec, tolerances: Optional[Tolerances] = None) -> FundamentalData:
    """
    Surfaces where exactly one twistor lift has zero or light-like derivative:
    X+² ≠ Y+² and X− = Y− ≠ 0.
    """
    tolerances = tolerances or Tolerances()
    _require(ambient, "neutral")
    eps = signs.epsilon
    grid = f1.grid
    if f2.grid != grid:
        f2 = resample(f2, grid)
    if P_tilde_minus.grid != grid:
        P_tilde_minus = resample(P_tilde_minus, grid)

    r1, r2 = one_lift_residuals(f1, f2, ambient.L0, eps)
    tol = _precondition_tol(tolerances, grid, derivative(f1, "u"), derivative(f1, "v"),
                            derivative(f2, "u"), derivative(f2, "v"),
                            ambient.L0 * _exp(-f1 - f2), _exp(f1 + 2.0 * f2))
    _check("(f1)_st = L0 e^{-f1-f2} violated", r1, tol, tolerances.margin)
    _check("(f2)_st = -(ε/2) e^{f1+2f2} violated", r2, tol, tolerances.margin)

    st = one_lift_state(f1, f2, P_tilde_minus)
    lam = st.extra["lam"]
    Q_s = derivative(st.Q_plus, "s")
    mu1 = -0.5 * derivative(st.P_plus, "u") + Q_s / SQRT2 - 0.5 * derivative(P_tilde_minus, "v")
    mu2 = -0.5 * derivative(st.P_plus, "v") + Q_s / SQRT2 - 0.5 * derivative(P_tilde_minus, "u")

    X_plus = 0.5 * signs.eps_prime * (_exp(st.P_plus) + eps * _exp(st.Q_plus))
    Y_plus = 0.5 * signs.eps_prime * (_exp(st.P_plus) - eps * _exp(st.Q_plus))
    X_minus = 0.5 * signs.eps_double_prime * _exp(P_tilde_minus)
    logger.info("built one-lift data (epsilon=%+d)", eps)
    return _from_xy(ambient, lam, X_plus, X_minus, Y_plus, X_minus, mu1, mu2)


def build_lorentzian(lam: ScalarField, gamma: Expr, C: Expr, epsilon: int,
                     *, ambient: AmbientSpec, tolerances: Optional[Tolerances] = None) -> FundamentalData:
    """
    Time-like zero mean curvature surfaces in a Lorentzian space form.

    α1 = C(u+εv) cos γ / 2e^λ, β1 = −C(u+εv) sin γ / 2e^λ, (α2, β2) = ε (α1, β1).
    """
    tolerances = tolerances or Tolerances()
    _require(ambient, "lorentzian")
    epsilon = _sign("epsilon", epsilon)
    _check_liouville(lam, ambient, tolerances)

    grid = lam.grid
    u, v = grid.mesh()
    g, g_u, g_v = _gauge_derivatives(gamma, grid)
    amplitude = _on_grid(C, u + epsilon * v, grid) * (0.5 * _exp(-lam))
    alpha1 = amplitude * g.map(np.cos)
    beta1 = -(amplitude * g.map(np.sin))
    logger.info("built lorentzian data (epsilon=%+d)", epsilon)
    return FundamentalData(ambient, lam, alpha1, epsilon * alpha1, beta1, epsilon * beta1, g_u, g_v)
