"""
Derived quantities and residuals of a time-like zero mean curvature surface given by its
fundamental data (conformal factor, second fundamental form coefficients, normal connection).

Everything here is a pure function of a FundamentalData value sampled on an uv-grid.
"""
import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from fields import SQRT2, GridError, ParacomplexField, ScalarField, derivative, diff
from paracomplex import CLASS_CODES, EPS_NULL, EPS_ZERO, CausalClass

logger = logging.getLogger(__name__)

FAMILIES = ("neutral", "lorentzian")
FIELD_NAMES = ("lam", "alpha1", "alpha2", "beta1", "beta2", "mu1", "mu2")

# Lift statuses
ZERO_OR_LIGHTLIKE = "zero_or_lightlike"
NOT_LIGHTLIKE = "not"
MIXED = "mixed"


class FamilyMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class AmbientSpec:
    """Space form of curvature L0: neutral (index 2) or Lorentzian (index 1)."""
    family: str
    L0: float

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got '{self.family}'")
        if not math.isfinite(self.L0):
            raise ValueError("L0 must be finite")

    @property
    def dim(self) -> int:
        return 4 if self.L0 == 0 else 5

    @property
    def signature(self) -> Tuple[int, ...]:
        positive = 2 if self.family == "neutral" else 3
        negative = 4 - positive
        if self.L0 > 0:
            positive += 1
        elif self.L0 < 0:
            negative += 1
        return (1,) * positive + (-1,) * negative

    def to_json(self) -> dict:
        return {"family": self.family, "L0": self.L0, "dim": self.dim, "signature": list(self.signature)}


@dataclass(frozen=True, eq=False)
class FundamentalData:
    ambient: AmbientSpec
    lam: ScalarField
    alpha1: ScalarField
    alpha2: ScalarField
    beta1: ScalarField
    beta2: ScalarField
    mu1: ScalarField
    mu2: ScalarField

    def __post_init__(self):
        grid = self.lam.grid
        if grid.coord_kind != "uv":
            raise GridError("fundamental data live on an uv-grid")
        for name in FIELD_NAMES:
            if getattr(self, name).grid != grid:
                raise GridError(f"field '{name}' is not on the shared grid")

    @property
    def grid(self):
        return self.lam.grid

    def fields(self) -> Dict[str, ScalarField]:
        return {name: getattr(self, name) for name in FIELD_NAMES}

    def perturbed(self, name: str, delta: float) -> "FundamentalData":
        """Copy with delta added to one field (negative controls)."""
        if name not in FIELD_NAMES:
            raise KeyError(f"unknown fundamental field '{name}'")
        return replace(self, **{name: getattr(self, name) + delta})


@dataclass(frozen=True, eq=False)
class DerivedInvariants:
    ambient: AmbientSpec
    X_plus: ScalarField
    X_minus: ScalarField
    Y_plus: ScalarField
    Y_minus: ScalarField
    phi_plus: ScalarField
    phi_minus: ScalarField
    psi_plus: ScalarField
    psi_minus: ScalarField
    K: ScalarField
    gamma1: ParacomplexField
    gamma2: ParacomplexField


@dataclass(frozen=True, eq=False)
class GCRResiduals:
    gauss: ScalarField
    codazzi: Tuple[ScalarField, ScalarField, ScalarField, ScalarField]
    ricci: ScalarField

    def named(self) -> Dict[str, ScalarField]:
        out = {"gauss": self.gauss, "ricci": self.ricci}
        for k, residual in enumerate(self.codazzi, start=1):
            out[f"codazzi_{k}"] = residual
        return out


@dataclass(frozen=True, eq=False)
class TwistorNorms:
    """Squared norms of the derivatives of the two twistor lifts along T1 and T2."""
    t1_plus: ScalarField
    t1_minus: ScalarField
    t2_plus: ScalarField
    t2_minus: ScalarField


@dataclass
class Tolerances:
    eps_zero: float = EPS_ZERO
    eps_null: float = EPS_NULL
    verdict: Optional[float] = None
    precondition: Optional[float] = None
    margin: int = 2

    def verdict_tol(self, h: float, scale: float = 1.0) -> float:
        return self.verdict if self.verdict is not None else 10.0 * h * h * scale

    def precondition_tol(self, h: float, scale: float = 1.0) -> float:
        return self.precondition if self.precondition is not None else 100.0 * h * h * scale


@dataclass
class Verdict:
    name: str
    max_deviation: float
    tolerance: float
    boundary_max: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance

    def to_json(self) -> dict:
        return {"passed": self.passed, "max": self.max_deviation, "tolerance": self.tolerance,
                "boundary_max": self.boundary_max}


@dataclass
class ClassificationReport:
    family: str
    L0: float
    k_equals_L0: Verdict
    normal_flat: Verdict
    q_status: Optional[str]
    q_zero_or_null: Optional[bool]
    lift_plus: Optional[str]
    lift_minus: Optional[str]
    lift_branches: Optional[Dict[str, str]]
    residuals: Dict[str, Verdict]
    tolerance: float
    scale: float
    margin: int
    h: float

    @property
    def integrable(self) -> bool:
        return all(v.passed for v in self.residuals.values())

    def failing(self) -> List[str]:
        return [name for name, v in self.residuals.items() if not v.passed]

    def to_json(self) -> dict:
        return {
            "family": self.family,
            "L0": self.L0,
            "k_equals_L0": self.k_equals_L0.to_json(),
            "normal_flat": self.normal_flat.to_json(),
            "q_status": self.q_status,
            "q_zero_or_null": self.q_zero_or_null,
            "lift_plus": self.lift_plus,
            "lift_minus": self.lift_minus,
            "lift_branches": self.lift_branches,
            "residuals": {name: v.to_json() for name, v in self.residuals.items()},
            "integrable": self.integrable,
            "tolerance": self.tolerance,
            "scale": self.scale,
            "margin": self.margin,
            "h": self.h,
        }


# =============================
# Pointwise algebra
# =============================

def _require_neutral(ambient: AmbientSpec, what: str):
    if ambient.family != "neutral":
        raise FamilyMismatchError(f"{what} is defined for the neutral family only, got '{ambient.family}'")


def derive(data: FundamentalData) -> DerivedInvariants:
    """X±, Y±, φ±, ψ±, K and γ1, γ2 from fundamental data."""
    lam_u = derivative(data.lam, "u")
    lam_v = derivative(data.lam, "v")
    return DerivedInvariants(
        ambient=data.ambient,
        X_plus=data.alpha1 + data.beta2,
        X_minus=data.alpha1 - data.beta2,
        Y_plus=data.alpha2 + data.beta1,
        Y_minus=data.alpha2 - data.beta1,
        phi_plus=lam_u - data.mu2,
        phi_minus=lam_u + data.mu2,
        psi_plus=lam_v - data.mu1,
        psi_minus=lam_v + data.mu1,
        K=curvature_K(data),
        gamma1=ParacomplexField(data.alpha1, data.beta1),
        gamma2=ParacomplexField(data.alpha2, data.beta2),
    )


def _wave(lam: ScalarField) -> ScalarField:
    """λ_uu − λ_vv."""
    return diff(lam, 1, 2) - diff(lam, 2, 2)


def _exp2lam(data: FundamentalData) -> ScalarField:
    return data.lam.map(lambda v: np.exp(2.0 * v))


def curvature_K(data: FundamentalData) -> ScalarField:
    """Gaussian curvature K = −e^{−2λ}(λ_uu − λ_vv) of the induced metric."""
    return -(_wave(data.lam) * data.lam.map(lambda v: np.exp(-2.0 * v)))


def gauss_lhs(data: FundamentalData) -> ScalarField:
    """λ_uu − λ_vv + L0 e^{2λ}; vanishes iff K ≡ L0."""
    return _wave(data.lam) + data.ambient.L0 * _exp2lam(data)


def ricci_lhs(data: FundamentalData) -> ScalarField:
    """(μ1)_v − (μ2)_u; vanishes iff the normal connection is flat."""
    return diff(data.mu1, 2) - diff(data.mu2, 1)


def gcr_residuals(data: FundamentalData) -> GCRResiduals:
    """Left minus right of the Gauss, four Codazzi and the Ricci equations, pointwise."""
    a1, a2, b1, b2 = data.alpha1, data.alpha2, data.beta1, data.beta2
    m1, m2 = data.mu1, data.mu2
    lu = derivative(data.lam, "u")
    lv = derivative(data.lam, "v")
    d = lambda f, axis: diff(f, axis)  # noqa: E731

    if data.ambient.family == "neutral":
        gauss = gauss_lhs(data) - (a1 * a1 - a2 * a2 - b1 * b1 + b2 * b2)
        c1 = d(a1, 2) - d(a2, 1) - (a2 * lu - a1 * lv + b2 * m1 - b1 * m2)
        c2 = d(a2, 2) - d(a1, 1) - (a1 * lu - a2 * lv + b1 * m1 - b2 * m2)
    else:
        gauss = gauss_lhs(data) - (a1 * a1 + b1 * b1 - a2 * a2 - b2 * b2)
        c1 = d(a1, 2) - d(a2, 1) - (a2 * lu - a1 * lv - b2 * m1 + b1 * m2)
        c2 = d(a2, 2) - d(a1, 1) - (a1 * lu - a2 * lv - b1 * m1 + b2 * m2)
    c3 = d(b1, 2) - d(b2, 1) - (b2 * lu - b1 * lv + a2 * m1 - a1 * m2)
    c4 = d(b2, 2) - d(b1, 1) - (b1 * lu - b2 * lv + a1 * m1 - a2 * m2)
    ricci = ricci_lhs(data) - (2.0 * a1 * b2 - 2.0 * a2 * b1)
    return GCRResiduals(gauss, (c1, c2, c3, c4), ricci)


def frame_matrices(data: FundamentalData) -> Tuple[np.ndarray, np.ndarray]:
    """
    Coefficient matrices S, T with M_u = M·S and M_v = M·T for M = (T1 T2 N1 N2 F).

    Returns two arrays of shape (n1, n2, 5, 5). The sign pattern follows the ambient family.
    """
    lu = derivative(data.lam, "u").values
    lv = derivative(data.lam, "v").values
    a1, a2 = data.alpha1.values, data.alpha2.values
    b1, b2 = data.beta1.values, data.beta2.values
    m1, m2 = data.mu1.values, data.mu2.values
    curv = data.ambient.L0 * np.exp(2.0 * data.lam.values)
    one = np.ones_like(lu)
    zero = np.zeros_like(lu)
    # the families differ in the sign of the beta entries of the first two rows and of one mu entry
    sb = 1.0 if data.ambient.family == "neutral" else -1.0

    S = np.stack([
        np.stack([lu, lv, -a1, sb * b1, one], axis=-1),
        np.stack([lv, lu, a2, -sb * b2, zero], axis=-1),
        np.stack([a1, a2, lu, sb * m1, zero], axis=-1),
        np.stack([b1, b2, m1, lu, zero], axis=-1),
        np.stack([-curv, zero, zero, zero, zero], axis=-1),
    ], axis=-2)
    T = np.stack([
        np.stack([lv, lu, -a2, sb * b2, zero], axis=-1),
        np.stack([lu, lv, a1, -sb * b1, one], axis=-1),
        np.stack([a2, a1, lv, sb * m2, zero], axis=-1),
        np.stack([b2, b1, m2, lv, zero], axis=-1),
        np.stack([zero, curv, zero, zero, zero], axis=-1),
    ], axis=-2)
    return S, T


def residual_scale(data: FundamentalData) -> float:
    """max(1, m²) with m the largest |entry| of S and T over the grid."""
    S, T = frame_matrices(data)
    m = max(float(np.max(np.abs(S))), float(np.max(np.abs(T))))
    return max(1.0, m * m)


def compatibility_residual(data: FundamentalData) -> ScalarField:
    """Pointwise entrywise max norm of S_v − T_u − (ST − TS)."""
    S, T = frame_matrices(data)
    grid = data.grid
    S_v = np.gradient(S, grid.h2, axis=1, edge_order=2)
    T_u = np.gradient(T, grid.h1, axis=0, edge_order=2)
    bracket = S @ T - T @ S
    residual = np.max(np.abs(S_v - T_u - bracket), axis=(-2, -1))
    return ScalarField(grid, residual)


# =============================
# Quartic differential and twistor lifts
# =============================

def quartic_Q(data: FundamentalData) -> ParacomplexField:
    """q = (e^{2λ}/4)(|γ1|² + |γ2|² + 2j(α1α2 − β1β2)), γk = αk + jβk."""
    _require_neutral(data.ambient, "the quartic differential")
    a1, a2, b1, b2 = data.alpha1, data.alpha2, data.beta1, data.beta2
    factor = 0.25 * _exp2lam(data)
    norms = (a1 - b1) * (a1 + b1) + (a2 - b2) * (a2 + b2)
    return ParacomplexField(factor * norms, factor * (2.0 * (a1 * a2 - b1 * b2)))


def paraholomorphy_residual(q: ParacomplexField) -> ScalarField:
    """max(|a_u − b_v|, |a_v − b_u|) for q = a + jb."""
    a, b = q.re, q.im
    first = np.abs((diff(a, 1) - diff(b, 2)).values)
    second = np.abs((diff(a, 2) - diff(b, 1)).values)
    return ScalarField(q.grid, np.maximum(first, second))


def twistor_norms(inv: DerivedInvariants) -> TwistorNorms:
    """‖∇_{T1}Θ±‖² = Y±² − X±² and ‖∇_{T2}Θ±‖² = X±² − Y±²."""
    _require_neutral(inv.ambient, "the twistor lift")
    plus = inv.X_plus * inv.X_plus - inv.Y_plus * inv.Y_plus
    minus = inv.X_minus * inv.X_minus - inv.Y_minus * inv.Y_minus
    return TwistorNorms(t1_plus=-plus, t1_minus=-minus, t2_plus=plus, t2_minus=minus)


def characteristic_codazzi_residuals(data: FundamentalData) -> Dict[str, ScalarField]:
    """
    Codazzi equations along the characteristics:
    (X±+Y±)_t + (φ±−ψ±)(X±+Y±)/√2 and (X±−Y±)_s + (φ±+ψ±)(X±−Y±)/√2.
    """
    _require_neutral(data.ambient, "the characteristic Codazzi form")
    inv = derive(data)
    out = {}
    for sign, X, Y, phi, psi in (("plus", inv.X_plus, inv.Y_plus, inv.phi_plus, inv.psi_plus),
                                 ("minus", inv.X_minus, inv.Y_minus, inv.phi_minus, inv.psi_minus)):
        total = X + Y
        gap = X - Y
        out[f"sum_{sign}"] = derivative(total, "t") + (phi - psi) * total / SQRT2
        out[f"difference_{sign}"] = derivative(gap, "s") + (phi + psi) * gap / SQRT2
    return out


def lorentzian_characteristic_codazzi(data: FundamentalData) -> Dict[str, ScalarField]:
    """
    Lorentzian Codazzi along the characteristics, with p± = e^λ(α1±α2), q± = e^λ(β1±β2)
    and μ± = μ1 ± μ2.
    """
    if data.ambient.family != "lorentzian":
        raise FamilyMismatchError("expected lorentzian data")
    e = data.lam.map(np.exp)
    p_plus, p_minus = e * (data.alpha1 + data.alpha2), e * (data.alpha1 - data.alpha2)
    q_plus, q_minus = e * (data.beta1 + data.beta2), e * (data.beta1 - data.beta2)
    mu_plus, mu_minus = data.mu1 + data.mu2, data.mu1 - data.mu2
    return {
        "p_plus": derivative(p_plus, "t") - mu_minus * q_plus / SQRT2,
        "q_plus": derivative(q_plus, "t") + mu_minus * p_plus / SQRT2,
        "p_minus": derivative(p_minus, "s") - mu_plus * q_minus / SQRT2,
        "q_minus": derivative(q_minus, "s") + mu_plus * p_minus / SQRT2,
    }


def gauss_ricci_combined(data: FundamentalData) -> Tuple[ScalarField, ScalarField]:
    """(λ_uu−λ_vv+L0e^{2λ}) ± ((μ1)_v−(μ2)_u) − (X±² − Y±²); equals gauss ± ricci residual."""
    _require_neutral(data.ambient, "the combined Gauss-Ricci form")
    inv = derive(data)
    A = gauss_lhs(data)
    B = ricci_lhs(data)
    plus = A + B - (inv.X_plus * inv.X_plus - inv.Y_plus * inv.Y_plus)
    minus = A - B - (inv.X_minus * inv.X_minus - inv.Y_minus * inv.Y_minus)
    return plus, minus


def _aggregate(mask: np.ndarray, yes: str, no: str) -> str:
    if np.all(mask):
        return yes
    if not np.any(mask):
        return no
    return MIXED


def lift_branches(data: FundamentalData, tol: float, margin: int = 0) -> Dict[str, str]:
    """
    Which linear factor of X±² − Y±² = (X±+Y±)(X±−Y±) vanishes.

    "sum" means X±+Y± = 0, "difference" X±−Y± = 0, "both" means X± = Y± = 0.
    """
    _require_neutral(data.ambient, "the twistor lift")
    inv = derive(data)
    out = {}
    for sign, X, Y in (("plus", inv.X_plus, inv.Y_plus), ("minus", inv.X_minus, inv.Y_minus)):
        total = np.abs((X + Y).interior(margin)) <= tol
        gap = np.abs((X - Y).interior(margin)) <= tol
        if np.all(total & gap):
            out[sign] = "both"
        elif np.all(total):
            out[sign] = "sum"
        elif np.all(gap):
            out[sign] = "difference"
        elif np.all(total | gap):
            out[sign] = MIXED
        else:
            out[sign] = "none"
    return out


def q_status(q: ParacomplexField, tolerances: Tolerances) -> str:
    codes = q.classify(tolerances.eps_zero, tolerances.eps_null, tolerances.margin)
    zero = codes == CLASS_CODES[CausalClass.ZERO]
    null = codes == CLASS_CODES[CausalClass.NULL_NONZERO]
    if np.all(zero):
        return "zero"
    if np.all(zero | null):
        return "null_nonzero"
    if not np.any(zero | null):
        return "non_null"
    return MIXED


# =============================
# Classification
# =============================

def _verdict(name: str, f: ScalarField, tol: float, margin: int) -> Verdict:
    return Verdict(name, f.max_abs(margin), tol, f.boundary_max_abs(margin))


def classify(data: FundamentalData, tolerances: Optional[Tolerances] = None) -> ClassificationReport:
    """
    Full report: K ≡ L0, flatness of the normal connection, status of the quartic
    differential, causal type of both twistor lifts and every integrability residual.
    """
    tolerances = tolerances or Tolerances()
    margin = tolerances.margin
    h = data.grid.h
    scale = residual_scale(data)
    tol = tolerances.verdict_tol(h, scale)

    K_dev = curvature_K(data) - data.ambient.L0
    normal = ricci_lhs(data)

    residuals = {name: _verdict(name, f, tol, margin) for name, f in gcr_residuals(data).named().items()}
    residuals["compatibility"] = _verdict("compatibility", compatibility_residual(data), tol, margin)

    status = zero_or_null = plus = minus = branches = None
    if data.ambient.family == "neutral":
        status = q_status(quartic_Q(data), tolerances)
        zero_or_null = status in ("zero", "null_nonzero")
        norms = twistor_norms(derive(data))
        plus = _aggregate(np.abs(norms.t2_plus.interior(margin)) <= tol, ZERO_OR_LIGHTLIKE, NOT_LIGHTLIKE)
        minus = _aggregate(np.abs(norms.t2_minus.interior(margin)) <= tol, ZERO_OR_LIGHTLIKE, NOT_LIGHTLIKE)
        branches = lift_branches(data, tol, margin)

    report = ClassificationReport(
        family=data.ambient.family,
        L0=data.ambient.L0,
        k_equals_L0=_verdict("k_equals_L0", K_dev, tol, margin),
        normal_flat=_verdict("normal_flat", normal, tol, margin),
        q_status=status,
        q_zero_or_null=zero_or_null,
        lift_plus=plus,
        lift_minus=minus,
        lift_branches=branches,
        residuals=residuals,
        tolerance=tol,
        scale=scale,
        margin=margin,
        h=h,
    )
    logger.info("classified %s data: K=L0 %s, normal flat %s, Q %s, integrable %s",
                report.family, report.k_equals_L0.passed, report.normal_flat.passed,
                report.q_status, report.integrable)
    return report
