"""
Paracomplex (split-complex) numbers a + jb with j^2 = +1, and their causal classification.

All tolerance logic for the zero/null dichotomy lives in this module.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict

import numpy as np

EPS_ZERO = 1e-10
EPS_NULL = 1e-8


class CausalClass(str, Enum):
    ZERO = "zero"
    NULL_NONZERO = "null_nonzero"
    POSITIVE = "positive"
    NEGATIVE = "negative"


# Integer codes used by classify_array, in a fixed order
CLASS_CODES = {
    CausalClass.ZERO: 0,
    CausalClass.NULL_NONZERO: 1,
    CausalClass.POSITIVE: 2,
    CausalClass.NEGATIVE: 3,
}
CODE_CLASSES = {code: cls for cls, code in CLASS_CODES.items()}


@dataclass(frozen=True)
class Paracomplex:
    re: float
    im: float = 0.0

    def __add__(self, other):
        other = _coerce(other)
        return Paracomplex(self.re + other.re, self.im + other.im)

    __radd__ = __add__

    def __sub__(self, other):
        other = _coerce(other)
        return Paracomplex(self.re - other.re, self.im - other.im)

    def __rsub__(self, other):
        return _coerce(other) - self

    def __neg__(self):
        return Paracomplex(-self.re, -self.im)

    def __mul__(self, other):
        return pc_mul(self, _coerce(other))

    __rmul__ = __mul__

    def conj(self) -> "Paracomplex":
        return Paracomplex(self.re, -self.im)

    def sq_norm(self) -> float:
        return pc_sq_norm(self)

    def to_json(self) -> Dict[str, float]:
        return {"re": float(self.re), "im": float(self.im)}

    @classmethod
    def from_json(cls, data: Dict[str, float]) -> "Paracomplex":
        return cls(float(data["re"]), float(data["im"]))

    def __repr__(self):
        sign = "+" if self.im >= 0 else "-"
        return f"Paracomplex({self.re} {sign} {abs(self.im)}j)"


J = Paracomplex(0.0, 1.0)


def _coerce(value) -> Paracomplex:
    if isinstance(value, Paracomplex):
        return value
    return Paracomplex(float(value), 0.0)


def pc_mul(a: Paracomplex, b: Paracomplex) -> Paracomplex:
    """(a.re + j a.im)(b.re + j b.im) with j^2 = +1."""
    return Paracomplex(a.re * b.re + a.im * b.im, a.re * b.im + a.im * b.re)


def pc_sq_norm(z: Paracomplex) -> float:
    """Square norm re^2 - im^2 (indefinite: negative and null values occur)."""
    return (z.re - z.im) * (z.re + z.im)


def pc_classify(z: Paracomplex, eps_zero: float = EPS_ZERO, eps_null: float = EPS_NULL) -> CausalClass:
    """
    Classify z as zero, null (but nonzero), or by the sign of its square norm.

    Args:
        z: Value to classify
        eps_zero: Absolute bound on max(|re|, |im|) below which z counts as zero
        eps_null: Relative bound, |sq_norm| <= eps_null * (re^2 + im^2) counts as null

    Returns:
        The CausalClass of z
    """
    if eps_zero <= 0 or eps_null <= 0:
        raise ValueError("eps_zero and eps_null must be positive")
    if max(abs(z.re), abs(z.im)) <= eps_zero:
        return CausalClass.ZERO
    norm = pc_sq_norm(z)
    if abs(norm) <= eps_null * (z.re * z.re + z.im * z.im):
        return CausalClass.NULL_NONZERO
    return CausalClass.POSITIVE if norm > 0 else CausalClass.NEGATIVE


def classify_array(re: np.ndarray, im: np.ndarray,
                   eps_zero: float = EPS_ZERO, eps_null: float = EPS_NULL) -> np.ndarray:
    """Vectorized pc_classify; returns an integer array of CLASS_CODES values."""
    if eps_zero <= 0 or eps_null <= 0:
        raise ValueError("eps_zero and eps_null must be positive")
    re = np.asarray(re, dtype=float)
    im = np.asarray(im, dtype=float)
    norm = (re - im) * (re + im)
    codes = np.where(norm > 0, CLASS_CODES[CausalClass.POSITIVE], CLASS_CODES[CausalClass.NEGATIVE])
    null = np.abs(norm) <= eps_null * (re * re + im * im)
    codes = np.where(null, CLASS_CODES[CausalClass.NULL_NONZERO], codes)
    zero = np.maximum(np.abs(re), np.abs(im)) <= eps_zero
    return np.where(zero, CLASS_CODES[CausalClass.ZERO], codes)
