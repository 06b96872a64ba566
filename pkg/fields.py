"""
Uniform rectangular grids over (u,v) or characteristic (s,t) coordinates, scalar fields
sampled on them, second-order finite differences and coordinate conversion.

Axis 1 is the first coordinate (u or s, array index i), axis 2 the second (v or t, index j).
Field values are stored as an (n1, n2) array.
"""
import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from exprdsl import EvaluationError, Expr
from paracomplex import EPS_NULL, EPS_ZERO, Paracomplex, classify_array

logger = logging.getLogger(__name__)

SQRT2 = math.sqrt(2.0)
MIN_POINTS = 5
COORDS = {"uv": ("u", "v"), "st": ("s", "t")}
# Snap fractional indices this close to a node onto the node
SNAP = 1e-9


class GridError(ValueError):
    pass


class GridTooSmallError(GridError):
    pass


class DomainError(ValueError):
    """A value or a point is outside the domain of a computation; carries the gridpoint."""

    def __init__(self, message: str, index: Optional[Tuple[int, int]] = None,
                 point: Optional[Tuple[float, float]] = None):
        where = ""
        if index is not None:
            where = f" at gridpoint {index}"
            if point is not None:
                where += f" ({point[0]:.6g}, {point[1]:.6g})"
        super().__init__(f"{message}{where}")
        self.index = index
        self.point = point


@dataclass(frozen=True)
class CharPoint:
    s: float
    t: float


def char_convert(p, direction: str = "uv->st") -> Tuple:
    """
    Convert a point between (u,v) and characteristic (s,t) coordinates.

    s = (u+v)/sqrt2, t = (u-v)/sqrt2 and, inversely, u = (s+t)/sqrt2, v = (s-t)/sqrt2.
    Works on floats and numpy arrays alike.
    """
    if direction not in ("uv->st", "st->uv"):
        raise ValueError(f"unknown direction '{direction}'")
    if isinstance(p, CharPoint):
        a, b = p.s, p.t
    else:
        a, b = p
    return (a + b) / SQRT2, (a - b) / SQRT2


@dataclass(frozen=True)
class Grid:
    coord_kind: str
    min1: float
    max1: float
    min2: float
    max2: float
    n1: int
    n2: int

    def __post_init__(self):
        if self.coord_kind not in COORDS:
            raise GridError(f"coord_kind must be 'uv' or 'st', got '{self.coord_kind}'")
        if not (self.max1 > self.min1 and self.max2 > self.min2):
            raise GridError("grid needs max > min along both axes")
        if self.n1 < MIN_POINTS or self.n2 < MIN_POINTS:
            raise GridTooSmallError(f"grid needs at least {MIN_POINTS} points per axis, got {self.n1}x{self.n2}")

    @classmethod
    def uv(cls, u_range: Tuple[float, float], v_range: Tuple[float, float],
           n1: int, n2: Optional[int] = None) -> "Grid":
        return cls("uv", float(u_range[0]), float(u_range[1]), float(v_range[0]), float(v_range[1]),
                   int(n1), int(n2 if n2 is not None else n1))

    @classmethod
    def st(cls, s_range: Tuple[float, float], t_range: Tuple[float, float],
           n1: int, n2: Optional[int] = None) -> "Grid":
        return cls("st", float(s_range[0]), float(s_range[1]), float(t_range[0]), float(t_range[1]),
                   int(n1), int(n2 if n2 is not None else n1))

    @property
    def names(self) -> Tuple[str, str]:
        return COORDS[self.coord_kind]

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.n1, self.n2)

    @property
    def h1(self) -> float:
        return (self.max1 - self.min1) / (self.n1 - 1)

    @property
    def h2(self) -> float:
        return (self.max2 - self.min2) / (self.n2 - 1)

    @property
    def h(self) -> float:
        return max(self.h1, self.h2)

    def axis_coords(self, axis: int) -> np.ndarray:
        if axis == 1:
            return np.linspace(self.min1, self.max1, self.n1)
        return np.linspace(self.min2, self.max2, self.n2)

    def mesh(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.axis_coords(1), self.axis_coords(2), indexing="ij")

    def coordinates(self) -> Dict[str, np.ndarray]:
        """Both coordinate systems evaluated at every node, keyed by name."""
        a, b = self.mesh()
        c, d = char_convert((a, b))
        other = "st" if self.coord_kind == "uv" else "uv"
        return {self.names[0]: a, self.names[1]: b, COORDS[other][0]: c, COORDS[other][1]: d}

    def point(self, i: int, j: int) -> Tuple[float, float]:
        return (float(self.axis_coords(1)[i]), float(self.axis_coords(2)[j]))

    def to_json(self) -> dict:
        a, b = self.names
        return {"coord_kind": self.coord_kind, f"{a}_range": [self.min1, self.max1],
                f"{b}_range": [self.min2, self.max2], "n1": self.n1, "n2": self.n2}


Number = Union[float, int, np.ndarray]


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise GridError(f"values have shape {values.shape}, grid has {self.grid.shape}")
        bad = ~np.isfinite(values)
        if np.any(bad):
            i, j = (int(k) for k in np.argwhere(bad)[0])
            raise DomainError("non-finite field value", (i, j), self.grid.point(i, j))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def _other(self, other) -> Number:
        if isinstance(other, ScalarField):
            if other.grid != self.grid:
                raise GridError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return ScalarField(self.grid, self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return ScalarField(self.grid, self.values - self._other(other))

    def __rsub__(self, other):
        return ScalarField(self.grid, self._other(other) - self.values)

    def __mul__(self, other):
        return ScalarField(self.grid, self.values * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return ScalarField(self.grid, self.values / self._other(other))

    def __neg__(self):
        return ScalarField(self.grid, -self.values)

    def map(self, func) -> "ScalarField":
        return ScalarField(self.grid, func(self.values))

    def interior(self, margin: int = 0) -> np.ndarray:
        if margin <= 0:
            return self.values
        if 2 * margin >= min(self.grid.shape):
            raise GridTooSmallError(f"margin {margin} leaves no interior on a {self.grid.shape} grid")
        return self.values[margin:-margin, margin:-margin]

    def max_abs(self, margin: int = 0) -> float:
        return float(np.max(np.abs(self.interior(margin))))

    def boundary_max_abs(self, margin: int) -> float:
        """Largest |value| on the layers excluded by interior(margin)."""
        if margin <= 0:
            return 0.0
        mask = np.ones(self.grid.shape, dtype=bool)
        mask[margin:-margin, margin:-margin] = False
        return float(np.max(np.abs(self.values[mask])))


@dataclass(frozen=True, eq=False)
class ParacomplexField:
    """Pointwise paracomplex field re + j im on a shared grid."""
    re: ScalarField
    im: ScalarField

    def __post_init__(self):
        if self.re.grid != self.im.grid:
            raise GridError("re and im live on different grids")

    @property
    def grid(self) -> Grid:
        return self.re.grid

    def __add__(self, other: "ParacomplexField") -> "ParacomplexField":
        return ParacomplexField(self.re + other.re, self.im + other.im)

    def __sub__(self, other: "ParacomplexField") -> "ParacomplexField":
        return ParacomplexField(self.re - other.re, self.im - other.im)

    def __mul__(self, other):
        if isinstance(other, ParacomplexField):
            return ParacomplexField(self.re * other.re + self.im * other.im,
                                    self.re * other.im + self.im * other.re)
        return ParacomplexField(self.re * other, self.im * other)

    __rmul__ = __mul__

    def conj(self) -> "ParacomplexField":
        return ParacomplexField(self.re, -self.im)

    def sq_norm(self) -> ScalarField:
        return (self.re - self.im) * (self.re + self.im)

    def at(self, i: int, j: int) -> Paracomplex:
        return Paracomplex(float(self.re.values[i, j]), float(self.im.values[i, j]))

    def max_abs(self, margin: int = 0) -> float:
        return max(self.re.max_abs(margin), self.im.max_abs(margin))

    def classify(self, eps_zero: float = EPS_ZERO, eps_null: float = EPS_NULL, margin: int = 0) -> np.ndarray:
        """CLASS_CODES of every (interior) point."""
        return classify_array(self.re.interior(margin), self.im.interior(margin), eps_zero, eps_null)


# =============================
# Finite differences
# =============================

def diff(f: ScalarField, axis: int, order: int = 1) -> ScalarField:
    """
    Second-order finite difference along a native grid axis.

    Central differences in the interior, one-sided second-order differences at the boundary.
    Both stencils reproduce quadratics exactly (order 2 reproduces cubics).
    """
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    n = f.grid.shape[axis - 1]
    if n < order + 2:
        raise GridTooSmallError(f"{n} points along axis {axis} are too few for order {order}")
    h = f.grid.h1 if axis == 1 else f.grid.h2
    values = f.values if axis == 1 else f.values.T

    if order == 1:
        out = np.gradient(values, h, axis=0, edge_order=2)
    else:
        out = np.empty_like(values)
        out[1:-1] = (values[:-2] - 2.0 * values[1:-1] + values[2:]) / (h * h)
        out[0] = (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / (h * h)
        out[-1] = (2.0 * values[-1] - 5.0 * values[-2] + 4.0 * values[-3] - values[-4]) / (h * h)

    return ScalarField(f.grid, out if axis == 1 else out.T)


def _expansion(grid: Grid, name: str) -> Dict[int, float]:
    """Coefficients of d/d(name) over the native first derivatives of the grid."""
    native = grid.names
    if name in native:
        return {native.index(name) + 1: 1.0}
    if name in ("s", "u"):
        return {1: 1.0 / SQRT2, 2: 1.0 / SQRT2}
    if name in ("t", "v"):
        return {1: 1.0 / SQRT2, 2: -1.0 / SQRT2}
    raise GridError(f"unknown coordinate '{name}'")


def derivative(f: ScalarField, name: str, order: int = 1) -> ScalarField:
    """
    Derivative in either coordinate system on either grid kind.

    name is one coordinate letter ("u", "v", "s", "t"), repeated `order` times, or a
    two-letter mixed derivative such as "st" or "uv". Non-native directions are converted
    with d/du = (d/ds + d/dt)/sqrt2, d/dv = (d/ds - d/dt)/sqrt2 and their inverses.
    """
    letters = name * order if len(name) == 1 else name
    if len(letters) not in (1, 2):
        raise ValueError(f"only first and second derivatives are supported, got '{letters}'")
    if len(letters) == 1:
        return _combine(f.grid, [(coef, diff(f, axis)) for axis, coef in _expansion(f.grid, letters).items()])

    terms = {}
    for a, ca in _expansion(f.grid, letters[0]).items():
        for b, cb in _expansion(f.grid, letters[1]).items():
            key = (min(a, b), max(a, b))
            terms[key] = terms.get(key, 0.0) + ca * cb
    parts = []
    for (a, b), coef in terms.items():
        if coef == 0.0:
            continue
        parts.append((coef, diff(f, a, 2) if a == b else diff(diff(f, a), b)))
    return _combine(f.grid, parts)


def _combine(grid: Grid, parts) -> ScalarField:
    out = np.zeros(grid.shape)
    for coef, field in parts:
        out = out + coef * field.values
    return ScalarField(grid, out)


# =============================
# Sampling and resampling
# =============================

def sample(e: Expr, grid: Grid) -> ScalarField:
    """
    Evaluate an expression at every node.

    Variables may name either coordinate system: an s,t expression sampled on an uv-grid
    gets its coordinates converted per point, and vice versa.
    """
    coords = grid.coordinates()
    unknown = [name for name in e.variables if name not in coords]
    if unknown:
        raise GridError(f"expression variables {unknown} are not coordinates of an {grid.coord_kind}-grid")
    bindings = {name: coords[name] for name in e.variables}
    try:
        value = e.evaluate(bindings)
    except EvaluationError as exc:
        if exc.index is None:
            raise DomainError(str(exc)) from exc
        i, j = (int(k) for k in np.unravel_index(exc.index, grid.shape))
        raise DomainError(exc.message, (i, j), grid.point(i, j)) from exc
    return ScalarField(grid, np.broadcast_to(np.asarray(value, dtype=float), grid.shape).copy())


def st_cover(grid: Grid) -> Grid:
    """
    Smallest characteristic grid covering an uv-grid, spacing h/sqrt2.

    With equal spacing in u and v, uv node (i, j) is st node (i + j, i - j + n2 - 1).
    """
    if grid.coord_kind != "uv":
        raise GridError("st_cover expects an uv-grid")
    h = min(grid.h1, grid.h2) / SQRT2
    s_min, s_max = (grid.min1 + grid.min2) / SQRT2, (grid.max1 + grid.max2) / SQRT2
    t_min, t_max = (grid.min1 - grid.max2) / SQRT2, (grid.max1 - grid.min2) / SQRT2
    n1 = int(math.ceil((s_max - s_min) / h - SNAP)) + 1
    n2 = int(math.ceil((t_max - t_min) / h - SNAP)) + 1
    return Grid.st((s_min, s_max), (t_min, t_max), n1, n2)


def _fractional(x: np.ndarray, lo: float, h: float, n: int, label: str, target: Grid) -> np.ndarray:
    frac = (x - lo) / h
    nearest = np.round(frac)
    frac = np.where(np.abs(frac - nearest) < SNAP, nearest, frac)
    outside = (frac < 0) | (frac > n - 1)
    if np.any(outside):
        i, j = (int(k) for k in np.argwhere(outside)[0])
        raise DomainError(f"target point outside the source domain along {label}", (i, j), target.point(i, j))
    return frac


def resample(f: ScalarField, target: Grid) -> ScalarField:
    """Bilinear interpolation onto another grid of either coordinate kind; coinciding nodes are copied."""
    src = f.grid
    coords = target.coordinates()
    x, y = coords[src.names[0]], coords[src.names[1]]
    fi = _fractional(x, src.min1, src.h1, src.n1, src.names[0], target)
    fj = _fractional(y, src.min2, src.h2, src.n2, src.names[1], target)
    i0 = np.clip(np.floor(fi).astype(int), 0, src.n1 - 2)
    j0 = np.clip(np.floor(fj).astype(int), 0, src.n2 - 2)
    wi = fi - i0
    wj = fj - j0
    v = f.values
    out = ((1 - wi) * (1 - wj) * v[i0, j0] + wi * (1 - wj) * v[i0 + 1, j0]
           + (1 - wi) * wj * v[i0, j0 + 1] + wi * wj * v[i0 + 1, j0 + 1])
    return ScalarField(target, out)


def export_csv(f: ScalarField, path: Union[str, Path]) -> Path:
    """Write "u,v,value" (or "s,t,value") rows in row-major order, 17 significant digits."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    a, b = f.grid.mesh()
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([*f.grid.names, "value"])
        for x, y, value in zip(a.ravel(), b.ravel(), f.values.ravel()):
            writer.writerow([f"{x:.17g}", f"{y:.17g}", f"{value:.17g}"])
    logger.debug("wrote %s (%d rows)", path, f.values.size)
    return path
