"""
Integration of the frame system M_u = M·S, M_v = M·T for M = (T1 T2 N1 N2 F) into flat
ambient coordinates, and the checks run on the resulting immersion.

Ambient coordinates are ordered as in AmbientSpec.signature: positive slots first.
"""
import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from fields import Grid, ScalarField, diff
from invariants import AmbientSpec, FundamentalData, frame_matrices

logger = logging.getLogger(__name__)

GRAM_TOL = 1e-9
COLUMNS = ("T1", "T2", "N1", "N2", "F")


class FrameError(ValueError):
    pass


class GramError(FrameError):
    pass


@dataclass(frozen=True, eq=False)
class FrameField:
    grid: Grid
    ambient: AmbientSpec
    frames: np.ndarray  # (n1, n2, d, 5)
    initial: np.ndarray  # (d, 5)
    reprojected: bool = False

    @property
    def metric(self) -> np.ndarray:
        return np.array(self.ambient.signature, dtype=float)

    @property
    def position(self) -> np.ndarray:
        """F at every gridpoint, shape (n1, n2, d)."""
        return self.frames[..., 4]


@dataclass
class FrameResiduals:
    holonomy: float
    holonomy_field: ScalarField
    gram: ScalarField
    meanH: ScalarField
    quadric: Optional[ScalarField] = None

    def summary(self, margin: int = 0) -> dict:
        out = {
            "holonomy": self.holonomy,
            "gram_max": self.gram.max_abs(),
            "meanH_max": self.meanH.max_abs(margin),
            "meanH_boundary_max": self.meanH.boundary_max_abs(margin),
        }
        if self.quadric is not None:
            out["quadric_max"] = self.quadric.max_abs()
        return out


def _slots(ambient: AmbientSpec) -> dict:
    """Ambient basis index of every frame column; F is absent when L0 = 0."""
    spacelike = ["T1", "N1"] + (["N2"] if ambient.family == "lorentzian" else [])
    timelike = ["T2"] + (["N2"] if ambient.family == "neutral" else [])
    if ambient.L0 > 0:
        spacelike.append("F")
    elif ambient.L0 < 0:
        timelike.append("F")
    return {name: k for k, name in enumerate(spacelike + timelike)}


def expected_gram(ambient: AmbientSpec, lam: Union[float, np.ndarray]) -> np.ndarray:
    """Gram matrix h(M_i, M_j) the frame must have, shape (..., 5, 5)."""
    e2 = np.exp(2.0 * np.asarray(lam, dtype=float))
    n2_sign = -1.0 if ambient.family == "neutral" else 1.0
    diag = np.stack([e2, -e2, e2, n2_sign * e2,
                     np.full_like(e2, 1.0 / ambient.L0 if ambient.L0 != 0 else 0.0)], axis=-1)
    out = np.zeros(diag.shape + (5,))
    idx = np.arange(5)
    out[..., idx, idx] = diag
    return out


def canonical_frame(ambient: AmbientSpec, lam00: float) -> np.ndarray:
    """
    Diagonal initial frame at the base point.

    T1, T2, N1, N2 are basis vectors scaled by e^{λ(0,0)} placed in slots of the matching
    sign; F is the remaining basis vector over √|L0|, or the origin when L0 = 0.
    """
    d = ambient.dim
    M = np.zeros((d, 5))
    scale = math.exp(lam00)
    for name, slot in _slots(ambient).items():
        col = COLUMNS.index(name)
        M[slot, col] = 1.0 / math.sqrt(abs(ambient.L0)) if name == "F" else scale
    return M


def gram_deviation(M: np.ndarray, ambient: AmbientSpec, lam) -> np.ndarray:
    """Entrywise max of |MᵀηM − expected| over the checked block, for frames of shape (..., d, 5)."""
    eta = np.array(ambient.signature, dtype=float)
    G = np.einsum("...ai,a,...aj->...ij", M, eta, M)
    dev = np.abs(G - expected_gram(ambient, lam))
    if ambient.L0 == 0:
        dev = dev[..., :4, :4]
    return np.max(dev, axis=(-2, -1))


def _rk4_sweep(A: np.ndarray, B: np.ndarray, M0: np.ndarray, h1: float, h2: float,
               project=None) -> np.ndarray:
    """
    Integrate M' = M·A along the first axis from M0, then M' = M·B along the second axis
    for every first-axis index at once. Midpoint coefficients are linear interpolants;
    project, when given, is applied after every step.
    """
    n1, n2 = A.shape[:2]
    d = M0.shape[0]
    out = np.empty((n1, n2, d, 5))

    def step(M, C0, C1, h):
        Cm = 0.5 * (C0 + C1)
        k1 = M @ C0
        k2 = (M + 0.5 * h * k1) @ Cm
        k3 = (M + 0.5 * h * k2) @ Cm
        k4 = (M + h * k3) @ C1
        M = M + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return project(M) if project is not None else M

    row = np.empty((n1, d, 5))
    row[0] = M0
    for i in range(n1 - 1):
        row[i + 1] = step(row[i], A[i, 0], A[i + 1, 0], h1)
    out[:, 0] = row
    current = row
    for j in range(n2 - 1):
        current = step(current, B[:, j], B[:, j + 1], h2)
        out[:, j + 1] = current
    return out


def _reproject(frames: np.ndarray, ambient: AmbientSpec) -> np.ndarray:
    eta = np.array(ambient.signature, dtype=float)
    F = frames[..., 4]
    norm = np.einsum("...a,a,...a->...", F, eta, F)
    ratio = (1.0 / ambient.L0) / norm
    factor = np.sqrt(np.where(ratio > 0, ratio, 1.0))
    frames = frames.copy()
    frames[..., 4] = F * factor[..., None]
    return frames


def integrate_frame(data: FundamentalData, initial: Union[str, np.ndarray] = "canonical",
                    *, reproject: bool = False) -> FrameField:
    """
    RK4 along the first grid row (u-direction) with M' = M·S, then along every column
    (v-direction) with M' = M·T.

    With reproject, F is rescaled onto ⟨F,F⟩ = 1/L0 after every step (L0 ≠ 0 only).
    """
    ambient = data.ambient
    grid = data.grid
    lam00 = float(data.lam.values[0, 0])
    if isinstance(initial, str):
        if initial != "canonical":
            raise FrameError(f"unknown initial frame '{initial}'")
        M0 = canonical_frame(ambient, lam00)
    else:
        M0 = np.asarray(initial, dtype=float)
        if M0.shape != (ambient.dim, 5):
            raise FrameError(f"initial frame must have shape ({ambient.dim}, 5), got {M0.shape}")
    dev0 = float(gram_deviation(M0, ambient, lam00))
    if dev0 > GRAM_TOL * max(1.0, math.exp(2.0 * abs(lam00))):
        raise GramError(f"initial frame violates the Gram constraints by {dev0:.3e}")

    S, T = frame_matrices(data)
    project = (lambda M: _reproject(M, ambient)) if reproject and ambient.L0 != 0 else None
    frames = _rk4_sweep(S, T, M0, grid.h1, grid.h2, project)
    bad = ~np.isfinite(frames).all(axis=(-2, -1))
    if np.any(bad):
        i, j = (int(k) for k in np.argwhere(bad)[0])
        raise FrameError(f"frame integration produced non-finite values at gridpoint {(i, j)}")
    logger.info("integrated %dx%d frame field into %d-dimensional ambient", grid.n1, grid.n2, ambient.dim)
    return FrameField(grid, ambient, frames, M0, reprojected=project is not None)


def holonomy_field(ff: FrameField, data: FundamentalData) -> ScalarField:
    """‖M_u-then-v − M_v-then-u‖∞ at every gridpoint."""
    S, T = frame_matrices(data)
    project = (lambda M: _reproject(M, ff.ambient)) if ff.reprojected else None
    other = _rk4_sweep(T.transpose(1, 0, 2, 3), S.transpose(1, 0, 2, 3), ff.initial,
                       data.grid.h2, data.grid.h1, project).transpose(1, 0, 2, 3)
    return ScalarField(data.grid, np.max(np.abs(ff.frames - other), axis=(-2, -1)))


def _position_components(ff: FrameField):
    F = ff.position
    d = F.shape[-1]
    grid = ff.grid
    return [ScalarField(grid, F[..., a]) for a in range(d)]


def _component_stack(fields) -> np.ndarray:
    return np.stack([f.values for f in fields], axis=-1)


def frame_residuals(ff: FrameField, data: FundamentalData) -> FrameResiduals:
    """
    Path dependence (holonomy), Gram drift and the mean-curvature residual
    F_uu − F_vv + 2 L0 e^{2λ} F (max-norm over ambient coordinates).
    """
    hol = holonomy_field(ff, data)
    gram = ScalarField(ff.grid, gram_deviation(ff.frames, ff.ambient, data.lam.values))

    parts = _position_components(ff)
    F_uu = _component_stack([diff(p, 1, 2) for p in parts])
    F_vv = _component_stack([diff(p, 2, 2) for p in parts])
    e2 = np.exp(2.0 * data.lam.values)[..., None]
    mean = F_uu - F_vv + 2.0 * ff.ambient.L0 * e2 * ff.position
    meanH = ScalarField(ff.grid, np.max(np.abs(mean), axis=-1))

    quadric = None
    if ff.ambient.L0 != 0:
        eta = ff.metric
        norm = np.einsum("...a,a,...a->...", ff.position, eta, ff.position)
        quadric = ScalarField(ff.grid, np.abs(norm - 1.0 / ff.ambient.L0))
    return FrameResiduals(hol.max_abs(), hol, gram, meanH, quadric)


def induced_metric_residual(ff: FrameField, data: FundamentalData):
    """⟨F_u,F_u⟩ − e^{2λ}, ⟨F_u,F_v⟩ and ⟨F_v,F_v⟩ + e^{2λ} from finite differences of F."""
    parts = _position_components(ff)
    F_u = _component_stack([diff(p, 1) for p in parts])
    F_v = _component_stack([diff(p, 2) for p in parts])
    eta = ff.metric
    inner = lambda a, b: np.einsum("...a,a,...a->...", a, eta, b)  # noqa: E731
    e2 = np.exp(2.0 * data.lam.values)
    return (ScalarField(ff.grid, inner(F_u, F_u) - e2),
            ScalarField(ff.grid, inner(F_u, F_v)),
            ScalarField(ff.grid, inner(F_v, F_v) + e2))


def export_immersion(ff: FrameField, path: Union[str, Path], *, signs: Optional[dict] = None,
                     residuals: Optional[dict] = None) -> Path:
    """
    Write "u,v,x1,...,xd" rows (17 significant digits) and a JSON sidecar next to them
    with the ambient, the grid, the initial frame, the signs and a residual summary.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    u, v = ff.grid.mesh()
    X = ff.position
    d = X.shape[-1]
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["u", "v"] + [f"x{k}" for k in range(1, d + 1)])
        for i in range(ff.grid.n1):
            for j in range(ff.grid.n2):
                writer.writerow([f"{u[i, j]:.17g}", f"{v[i, j]:.17g}"] + [f"{x:.17g}" for x in X[i, j]])

    sidecar = {
        **ff.ambient.to_json(),
        "grid": ff.grid.to_json(),
        "columns": list(COLUMNS),
        "initial_frame": ff.initial.tolist(),
        "signs": signs or {},
        "residuals": residuals or {},
    }
    side_path = path.with_suffix(".json")
    with side_path.open("w") as handle:
        json.dump(sidecar, handle, indent=2, sort_keys=True)
    logger.info("exported immersion to %s and %s", path, side_path)
    return path
