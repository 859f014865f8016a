"""Discrete (atomic) measures with prescribed Frostman exponents.

A :class:`DiscreteMeasure` is a weighted point cloud. Measures built from
products and affine images keep a record of that structure
(:class:`Factorization`) so that Fourier transforms can be evaluated factor by
factor instead of over the full product of atoms.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from gmtlab.errors import BudgetExceededError, ValidationError

DEFAULT_ATOM_BUDGET = 2**24

# ball masses are evaluated for at most this many candidate centers
DEFAULT_MAX_CENTERS = 4096


@dataclass(frozen=True, eq=False)
class Factorization:
    """``mu = (linear @ z + shift)`` pushed forward from ``factors[0] x factors[1] x ...``.

    ``linear`` has one column per coordinate of the concatenated factor space;
    the factors themselves are always unfactored leaves.
    """

    factors: tuple["DiscreteMeasure", ...]
    linear: np.ndarray
    shift: np.ndarray

    def column_blocks(self) -> list[np.ndarray]:
        blocks, start = [], 0
        for f in self.factors:
            blocks.append(self.linear[:, start:start + f.ambient_dim])
            start += f.ambient_dim
        return blocks


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Weighted atoms in R^d.

    Parameters
    ----------
    points : (N, d) array
    weights : (N,) array of nonnegative reals with positive sum
    diameter_hint : float, optional
        Bound on the support size; every atom lies within this distance of the
        centroid. Computed from the atoms when omitted.
    resolution : float
        Atomic resolution. Scales below it are not meaningful for the measure
        (a discrete measure looks 0-dimensional there). 0 for a point mass.
    factors : Factorization, optional
        Product structure used for fast Fourier evaluation.
    """

    points: np.ndarray
    weights: np.ndarray
    diameter_hint: float = None  # type: ignore[assignment]
    resolution: float = 0.0
    factors: Factorization | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.array(self.weights, dtype=np.float64).reshape(-1)
        _check_arrays(pts, w)
        if self.diameter_hint is None:
            _, radius = _centroid_radius(pts, w)
            object.__setattr__(self, "diameter_hint", float(2.0 * radius))
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "diameter_hint", float(self.diameter_hint))
        object.__setattr__(self, "resolution", float(self.resolution))
        validate_measure(self)

    @property
    def ambient_dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_atoms(self) -> int:
        return self.points.shape[0]

    @property
    def mass(self) -> float:
        return total_mass(self)

    def __len__(self) -> int:
        return self.n_atoms


@dataclass(frozen=True)
class CantorSpec:
    branches: int
    ratio: float
    depth: int
    offsets: tuple[float, ...] | None = None

    def __post_init__(self):
        if int(self.branches) != self.branches or self.branches < 2:
            raise ValidationError("branches must be an integer >= 2")
        if not 0.0 < self.ratio <= 1.0 / self.branches:
            raise ValidationError(f"ratio must lie in (0, 1/{self.branches}]")
        if int(self.depth) != self.depth or self.depth < 1:
            raise ValidationError("depth must be an integer >= 1")
        if self.offsets is not None:
            offs = tuple(float(o) for o in self.offsets)
            if len(offs) != self.branches:
                raise ValidationError("need one offset per branch")
            if any(o < 0.0 or o > 1.0 - self.ratio + 1e-15 for o in offs):
                raise ValidationError("offsets must lie in [0, 1 - ratio]")
            object.__setattr__(self, "offsets", offs)

    @property
    def similarity_dimension(self) -> float:
        return math.log(self.branches) / math.log(1.0 / self.ratio)

    @property
    def resolution(self) -> float:
        return self.ratio ** self.depth

    def branch_offsets(self) -> np.ndarray:
        if self.offsets is not None:
            return np.asarray(self.offsets, dtype=np.float64)
        return np.linspace(0.0, 1.0 - self.ratio, self.branches)


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares line through ``sample_points``.

    ``residual`` is the max absolute vertical deviation from the line;
    ``stderr`` is the standard error of the slope (0 for two points).
    """

    slope: float
    intercept: float
    residual: float
    sample_points: tuple[tuple[float, float], ...]
    stderr: float = 0.0

    def to_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "residual": self.residual,
            "stderr": self.stderr,
            "sample_points": [list(p) for p in self.sample_points],
        }


@dataclass(frozen=True)
class FrostmanReport:
    exponent: float
    constant: float
    fit: SlopeFit
    radii: tuple[float, ...]
    max_masses: tuple[float, ...]
    # set by slice estimates: direction attaining the largest mass at the smallest radius
    worst_direction: tuple[float, ...] | None = None

    def bound_holds(self, rtol: float = 1e-12) -> bool:
        return all(
            m <= self.constant * r ** self.exponent * (1.0 + rtol)
            for r, m in zip(self.radii, self.max_masses)
        )

    def to_dict(self) -> dict:
        out = {
            "exponent": self.exponent,
            "constant": self.constant,
            "radii": list(self.radii),
            "max_masses": list(self.max_masses),
            "fit": self.fit.to_dict(),
        }
        if self.worst_direction is not None:
            out["worst_direction"] = list(self.worst_direction)
        return out


@dataclass(frozen=True)
class ProbePolicy:
    """Which ball centers to try when maximizing ball mass.

    Atom locations are always used (subsampled to ``max_centers`` with a seeded
    draw when there are more atoms); ``n_random`` extra centers are drawn
    uniformly from the bounding box of the atoms.
    """

    max_centers: int | None = DEFAULT_MAX_CENTERS
    n_random: int = 0
    seed: int = 0


# --------------------------------------------------------------------------
# validation and basic quantities


def total_mass(mu: DiscreteMeasure) -> float:
    # np.sum reduces pairwise, in a fixed order
    return float(np.sum(mu.weights))


def _centroid_radius(points: np.ndarray, weights: np.ndarray) -> tuple[np.ndarray, float]:
    m = np.sum(weights)
    if m > 0:
        c = np.sum(points * weights[:, None], axis=0) / m
    else:
        c = points.mean(axis=0)
    if len(points) == 0:
        return c, 0.0
    return c, float(np.sqrt(np.max(np.sum((points - c) ** 2, axis=1))))


def _check_arrays(pts: np.ndarray, w: np.ndarray) -> None:
    if pts.ndim != 2 or pts.shape[1] < 1:
        raise ValidationError("points must be an (N, d) array with d >= 1")
    if w.shape[0] != pts.shape[0] or w.shape[0] < 1:
        raise ValidationError("need at least one atom and one weight per atom")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("points must be finite")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValidationError("weights must be finite and nonnegative")
    if not np.sum(w) > 0:
        raise ValidationError("total mass must be positive")


def validate_measure(mu: DiscreteMeasure) -> None:
    """Raise :class:`ValidationError` unless ``mu`` satisfies the measure invariants."""
    pts, w = mu.points, mu.weights
    _check_arrays(pts, w)
    if not (math.isfinite(mu.diameter_hint) and mu.diameter_hint >= 0):
        raise ValidationError("diameter_hint must be a nonnegative real")
    if not (math.isfinite(mu.resolution) and mu.resolution >= 0):
        raise ValidationError("resolution must be a nonnegative real")
    _, radius = _centroid_radius(pts, w)
    if radius > mu.diameter_hint * (1 + 1e-12) + 1e-12:
        raise ValidationError(
            f"atoms reach distance {radius:.6g} from the centroid, beyond diameter_hint {mu.diameter_hint:.6g}"
        )


def _check_budget(n_atoms: int, budget: int | None) -> None:
    budget = DEFAULT_ATOM_BUDGET if budget is None else budget
    if n_atoms > budget:
        raise BudgetExceededError(f"{n_atoms} atoms exceeds the atom budget of {budget}")


# --------------------------------------------------------------------------
# constructors


def point_mass(point: Sequence[float], mass: float = 1.0) -> DiscreteMeasure:
    p = np.asarray(point, dtype=np.float64).reshape(1, -1)
    return DiscreteMeasure(p, np.array([mass]), diameter_hint=0.0, resolution=0.0)


def make_cantor_measure(spec: CantorSpec, budget: int | None = None) -> DiscreteMeasure:
    """Equal-weight atoms at the left endpoints of the depth-level construction intervals."""
    n = spec.branches ** spec.depth
    _check_budget(n, budget)
    offsets = spec.branch_offsets()
    pts = np.zeros(1)
    # E_{i} = union over branches b of (offset_b + ratio * E_{i-1})
    for _ in range(spec.depth):
        pts = (offsets[:, None] + spec.ratio * pts[None, :]).ravel()
    w = np.full(n, float(spec.branches) ** -spec.depth)
    # the atoms are sums of independent digits offset_b * ratio^i
    digits = tuple(
        DiscreteMeasure((offsets * spec.ratio**i)[:, None], np.full(spec.branches, 1.0 / spec.branches),
                        diameter_hint=1.0)
        for i in range(spec.depth)
    )
    fac = Factorization(digits, np.ones((1, spec.depth)), np.zeros(1))
    return DiscreteMeasure(pts[:, None], w, diameter_hint=1.0, resolution=spec.resolution, factors=fac)


def _grid_1d(per_axis: int) -> DiscreteMeasure:
    pts = (np.arange(per_axis, dtype=np.float64) + 0.5) / per_axis
    return DiscreteMeasure(pts[:, None], np.full(per_axis, 1.0 / per_axis), diameter_hint=1.0,
                           resolution=1.0 / per_axis)


def uniform_grid_measure(ambient_dim: int, per_axis: int, budget: int | None = None) -> DiscreteMeasure:
    """Equal weights at the cell centers of a per_axis^d grid on [0,1]^d."""
    if ambient_dim < 1 or per_axis < 1:
        raise ValidationError("ambient_dim and per_axis must be >= 1")
    _check_budget(per_axis ** ambient_dim, budget)
    mu = _grid_1d(per_axis)
    for _ in range(ambient_dim - 1):
        mu = product_measure(mu, _grid_1d(per_axis), budget=budget)
    return mu


def _factor_form(mu: DiscreteMeasure) -> tuple[tuple[DiscreteMeasure, ...], np.ndarray, np.ndarray]:
    if mu.factors is not None:
        f = mu.factors
        return f.factors, f.linear, f.shift
    return (mu,), np.eye(mu.ambient_dim), np.zeros(mu.ambient_dim)


def product_measure(a: DiscreteMeasure, b: DiscreteMeasure, budget: int | None = None) -> DiscreteMeasure:
    """Product measure on R^(da+db); atom order is a-major."""
    n = a.n_atoms * b.n_atoms
    _check_budget(n, budget)
    pts = np.empty((n, a.ambient_dim + b.ambient_dim))
    pts[:, : a.ambient_dim] = np.repeat(a.points, b.n_atoms, axis=0)
    pts[:, a.ambient_dim:] = np.tile(b.points, (a.n_atoms, 1))
    w = np.outer(a.weights, b.weights).ravel()

    fa, la, sa = _factor_form(a)
    fb, lb, sb = _factor_form(b)
    linear = np.zeros((la.shape[0] + lb.shape[0], la.shape[1] + lb.shape[1]))
    linear[: la.shape[0], : la.shape[1]] = la
    linear[la.shape[0]:, la.shape[1]:] = lb
    fac = Factorization(fa + fb, linear, np.concatenate([sa, sb]))
    return DiscreteMeasure(
        pts,
        w,
        diameter_hint=math.hypot(a.diameter_hint, b.diameter_hint),
        resolution=max(a.resolution, b.resolution),
        factors=fac,
    )


def pushforward_affine(mu: DiscreteMeasure, linear, shift=None) -> DiscreteMeasure:
    """Image of ``mu`` under ``p -> linear @ p + shift``; weights are untouched."""
    L = np.atleast_2d(np.asarray(linear, dtype=np.float64))
    if L.shape[1] != mu.ambient_dim:
        raise ValidationError(f"linear map takes R^{L.shape[1]}, measure lives in R^{mu.ambient_dim}")
    s = np.zeros(L.shape[0]) if shift is None else np.asarray(shift, dtype=np.float64).reshape(-1)
    if s.shape[0] != L.shape[0]:
        raise ValidationError("shift length must equal the target dimension")
    pts = mu.points @ L.T + s
    norm = float(np.linalg.norm(L, 2)) if L.size else 0.0
    facs, fl, fs = _factor_form(mu)
    fac = Factorization(facs, L @ fl, L @ fs + s)
    return DiscreteMeasure(
        pts,
        mu.weights,
        diameter_hint=mu.diameter_hint * norm,
        resolution=mu.resolution * norm,
        factors=fac,
    )


def merge_duplicate_atoms(mu: DiscreteMeasure) -> DiscreteMeasure:
    """Combine atoms at identical locations, summing their weights."""
    uniq, inverse = np.unique(mu.points, axis=0, return_inverse=True)
    w = np.bincount(inverse.reshape(-1), weights=mu.weights, minlength=len(uniq))
    return DiscreteMeasure(uniq, w, diameter_hint=mu.diameter_hint, resolution=mu.resolution)


# --------------------------------------------------------------------------
# fitting


def fit_line(xs: Sequence[float], ys: Sequence[float]) -> SlopeFit:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if len(x) < 2:
        raise ValidationError("a line fit needs at least two points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValidationError("fit coordinates must be finite")
    if len(x) > 2:
        res = stats.linregress(x, y)
        slope, intercept, stderr = float(res.slope), float(res.intercept), float(res.stderr)
    else:
        slope = float((y[1] - y[0]) / (x[1] - x[0]))
        intercept = float(y[0] - slope * x[0])
        stderr = 0.0
    resid = float(np.max(np.abs(y - (slope * x + intercept))))
    return SlopeFit(slope, intercept, resid, tuple(zip(x.tolist(), y.tolist())), stderr)


# --------------------------------------------------------------------------
# ball masses and Frostman exponents


def ball_masses(points: np.ndarray, weights: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    """mu(closed ball(center, radius)) for each center."""
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if points.shape[1] == 1:
        order = np.argsort(points[:, 0], kind="stable")
        xs = points[order, 0]
        cum = np.concatenate([[0.0], np.cumsum(weights[order])])
        lo = np.searchsorted(xs, centers[:, 0] - radius, side="left")
        hi = np.searchsorted(xs, centers[:, 0] + radius, side="right")
        return cum[hi] - cum[lo]
    tree = cKDTree(points)
    if np.all(weights == weights[0]):
        counts = tree.query_ball_point(centers, radius, return_length=True)
        return np.asarray(counts, dtype=np.float64) * weights[0]
    hits = tree.query_ball_point(centers, radius)
    return np.array([np.sum(weights[h]) if h else 0.0 for h in hits])


def _probe_centers(points: np.ndarray, probe: ProbePolicy) -> np.ndarray:
    rng = np.random.default_rng(probe.seed)
    centers = points
    if probe.max_centers is not None and len(points) > probe.max_centers:
        idx = np.sort(rng.choice(len(points), size=probe.max_centers, replace=False))
        centers = points[idx]
    if probe.n_random > 0:
        lo, hi = points.min(axis=0), points.max(axis=0)
        extra = lo + (hi - lo) * rng.random((probe.n_random, points.shape[1]))
        centers = np.vstack([centers, extra])
    return centers


def max_ball_masses(points, weights, radii, probe: ProbePolicy | None = None) -> np.ndarray:
    probe = probe or ProbePolicy()
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    # collapse coincident atoms so duplicated centers are not probed twice
    centers = np.unique(_probe_centers(points, probe), axis=0)
    return np.array([np.max(ball_masses(points, weights, centers, r)) for r in radii])


def _check_radii(radii: Sequence[float], resolution: float, diameter: float | None) -> np.ndarray:
    r = np.asarray(radii, dtype=np.float64)
    if len(r) < 3:
        raise ValidationError("need at least 3 radii for an exponent fit")
    if np.any(r <= 0) or np.any(np.diff(r) >= 0):
        raise ValidationError("radii must be positive and strictly decreasing")
    if diameter is not None and diameter > 0 and r[0] >= diameter:
        raise ValidationError(f"radii must stay below the support diameter {diameter:.6g}")
    if np.any(r < 2.0 * resolution):
        raise ValidationError(
            f"radius {r.min():.6g} is below twice the atomic resolution {resolution:.6g}"
        )
    return r


def frostman_from_masses(radii: np.ndarray, masses: np.ndarray, max_exponent: float,
                         worst_direction=None) -> FrostmanReport:
    if not np.all(masses > 0):
        raise ValidationError("probed ball masses are zero; the probe set is degenerate")
    fit = fit_line(np.log(radii), np.log(masses))
    exponent = float(np.clip(fit.slope, 0.0, max_exponent))
    constant = float(np.max(masses / radii ** exponent))
    return FrostmanReport(
        exponent=exponent,
        constant=constant,
        fit=fit,
        radii=tuple(radii.tolist()),
        max_masses=tuple(masses.tolist()),
        worst_direction=worst_direction,
    )


def estimate_frostman_exponent(
    mu: DiscreteMeasure, radii: Sequence[float], probe: ProbePolicy | None = None
) -> FrostmanReport:
    """Fit alpha in ``max_p mu(B(p, r)) <= c r^alpha`` over the given radii.

    The fitted slope of log max-mass against log r is the exponent; the
    constant is the smallest c making the bound hold at every probed radius.
    """
    r = _check_radii(radii, mu.resolution, mu.diameter_hint)
    masses = max_ball_masses(mu.points, mu.weights, r, probe)
    return frostman_from_masses(r, masses, float(mu.ambient_dim))


# --------------------------------------------------------------------------
# serialization


def measure_to_dict(mu: DiscreteMeasure) -> dict:
    return {
        "ambient_dim": mu.ambient_dim,
        "points": mu.points.tolist(),
        "weights": mu.weights.tolist(),
        "resolution": mu.resolution,
    }


def _reject_constant(name):
    raise ValidationError(f"non-finite value {name} in measure file")


def measure_from_dict(data: dict) -> DiscreteMeasure:
    """Measure from its JSON form; a CLI artifact carrying one under ``result`` is accepted too."""
    if isinstance(data, dict) and "ambient_dim" not in data and isinstance(data.get("result"), dict):
        data = data["result"]
    try:
        dim = int(data["ambient_dim"])
        pts = np.asarray(data["points"], dtype=np.float64).reshape(-1, dim)
        w = np.asarray(data["weights"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed measure: {exc}") from exc
    return DiscreteMeasure(pts, w, resolution=float(data.get("resolution", 0.0)))


def write_measure(path: str | Path, mu: DiscreteMeasure, extra: dict | None = None) -> None:
    payload = dict(extra or {})
    payload.update(measure_to_dict(mu))
    # float repr is the shortest string that round-trips the double exactly
    Path(path).write_text(json.dumps(payload))


def read_measure(path: str | Path) -> DiscreteMeasure:
    data = json.loads(Path(path).read_text(), parse_constant=_reject_constant)
    return measure_from_dict(data)
