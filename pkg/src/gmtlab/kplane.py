"""The k-plane transform over the unit parameter cube, its smoothed adjoint,
mixed L^2_x(L^r_x') norms, and the bound-ratio experiment.

Points of R^d are split as (x, x') with x in R^k, x' in R^(d-k).
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from gmtlab._parallel import ordered_map
from gmtlab.errors import ValidationError
from gmtlab.measures import FrostmanReport, SlopeFit, fit_line
from gmtlab.projections import PlaneParam, PlaneSet

DEFAULT_XPRIME_HALFWIDTH = 4.0


@dataclass(frozen=True, eq=False)
class GridField:
    """Values at the cell centers of a regular grid over an axis-aligned box."""

    values: np.ndarray
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        v = np.asarray(self.values)
        lo = tuple(float(a) for a in self.lo)
        hi = tuple(float(b) for b in self.hi)
        if v.ndim < 1 or len(lo) != v.ndim or len(hi) != v.ndim:
            raise ValidationError("box bounds must match the number of grid axes")
        if any(not b > a for a, b in zip(lo, hi)):
            raise ValidationError("grid box is degenerate")
        if not np.all(np.isfinite(v)):
            raise ValidationError("grid values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return self.values.ndim

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    def spacing(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / np.array(self.shape)

    def centers(self, axis: int) -> np.ndarray:
        h = (self.hi[axis] - self.lo[axis]) / self.shape[axis]
        return self.lo[axis] + h * (np.arange(self.shape[axis]) + 0.5)

    def contains(self, pts: np.ndarray, tol: float = 1e-12) -> bool:
        pts = np.atleast_2d(pts)
        return bool(np.all(pts >= np.array(self.lo) - tol) and np.all(pts <= np.array(self.hi) + tol))

    def interpolate(self, pts) -> np.ndarray:
        """Multilinear interpolation between cell centers, constant in the outer half cells."""
        pts = np.atleast_2d(np.asarray(pts, dtype=np.float64))
        axes = [self.centers(a) for a in range(self.d)]
        lo = np.array([a[0] for a in axes])
        hi = np.array([a[-1] for a in axes])
        interp = RegularGridInterpolator(axes, self.values.astype(np.float64), method="linear",
                                         bounds_error=False, fill_value=None)
        if any(len(a) == 1 for a in axes):
            # an axis with a single cell is constant along that axis
            keep = [i for i, a in enumerate(axes) if len(a) > 1]
            vals = np.squeeze(self.values.astype(np.float64))
            if not keep:
                return np.full(len(pts), float(vals))
            interp = RegularGridInterpolator([axes[i] for i in keep], vals, method="linear")
            return interp(np.clip(pts[:, keep], lo[keep], hi[keep]))
        return interp(np.clip(pts, lo, hi))

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], shape: Sequence[int],
                      lo: Sequence[float], hi: Sequence[float]) -> "GridField":
        shape = tuple(int(s) for s in shape)
        axes = [lo[a] + (hi[a] - lo[a]) / shape[a] * (np.arange(shape[a]) + 0.5) for a in range(len(shape))]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(np.asarray(fn(pts), dtype=np.float64).reshape(shape), tuple(lo), tuple(hi))

    def header(self) -> dict:
        return {"d": self.d, "shape": list(self.shape), "box": [list(self.lo), list(self.hi)]}


def default_box(d: int, k: int, halfwidth: float = DEFAULT_XPRIME_HALFWIDTH):
    return (0.0,) * k + (-halfwidth,) * (d - k), (1.0,) * k + (halfwidth,) * (d - k)


def write_grid_field(path: str | Path, f: GridField) -> None:
    payload = f.header()
    payload["values"] = f.values.astype(np.float64).ravel().tolist()
    Path(path).write_text(json.dumps(payload))


def read_grid_field(path: str | Path) -> GridField:
    data = json.loads(Path(path).read_text())
    try:
        shape = tuple(int(s) for s in data["shape"])
        lo, hi = data["box"]
        values = np.asarray(data["values"], dtype=np.float64).reshape(shape)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed grid field: {exc}") from exc
    if len(shape) != int(data["d"]):
        raise ValidationError("header d does not match shape")
    return GridField(values, tuple(lo), tuple(hi))


# --------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class TransformBoundConfig:
    d: int
    k: int
    alpha: float
    eps: float
    q: float
    q_conj: float

    def to_dict(self) -> dict:
        return {"d": self.d, "k": self.k, "alpha": self.alpha, "eps": self.eps,
                "q": self.q, "q_conj": self.q_conj}


def compute_q(d: int, k: int, alpha: float, eps: float) -> TransformBoundConfig:
    """Solve 1/2 - 1/q = (alpha - (k+1)(d-k) + k - eps) / (2(d-k)) for q."""
    if not 1 <= k < d:
        raise ValidationError("need 1 <= k < d")
    n = (k + 1) * (d - k)
    if not n - k < alpha < n:
        raise ValidationError(f"alpha must lie in ({n - k}, {n}) for d={d}, k={k}")
    gap = alpha - n + k
    if not 0 < eps < gap:
        raise ValidationError(f"eps must lie in (0, {gap:g})")
    inv_q = 0.5 - (gap - eps) / (2 * (d - k))
    q = 1.0 / inv_q
    return TransformBoundConfig(d, k, float(alpha), float(eps), q, q / (q - 1.0))


# --------------------------------------------------------------------------
# transform and adjoint


def _default_nodes(k: int) -> int:
    return 256 if k == 1 else 64


def midpoint_nodes(k: int, per_axis: int) -> np.ndarray:
    """Midpoint-rule nodes on [0,1]^k, shape (per_axis^k, k)."""
    t = (np.arange(per_axis) + 0.5) / per_axis
    mesh = np.meshgrid(*([t] * k), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def transform_many(f: GridField, params, k: int, nodes: int | None = None,
                   threads: int | None = None) -> np.ndarray:
    """Tf(y) for many planes; ``params`` is (N, (k+1)(d-k)) or (N, k+1, d-k)."""
    d = f.d
    p = np.asarray(params, dtype=np.float64).reshape(-1, k + 1, d - k)
    x = midpoint_nodes(k, nodes or _default_nodes(k))
    lo, hi = np.array(f.lo), np.array(f.hi)
    if np.any(lo[:k] > 1e-12) or np.any(hi[:k] < 1 - 1e-12):
        raise ValidationError("the field's box must contain [0,1]^k in its first k axes")
    # sections over all nodes, (N, nodes, d-k)
    block = max(1, (1 << 20) // len(x))

    def run(start: int) -> np.ndarray:
        pp = p[start:start + block]
        sec = pp[:, None, 0, :] + np.einsum("mi,nij->nmj", x, pp[:, 1:, :])
        if np.any(sec < lo[k:] - 1e-12) or np.any(sec > hi[k:] + 1e-12):
            raise ValidationError("a plane leaves the field's box over [0,1]^k; values would be clipped")
        pts = np.concatenate([np.broadcast_to(x, sec.shape[:2] + (k,)), sec], axis=2).reshape(-1, d)
        return f.interpolate(pts).reshape(len(pp), len(x)).mean(axis=1)

    parts = ordered_map(run, range(0, len(p), block), threads)
    return np.concatenate(parts) if parts else np.zeros(0)


def transform(f: GridField, y: PlaneParam, nodes: int | None = None) -> float:
    """Tf(y) = integral over [0,1]^k of f(plane_point(y, x)) dx, by the midpoint rule."""
    if y.d != f.d:
        raise ValidationError(f"plane lives in R^{y.d}, field in R^{f.d}")
    return float(transform_many(f, y.entries[None], y.k, nodes)[0])


def bump_profile(u: np.ndarray) -> np.ndarray:
    """(1 - |u|^2)^3 on the unit ball, 0 outside."""
    r2 = np.sum(np.atleast_2d(u) ** 2, axis=-1)
    return np.where(r2 < 1, (1 - np.minimum(r2, 1)) ** 3, 0.0)


def bump_mass(dim: int) -> float:
    # int_{|u|<1} (1-|u|^2)^3 du
    return math.pi ** (dim / 2) * math.gamma(4) / math.gamma(4 + dim / 2)


def adjoint_apply(g, plane_set: PlaneSet, x, x_prime, h: float) -> np.ndarray:
    """T*g at (x, x') with each plane smeared to a normalized width-h bump across x'.

    Returns ``sum_a g_a w_a phi_h(x' - section_a(x))`` for each row of ``x_prime``.
    """
    if h <= 0:
        raise ValidationError("smoothing width h must be positive")
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if g.shape[0] != plane_set.measure.n_atoms:
        raise ValidationError("g needs one value per plane atom")
    m = plane_set.d - plane_set.k
    xp = np.atleast_2d(np.asarray(x_prime, dtype=np.float64)).reshape(-1, m)
    sec = plane_set.sections(x)
    coef = g * plane_set.measure.weights
    u = (xp[:, None, :] - sec[None, :, :]) / h
    phi = bump_profile(u) / (bump_mass(m) * h**m)
    return np.einsum("ma,a->m", phi, coef)


# --------------------------------------------------------------------------
# mixed norms


def mixed_norm(f: GridField, k: int, r: float) -> float:
    """||f||_{L^2_x(L^r_x')}: L^r over the last d-k axes per x-cell, then L^2 over the first k."""
    if r < 1:
        raise ValidationError("r must be >= 1")
    if not 1 <= k < f.d:
        raise ValidationError("need 1 <= k < d")
    h = f.spacing()
    dx, dxp = float(np.prod(h[:k])), float(np.prod(h[k:]))
    a = np.abs(f.values.astype(np.float64))
    inner_axes = tuple(range(k, f.d))
    inner = (np.sum(a**r, axis=inner_axes) * dxp) ** (1.0 / r)
    return float(math.sqrt(np.sum(inner**2) * dx))


# --------------------------------------------------------------------------
# bound-ratio experiment


@dataclass(frozen=True)
class SmoothBump:
    """amplitude * (1 - |p - center|^2 / width^2)^3 on its support ball."""

    center: tuple[float, ...]
    width: float
    amplitude: float = 1.0

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        c = np.asarray(self.center)
        return self.amplitude * bump_profile((np.atleast_2d(pts) - c) / self.width)

    def describe(self) -> dict:
        return {"kind": "bump", "center": list(self.center), "width": self.width, "amplitude": self.amplitude}


@dataclass(frozen=True)
class Constant:
    value: float = 1.0

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        return np.full(len(np.atleast_2d(pts)), self.value)

    def describe(self) -> dict:
        return {"kind": "constant", "value": self.value}


def random_bumps(count: int, d: int, k: int, seed: int, center_lo, center_hi,
                 width_range=(0.1, 0.4)) -> list[SmoothBump]:
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(center_lo, dtype=float), np.asarray(center_hi, dtype=float)
    out = []
    for _ in range(count):
        c = lo + (hi - lo) * rng.random(d)
        w = rng.uniform(*width_range)
        out.append(SmoothBump(tuple(c.tolist()), float(w)))
    return out


@dataclass(frozen=True)
class BoundRatioReport:
    config: TransformBoundConfig
    trials: tuple[dict, ...]
    resolution_sweep: tuple[tuple[int, float], ...]  # (per-axis cells, max ratio)
    growth_fit: SlopeFit
    max_growth_slope: float
    passed: bool = field(default=False)

    def to_rows(self) -> list[dict]:
        return [
            {"f": t["f_index"], "resolution": t["resolution"], "norm_Tf": t["norm_Tf"],
             "norm_f": t["norm_f"], "ratio": t["ratio"]}
            for t in self.trials
        ]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "resolution_sweep": [list(r) for r in self.resolution_sweep],
            "growth_fit": self.growth_fit.to_dict(),
            "max_growth_slope": self.max_growth_slope,
            "passed": self.passed,
            "trials": list(self.trials),
        }


def section_extent(plane_set: PlaneSet) -> tuple[np.ndarray, np.ndarray]:
    """Bounds of all plane sections over [0,1]^k (attained at the cube's corners)."""
    k = plane_set.k
    corners = np.array(list(itertools.product([0.0, 1.0], repeat=k)))
    secs = np.concatenate([plane_set.sections(c) for c in corners])
    return secs.min(axis=0), secs.max(axis=0)


def l2_mu_norm(values: np.ndarray, weights: np.ndarray) -> float:
    return float(math.sqrt(np.sum(weights * values**2)))


def bound_ratio_experiment(
    plane_set: PlaneSet,
    alpha_report: FrostmanReport,
    eps: float,
    f_family: Sequence[Callable[[np.ndarray], np.ndarray]],
    resolutions: Sequence[int],
    box=None,
    nodes: int | None = None,
    max_growth_slope: float = 0.1,
    threads: int | None = None,
) -> BoundRatioReport:
    """Ratios ||Tf||_{L^2(mu)} / ||f||_{L^2_x(L^q'_x')} over functions and grid resolutions.

    Each entry of ``f_family`` is a function of (M, d) points, sampled at the
    cell centers of a ``res^d`` grid for every resolution. Passes when the
    per-resolution maximum ratio grows with log-log slope at most
    ``max_growth_slope``.
    """
    d, k = plane_set.d, plane_set.k
    cfg = compute_q(d, k, alpha_report.exponent, eps)
    lo, hi = box if box is not None else default_box(d, k)
    smin, smax = section_extent(plane_set)
    if np.any(smin < np.array(lo[k:])) or np.any(smax > np.array(hi[k:])):
        raise ValidationError("the box does not contain every plane section over [0,1]^k")
    if len(resolutions) < 2:
        raise ValidationError("need at least two resolutions")
    w = plane_set.measure.weights
    trials, sweep = [], []
    for res in resolutions:
        best = 0.0
        for i, fn in enumerate(f_family):
            f = GridField.from_function(fn, (res,) * d, lo, hi)
            tf = transform_many(f, plane_set.measure.points, k, nodes, threads)
            num = l2_mu_norm(tf, w)
            den = mixed_norm(f, k, cfg.q_conj)
            ratio = num / den if den > 0 else math.nan
            desc = fn.describe() if hasattr(fn, "describe") else {"kind": "callable"}
            trials.append({"f_index": i, "f": desc, "resolution": int(res), "norm_Tf": num,
                           "norm_f": den, "ratio": ratio})
            if den > 0:
                best = max(best, ratio)
        sweep.append((int(res), best))
    fit = fit_line(np.log([r for r, _ in sweep]), np.log([m for _, m in sweep]))
    return BoundRatioReport(
        config=cfg,
        trials=tuple(trials),
        resolution_sweep=tuple(sweep),
        growth_fit=fit,
        max_growth_slope=max_growth_slope,
        passed=bool(fit.slope <= max_growth_slope),
    )
