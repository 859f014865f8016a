"""Rasterized unions of k-planes, occupancy sweeps, the measure-zero
counterexample family, box-counting dimension of unions, and sumsets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from gmtlab._parallel import ordered_map
from gmtlab.errors import ValidationError
from gmtlab.kplane import GridField
from gmtlab.measures import (
    CantorSpec,
    DiscreteMeasure,
    Factorization,
    SlopeFit,
    _check_budget,
    _factor_form,
    fit_line,
    make_cantor_measure,
    point_mass,
    product_measure,
    pushforward_affine,
    uniform_grid_measure,
)
from gmtlab.projections import PlaneSet

POSITIVE_SLOPE = -0.05
NULL_SLOPE = -0.1

# cell index guard: a section landing within this fraction of a cell below a
# cell boundary is assigned to the upper cell, absorbing rounding in v/h
_EDGE_GUARD = 1e-9


@dataclass(frozen=True)
class OccupancyReport:
    """Occupied-cell fractions over a resolution sweep.

    ``fit`` regresses log occupancy on log cell size. The verdict uses
    ``resolution_slope = -fit.slope``, the decay rate of occupancy against
    log resolution: a union of positive measure keeps occupancy flat, a null
    union loses occupancy as cells shrink.
    """

    resolutions: tuple[int, ...]
    occupancy: tuple[float, ...]
    fit: SlopeFit
    clip_box: tuple[tuple[float, ...], tuple[float, ...]]

    @property
    def resolution_slope(self) -> float:
        return -self.fit.slope

    @property
    def verdict(self) -> str:
        s = self.resolution_slope
        if s >= POSITIVE_SLOPE:
            return "positive-measure-consistent"
        if s <= NULL_SLOPE:
            return "null-consistent"
        return "inconclusive"

    def to_rows(self) -> list[dict]:
        return [{"per_axis": r, "occupancy": o} for r, o in zip(self.resolutions, self.occupancy)]

    def to_dict(self) -> dict:
        return {
            "resolutions": list(self.resolutions),
            "occupancy": list(self.occupancy),
            "fit": self.fit.to_dict(),
            "resolution_slope": self.resolution_slope,
            "verdict": self.verdict,
            "clip_box": [list(self.clip_box[0]), list(self.clip_box[1])],
        }


def default_clip_box(d: int, k: int):
    return (0.0,) * k + (-2.0,) * (d - k), (1.0,) * k + (k + 2.0,) * (d - k)


def _check_clip(clip_box, d: int, k: int):
    lo, hi = (np.asarray(b, dtype=np.float64) for b in clip_box)
    if lo.shape != (d,) or hi.shape != (d,) or np.any(hi <= lo):
        raise ValidationError(f"clip box must be a nondegenerate box in R^{d}")
    if np.any(lo[:k] > 0) or np.any(hi[:k] < 1):
        raise ValidationError("clip box must contain [0,1]^k in its first k axes")
    return lo, hi


def rasterize_union(S: PlaneSet, clip_box=None, per_axis: int = 64, threads: int | None = None) -> GridField:
    """0/1 mask of the cells hit by the union of the planes of S.

    For every x-column of cells, each plane's section over the column center is
    evaluated exactly and the cell containing it is marked.
    """
    if per_axis < 2:
        raise ValidationError("per_axis must be >= 2")
    d, k = S.d, S.k
    m = d - k
    lo, hi = _check_clip(clip_box or default_clip_box(d, k), d, k)
    h = (hi - lo) / per_axis
    axes = [lo[a] + h[a] * (np.arange(per_axis) + 0.5) for a in range(k)]
    cols = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
    params = S.params
    n_rows = per_axis**m
    mask = np.zeros(len(cols) * n_rows, dtype=np.uint8)
    strides = per_axis ** np.arange(m - 1, -1, -1)
    block = max(1, (1 << 22) // len(cols))

    def cells(start: int) -> np.ndarray:
        p = params[start:start + block]
        sec = p[:, None, 0, :] + np.einsum("ci,nij->ncj", cols, p[:, 1:, :])
        idx = np.floor((sec - lo[k:]) / h[k:] + _EDGE_GUARD).astype(np.int64)
        ok = np.all((idx >= 0) & (idx < per_axis), axis=2)
        flat = np.arange(len(cols))[None, :] * n_rows + idx @ strides
        return np.unique(flat[ok])

    # marking is an OR, so chunk order cannot change the result
    for hit in ordered_map(cells, range(0, len(params), block), threads):
        mask[hit] = 1
    return GridField(mask.reshape((per_axis,) * d), tuple(lo), tuple(hi))


def occupancy(mask: GridField) -> float:
    return float(np.count_nonzero(mask.values)) / mask.values.size


def _check_schedule(resolutions: Sequence[int]) -> np.ndarray:
    res = np.asarray(resolutions, dtype=np.float64)
    if len(res) < 3:
        raise ValidationError("need at least 3 resolutions")
    ratios = res[1:] / res[:-1]
    if np.any(ratios <= 1) or not np.allclose(ratios, ratios[0], rtol=1e-9):
        raise ValidationError("resolutions must follow an increasing geometric schedule")
    return res


def occupancy_sweep(S: PlaneSet, clip_box=None, resolutions: Sequence[int] = (64, 128, 256, 512),
                    threads: int | None = None) -> OccupancyReport:
    res = _check_schedule(resolutions)
    clip = clip_box or default_clip_box(S.d, S.k)
    lo, hi = _check_clip(clip, S.d, S.k)
    occ = [occupancy(rasterize_union(S, clip, int(r), threads)) for r in res]
    if min(occ) <= 0:
        raise ValidationError("the union misses the clip box at some resolution")
    cell = float(np.prod(hi - lo)) ** (1.0 / S.d) / res
    fit = fit_line(np.log(cell), np.log(occ))
    return OccupancyReport(tuple(int(r) for r in res), tuple(occ), fit,
                           (tuple(lo.tolist()), tuple(hi.tolist())))


def union_dimension_estimate(S: PlaneSet, clip_box=None, resolutions: Sequence[int] = (64, 128, 256, 512),
                             threads: int | None = None) -> SlopeFit:
    """Box-counting dimension: slope of log N(delta) against log(1/delta)."""
    res = _check_schedule(resolutions)
    clip = clip_box or default_clip_box(S.d, S.k)
    counts = [np.count_nonzero(rasterize_union(S, clip, int(r), threads).values) for r in res]
    if min(counts) == 0:
        raise ValidationError("the union misses the clip box at some resolution")
    return fit_line(np.log(res), np.log(counts))


def counterexample_set(d: int, k: int, cantor: CantorSpec, fill_per_axis: int,
                       budget: int | None = None) -> PlaneSet:
    """Planes whose last coordinate is a constant height in a Cantor set.

    Free entries y_i^j (j < d-k) are uniform grid samples of [0,1]; the
    intercept y_0^{d-k} follows the Cantor measure; y_i^{d-k} = 0 for i >= 1.
    """
    if not 1 <= k < d:
        raise ValidationError("need 1 <= k < d")
    m = d - k
    n_free = (k + 1) * (m - 1)
    K = make_cantor_measure(cantor, budget)
    parts = []
    if n_free:
        parts.append(uniform_grid_measure(n_free, fill_per_axis, budget))
    parts.append(K)
    parts.append(point_mass([0.0] * k))
    mu = parts[0]
    for p in parts[1:]:
        mu = product_measure(mu, p, budget)
    # concatenated order: free block (i-major), Cantor intercept, zero slopes;
    # permute into row-major (i, j) order
    free = [(i, j) for i in range(k + 1) for j in range(m - 1)]
    order = free + [(0, m - 1)] + [(i, m - 1) for i in range(1, k + 1)]
    perm = np.zeros((len(order), len(order)))
    for src, (i, j) in enumerate(order):
        perm[i * m + j, src] = 1.0
    return PlaneSet(d, k, pushforward_affine(mu, perm))


def sumset_section(A0: DiscreteMeasure, A1: DiscreteMeasure, x: float, budget: int | None = None) -> DiscreteMeasure:
    """Image of A0 x A1 under (a, b) -> a + x b."""
    if A0.ambient_dim != A1.ambient_dim:
        raise ValidationError("A0 and A1 must live in the same space")
    n = A0.ambient_dim
    _check_budget(A0.n_atoms * A1.n_atoms, budget)
    pts = (A0.points[:, None, :] + x * A1.points[None, :, :]).reshape(-1, n)
    w = np.outer(A0.weights, A1.weights).ravel()
    f0, l0, s0 = _factor_form(A0)
    f1, l1, s1 = _factor_form(A1)
    fac = Factorization(f0 + f1, np.hstack([l0, x * l1]), s0 + x * s1)
    norm = math.hypot(1.0, x)
    return DiscreteMeasure(
        pts,
        w,
        diameter_hint=A0.diameter_hint + abs(x) * A1.diameter_hint,
        resolution=max(A0.resolution, A1.resolution) * norm,
        factors=fac,
    )


def write_pgm(path: str | Path, mask: GridField) -> None:
    """Binary PGM of a 2-D mask; first axis left to right, second axis bottom to top."""
    if mask.d != 2:
        raise ValidationError("PGM export needs a 2-D mask")
    img = (np.asarray(mask.values) > 0).astype(np.uint8) * 255
    img = img.T[::-1]
    header = f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.tobytes())
