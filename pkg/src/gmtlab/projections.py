"""The projection family P_x, its companion map T_x, and the graph
parametrization of affine k-planes.

Coordinates on R^{l(n-l)} are the row-major flattening of the l x (n-l)
matrix x. A k-plane parameter y is a (k+1) x (d-k) matrix whose row 0 holds
the intercepts; it is flattened row-major, intercept row first.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from gmtlab.errors import ValidationError
from gmtlab.measures import (
    DiscreteMeasure,
    FrostmanReport,
    ProbePolicy,
    _check_radii,
    frostman_from_masses,
    max_ball_masses,
)

PLANE_LAYOUT = "row-major-intercept-first"


@dataclass(frozen=True, eq=False)
class ProjectionParam:
    """l x (n-l) matrix x = (x_i^j) defining P_x : R^n -> R^l."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] < 1 or e.shape[1] < 1:
            raise ValidationError("ProjectionParam needs an l x (n-l) matrix with l, n-l >= 1")
        if not np.all(np.isfinite(e)):
            raise ValidationError("ProjectionParam entries must be finite")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def ell(self) -> int:
        return self.entries.shape[0]

    @property
    def n(self) -> int:
        return self.entries.shape[0] + self.entries.shape[1]

    def flatten(self) -> np.ndarray:
        return self.entries.reshape(-1).copy()

    @classmethod
    def from_flat(cls, flat, ell: int) -> "ProjectionParam":
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size % ell:
            raise ValidationError(f"length {flat.size} is not a multiple of l={ell}")
        return cls(flat.reshape(ell, -1))


@dataclass(frozen=True, eq=False)
class PlaneParam:
    """(k+1) x (d-k) matrix y = (y_i^j); row 0 are the intercepts y_0^j."""

    entries: np.ndarray

    def __post_init__(self):
        e = np.array(self.entries, dtype=np.float64)
        if e.ndim != 2 or e.shape[0] < 2 or e.shape[1] < 1:
            raise ValidationError("PlaneParam needs a (k+1) x (d-k) matrix with k, d-k >= 1")
        if not np.all(np.isfinite(e)):
            raise ValidationError("PlaneParam entries must be finite")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    @property
    def k(self) -> int:
        return self.entries.shape[0] - 1

    @property
    def d(self) -> int:
        return self.k + self.entries.shape[1]

    def flatten(self) -> np.ndarray:
        return self.entries.reshape(-1).copy()

    @classmethod
    def from_flat(cls, flat, d: int, k: int) -> "PlaneParam":
        flat = np.asarray(flat, dtype=np.float64).reshape(-1)
        if flat.size != (k + 1) * (d - k):
            raise ValidationError(f"expected {(k + 1) * (d - k)} entries for d={d}, k={k}")
        return cls(flat.reshape(k + 1, d - k))


@dataclass(frozen=True, eq=False)
class PlaneSet:
    """A measure on k-plane parameters; each atom is a flattened PlaneParam."""

    d: int
    k: int
    measure: DiscreteMeasure

    def __post_init__(self):
        if not 1 <= self.k < self.d:
            raise ValidationError("need 1 <= k < d")
        if self.measure.ambient_dim != (self.k + 1) * (self.d - self.k):
            raise ValidationError(
                f"plane measure must live in R^{(self.k + 1) * (self.d - self.k)}, got R^{self.measure.ambient_dim}"
            )

    @property
    def params(self) -> np.ndarray:
        """(N, k+1, d-k) view of the atoms."""
        return self.measure.points.reshape(-1, self.k + 1, self.d - self.k)

    def sections(self, x) -> np.ndarray:
        """Last d-k coordinates of every plane over the point x in R^k; shape (N, d-k)."""
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        p = self.params
        return p[:, 0, :] + np.einsum("i,nij->nj", x, p[:, 1:, :])


def project_point(x: ProjectionParam, p) -> np.ndarray:
    """P_x p: component i is p_i + sum_j x_i^j p_{l+j}. Accepts (n,) or (N, n)."""
    p = np.asarray(p, dtype=np.float64)
    if p.shape[-1] != x.n:
        raise ValidationError(f"point has length {p.shape[-1]}, expected n={x.n}")
    ell = x.ell
    return p[..., :ell] + p[..., ell:] @ x.entries.T


def t_map(x: ProjectionParam, xi) -> np.ndarray:
    """T_x xi: component j is sum_i x_i^j xi_i. Accepts (l,) or (N, l)."""
    xi = np.asarray(xi, dtype=np.float64)
    if xi.shape[-1] != x.ell:
        raise ValidationError(f"frequency has length {xi.shape[-1]}, expected l={x.ell}")
    return xi @ x.entries


def t_map_atoms(flat_params: np.ndarray, ell: int, xi) -> np.ndarray:
    """T_x xi for every row of ``flat_params`` (flattened ProjectionParams).

    ``xi`` is a single (l,) vector or an (N, l) array paired row-by-row.
    """
    flat_params = np.asarray(flat_params, dtype=np.float64)
    X = flat_params.reshape(flat_params.shape[0], ell, -1)
    xi = np.asarray(xi, dtype=np.float64)
    if xi.ndim == 1:
        return np.einsum("i,nij->nj", xi, X)
    return np.einsum("ni,nij->nj", xi, X)


def _fsum_dot(a, b) -> float:
    return math.fsum(float(u) * float(v) for u, v in zip(a, b))


def check_duality_identity(x: ProjectionParam, xi, p) -> float:
    """|<xi, P_x p> - <(xi, T_x xi), p>|, which vanishes in exact arithmetic."""
    xi = np.asarray(xi, dtype=np.float64).reshape(-1)
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if xi.shape[0] != x.ell or p.shape[0] != x.n:
        raise ValidationError(f"need xi in R^{x.ell} and p in R^{x.n}")
    lhs = _fsum_dot(xi, project_point(x, p))
    rhs = _fsum_dot(np.concatenate([xi, t_map(x, xi)]), p)
    return abs(lhs - rhs)


def duality_bound(x: ProjectionParam, xi, p) -> float:
    """Admissible rounding residual for :func:`check_duality_identity`."""
    return 1e-12 * (1 + np.linalg.norm(xi)) * (1 + np.linalg.norm(p)) * (1 + np.linalg.norm(x.entries))


def plane_point(y: PlaneParam, x) -> np.ndarray:
    """The point of pi_y over x in R^k: (x, y_0 + sum_i x_i y_i). Accepts (k,) or (N, k)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != y.k:
        raise ValidationError(f"x has length {x.shape[-1]}, expected k={y.k}")
    e = y.entries
    return np.concatenate([x, e[0] + x @ e[1:]], axis=-1)


def plane_as_projection(d: int, k: int, x) -> ProjectionParam:
    """ProjectionParam X with n=(k+1)(d-k), l=d-k such that P_X(flatten(y)) is the
    section of pi_y over x, i.e. X = [x_1 I, ..., x_k I] and T_X xi = (x_1 xi, ..., x_k xi).
    """
    if not 1 <= k < d:
        raise ValidationError("need 1 <= k < d")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != k:
        raise ValidationError(f"x must lie in [0,1]^{k}")
    if np.any(x < 0) or np.any(x > 1) or not np.all(np.isfinite(x)):
        raise ValidationError("x must lie in the unit cube [0,1]^k")
    eye = np.eye(d - k)
    return ProjectionParam(np.hstack([xi * eye for xi in x]))


def embed_section_measure(lam: DiscreteMeasure, d: int, k: int) -> DiscreteMeasure:
    """Carry a measure on [0,1]^k onto R^{l(n-l)} through :func:`plane_as_projection`."""
    if lam.ambient_dim != k:
        raise ValidationError(f"expected a measure on R^{k}")
    m = d - k
    # flatten([x_1 I, ..., x_k I]) is linear in x
    linear = np.zeros((m * k * m, k))
    for row in range(m):
        for i in range(k):
            linear[row * k * m + i * m + row, i] = 1.0
    pts = lam.points
    if np.any(pts < 0) or np.any(pts > 1):
        raise ValidationError("section parameters must lie in [0,1]^k")
    return DiscreteMeasure(
        pts @ linear.T,
        lam.weights,
        diameter_hint=lam.diameter_hint * math.sqrt(m),
        resolution=lam.resolution,
    )


def sphere_directions(ell: int, count: int, n_random: int = 0, seed: int = 0) -> np.ndarray:
    """Unit vectors in R^l: a deterministic spread set plus seeded random ones."""
    if ell == 1:
        dirs = np.array([[1.0], [-1.0]])
    elif ell == 2:
        t = np.pi * np.arange(count) / count  # xi and -xi give the same tubes up to reflection
        dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
    elif ell == 3:
        # Fibonacci lattice
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5**0.5) * i
        s = np.sqrt(1 - z**2)
        dirs = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    else:
        dirs = np.vstack([np.eye(ell), -np.eye(ell)])
    if n_random:
        g = np.random.default_rng(seed).standard_normal((n_random, ell))
        dirs = np.vstack([dirs, g / np.linalg.norm(g, axis=1, keepdims=True)])
    return dirs


def slice_frostman_exponent(
    lam: DiscreteMeasure,
    ell: int,
    radii,
    directions=None,
    probe: ProbePolicy | None = None,
    n_directions: int = 16,
) -> FrostmanReport:
    """Fit beta in ``lam({x : |T_x xi - p2| <= r}) <= c r^beta`` uniformly in unit xi.

    For each radius the tube mass is maximized over directions and over
    centers p2 drawn from the images T_x xi of lam's atoms (plus random ones
    per ``probe``); the maxima are fitted as in the ball-mass estimator.
    """
    if lam.ambient_dim % ell:
        raise ValidationError(f"lambda must live in R^(l(n-l)); dimension {lam.ambient_dim} is not a multiple of {ell}")
    if directions is None:
        directions = sphere_directions(ell, n_directions)
    directions = np.atleast_2d(np.asarray(directions, dtype=np.float64))
    if directions.shape[1] != ell:
        raise ValidationError(f"directions must lie in R^{ell}")
    if not np.allclose(np.linalg.norm(directions, axis=1), 1.0, rtol=0, atol=1e-12):
        raise ValidationError("directions must be unit vectors")
    r = _check_radii(radii, lam.resolution, None)
    best = np.zeros(len(r))
    worst = None
    for xi in directions:
        images = t_map_atoms(lam.points, ell, xi)
        m = max_ball_masses(images, lam.weights, r, probe)
        if worst is None or m[-1] > best[-1]:
            worst = xi
        best = np.maximum(best, m)
    return frostman_from_masses(r, best, float(lam.ambient_dim // ell), tuple(worst.tolist()))
