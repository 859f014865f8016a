"""Fourier transforms of discrete measures and dyadic-shell energy estimates.

Conventions: the transform of g dmu is ``sum_a g_a w_a exp(-2 pi i <xi, p_a>)``;
shell j is the annulus ``2^j <= |xi| <= 2^(j+1)``. Monte Carlo draws for a
shell are seeded from ``(seed, j)`` so a shell's estimate does not depend on
which other shells are requested.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from gmtlab._parallel import ordered_map
from gmtlab.errors import ValidationError
from gmtlab.measures import DiscreteMeasure, FrostmanReport, SlopeFit, fit_line
from gmtlab.projections import t_map_atoms

# fixed work partition (independent of the worker count)
ATOM_BLOCK = 1 << 15
CHUNK_ELEMENTS = 1 << 20

# shells are trusted only while 2^(j+1) <= WINDOW_FACTOR / resolution
WINDOW_FACTOR = 0.1

DEFAULT_TOLERANCE = 0.25
DEFAULT_RESIDUAL_THRESHOLD = 0.5


@dataclass(frozen=True)
class ShellEnergyProfile:
    shells: tuple[tuple[int, float, float], ...]  # (j, energy, mc_stderr)
    weight_exponent: float
    ell: int
    samples_per_shell: int
    seed: int

    def to_rows(self) -> list[dict]:
        return [{"j": j, "R": 2.0**j, "energy": e, "stderr": s} for j, e, s in self.shells]

    def to_dict(self) -> dict:
        return {
            "weight_exponent": self.weight_exponent,
            "ell": self.ell,
            "samples_per_shell": self.samples_per_shell,
            "seed": self.seed,
            "shells": self.to_rows(),
        }


@dataclass(frozen=True)
class SobolevEstimate:
    """``sigma_max = ell - s`` with s the fitted growth rate of log2 E_j in j.

    The dyadic series sum_j 2^{j(sigma-ell)} E_j converges for sigma < sigma_max;
    sigma == sigma_max is treated as divergent.
    """

    sigma_max: float
    profile: ShellEnergyProfile
    fit: SlopeFit
    low_confidence: bool

    def converges(self, sigma: float) -> bool:
        return sigma < self.sigma_max

    def to_dict(self) -> dict:
        return {
            "sigma_max": self.sigma_max,
            "low_confidence": self.low_confidence,
            "fit": self.fit.to_dict(),
            "profile": self.profile.to_dict(),
        }


@dataclass(frozen=True)
class LemmaDecayReport:
    n: int
    ell: int
    alpha: float
    beta: float
    shells: tuple[tuple[float, float, float], ...]  # (R, value, mc_stderr)
    fit: SlopeFit
    predicted_exponent: float
    tolerance: float
    residual_threshold: float
    passed: bool = field(default=False)

    def to_rows(self) -> list[dict]:
        return [{"j": int(round(math.log2(R))), "R": R, "energy": v, "stderr": s} for R, v, s in self.shells]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "ell": self.ell,
            "alpha": self.alpha,
            "beta": self.beta,
            "predicted_exponent": self.predicted_exponent,
            "tolerance": self.tolerance,
            "residual_threshold": self.residual_threshold,
            "passed": self.passed,
            "fit": self.fit.to_dict(),
            "shells": self.to_rows(),
        }


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


# --------------------------------------------------------------------------
# transforms


def _direct_chunk(freqs: np.ndarray, points: np.ndarray, coeffs: np.ndarray) -> np.ndarray:
    out = np.zeros(freqs.shape[0], dtype=np.complex128)
    for start in range(0, points.shape[0], ATOM_BLOCK):
        pts = points[start:start + ATOM_BLOCK]
        phase = np.zeros((freqs.shape[0], pts.shape[0]))
        for c in range(points.shape[1]):
            phase += freqs[:, c, None] * pts[None, :, c]
        theta = (2 * np.pi) * (phase - np.round(phase))
        c = coeffs[start:start + ATOM_BLOCK]
        cos, sin = np.cos(theta), np.sin(theta)
        # einsum keeps its own summation loop (no BLAS), so the order is fixed
        out += np.einsum("ij,j->i", cos, c) - 1j * np.einsum("ij,j->i", sin, c)
    return out


def _direct(points: np.ndarray, coeffs: np.ndarray, freqs: np.ndarray, threads: int | None) -> np.ndarray:
    per_chunk = max(1, CHUNK_ELEMENTS // min(points.shape[0], ATOM_BLOCK))
    chunks = [freqs[i:i + per_chunk] for i in range(0, freqs.shape[0], per_chunk)]
    parts = ordered_map(lambda f: _direct_chunk(f, points, coeffs), chunks, threads)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.complex128)


def fourier_transform(
    mu: DiscreteMeasure,
    xi,
    g=None,
    method: str = "auto",
    threads: int | None = None,
):
    """Transform of g dmu at xi (shape (d,) -> complex, (M, d) -> (M,) array).

    ``method`` is ``"direct"`` (sum over atoms), ``"factored"`` (product of the
    factor transforms; requires g is None and a product structure) or
    ``"auto"``.
    """
    freqs = np.asarray(xi, dtype=np.float64)
    single = freqs.ndim == 1
    freqs = np.atleast_2d(freqs)
    if freqs.shape[1] != mu.ambient_dim:
        raise ValidationError(f"frequency has length {freqs.shape[1]}, measure lives in R^{mu.ambient_dim}")
    if g is not None:
        g = np.asarray(g).reshape(-1)
        if g.shape[0] != mu.n_atoms:
            raise ValidationError("g needs one value per atom")
    if method not in ("auto", "direct", "factored"):
        raise ValidationError(f"unknown method {method!r}")

    fac = mu.factors
    use_factored = method == "factored" or (
        method == "auto" and g is None and fac is not None
        and sum(f.n_atoms for f in fac.factors) < mu.n_atoms
    )
    if use_factored:
        if fac is None or g is not None:
            raise ValidationError("factored evaluation needs a product-structured measure and g = None")
        out = np.exp(-2j * np.pi * _frac(freqs @ fac.shift))
        for f, block in zip(fac.factors, fac.column_blocks()):
            out = out * _direct(f.points, f.weights.astype(np.complex128), freqs @ block, threads)
    else:
        coeffs = mu.weights.astype(np.complex128)
        if g is not None:
            coeffs = coeffs * g
        out = _direct(mu.points, coeffs, freqs, threads)
    return complex(out[0]) if single else out


def _frac(v: np.ndarray) -> np.ndarray:
    return v - np.round(v)


# --------------------------------------------------------------------------
# annulus sampling


def ball_volume(dim: int, radius: float) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1) * radius**dim


def annulus_volume(dim: int, r_in: float, r_out: float) -> float:
    return ball_volume(dim, r_out) - ball_volume(dim, r_in)


def sample_annulus(rng: np.random.Generator, dim: int, r_in: float, r_out: float, n: int) -> np.ndarray:
    """Uniform points in ``r_in <= |xi| <= r_out`` by rejection from the cube [-r_out, r_out]^dim."""
    out = np.empty((0, dim))
    while out.shape[0] < n:
        need = n - out.shape[0]
        cand = rng.uniform(-r_out, r_out, size=(2 * need + 16, dim))
        rad = np.linalg.norm(cand, axis=1)
        out = np.vstack([out, cand[(rad >= r_in) & (rad <= r_out)]])
    return out[:n]


def shell_rng(seed: int, j: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(j) + (1 << 20)]))


def _mean_and_stderr(values: np.ndarray, scale: float) -> tuple[float, float]:
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / math.sqrt(len(values)))
    return scale * mean, scale * stderr


def valid_frequency_limit(mu: DiscreteMeasure) -> float:
    return math.inf if mu.resolution == 0 else WINDOW_FACTOR / mu.resolution


def _check_window(mu: DiscreteMeasure, outer_radius: float) -> None:
    limit = valid_frequency_limit(mu)
    if outer_radius > limit * (1 + 1e-12):
        raise ValidationError(
            f"frequency {outer_radius:g} lies outside the valid window |xi| <= {limit:g} "
            f"set by the atomic resolution {mu.resolution:g}"
        )


def shell_energy(
    mu: DiscreteMeasure,
    j: int,
    weight_exponent: float = 0.0,
    n_samples: int = 4096,
    seed: int = 0,
    g=None,
    threads: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``int_{shell j} |(g dmu)^(xi)|^2 (1+|xi|)^(-weight_exponent) dxi``.

    Returns ``(energy, stderr)``. ``weight_exponent = l - sigma`` gives the
    Sobolev-dimension integrand; 0 gives the unweighted energy.
    """
    if n_samples < 2:
        raise ValidationError("n_samples must be >= 2")
    dim = mu.ambient_dim
    r_in, r_out = 2.0**j, 2.0 ** (j + 1)
    xi = sample_annulus(shell_rng(seed, j), dim, r_in, r_out, n_samples)
    vals = np.abs(fourier_transform(mu, xi, g, threads=threads)) ** 2
    if weight_exponent:
        vals = vals * (1 + np.linalg.norm(xi, axis=1)) ** (-weight_exponent)
    return _mean_and_stderr(vals, annulus_volume(dim, r_in, r_out))


def shell_energy_profile(
    mu: DiscreteMeasure,
    j_range: Sequence[int],
    weight_exponent: float = 0.0,
    n_samples: int = 4096,
    seed: int = 0,
    threads: int | None = None,
) -> ShellEnergyProfile:
    js = sorted(int(j) for j in j_range)
    for j in js:
        _check_window(mu, 2.0 ** (j + 1))
    shells = tuple((j, *shell_energy(mu, j, weight_exponent, n_samples, seed, threads=threads)) for j in js)
    return ShellEnergyProfile(shells, float(weight_exponent), mu.ambient_dim, int(n_samples), int(seed))


def sobolev_dimension_estimate(
    mu: DiscreteMeasure,
    j_range: Sequence[int],
    n_samples: int = 4096,
    seed: int = 0,
    residual_threshold: float = DEFAULT_RESIDUAL_THRESHOLD,
    threads: int | None = None,
) -> SobolevEstimate:
    """Largest sigma for which the fitted shell-energy growth keeps the Sobolev integral finite."""
    if len(set(j_range)) < 4:
        raise ValidationError("need at least 4 shells for a Sobolev-dimension fit")
    profile = shell_energy_profile(mu, j_range, 0.0, n_samples, seed, threads)
    energies = np.array([e for _, e, _ in profile.shells])
    if np.any(energies <= 0):
        raise ValidationError("shell energy vanished; cannot take logarithms")
    fit = fit_line([j for j, _, _ in profile.shells], np.log2(energies))
    return SobolevEstimate(
        sigma_max=float(mu.ambient_dim - fit.slope),
        profile=profile,
        fit=fit,
        low_confidence=fit.residual >= residual_threshold,
    )


# --------------------------------------------------------------------------
# the decay lemma


def lemma_shell_integral(
    mu: DiscreteMeasure,
    lam: DiscreteMeasure,
    ell: int,
    R: float,
    n_samples: int = 4096,
    seed: int = 0,
    g=None,
    threads: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo estimate of ``int int_{R<=|xi|<=2R} |(g dmu)^(xi, T_x xi)|^2 dxi dlam(x)``.

    xi is uniform on the annulus in R^l and x is drawn from lam / mass(lam);
    the mean is scaled by annulus volume times mass(lam).
    """
    n = mu.ambient_dim
    if not 1 <= ell < n:
        raise ValidationError("need 1 <= l < n")
    if lam.ambient_dim != ell * (n - ell):
        raise ValidationError(f"lambda must live in R^{ell * (n - ell)}")
    if n_samples < 2:
        raise ValidationError("n_samples must be >= 2")
    if R <= 0:
        raise ValidationError("R must be positive")
    _check_window(mu, 2 * R)
    rng = shell_rng(seed, int(round(math.log2(R) * 1024)))
    xi = sample_annulus(rng, ell, R, 2 * R, n_samples)
    mass_lam = float(np.sum(lam.weights))
    idx = rng.choice(lam.n_atoms, size=n_samples, p=lam.weights / mass_lam)
    freqs = np.hstack([xi, t_map_atoms(lam.points[idx], ell, xi)])
    vals = np.abs(fourier_transform(mu, freqs, g, threads=threads)) ** 2
    return _mean_and_stderr(vals, annulus_volume(ell, R, 2 * R) * mass_lam)


def lemma_decay_report(
    mu: DiscreteMeasure,
    lam: DiscreteMeasure,
    ell: int,
    j_range: Sequence[int],
    alpha_report: FrostmanReport,
    beta_report: FrostmanReport,
    n_samples: int = 4096,
    seed: int = 0,
    g=None,
    tolerance: float = DEFAULT_TOLERANCE,
    residual_threshold: float = DEFAULT_RESIDUAL_THRESHOLD,
    threads: int | None = None,
) -> LemmaDecayReport:
    """Fit the growth of the shell integrals in R and compare it with n - alpha - beta."""
    js = sorted(set(int(j) for j in j_range))
    if len(js) < 3:
        raise ValidationError("need at least 3 shells")
    shells = []
    for j in js:
        v, s = lemma_shell_integral(mu, lam, ell, 2.0**j, n_samples, seed, g, threads)
        shells.append((2.0**j, v, s))
    values = np.array([v for _, v, _ in shells])
    if np.any(values <= 0):
        raise ValidationError("shell integral vanished; cannot take logarithms")
    fit = fit_line(js, np.log2(values))
    n = mu.ambient_dim
    alpha, beta = alpha_report.exponent, beta_report.exponent
    predicted = n - alpha - beta
    passed = fit.slope <= predicted + tolerance and fit.residual < residual_threshold
    return LemmaDecayReport(
        n=n,
        ell=ell,
        alpha=alpha,
        beta=beta,
        shells=tuple(shells),
        fit=fit,
        predicted_exponent=predicted,
        tolerance=tolerance,
        residual_threshold=residual_threshold,
        passed=bool(passed),
    )
