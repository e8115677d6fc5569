"""Allometric scaling exponents between patch variables via PCA in log space.

Slopes are ratios of leading-eigenvector components of the covariance
matrix of natural logs, with percentile-bootstrap confidence intervals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import NumericalError
from .patches import DirectionalPatch

DEFAULT_BOOTSTRAP_SAMPLES = 1000
DEFAULT_MIN_FIRM_PATCHES = 10
_EIGENVALUE_TIE_RTOL = 1e-12
_MAX_ESTIMATOR_FAILURES = 0.01
_BOOTSTRAP_CHUNK_CELLS = 5_000_000

ESTIMATORS = ("pca2-g", "pca3-g1", "pca3-g2", "pca3-g3")


@dataclass(frozen=True, slots=True)
class LogPoint:
    """Natural-log coordinates of one directional patch."""

    log_T: float
    log_N: float
    log_V: float


@dataclass(frozen=True, slots=True)
class AllometricFit:
    """Exponents g1, g2, g3 with bootstrap CIs and explained-variance shares.

    mode "tri" derives all three from one eigenvector, so g1 = g2*g3 exactly
    and explained_variance is a single share; mode "bi" fits each pair
    separately and carries one share per exponent.
    """

    mode: str
    g1: float
    g2: float
    g3: float
    ci95s: dict[str, tuple[float, float]] | None
    explained_variance: float | dict[str, float]
    n_points: int
    B: int
    seed: int | None


@dataclass(frozen=True, slots=True)
class FirmExponents:
    firm_id: str
    n_patches: int
    g1: float
    g2: float
    g3: float


def log_points(patches: Iterable[DirectionalPatch]) -> tuple[list[LogPoint], int]:
    """Log coordinates of patches, skipping (and counting) those with T = 0."""
    points = []
    skipped = 0
    for p in patches:
        if p.T <= 0:
            skipped += 1
            continue
        points.append(LogPoint(float(np.log(p.T)), float(np.log(p.N_m)), float(np.log(p.V_m))))
    return points, skipped


def points_array(points: Sequence[LogPoint]) -> np.ndarray:
    """(m, 3) array of (log_T, log_N, log_V) rows."""
    return np.array([(p.log_T, p.log_N, p.log_V) for p in points], dtype=np.float64)


def _coerce(points) -> np.ndarray:
    if isinstance(points, np.ndarray):
        return points.astype(np.float64, copy=False)
    seq = list(points)
    if seq and isinstance(seq[0], LogPoint):
        return points_array(seq)
    return np.asarray(seq, dtype=np.float64)


def _leading_eigen(cov: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    eigenvalues, eigenvectors = np.linalg.eigh(cov)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = eigenvalues[order]
    if eigenvalues[0] <= 0.0:
        raise NumericalError("degenerate covariance: all points identical")
    if (eigenvalues[0] - eigenvalues[1]) <= _EIGENVALUE_TIE_RTOL * eigenvalues[0]:
        raise NumericalError("no unique principal axis: leading eigenvalues tie")
    return eigenvalues, eigenvectors[:, order[0]]


def pca2(points) -> tuple[float, float]:
    """Major-axis slope and explained-variance share of a 2-d point cloud.

    The slope is the (v-component)/(u-component) ratio of the leading
    eigenvector, signed so the u-component is positive.
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"expected (m, 2) points, got shape {pts.shape}")
    if len(pts) < 3:
        raise ValueError(f"need >= 3 points, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    eigenvalues, lead = _leading_eigen(cov)
    if lead[0] == 0.0:
        raise NumericalError("axis-degenerate configuration: leading axis is vertical")
    if lead[0] < 0.0:
        lead = -lead
    return float(lead[1] / lead[0]), float(eigenvalues[0] / eigenvalues.sum())


def pca3(points) -> AllometricFit:
    """Trivariate fit from the leading eigenvector (a_T, a_N, a_V).

    g1 = a_N/a_V, g2 = a_T/a_V, g3 = a_N/a_T, so g1 = g2*g3 identically; the
    sign is fixed by a_V > 0.
    """
    pts = _coerce(points)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (m, 3) points, got shape {pts.shape}")
    if len(pts) < 4:
        raise ValueError(f"need >= 4 points, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    cov = centered.T @ centered / len(pts)
    eigenvalues, lead = _leading_eigen(cov)
    a_t, a_n, a_v = (float(c) for c in lead)
    if a_v == 0.0 or a_t == 0.0:
        raise NumericalError("axis-degenerate configuration: zero eigenvector component")
    if a_v < 0.0:
        a_t, a_n, a_v = -a_t, -a_n, -a_v
    return AllometricFit(
        mode="tri",
        g1=a_n / a_v,
        g2=a_t / a_v,
        g3=a_n / a_t,
        ci95s=None,
        explained_variance=float(eigenvalues[0] / eigenvalues.sum()),
        n_points=len(pts),
        B=0,
        seed=None,
    )


def _bootstrap_estimates(pts: np.ndarray, estimator: str, B: int, seed: int) -> np.ndarray:
    m, dims = pts.shape
    rng = np.random.default_rng(seed)
    chunk = max(1, _BOOTSTRAP_CHUNK_CELLS // m)
    out = np.empty(B)
    failures = 0
    done = 0
    while done < B:
        size = min(chunk, B - done)
        idx = rng.integers(0, m, size=(size, m))
        samples = pts[idx]
        means = samples.mean(axis=1)
        centered = samples - means[:, None, :]
        covs = np.einsum("bmi,bmj->bij", centered, centered) / m
        eigenvalues, eigenvectors = np.linalg.eigh(covs)
        lead = eigenvectors[:, :, -1]
        lam = eigenvalues[:, ::-1]
        tie = (lam[:, 0] <= 0.0) | (
            (lam[:, 0] - lam[:, 1]) <= _EIGENVALUE_TIE_RTOL * lam[:, 0]
        )
        if dims == 2:
            anchor = lead[:, 0]
        else:
            anchor = lead[:, 2]
        flip = np.sign(anchor)
        bad = tie | (anchor == 0.0)
        flip[bad] = 1.0
        lead = lead * flip[:, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            if estimator == "pca2-g":
                est = lead[:, 1] / lead[:, 0]
            elif estimator == "pca3-g1":
                est = lead[:, 1] / lead[:, 2]
            elif estimator == "pca3-g2":
                est = lead[:, 0] / lead[:, 2]
            else:
                est = lead[:, 1] / lead[:, 0]
        bad |= ~np.isfinite(est)
        est = est.copy()
        est[bad] = np.nan
        failures += int(bad.sum())
        out[done : done + size] = est
        done += size
    if failures > _MAX_ESTIMATOR_FAILURES * B:
        raise NumericalError(
            f"estimator failed on {failures}/{B} bootstrap resamples: degenerate data"
        )
    return out[np.isfinite(out)]


def bootstrap_ci(
    points,
    estimator: str,
    B: int = DEFAULT_BOOTSTRAP_SAMPLES,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile 95% interval of a PCA slope over B row resamples.

    Deterministic for a fixed seed; errors out when more than 1% of the
    resamples are degenerate.
    """
    if estimator not in ESTIMATORS:
        raise ValueError(f"estimator must be one of {ESTIMATORS}, got {estimator!r}")
    if B < 200:
        raise ValueError(f"B must be >= 200, got {B}")
    pts = _coerce(points)
    expected_dims = 2 if estimator == "pca2-g" else 3
    if pts.ndim != 2 or pts.shape[1] != expected_dims:
        raise ValueError(f"{estimator} needs (m, {expected_dims}) points, got {pts.shape}")
    estimates = _bootstrap_estimates(pts, estimator, B, seed)
    return float(np.quantile(estimates, 0.025)), float(np.quantile(estimates, 0.975))


def trivariate_fit(
    points,
    B: int = DEFAULT_BOOTSTRAP_SAMPLES,
    seed: int = 0,
) -> AllometricFit:
    """pca3 plus bootstrap CIs for all three exponents."""
    fit = pca3(points)
    pts = _coerce(points)
    ci95s = {
        name: bootstrap_ci(pts, f"pca3-{name}", B, seed)
        for name in ("g1", "g2", "g3")
    }
    return AllometricFit(
        mode="tri",
        g1=fit.g1,
        g2=fit.g2,
        g3=fit.g3,
        ci95s=ci95s,
        explained_variance=fit.explained_variance,
        n_points=fit.n_points,
        B=B,
        seed=seed,
    )


def bivariate_fit(
    points,
    B: int = DEFAULT_BOOTSTRAP_SAMPLES,
    seed: int = 0,
) -> AllometricFit:
    """Three pairwise pca2 fits: N vs V (g1), T vs V (g2), N vs T (g3).

    Unlike the trivariate mode, g1 = g2*g3 holds only approximately here.
    """
    pts = _coerce(points)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected (m, 3) points, got shape {pts.shape}")
    pairs = {
        "g1": pts[:, (2, 1)],  # log V -> log N
        "g2": pts[:, (2, 0)],  # log V -> log T
        "g3": pts[:, (0, 1)],  # log T -> log N
    }
    slopes: dict[str, float] = {}
    shares: dict[str, float] = {}
    ci95s: dict[str, tuple[float, float]] = {}
    for name, pair_pts in pairs.items():
        slopes[name], shares[name] = pca2(pair_pts)
        ci95s[name] = bootstrap_ci(pair_pts, "pca2-g", B, seed)
    return AllometricFit(
        mode="bi",
        g1=slopes["g1"],
        g2=slopes["g2"],
        g3=slopes["g3"],
        ci95s=ci95s,
        explained_variance=shares,
        n_points=len(pts),
        B=B,
        seed=seed,
    )


def per_firm_exponents(
    patches: Iterable[DirectionalPatch],
    min_patches: int = DEFAULT_MIN_FIRM_PATCHES,
) -> dict[str, FirmExponents]:
    """Bivariate exponents per firm with at least min_patches usable patches.

    Patches with T = 0 are unusable in log space and do not count; firms
    whose point cloud is degenerate are omitted.
    """
    by_firm: dict[str, list[DirectionalPatch]] = {}
    for p in patches:
        by_firm.setdefault(p.patch.firm_id, []).append(p)
    out: dict[str, FirmExponents] = {}
    for firm_id in sorted(by_firm):
        points, _ = log_points(by_firm[firm_id])
        if len(points) < min_patches:
            continue
        pts = points_array(points)
        try:
            g1, _ = pca2(pts[:, (2, 1)])
            g2, _ = pca2(pts[:, (2, 0)])
            g3, _ = pca2(pts[:, (0, 1)])
        except NumericalError:
            continue
        out[firm_id] = FirmExponents(
            firm_id=firm_id,
            n_patches=len(points),
            g1=g1,
            g2=g2,
            g3=g3,
        )
    return out
