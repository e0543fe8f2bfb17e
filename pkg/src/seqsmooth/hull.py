"""Convex-hull membership via LP feasibility, plus extrapolation experiments.

Membership of z in Conv(X) is the feasibility of ``sum_i lam_i x_i = z``,
``sum_i lam_i = 1``, ``lam >= 0``, decided by a phase-1 simplex over the
equality system with artificial variables and Bland's pivoting rule: the
point is inside iff the minimized artificial objective falls below the query
tolerance. A 2-D geometric oracle (monotone chain hull plus point-in-polygon)
provides an independent cross-check, and the experiment runners measure how
interpolated-noise samples ``z = beta * xbar + (1 - beta) * eps`` land
relative to the hull of their source set.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

SOURCES = ("gaussian", "vae-latents")

_PIVOT_TOL = 1e-9
_MAX_PIVOTS = 200000
_STALL_LIMIT = 50  # degenerate pivots before switching to Bland's rule


@dataclass
class HullQuery:
    """Point-in-hull question: is z a convex combination of the rows of X?"""

    z: np.ndarray
    points: np.ndarray
    tolerance: float = 1e-7

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[0] < 1:
            raise ValueError("points must be a non-empty (N, d) matrix")
        if self.z.shape != (self.points.shape[1],):
            raise ValueError(
                f"query dimension {self.z.shape} mismatches points {self.points.shape}"
            )
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


def _phase1_min(a_eq: np.ndarray, b_eq: np.ndarray) -> float:
    """Minimum artificial-variable sum for {A x = b, x >= 0} (0 iff feasible).

    Tableau simplex over the equality system with artificial variables.
    The entering column is the most negative reduced cost (deterministic:
    argmin takes the lowest index on ties); when the objective stalls the
    rule switches to Bland's (lowest eligible index enters, ratio ties leave
    by lowest basic variable), which precludes cycling.
    """
    a = a_eq.copy()
    b = b_eq.copy()
    m, n = a.shape
    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0
    # Columns: n structural, m artificial, then the RHS.
    tableau = np.hstack([a, np.eye(m), b[:, None]])
    # Reduced-cost row for the artificial basis: r_j = c_j - sum_i T_ij.
    reduced = np.concatenate([np.zeros(n + m), [0.0]]) - tableau.sum(axis=0)
    reduced[n : n + m] += 1.0
    basis = np.arange(n, n + m)

    bland = False
    stalled = 0
    last_value = np.inf
    for _ in range(_MAX_PIVOTS):
        if bland:
            candidates = np.nonzero(reduced[:-1] < -_PIVOT_TOL)[0]
            if candidates.size == 0:
                return -reduced[-1]
            j = int(candidates[0])
        else:
            j = int(np.argmin(reduced[:-1]))
            if reduced[j] >= -_PIVOT_TOL:
                return -reduced[-1]
        col = tableau[:, j]
        rows = np.nonzero(col > _PIVOT_TOL)[0]
        if rows.size == 0:
            raise RuntimeError("phase-1 simplex detected an unbounded direction")
        ratios = tableau[rows, -1] / col[rows]
        best = ratios.min()
        tied = rows[ratios <= best * (1.0 + 1e-12) + 1e-300]
        r = int(tied[np.argmin(basis[tied])])
        pivot_row = tableau[r] / tableau[r, j]
        tableau -= np.outer(tableau[:, j], pivot_row)
        tableau[r] = pivot_row
        reduced -= reduced[j] * pivot_row
        basis[r] = j
        value = -reduced[-1]
        if value < last_value - 1e-12:
            last_value = value
            stalled = 0
        else:
            stalled += 1
            if stalled >= _STALL_LIMIT:
                bland = True
    raise RuntimeError("phase-1 simplex exceeded the pivot budget")


def in_convex_hull(query: HullQuery) -> bool:
    """True iff the convex-combination LP is feasible within the tolerance."""
    x = query.points
    n, d = x.shape
    a_eq = np.vstack([x.T, np.ones((1, n))])
    b_eq = np.concatenate([query.z, [1.0]])
    return _phase1_min(a_eq, b_eq) <= query.tolerance


def min_distance_to_set(z: np.ndarray, points: np.ndarray) -> float:
    """Minimum Euclidean distance from z to the point set (not the hull)."""
    z = np.asarray(z, dtype=float)
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 1:
        raise ValueError("points must be a non-empty (N, d) matrix")
    diff = points - z
    return float(np.sqrt(np.einsum("nd,nd->n", diff, diff).min()))


def _cross(o, a, b) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def hull_2d_oracle(z: np.ndarray, points: np.ndarray, tol: float = 1e-9) -> bool:
    """Geometric membership test in 2-D (independent of the LP path).

    Builds the convex hull by Andrew's monotone chain and tests the point
    against every edge; boundary points count as inside within ``tol``.
    """
    z = np.asarray(z, dtype=float)
    points = np.asarray(points, dtype=float)
    if z.shape != (2,) or points.ndim != 2 or points.shape[1] != 2:
        raise ValueError("hull_2d_oracle is strictly 2-D")
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) < 3:
        raise ValueError("degenerate input: need at least 3 distinct points")
    lower: list = []
    for p in pts:
        while len(lower) >= 2 and _cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in reversed(pts):
        while len(upper) >= 2 and _cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise ValueError("degenerate input: points are collinear")
    for i in range(len(hull)):
        a, b = hull[i], hull[(i + 1) % len(hull)]
        if _cross(a, b, z) < -tol:
            return False
    return True


@dataclass
class PropEntry:
    """Per-dimension outcome of an extrapolation experiment."""

    d: int
    trials: int
    fraction_outside: float
    mean_min_distance: float
    bound: float
    beta: float
    c_beta: float
    regime_threshold: float


@dataclass
class PropReport:
    """Extrapolation report across latent dimensions."""

    n_points: int
    beta: float
    trials: int
    source: str
    seed: int
    entries: list[PropEntry] = field(default_factory=list)


def _point_source(source: str, d: int, n_points: int, seed: int) -> np.ndarray:
    if source == "gaussian":
        return np.random.default_rng(seed).standard_normal((n_points, d))
    if source == "vae-latents":
        return _vae_latent_points(d, n_points, seed)
    raise ValueError(f"source must be one of {SOURCES}")


def _vae_latent_points(d: int, n_points: int, seed: int) -> np.ndarray:
    """Latent embeddings of random DNA sequences under a freshly trained VAE.

    Desk-scale stand-in for sweeping encoder latent sizes: short sequences,
    few epochs, latent dimension d.
    """
    from .data import DNA, Sequence
    from .vae import VaeTrainConfig, encode_batch, train_vae

    rng = np.random.default_rng(seed)
    length = 8
    matrix = rng.integers(0, DNA.size, size=(max(n_points, 500), length))
    corpus = [Sequence(tuple(int(v) for v in row)) for row in matrix]
    cfg = VaeTrainConfig(
        alphabet=DNA,
        latent_dim=d,
        hidden_dim=32,
        decoder_hidden=64,
        epochs=15,
        batch_size=128,
        seed=seed,
    )
    model = train_vae(corpus, cfg)
    return encode_batch(model, matrix[:n_points])


def _run_experiment(
    dims, n_points: int, beta: float, trials: int, source: str, seed: int
) -> PropReport:
    if not 0 < beta < 1:
        raise ValueError(f"beta must be in (0, 1), got {beta}")
    if trials < 1 or n_points < 1:
        raise ValueError("trials and n_points must be positive")
    c_beta = (1.0 + beta) / (1.0 - beta)
    report = PropReport(n_points=n_points, beta=beta, trials=trials, source=source, seed=seed)
    for pos, d in enumerate(dims):
        if d < 2:
            raise ValueError(f"dimensions must be at least 2, got {d}")
        dim_seed = seed + 7919 * (pos + 1)
        x = _point_source(source, d, n_points, dim_seed)
        rng = np.random.default_rng(dim_seed + 1)
        outside = 0
        outside_distances = []
        for _ in range(trials):
            xbar = x[int(rng.integers(0, n_points))]
            eps = rng.standard_normal(d)
            z = beta * xbar + (1.0 - beta) * eps
            if not in_convex_hull(HullQuery(z, x)):
                outside += 1
                outside_distances.append(min_distance_to_set(z, x))
        mean_dist = float(np.mean(outside_distances)) if outside_distances else 0.0
        exponent = d / (2.0 * (c_beta**2 + 2.0))
        report.entries.append(
            PropEntry(
                d=int(d),
                trials=trials,
                fraction_outside=outside / trials,
                mean_min_distance=mean_dist,
                bound=2.0 * (1.0 - beta) * math.sqrt(d),
                beta=beta,
                c_beta=c_beta,
                regime_threshold=math.exp(exponent) if exponent < 700 else math.inf,
            )
        )
        logger.info(
            "d=%d: %d/%d outside, mean min distance %.3f (bound %.3f, regime threshold %.3g)",
            d,
            outside,
            trials,
            mean_dist,
            report.entries[-1].bound,
            report.entries[-1].regime_threshold,
        )
    return report


def run_prop1(dims, n_points: int, beta: float, trials: int, source: str = "gaussian", seed: int = 0) -> PropReport:
    """Fraction of interpolated-noise samples falling outside Conv(X) per d."""
    return _run_experiment(dims, n_points, beta, trials, source, seed)


def run_prop2(dims, n_points: int, beta: float, trials: int, source: str = "gaussian", seed: int = 0) -> PropReport:
    """Mean min-distance of outside samples per d, against the 2(1-beta)sqrt(d) bound."""
    return _run_experiment(dims, n_points, beta, trials, source, seed)
