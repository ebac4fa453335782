"""Stochastic weight matrices and their spectral connectivity metrics.

A row-stochastic matrix ``A`` mixes model parameters (each row sums to one,
``a_ij > 0`` iff node ``j`` sends to node ``i``); a column-stochastic matrix
``B`` mixes gradient trackers.  Both admit entrywise positive Perron vectors
because the graph is strongly connected and every diagonal entry is positive,
so the power sequence ``w^t`` converges geometrically to a rank-one limit.

All eigen-computations here are deterministic power iterations; no external
linear-algebra solver is required beyond dense matmul.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .topology import Digraph, is_strongly_connected

ROW_STOCHASTIC = "row_stochastic"
COLUMN_STOCHASTIC = "column_stochastic"
KINDS = (ROW_STOCHASTIC, COLUMN_STOCHASTIC)

STOCHASTICITY_TOL = 1e-12
# Contractual bound on the fixed-point residual is 1e-10; the iteration aims
# two orders tighter because downstream identity checks (m-step telescoping)
# amplify the limit-matrix error by the block length.
PERRON_TOL = 1e-13
PERRON_MAX_ITER = 10**6
SPECTRAL_TOL = 1e-12
SERIES_TERM_TOL = 1e-12
SERIES_CAP = 10**5


class PerronConvergenceError(RuntimeError):
    """Power iteration failed to reach the fixed-point residual tolerance."""


@dataclass(frozen=True)
class StochasticMatrix:
    """Dense nonnegative stochastic matrix with cached Perron vector and limit.

    Attributes
    ----------
    kind : str
        ``"row_stochastic"`` or ``"column_stochastic"``.
    w : (n, n) ndarray
        The weight matrix itself.
    perron : (n,) ndarray
        Entrywise positive fixed vector with unit l1 norm: ``perron @ w == perron``
        for the row kind, ``w @ perron == perron`` for the column kind.
    limit : (n, n) ndarray
        Infinite-power limit: ``ones * perron^T`` (row kind) or
        ``perron * ones^T`` (column kind).
    """

    kind: str
    w: np.ndarray
    perron: np.ndarray
    limit: np.ndarray

    @property
    def n(self) -> int:
        return self.w.shape[0]


@dataclass(frozen=True)
class NetworkMetrics:
    """Spectral metrics of a row-stochastic / column-stochastic matrix pair.

    ``beta`` is the Perron-weighted contraction factor in [0, 1); ``kappa``
    the equilibrium skew ``max(pi)/min(pi)``; ``M`` the sup of the power
    deviation sequence ``|w^t - limit|_2``; ``s`` the larger of the plain and
    squared sums of that sequence; ``c = n * pi_A . pi_B`` the effective step
    scaling of the combined pair; ``decay_lambda`` a fitted tail ratio of the
    deviation sequence (diagnostic only).
    """

    beta_A: float
    beta_B: float
    kappa_A: float
    kappa_B: float
    M_A: float
    M_B: float
    s_A: float
    s_B: float
    c: float
    decay_lambda_A: float
    decay_lambda_B: float


def spectral_norm(m, tol: float = SPECTRAL_TOL, max_iter: int = 50_000, v0=None):
    """Largest singular value of ``m`` by power iteration on ``m^T m``.

    Returns ``(sigma, v)`` where ``v`` is the final unit right singular
    vector estimate, reusable as a warm start for a nearby matrix.
    Convergence is declared when the Rayleigh quotient stabilizes to a
    relative change below ``tol``.
    """
    m = np.asarray(m, dtype=float)
    size = m.shape[1]
    if v0 is not None and np.linalg.norm(v0) > 0:
        v = np.asarray(v0, dtype=float)
    else:
        v = np.random.default_rng(0x5EED).standard_normal(size)
    v = v / np.linalg.norm(v)
    lam = -1.0
    for _ in range(max_iter):
        u = m @ v
        lam_new = float(u @ u)  # = v^T m^T m v for unit v
        if lam_new == 0.0:
            return 0.0, v
        w = m.T @ u
        v = w / np.linalg.norm(w)
        if abs(lam_new - lam) <= tol * lam_new:
            lam = lam_new
            break
        lam = lam_new
    return math.sqrt(lam), v


def perron_vector(w, kind: str, tol: float = PERRON_TOL, max_iter: int = PERRON_MAX_ITER):
    """Entrywise positive l1-normalized fixed vector of a stochastic matrix.

    Power iteration on ``w^T`` (row kind) or ``w`` (column kind) with l1
    renormalization each step, started from the uniform vector.  Converges
    for any primitive matrix; primitivity is guaranteed by strong
    connectivity plus a positive diagonal.

    Raises
    ------
    PerronConvergenceError
        If the fixed-point residual does not drop below ``tol`` within
        ``max_iter`` iterations.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown matrix kind {kind!r}")
    w = np.asarray(w, dtype=float)
    op = w.T if kind == ROW_STOCHASTIC else w
    n = w.shape[0]
    pi = np.full(n, 1.0 / n)
    image = op @ pi
    for _ in range(max_iter):
        pi = image / image.sum()
        image = op @ pi
        if np.linalg.norm(image - pi) <= tol:
            if pi.min() <= 0.0:
                raise PerronConvergenceError("fixed vector is not entrywise positive")
            return pi
    raise PerronConvergenceError(
        f"fixed-point residual above {tol} after {max_iter} iterations"
    )


def from_matrix(kind: str, w) -> StochasticMatrix:
    """Wrap a raw stochastic matrix, validating it and caching Perron data."""
    w = np.array(w, dtype=float)
    if w.ndim != 2 or w.shape[0] != w.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {w.shape}")
    if w.min() < 0.0:
        raise ValueError("weight matrix has negative entries")
    if np.trace(w) <= 0.0:
        raise ValueError("weight matrix must have positive trace")
    sums = w.sum(axis=1) if kind == ROW_STOCHASTIC else w.sum(axis=0)
    if np.max(np.abs(sums - 1.0)) > STOCHASTICITY_TOL:
        raise ValueError(f"matrix is not {kind} to within {STOCHASTICITY_TOL}")
    pi = perron_vector(w, kind)
    ones = np.ones(w.shape[0])
    limit = np.outer(ones, pi) if kind == ROW_STOCHASTIC else np.outer(pi, ones)
    return StochasticMatrix(kind=kind, w=w, perron=pi, limit=limit)


def build_weight_matrix(g: Digraph, kind: str, seed: int) -> StochasticMatrix:
    """Draw integer edge weights in {1..9} and normalize rows or columns.

    A full ``n x n`` integer matrix is drawn from ``default_rng(seed)`` and
    masked to the graph's sparsity pattern (entry ``(i, j)`` is kept iff node
    ``j`` sends to node ``i``), so the draw order is independent of the edge
    set.  Self-loops keep every diagonal entry strictly positive.
    """
    if not is_strongly_connected(g):
        raise ValueError("weight matrices require a strongly connected digraph")
    rng = np.random.default_rng(seed)
    raw = rng.integers(1, 10, size=(g.n, g.n)).astype(float)
    w = np.where(g.adjacency(), raw, 0.0)
    axis = 1 if kind == ROW_STOCHASTIC else 0
    w = w / w.sum(axis=axis, keepdims=True)
    return from_matrix(kind, w)


def power_deviation_series(mat: StochasticMatrix,
                           term_tol: float = SERIES_TERM_TOL,
                           cap: int = SERIES_CAP) -> np.ndarray:
    """Sequence ``|w^t - limit|_2`` for ``t = 0, 1, ...`` truncated at ``term_tol``.

    Uses the identity ``w^t - limit = (w - limit)^t`` for ``t >= 1``, so small
    terms are formed by multiplying small matrices rather than by cancellation.
    If the cap is reached before the terms fall below tolerance (contraction
    factor extremely close to one) the partial series is returned with a
    warning.
    """
    n = mat.n
    eye = np.eye(n)
    term0, v = spectral_norm(eye - mat.limit)
    terms = [term0]
    dev = mat.w - mat.limit
    power = dev
    for _ in range(cap):
        term, v = spectral_norm(power, v0=v)
        if term < term_tol:
            return np.array(terms)
        terms.append(term)
        power = power @ dev
    warnings.warn(
        f"power deviation series still above {term_tol} after {cap} terms; "
        "returning the partial series",
        RuntimeWarning,
    )
    return np.array(terms)


def fit_decay(terms: np.ndarray):
    """Geometric tail ratio of a deviation series.

    The tail is the final decade of magnitude (all indices whose term is
    within a factor 10 of the last term); the fitted rate is the geometric
    mean ratio across that span.  Returns ``(rate, tail_start_index)``.
    """
    terms = np.asarray(terms, dtype=float)
    t2 = len(terms) - 1
    if t2 < 1 or terms[t2] <= 0.0:
        return 0.0, t2
    inside = np.nonzero(terms <= 10.0 * terms[t2])[0]
    t1 = int(inside[0])
    if t1 == t2:
        t1 = t2 - 1
    rate = (terms[t2] / terms[t1]) ** (1.0 / (t2 - t1))
    return float(rate), t1


def s_value(terms: np.ndarray) -> float:
    """Rolling-sum constant: max of the plain and squared series sums."""
    terms = np.asarray(terms, dtype=float)
    return float(max(terms.sum(), (terms ** 2).sum()))


def _weighted_contraction(mat: StochasticMatrix) -> float:
    sqrt_pi = np.sqrt(mat.perron)
    dev = mat.w - mat.limit
    if mat.kind == ROW_STOCHASTIC:
        scaled = (sqrt_pi[:, None] * dev) / sqrt_pi[None, :]
    else:
        scaled = (dev / sqrt_pi[:, None]) * sqrt_pi[None, :]
    sigma, _ = spectral_norm(scaled)
    return sigma


def compute_metrics(a: StochasticMatrix, b: StochasticMatrix) -> NetworkMetrics:
    """All spectral metrics of a row/column-stochastic pair on the same n."""
    if a.kind != ROW_STOCHASTIC or b.kind != COLUMN_STOCHASTIC:
        raise ValueError("expected a row-stochastic and a column-stochastic matrix")
    if a.n != b.n:
        raise ValueError(f"matrix sizes differ: {a.n} vs {b.n}")
    terms_a = power_deviation_series(a)
    terms_b = power_deviation_series(b)
    lam_a, _ = fit_decay(terms_a)
    lam_b, _ = fit_decay(terms_b)
    return NetworkMetrics(
        beta_A=_weighted_contraction(a),
        beta_B=_weighted_contraction(b),
        kappa_A=float(a.perron.max() / a.perron.min()),
        kappa_B=float(b.perron.max() / b.perron.min()),
        M_A=float(terms_a.max()),
        M_B=float(terms_b.max()),
        s_A=s_value(terms_a),
        s_B=s_value(terms_b),
        c=float(a.n * (a.perron @ b.perron)),
        decay_lambda_A=lam_a,
        decay_lambda_B=lam_b,
    )


def matrix_power_deviation(mat: StochasticMatrix, t: int) -> float:
    """``|w^t - limit|_2`` for a single exponent ``t >= 0``."""
    if t < 0:
        raise ValueError(f"exponent must be nonnegative, got {t}")
    if t == 0:
        dev = np.eye(mat.n) - mat.limit
    else:
        dev = np.linalg.matrix_power(mat.w - mat.limit, t)
    sigma, _ = spectral_norm(dev)
    return sigma
