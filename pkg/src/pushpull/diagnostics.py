"""Per-iteration diagnostics, identity checks, and plateau estimation.

The trace schema is fixed: one row per (trial, iteration) with the columns

    trial,t,grad_metric,eps_norm,consensus_x,delta_y_norm,mass_residual,loss_mean

Column semantics depend mildly on the algorithm:

* ``eps_norm`` -- push_pull: norm of the deviation from the rescaled
  centralized-SGD recursion, ``alpha * |((I - B_inf) Y)^T pi_A|``;
  frost: norm of ``alpha/n * G^T (1 - pi_A / diag(A^t))``, which decays to
  zero; push_diging: the per-step exact-alignment residual (zero up to
  roundoff); centralized: 0.
* ``consensus_x`` -- Frobenius distance of the iterate rows from their
  weighted average (Perron weights where defined, ``v_t/n`` for push_diging).
* ``delta_y_norm`` -- Frobenius norm of the tracker component orthogonal to
  the mixing limit; 0 for centralized.
* ``mass_residual`` -- relative violation of the tracker conservation law
  (column sums for push_pull/push_diging, Perron-weighted sums for frost).

Identity checks that need recorded gradient blocks live in
``PushPullVerifier`` and only run when a simulation is started in verify
mode; they roughly double the bookkeeping cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import algorithms as alg
from .mixing import StochasticMatrix, power_deviation_series, s_value

TRACE_COLUMNS = ("trial", "t", "grad_metric", "eps_norm", "consensus_x",
                 "delta_y_norm", "mass_residual", "loss_mean")


@dataclass(frozen=True)
class TraceRecord:
    """One diagnostics row; ``n`` is run metadata, carried but never serialized."""

    trial: int
    t: int
    grad_metric: float
    eps_norm: float
    consensus_x: float
    delta_y_norm: float
    mass_residual: float
    loss_mean: float
    n: int | None = field(default=None, compare=False)


def weighted_average(weights: np.ndarray, x_rows: np.ndarray) -> np.ndarray:
    """Convex combination of the iterate rows: ``x_rows^T @ weights``."""
    weights = np.asarray(weights, dtype=float)
    if weights.min() <= 0.0 or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must be entrywise positive and sum to one")
    return x_rows.T @ weights


def error_term(alpha: float, pi_a: np.ndarray, b_limit: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Deviation of the weighted-average recursion from rescaled centralized SGD.

    ``-alpha * ((I - b_limit) y)^T pi_a``; this is the term that stays at a
    noise-level constant for push_pull instead of vanishing.
    """
    return -alpha * ((y - b_limit @ y).T @ pi_a)


def frost_error_term(alpha: float, pi_a: np.ndarray, ddiag: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Analogous deviation for frost: ``alpha/n * g^T (1 - pi_a / ddiag)``.

    ``ddiag`` is the diagonal of the running matrix power, which converges to
    the Perron entries, so this term decays geometrically.
    """
    n = g.shape[0]
    return alpha / n * (g.T @ (np.ones(n) - pi_a / ddiag))


def _relative(value: float, scale: float) -> float:
    return value / max(1.0, scale)


def observe(state: alg.AlgorithmState, trial: int, n_meta: int | None = None) -> TraceRecord:
    """Snapshot all trace fields of a live state (before the next step)."""
    x = state.X
    grads, losses = state.stack.full_eval(x)
    grad_metric = float(np.linalg.norm(grads.mean(axis=0)))
    loss_mean = float(losses.mean())

    eps_norm = consensus = delta_y = mass = 0.0
    if state.algo == alg.PUSH_PULL:
        pi_a = state.A.perron
        eps_norm = float(np.linalg.norm(error_term(state.alpha, pi_a, state.B.limit, state.Y)))
        consensus = _consensus(x, pi_a)
        delta_y = float(np.linalg.norm(state.Y - state.B.limit @ state.Y))
        mass = _relative(float(np.linalg.norm(state.Y.sum(axis=0) - state.G_prev.sum(axis=0))),
                         float(np.linalg.norm(state.G_prev)))
    elif state.algo == alg.PUSH_DIGING:
        eps_norm = state.alignment_residual
        consensus = _consensus(x, state.v / state.n)
        delta_y = float(np.linalg.norm(state.Y - state.B.limit @ state.Y))
        mass = _relative(float(np.linalg.norm(state.Y.sum(axis=0) - state.G_prev.sum(axis=0))),
                         float(np.linalg.norm(state.G_prev)))
    elif state.algo == alg.FROST:
        pi_a = state.A.perron
        eps_norm = float(np.linalg.norm(
            frost_error_term(state.alpha, pi_a, state.Ddiag, state.G_prev)))
        consensus = _consensus(x, pi_a)
        delta_y = float(np.linalg.norm(state.Y - state.A.limit @ state.Y))
        mass = _relative(
            float(np.linalg.norm((state.Y - state.G_prev / state.Ddiag[:, None]).T @ pi_a)),
            float(np.linalg.norm(state.G_prev)))

    return TraceRecord(trial=trial, t=state.t, grad_metric=grad_metric, eps_norm=eps_norm,
                       consensus_x=consensus, delta_y_norm=delta_y, mass_residual=mass,
                       loss_mean=loss_mean, n=n_meta)


def _consensus(x_rows: np.ndarray, weights: np.ndarray) -> float:
    center = x_rows.T @ weights
    return float(np.linalg.norm(x_rows - center[None, :]))


def check_telescoping(b: StochasticMatrix,
                      delta_y_start: np.ndarray,
                      g_block: list,
                      delta_y_sum: np.ndarray) -> float:
    """Relative residual of the m-step tracker identity.

    Over a block of ``m`` steps the off-limit tracker components satisfy

        sum_i dy(k+i) = (sum_j (B^j - B_inf)) dy(k)
                        + sum_{j>=1} (B^{m-j-1} - B_inf) (g(k+j) - g(k)),

    with all interior gradients cancelling.  ``delta_y_start`` is ``dy`` at
    the block start, ``g_block`` the m gradients sampled inside the block and
    ``delta_y_sum`` the recorded sum of the m ``dy`` matrices.
    """
    m = len(g_block)
    if m < 1:
        raise ValueError("block must contain at least one gradient matrix")
    powers = _matrix_powers(b.w, m)
    coeff = sum(powers[j] - b.limit for j in range(m))
    rhs = coeff @ delta_y_start
    for j in range(1, m):
        rhs = rhs + (powers[m - j - 1] - b.limit) @ (g_block[j] - g_block[0])
    return _relative(float(np.linalg.norm(delta_y_sum - rhs)),
                     float(np.linalg.norm(delta_y_sum)))


def _matrix_powers(w: np.ndarray, count: int) -> list:
    powers = [np.eye(w.shape[0])]
    for _ in range(count - 1):
        powers.append(powers[-1] @ w)
    return powers


def check_rolling_sum(mat: StochasticMatrix, deltas: list, s: float | None = None):
    """Both sides of the rolling-sum inequality for arbitrary perturbations.

    Returns ``(lhs, rhs)`` with

        lhs = sum_k | sum_i (w^{k-i} - limit) delta_i |_F^2,
        rhs = s^2 * sum_i |delta_i|_F^2,

    where ``s`` defaults to the matrix's truncated rolling-sum constant.
    Callers assert ``lhs <= rhs`` (up to roundoff).
    """
    if s is None:
        s = s_value(power_deviation_series(mat))
    horizon = len(deltas) - 1
    base = mat.w - mat.limit
    devs = [np.eye(mat.n) - mat.limit]  # exponent 0; (w - limit)^k equals w^k - limit for k >= 1
    power = np.eye(mat.n)
    for _ in range(horizon):
        power = power @ base
        devs.append(power)
    lhs = 0.0
    for k in range(horizon + 1):
        acc = np.zeros_like(deltas[0])
        for i in range(k + 1):
            acc += devs[k - i] @ deltas[i]
        lhs += float(np.linalg.norm(acc)) ** 2
    rhs = s * s * sum(float(np.linalg.norm(d)) ** 2 for d in deltas)
    return lhs, rhs


def plateau_estimate(series, tail_frac: float = 0.2) -> float:
    """Geometric mean of the final ``ceil(tail_frac * len)`` values.

    The geometric mean matches the log-scale reading of a noise plateau; a
    window of an already-sliced series can be estimated with ``tail_frac=1``.
    """
    series = np.asarray(series, dtype=float)
    if series.size == 0:
        raise ValueError("series is empty")
    if not 0.0 < tail_frac <= 1.0:
        raise ValueError(f"tail fraction must be in (0, 1], got {tail_frac}")
    tail = series[-math.ceil(tail_frac * series.size):]
    return float(np.exp(np.log(np.maximum(tail, 1e-300)).mean()))


class PushPullVerifier:
    """Replays the single-step and block identities along a push_pull run.

    Call :meth:`record` with the live state at every iteration (before
    stepping).  ``step_residuals`` collects the per-step reconstruction
    residuals of the weighted-average recursion; ``block_residuals[m]``
    collects one relative residual per completed m-step block for every
    requested block size.
    """

    def __init__(self, a: StochasticMatrix, b: StochasticMatrix, alpha: float,
                 block_sizes=(1, 2, 8, 16)):
        self.pi_a = a.perron
        self.b = b
        self.alpha = alpha
        self.c = a.n * float(a.perron @ b.perron)
        self.block_sizes = tuple(block_sizes)
        self.step_residuals: list[float] = []
        self.block_residuals = {m: [] for m in self.block_sizes}
        self._predicted = None
        self._scale = 1.0
        self._blocks = {m: ([], [], None) for m in self.block_sizes}  # (dys, gs, dy_start)

    def record(self, state: alg.AlgorithmState) -> None:
        if state.algo != alg.PUSH_PULL:
            raise ValueError("verifier only applies to push_pull runs")
        xhat = state.X.T @ self.pi_a
        if self._predicted is not None:
            res = float(np.linalg.norm(xhat - self._predicted))
            self.step_residuals.append(res / max(self._scale, 1e-300))
        gbar = state.G_prev.mean(axis=0)
        eps = error_term(self.alpha, self.pi_a, self.b.limit, state.Y)
        self._predicted = xhat - self.c * self.alpha * gbar + eps
        self._scale = float(np.linalg.norm(xhat)) + self.alpha * float(np.linalg.norm(state.Y))

        dy = state.Y - self.b.limit @ state.Y
        for m in self.block_sizes:
            dys, gs, dy_start = self._blocks[m]
            if dy_start is None:
                dy_start = dy
            dys.append(dy)
            gs.append(state.G_prev)
            if len(dys) == m:
                residual = check_telescoping(self.b, dy_start, gs, sum(dys))
                self.block_residuals[m].append(residual)
                self._blocks[m] = ([], [], None)
            else:
                self._blocks[m] = (dys, gs, dy_start)

    def max_step_residual(self) -> float:
        return max(self.step_residuals, default=0.0)

    def max_block_residual(self) -> float:
        return max((r for rs in self.block_residuals.values() for r in rs), default=0.0)
