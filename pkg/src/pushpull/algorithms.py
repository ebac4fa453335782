"""Iteration state machines for the four benchmark optimizers.

All four share one stepping interface: the parameter update consumes the
gradients sampled at the end of the previous step, then a fresh minibatch is
drawn per node at the new iterate.  With ``batch=None`` the exact full-shard
gradient is used and no generator state is consumed, making runs fully
deterministic.

Gradient-tracker updates are ordered as ``(mix - old) + new`` so that in the
single-node degenerate case, where all mixing matrices collapse to ``[[1.0]]``,
every method reduces to plain SGD bit-for-bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mixing import COLUMN_STOCHASTIC, ROW_STOCHASTIC, StochasticMatrix
from .objective import ShardStack, stack_shards

PUSH_PULL = "push_pull"
PUSH_DIGING = "push_diging"
FROST = "frost"
CENTRALIZED = "centralized"
ALGORITHMS = (PUSH_PULL, PUSH_DIGING, FROST, CENTRALIZED)

DIAGONAL_FLOOR = 1e-300


@dataclass
class AlgorithmState:
    """Mutable per-run state; owned by exactly one run and stepped sequentially."""

    algo: str
    t: int
    X: np.ndarray                       # (n, d) iterates, one row per node
    G_prev: np.ndarray                  # (n, d) gradients sampled at X
    alpha: float
    batch: int | None
    stack: ShardStack
    rngs: list
    Y: np.ndarray | None = None         # (n, d) trackers (absent for centralized)
    A: StochasticMatrix | None = None
    B: StochasticMatrix | None = None
    v: np.ndarray | None = None         # push_diging mass vector, v_t = B^t 1
    Ddiag: np.ndarray | None = None     # frost diagonal of A^t
    power_cache: np.ndarray | None = None  # frost running matrix power A^t
    alignment_residual: float = field(default=0.0)  # push_diging per-step identity check

    @property
    def n(self) -> int:
        return self.X.shape[0]


def _sample_gradients(state: AlgorithmState, x_rows: np.ndarray) -> np.ndarray:
    """One gradient per node at ``x_rows``: minibatch draws or exact full shards."""
    if state.batch is None:
        grads, _ = state.stack.full_eval(x_rows)
        return grads
    idx = np.stack([rng.choice(state.stack.shard_size, size=state.batch, replace=False)
                    for rng in state.rngs])
    return state.stack.minibatch_gradients(x_rows, idx)


def init_state(algo: str,
               A: StochasticMatrix | None,
               B: StochasticMatrix | None,
               shards,
               x0: np.ndarray,
               alpha: float,
               batch: int | None,
               seed: int) -> AlgorithmState:
    """Consensual initialization: identical rows, tracker equal to the first sample.

    ``shards`` is a list of :class:`NodeShard` or any object already providing
    the stack oracle interface.  Per-node generator streams are spawned from
    ``seed`` so gradient draws are independent across nodes and reproducible.
    """
    if algo not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algo!r}; expected one of {ALGORITHMS}")
    if alpha <= 0.0:
        raise ValueError(f"step size must be positive, got {alpha}")
    stack = shards if hasattr(shards, "full_eval") else stack_shards(shards)
    n = stack.n
    needs_a = algo in (PUSH_PULL, FROST)
    needs_b = algo in (PUSH_PULL, PUSH_DIGING)
    if needs_a:
        if A is None or A.kind != ROW_STOCHASTIC:
            raise ValueError(f"{algo} requires a row-stochastic matrix")
        if A.n != n:
            raise ValueError(f"matrix size {A.n} does not match {n} shards")
    if needs_b:
        if B is None or B.kind != COLUMN_STOCHASTIC:
            raise ValueError(f"{algo} requires a column-stochastic matrix")
        if B.n != n:
            raise ValueError(f"matrix size {B.n} does not match {n} shards")

    if batch is not None and not 1 <= batch <= stack.shard_size:
        raise ValueError(f"batch size {batch} outside [1, {stack.shard_size}]")
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
    x = np.tile(np.asarray(x0, dtype=float), (n, 1))

    state = AlgorithmState(algo=algo, t=0, X=x, G_prev=np.empty(0), alpha=alpha,
                           batch=batch, stack=stack, rngs=rngs,
                           A=A if needs_a else None, B=B if needs_b else None)
    g0 = _sample_gradients(state, x)
    state.G_prev = g0
    if algo != CENTRALIZED:
        state.Y = g0.copy()
    if algo == PUSH_DIGING:
        state.v = np.ones(n)
    if algo == FROST:
        state.Ddiag = np.ones(n)
        state.power_cache = np.eye(n)
    return state


def step_push_pull(state: AlgorithmState) -> AlgorithmState:
    """Mix iterates with A, descend along the tracker, push the tracker with B."""
    x_next = state.A.w @ state.X - state.alpha * state.Y
    g_next = _sample_gradients(state, x_next)
    state.Y = (state.B.w @ state.Y - state.G_prev) + g_next
    state.X, state.G_prev = x_next, g_next
    state.t += 1
    return state


def step_push_diging(state: AlgorithmState) -> AlgorithmState:
    """Column-stochastic-only update with the running mass correction v_t.

    The time-varying mixing is applied as diagonal rescalings around B rather
    than materializing it.  The exact per-step invariant
    ``v_{t+1}^T x_{t+1} / n = v_t^T x_t / n - alpha * 1^T y_t / n`` is
    evaluated each step and its normalized residual stored on the state.
    """
    b = state.B.w
    v_next = b @ state.v
    if v_next.min() < DIAGONAL_FLOOR:
        raise FloatingPointError(f"mass vector underflow at t={state.t + 1}")
    x_next = (b @ (state.v[:, None] * state.X) - state.alpha * state.Y) / v_next[:, None]

    n = state.n
    drift = v_next @ x_next / n - (state.v @ state.X / n - state.alpha * state.Y.sum(axis=0) / n)
    scale = np.linalg.norm(state.X) + state.alpha * np.linalg.norm(state.Y)
    state.alignment_residual = float(np.linalg.norm(drift) / max(scale, 1e-300))

    g_next = _sample_gradients(state, x_next)
    state.Y = (b @ state.Y - state.G_prev) + g_next
    state.X, state.G_prev, state.v = x_next, g_next, v_next
    state.t += 1
    return state


def step_frost(state: AlgorithmState) -> AlgorithmState:
    """Row-stochastic-only update with diagonal-of-power gradient rescaling.

    The diagonal of ``A^t`` is read off a cached running power, which stays
    entrywise positive because every self-loop weight is positive.
    """
    a = state.A.w
    x_next = a @ state.X - state.alpha * state.Y
    power_next = a @ state.power_cache
    d_next = np.ascontiguousarray(np.diag(power_next))
    if d_next.min() < DIAGONAL_FLOOR:
        raise FloatingPointError(f"diagonal-of-power underflow at t={state.t + 1}")
    g_next = _sample_gradients(state, x_next)
    state.Y = (a @ state.Y - state.G_prev / state.Ddiag[:, None]) + g_next / d_next[:, None]
    state.X, state.G_prev = x_next, g_next
    state.Ddiag, state.power_cache = d_next, power_next
    state.t += 1
    return state


def step_centralized(state: AlgorithmState) -> AlgorithmState:
    """Shared-iterate SGD on the average of the per-shard gradients."""
    x_next = state.X - state.alpha * state.G_prev.mean(axis=0)
    g_next = _sample_gradients(state, x_next)
    state.X, state.G_prev = x_next, g_next
    state.t += 1
    return state


_STEPPERS = {
    PUSH_PULL: step_push_pull,
    PUSH_DIGING: step_push_diging,
    FROST: step_frost,
    CENTRALIZED: step_centralized,
}


def step(state: AlgorithmState) -> AlgorithmState:
    return _STEPPERS[state.algo](state)
