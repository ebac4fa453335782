"""Synthetic nonconvex logistic-regression benchmark and gradient oracles.

Each node minimizes the mean logistic loss over its shard plus a bounded
nonconvex penalty ``rho * sum_j x_j^2 / (1 + x_j^2)``.  Shards are contiguous
row blocks of one global synthetic dataset, so heterogeneity across nodes is
mild but nonzero.

The per-shard functions (`local_loss`, `local_gradient`) are the reference
oracles; the ``stacked_*`` functions evaluate all nodes in one vectorized
pass and are what the simulation loop uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class SyntheticDataset:
    """Global feature matrix, +/-1 labels, and the planted parameter vector."""

    H: np.ndarray
    Y: np.ndarray
    x_opt: np.ndarray
    d: int
    L_total: int
    rho: float
    seed: int


@dataclass(frozen=True)
class NodeShard:
    """One node's contiguous slice of the dataset."""

    node_id: int
    H: np.ndarray
    Y: np.ndarray
    rho: float

    @property
    def size(self) -> int:
        return self.H.shape[0]


@dataclass(frozen=True)
class ShardStack:
    """All shards stacked as (n, M, d) / (n, M) arrays for vectorized oracles.

    The two methods are the oracle interface the iteration schemes consume;
    any object with the same surface (``n``, ``d``, ``shard_size``,
    ``full_eval``, ``minibatch_gradients``) can stand in for it.
    """

    H: np.ndarray
    Y: np.ndarray
    rho: float

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def shard_size(self) -> int:
        return self.H.shape[1]

    @property
    def d(self) -> int:
        return self.H.shape[2]

    def full_eval(self, x_rows: np.ndarray):
        """Full-shard gradients and losses for every node at its own iterate.

        Returns ``(grads, losses)`` with shapes ``(n, d)`` and ``(n,)``.
        """
        if x_rows.shape != (self.n, self.d):
            raise ValueError(f"expected iterate shape {(self.n, self.d)}, got {x_rows.shape}")
        margins = self.Y * np.einsum("nmd,nd->nm", self.H, x_rows)
        losses = np.logaddexp(0.0, -margins).mean(axis=1)
        sq = x_rows * x_rows
        losses = losses + self.rho * (sq / (1.0 + sq)).sum(axis=1)
        coef = self.Y * sigmoid(-margins)
        grads = -np.einsum("nm,nmd->nd", coef, self.H) / self.shard_size
        grads = grads + self.rho * 2.0 * x_rows / (1.0 + sq) ** 2
        return grads, losses

    def minibatch_gradients(self, x_rows: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Minibatch gradients for every node given an (n, B) index matrix."""
        rows = np.arange(self.n)[:, None]
        hb = self.H[rows, idx]
        yb = self.Y[rows, idx]
        margins = yb * np.einsum("nbd,nd->nb", hb, x_rows)
        coef = yb * sigmoid(-margins)
        grads = -np.einsum("nb,nbd->nd", coef, hb) / idx.shape[1]
        return grads + self.rho * 2.0 * x_rows / (1.0 + x_rows * x_rows) ** 2


def sigmoid(t: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function, safe for large |t|."""
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def labels_from_margins(margins: np.ndarray, uniforms: np.ndarray) -> np.ndarray:
    """Randomized +/-1 labels: +1 exactly when ``u < sigmoid(margin)``.

    Equivalent to thresholding ``1/u > 1 + exp(-margin)`` but evaluated in
    the overflow-free form.
    """
    return np.where(uniforms < sigmoid(margins), 1.0, -1.0)


def synthesize(L_total: int, d: int, seed: int, rho: float) -> SyntheticDataset:
    """Generate the benchmark dataset from one deterministic generator.

    Draw order (fixed; part of the reproducibility contract): planted
    parameters ``x_opt`` (standard normal), features ``H`` (standard normal),
    then one uniform per row for the label thresholding.
    """
    if L_total < 1 or d < 1:
        raise ValueError(f"need L_total >= 1 and d >= 1, got {L_total}, {d}")
    if rho < 0.0:
        raise ValueError(f"regularization weight must be nonnegative, got {rho}")
    rng = np.random.default_rng(seed)
    x_opt = rng.standard_normal(d)
    h = rng.standard_normal((L_total, d))
    u = rng.random(L_total)
    y = labels_from_margins(h @ x_opt, u)
    return SyntheticDataset(H=h, Y=y, x_opt=x_opt, d=d, L_total=L_total, rho=rho, seed=seed)


def partition(ds: SyntheticDataset, n: int) -> list[NodeShard]:
    """Split the dataset into ``n`` contiguous shards of equal size."""
    if n < 1 or ds.L_total % n != 0:
        raise ValueError(f"node count {n} must divide L_total={ds.L_total}")
    m = ds.L_total // n
    return [
        NodeShard(node_id=i, H=ds.H[i * m:(i + 1) * m], Y=ds.Y[i * m:(i + 1) * m], rho=ds.rho)
        for i in range(n)
    ]


def stack_shards(shards: list[NodeShard]) -> ShardStack:
    if not shards:
        raise ValueError("need at least one shard")
    sizes = {s.size for s in shards}
    if len(sizes) != 1:
        raise ValueError(f"shards have unequal sizes {sorted(sizes)}")
    return ShardStack(
        H=np.stack([s.H for s in shards]),
        Y=np.stack([s.Y for s in shards]),
        rho=shards[0].rho,
    )


def regularizer_value(x: np.ndarray, rho: float) -> float:
    sq = x * x
    return float(rho * np.sum(sq / (1.0 + sq)))


def regularizer_gradient(x: np.ndarray, rho: float) -> np.ndarray:
    return rho * 2.0 * x / (1.0 + x * x) ** 2


def local_loss(shard: NodeShard, x: np.ndarray) -> float:
    """Mean logistic loss over the shard plus the nonconvex penalty.

    The logistic term is evaluated as ``softplus(-y * h.x)`` via
    ``logaddexp``, which is exact for small arguments and overflow-free for
    large ones.
    """
    margins = shard.Y * (shard.H @ x)
    return float(np.logaddexp(0.0, -margins).mean()) + regularizer_value(x, shard.rho)


def local_gradient(shard: NodeShard, x: np.ndarray, batch: int | None = None, rng=None) -> np.ndarray:
    """Full-shard gradient, or a uniform without-replacement minibatch gradient.

    With ``batch`` given, ``batch`` rows are sampled from ``rng``; the draw
    consumes the generator, so callers own the stream.
    """
    h, y = shard.H, shard.Y
    if batch is not None:
        if not 1 <= batch <= shard.size:
            raise ValueError(f"batch size {batch} outside [1, {shard.size}]")
        if rng is None:
            raise ValueError("minibatch sampling requires a generator")
        idx = rng.choice(shard.size, size=batch, replace=False)
        h, y = h[idx], y[idx]
    coef = y * sigmoid(-y * (h @ x))
    return -(h * coef[:, None]).mean(axis=0) + regularizer_gradient(x, shard.rho)


def global_gradient_metric(shards: list[NodeShard], x_rows: np.ndarray) -> float:
    """Norm of the mean full-shard gradient, each node evaluated at its own row."""
    if len(shards) != x_rows.shape[0]:
        raise ValueError(f"got {len(shards)} shards but {x_rows.shape[0]} iterate rows")
    grads, _ = stack_shards(shards).full_eval(x_rows)
    return float(np.linalg.norm(grads.mean(axis=0)))
