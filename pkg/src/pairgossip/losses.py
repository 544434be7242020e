"""Pairwise objectives bound to a dataset, with analytic gradients.

Every objective evaluates ``f(theta; x_i, x_j)`` for index arrays ``i`` and
``j`` that broadcast against the leading axes of ``theta``; the parameter
lives on the last axis. ``risk`` is the full ``1/n^2`` double sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from pairgossip.errors import DataError, ParameterError
from pairgossip.pairwise import Dataset


class PairwiseObjective:
    """Base class. Subclasses implement :meth:`pair_loss` and :meth:`pair_grad`."""

    name = "objective"
    smooth = True

    def __init__(self, data: Dataset):
        if data.n < 1:
            raise ParameterError("empty dataset")
        self.data = data

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def dim(self) -> int:
        return self.data.d

    @property
    def lipschitz(self) -> float:
        raise NotImplementedError

    def zeros(self, *lead) -> np.ndarray:
        return np.zeros((*lead, self.dim))

    def pair_loss(self, theta, i, j) -> np.ndarray:
        raise NotImplementedError

    def pair_grad(self, theta, i, j) -> np.ndarray:
        raise NotImplementedError

    def pair_term(self, theta, i, j):
        """Scalar ``f(theta; x_i, x_j)`` for a single pair, as a float."""
        return float(self.pair_loss(np.asarray(theta, dtype=float), np.int64(i), np.int64(j)))

    def risk(self, theta) -> np.ndarray:
        """``F(theta)`` for ``theta`` of shape ``(..., dim)``."""
        theta = np.asarray(theta, dtype=float)
        n = self.n
        i = np.arange(n)[:, None]
        j = np.arange(n)[None, :]
        vals = self.pair_loss(theta[..., None, None, :], i, j)
        return vals.sum(axis=(-2, -1)) / n**2

    def partial_grads(self, theta) -> np.ndarray:
        """``(1/n) sum_j grad f(theta_k; x_k, x_j)`` for per-node ``theta`` of shape ``(..., n, dim)``."""
        theta = np.asarray(theta, dtype=float)
        n = self.n
        i = np.arange(n)[:, None]
        j = np.arange(n)[None, :]
        g = self.pair_grad(theta[..., :, None, :], i, j)
        return g.mean(axis=-2)

    def full_grad(self, theta) -> np.ndarray:
        """Gradient of the full risk ``F`` at ``theta`` of shape ``(..., dim)``."""
        theta = np.asarray(theta, dtype=float)
        n = self.n
        i = np.arange(n)[:, None]
        j = np.arange(n)[None, :]
        g = self.pair_grad(theta[..., None, None, :], i, j)
        return g.sum(axis=(-3, -2)) / n**2


class ZeroObjective(PairwiseObjective):
    name = "zero"

    def __init__(self, data: Dataset, dim: int | None = None):
        super().__init__(data)
        self._dim = dim or data.d

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def lipschitz(self) -> float:
        return 0.0

    def pair_loss(self, theta, i, j):
        return np.zeros(np.broadcast_shapes(theta.shape[:-1], np.shape(i), np.shape(j)))

    def pair_grad(self, theta, i, j):
        shape = np.broadcast_shapes(theta.shape[:-1], np.shape(i), np.shape(j))
        return np.zeros((*shape, self.dim))


class QuadraticPair(PairwiseObjective):
    """``f = ||theta - (x_i + x_j) / 2||^2 / 2``; minimised at the sample mean.

    Not globally Lipschitz: ``lipschitz`` reports the bound on the ball of
    radius ``radius`` around the origin.
    """

    name = "quadratic"

    def __init__(self, data: Dataset, radius: float = 1.0):
        super().__init__(data)
        self.radius = radius

    @property
    def lipschitz(self) -> float:
        return self.radius + float(np.linalg.norm(self.data.points, axis=1).max())

    @property
    def minimizer(self) -> np.ndarray:
        return self.data.points.mean(axis=0)

    def _center(self, i, j):
        x = self.data.points
        return 0.5 * (x[i] + x[j])

    def pair_loss(self, theta, i, j):
        return 0.5 * np.sum((theta - self._center(i, j)) ** 2, axis=-1)

    def pair_grad(self, theta, i, j):
        return theta - self._center(i, j)


class AucLogistic(PairwiseObjective):
    """Logistic surrogate of the AUC: ``1{l_i > l_j} log(1 + exp((x_j - x_i)^T theta))``."""

    name = "auc"

    def __init__(self, data: Dataset):
        super().__init__(data)
        if data.labels is None:
            raise ParameterError("AUC objective needs labels")
        self.labels = np.asarray(data.labels, dtype=float)

    @property
    def lipschitz(self) -> float:
        x = self.data.points
        diff = x[:, None, :] - x[None, :, :]
        return float(np.sqrt((diff**2).sum(axis=-1)).max())

    def _margin(self, theta, i, j):
        x = self.data.points
        v = x[j] - x[i]
        return v, np.sum(v * theta, axis=-1)

    def pair_loss(self, theta, i, j):
        _, u = self._margin(theta, i, j)
        mask = self.labels[i] > self.labels[j]
        return np.where(mask, np.logaddexp(0.0, u), 0.0)

    def pair_grad(self, theta, i, j):
        v, u = self._margin(theta, i, j)
        mask = self.labels[i] > self.labels[j]
        return np.where(mask, expit(u), 0.0)[..., None] * v

    def risk(self, theta):
        theta = np.asarray(theta, dtype=float)
        s = theta @ self.data.points.T  # (..., n) scores
        mask = self.labels[:, None] > self.labels[None, :]
        u = s[..., None, :] - s[..., :, None]  # u[i, j] = s_j - s_i
        return np.where(mask, np.logaddexp(0.0, u), 0.0).sum(axis=(-2, -1)) / self.n**2


class RankingLogistic(PairwiseObjective):
    """Ranking risk with a linear scorer and real labels: ``log(1 + exp(-(s_i - s_j)(y_i - y_j)))``."""

    name = "ranking"

    def __init__(self, data: Dataset):
        super().__init__(data)
        if data.labels is None:
            raise ParameterError("ranking objective needs labels")
        self.labels = np.asarray(data.labels, dtype=float)

    @property
    def lipschitz(self) -> float:
        x, y = self.data.points, self.labels
        dx = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        dy = np.abs(y[:, None] - y[None])
        return float((dx * dy).max())

    def pair_loss(self, theta, i, j):
        x, y = self.data.points, self.labels
        u = -np.sum((x[i] - x[j]) * theta, axis=-1) * (y[i] - y[j])
        return np.logaddexp(0.0, u)

    def pair_grad(self, theta, i, j):
        x, y = self.data.points, self.labels
        v = x[i] - x[j]
        dy = y[i] - y[j]
        u = -np.sum(v * theta, axis=-1) * dy
        return (-expit(u) * dy)[..., None] * v


class MetricHinge(PairwiseObjective):
    """Mahalanobis metric learning risk on flattened ``d x d`` matrices.

    ``f = phi(s_ij (b - D_theta(x_i, x_j)))`` with ``s_ij = +1`` for equal
    labels, ``-1`` otherwise. ``hinge="standard"`` uses ``phi(u) = max(0, 1 - u)``;
    ``hinge="plus"`` uses ``max(0, u)``.
    """

    name = "metric"
    smooth = False

    def __init__(self, data: Dataset, b: float = 1.0, hinge: str = "standard"):
        super().__init__(data)
        if data.labels is None:
            raise ParameterError("metric objective needs labels")
        if b <= 0:
            raise ParameterError("margin b must be positive")
        if hinge not in ("standard", "plus"):
            raise ParameterError("hinge must be 'standard' or 'plus'")
        self.b = float(b)
        self.hinge = hinge
        self.labels = np.asarray(data.labels)

    @property
    def side(self) -> int:
        return self.data.d

    @property
    def dim(self) -> int:
        return self.data.d ** 2

    @property
    def lipschitz(self) -> float:
        # ||grad||_F = ||x_i - x_j||^2 whenever the hinge is active
        x = self.data.points
        return float(((x[:, None] - x[None]) ** 2).sum(-1).max())

    def _parts(self, theta, i, j):
        d = self.side
        x = self.data.points
        v = x[i] - x[j]
        mat = theta.reshape(*theta.shape[:-1], d, d)
        dist = np.einsum("...a,...ab,...b->...", v, mat, v)
        sign = np.where(self.labels[i] == self.labels[j], 1.0, -1.0)
        return v, sign, sign * (self.b - dist)

    def margin(self, theta, i, j):
        return self._parts(np.asarray(theta, dtype=float), i, j)[2]

    def pair_loss(self, theta, i, j):
        _, _, u = self._parts(theta, i, j)
        if self.hinge == "standard":
            return np.maximum(0.0, 1.0 - u)
        return np.maximum(0.0, u)

    def pair_grad(self, theta, i, j):
        v, sign, u = self._parts(theta, i, j)
        if self.hinge == "standard":
            coef = np.where(u < 1.0, sign, 0.0)
        else:
            coef = np.where(u > 0.0, -sign, 0.0)
        outer = v[..., :, None] * v[..., None, :]
        g = coef[..., None, None] * outer
        return g.reshape(*g.shape[:-2], -1)

    def risk(self, theta):
        theta = np.asarray(theta, dtype=float)
        n, d = self.n, self.side
        x = self.data.points
        diff = (x[:, None, :] - x[None, :, :]).reshape(n * n, d)
        mat = theta.reshape(*theta.shape[:-1], d, d)
        dist = np.einsum("pa,...ab,pb->...p", diff, mat, diff).reshape(*theta.shape[:-1], n, n)
        sign = np.where(self.labels[:, None] == self.labels[None, :], 1.0, -1.0)
        u = sign * (self.b - dist)
        vals = np.maximum(0.0, 1.0 - u) if self.hinge == "standard" else np.maximum(0.0, u)
        return vals.sum(axis=(-2, -1)) / n**2


def cluster_scatter(data: Dataset, partition, dissimilarity=None) -> float:
    """Within-cluster point scatter: mean of ``D(x_i, x_j)`` over same-cell pairs (``1/n^2`` convention)."""
    cells = np.asarray(partition)
    x = data.points
    if dissimilarity is None:
        dmat = ((x[:, None] - x[None]) ** 2).sum(-1)
    else:
        dmat = np.array([[dissimilarity(a, b) for b in x] for a in x], dtype=float)
    same = cells[:, None] == cells[None, :]
    return float((dmat * same).sum() / data.n**2)


def auc(data: Dataset, theta) -> float:
    """Fraction of positive/negative pairs ranked correctly by ``x^T theta``; ties count as wrong."""
    if data.labels is None:
        raise DataError("AUC needs labels")
    lab = np.asarray(data.labels, dtype=float)
    pairs = lab[:, None] > lab[None, :]
    denom = pairs.sum()
    if denom == 0:
        raise DataError("AUC undefined: no positive/negative pair")
    s = data.points @ np.asarray(theta, dtype=float)
    correct = pairs & (s[:, None] > s[None, :])
    return float(correct.sum() / denom)


def auc_batch(data: Dataset, theta) -> np.ndarray:
    """:func:`auc` for ``theta`` of shape ``(..., d)``."""
    lab = np.asarray(data.labels, dtype=float)
    pairs = lab[:, None] > lab[None, :]
    denom = pairs.sum()
    if denom == 0:
        raise DataError("AUC undefined: no positive/negative pair")
    s = np.asarray(theta, dtype=float) @ data.points.T
    correct = pairs & (s[..., :, None] > s[..., None, :])
    return correct.sum(axis=(-2, -1)) / denom


@dataclass
class GradCheck:
    max_rel_error: float
    skipped: bool = False
    reason: str = ""


def grad_check(obj: PairwiseObjective, theta, pair: tuple[int, int], h_step: float = 1e-5) -> GradCheck:
    """Compare :meth:`pair_grad` with central differences of :meth:`pair_loss`.

    Relative error uses the denominator ``max(1, ||grad||)``. For the
    metric hinge the check is skipped when the margin is within
    ``10 * h_step`` of the kink.
    """
    theta = np.array(theta, dtype=float)
    i, j = (np.int64(pair[0]), np.int64(pair[1]))
    if isinstance(obj, MetricHinge):
        u = float(obj.margin(theta, i, j))
        kink = 1.0 if obj.hinge == "standard" else 0.0
        if abs(u - kink) <= 10 * h_step:
            return GradCheck(float("nan"), skipped=True, reason=f"margin {u:.3g} at the kink")
    analytic = np.asarray(obj.pair_grad(theta, i, j), dtype=float)
    numeric = np.empty_like(theta)
    for c in range(theta.size):
        step = np.zeros_like(theta)
        step[c] = h_step
        numeric[c] = (obj.pair_term(theta + step, i, j) - obj.pair_term(theta - step, i, j)) / (2 * h_step)
    denom = max(1.0, float(np.linalg.norm(analytic)))
    return GradCheck(float(np.max(np.abs(numeric - analytic)) / denom if theta.size else 0.0))


OBJECTIVES = {
    "auc": AucLogistic,
    "metric": MetricHinge,
    "ranking": RankingLogistic,
    "quadratic": QuadraticPair,
    "zero": ZeroObjective,
}
