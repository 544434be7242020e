"""Pairwise kernels, kernel matrices and U-statistics."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from pairgossip.errors import NumericError, ParameterError


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray  # (n, d)
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2:
            raise ParameterError("points must be an (n, d) array")
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.asarray(self.labels)
            if lab.shape != (pts.shape[0],):
                raise ParameterError("labels must have one entry per point")
            object.__setattr__(self, "labels", lab)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def permuted(self, perm) -> "Dataset":
        perm = np.asarray(perm)
        return Dataset(self.points[perm], None if self.labels is None else self.labels[perm])


@dataclass(frozen=True)
class PairKernel:
    """Kernel ``h(x, x')``.

    ``vectorized`` maps two broadcastable point arrays of shape ``(..., d)`` to
    values of shape ``(...)``; it is used to fill kernel matrices in one shot.
    """

    func: Callable[[np.ndarray, np.ndarray], float]
    symmetric: bool = True
    name: str = "kernel"
    vectorized: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    def __call__(self, x, y) -> float:
        return float(self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float)))


def product_kernel() -> PairKernel:
    """``h(x, x') = <x, x'>``."""
    return PairKernel(lambda x, y: float(np.dot(x, y)), name="product",
                      vectorized=lambda x, y: np.sum(x * y, axis=-1))


def sum_kernel() -> PairKernel:
    """``h(x, x') = sum(x + x')``, mostly useful for hand-checkable tests."""
    return PairKernel(lambda x, y: float(np.sum(x + y)), name="sum",
                      vectorized=lambda x, y: np.sum(x + y, axis=-1))


def constant_kernel(c: float) -> PairKernel:
    return PairKernel(lambda x, y: float(c), name=f"constant({c})",
                      vectorized=lambda x, y: np.full(np.broadcast_shapes(x.shape, y.shape)[:-1], float(c)))


def variance_kernel() -> PairKernel:
    """``||x - x'||^2 / 2``; its U-statistic is the (summed) sample variance."""
    return PairKernel(lambda x, y: 0.5 * float(np.sum((x - y) ** 2)), name="variance",
                      vectorized=lambda x, y: 0.5 * np.sum((x - y) ** 2, axis=-1))


def gini_kernel() -> PairKernel:
    """``|x - x'|`` summed over coordinates (Gini mean difference)."""
    return PairKernel(lambda x, y: float(np.sum(np.abs(x - y))), name="gini",
                      vectorized=lambda x, y: np.sum(np.abs(x - y), axis=-1))


def clustering_kernel(partition, dissimilarity: Callable | None = None) -> PairKernel:
    """Within-cluster scatter kernel ``D(x, x') * 1{same cell}``.

    Points are matched to their cell by index, so this kernel is built for a
    fixed dataset: it evaluates on index-augmented points ``(idx, *x)``.
    Use :func:`clustering_matrix` for the kernel matrix directly.
    """
    cells = np.asarray(partition)
    dis = dissimilarity or (lambda x, y: float(np.sum((x - y) ** 2)))

    def h(x, y):
        i, j = int(x[0]), int(y[0])
        return dis(x[1:], y[1:]) if cells[i] == cells[j] else 0.0

    return PairKernel(h, name="cluster-scatter")


def ranking_kernel(scorer: Callable[[np.ndarray], float], loss: Callable[[float], float] | None = None) -> PairKernel:
    """Ranking risk kernel ``loss(-(s(x) - s(x')) * (y - y'))``.

    Points carry their label in the last coordinate; ``loss`` defaults to the
    hinge ``max(0, 1 + u)``.
    """
    phi = loss or (lambda u: max(0.0, 1.0 + u))

    def h(x, y):
        u = -(scorer(x[:-1]) - scorer(y[:-1])) * (x[-1] - y[-1])
        return float(phi(u))

    return PairKernel(h, name="ranking")


@dataclass(frozen=True)
class KernelMatrix:
    H: np.ndarray
    symmetric: bool = True

    @property
    def n(self) -> int:
        return self.H.shape[0]

    @property
    def h_bar(self) -> np.ndarray:
        """Partial U-statistics, the row means of ``H``."""
        return self.H.mean(axis=1)

    @property
    def u_full(self) -> float:
        """Estimation target: ``1/n^2`` double sum, diagonal included."""
        return float(self.h_bar.mean())

    @property
    def u_offdiag(self) -> float:
        """Classical degree-two U-statistic over distinct unordered pairs."""
        n = self.n
        iu = np.triu_indices(n, k=1)
        if self.symmetric:
            return float(2.0 * self.H[iu].sum() / (n * (n - 1)))
        return float((self.H.sum() - np.trace(self.H)) / (n * (n - 1)))


def kernel_matrix(kernel: PairKernel, data: Dataset | np.ndarray) -> KernelMatrix:
    if not isinstance(data, Dataset):
        data = Dataset(data)
    x = data.points
    if kernel.vectorized is not None:
        H = np.asarray(kernel.vectorized(x[:, None, :], x[None, :, :]), dtype=float)
    else:
        n = data.n
        H = np.empty((n, n))
        for k in range(n):
            for l in range(n):
                H[k, l] = kernel(x[k], x[l])
    bad = np.argwhere(~np.isfinite(H))
    if bad.size:
        k, l = bad[0]
        raise NumericError(f"non-finite kernel value at pair ({k}, {l})")
    return KernelMatrix(H, symmetric=kernel.symmetric)


def matrix_from_array(H) -> KernelMatrix:
    H = np.array(H, dtype=float)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ParameterError("kernel matrix must be square")
    return KernelMatrix(H, symmetric=bool(np.allclose(H, H.T, rtol=0, atol=1e-12)))


def clustering_matrix(data: Dataset, partition, dissimilarity: Callable | None = None) -> KernelMatrix:
    aug = Dataset(np.column_stack([np.arange(data.n), data.points]))
    return kernel_matrix(clustering_kernel(partition, dissimilarity), aug)


def dispersion(km: KernelMatrix) -> float:
    """Data term ``||h_bar - U 1|| + 2 ||H - h_bar 1^T||_F`` of the estimation bounds."""
    hb = km.h_bar
    return float(np.linalg.norm(hb - km.u_full) + 2.0 * np.linalg.norm(km.H - hb[:, None]))


def u_statistic_degree_r(kernel_r: Callable, data: Dataset | np.ndarray, r: int) -> float:
    """Average of a symmetric r-ary kernel over all ``C(n, r)`` subsets of distinct points."""
    if not isinstance(data, Dataset):
        data = Dataset(data)
    n = data.n
    if r < 1:
        raise ParameterError("degree r must be >= 1")
    if r > n:
        raise ParameterError(f"degree r={r} exceeds sample size n={n}")
    total = 0.0
    for idx in itertools.combinations(range(n), r):
        total += float(kernel_r(*data.points[list(idx)]))
    return total / math.comb(n, r)
