import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pairgossip.errors import NumericError, ParameterError
from pairgossip.losses import cluster_scatter
from pairgossip.pairwise import (
    Dataset, PairKernel, clustering_matrix, constant_kernel, dispersion, gini_kernel, kernel_matrix,
    matrix_from_array, product_kernel, ranking_kernel, sum_kernel, u_statistic_degree_r, variance_kernel,
)


def test_product_kernel_statistics():
    km = kernel_matrix(product_kernel(), np.array([1.0, 2.0, 3.0]))
    assert km.H.tolist() == [[1, 2, 3], [2, 4, 6], [3, 6, 9]]
    assert km.h_bar.tolist() == [2, 4, 6]
    assert km.u_full == pytest.approx(4.0)
    # distinct pairs: (2 + 3 + 6) / 3
    assert km.u_offdiag == pytest.approx(11 / 3)


def test_variance_kernel_gives_sample_variance():
    x = np.array([1.0, 2.0, 4.0])
    km = kernel_matrix(variance_kernel(), x)
    assert km.u_offdiag == pytest.approx(np.var(x, ddof=1))
    assert km.u_offdiag == pytest.approx(7 / 3)


def test_gini_mean_difference():
    km = kernel_matrix(gini_kernel(), np.array([0.0, 1.0, 3.0]))
    assert km.u_offdiag == pytest.approx(2.0)


def test_constant_kernel():
    km = kernel_matrix(constant_kernel(2.5), np.zeros((4, 2)))
    assert np.all(km.H == 2.5)
    assert km.u_full == km.u_offdiag == 2.5


def test_vectorized_and_scalar_paths_agree():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 3))
    for make in (product_kernel, sum_kernel, variance_kernel, gini_kernel):
        k = make()
        slow = PairKernel(k.func, k.symmetric, k.name)
        assert np.allclose(kernel_matrix(k, x).H, kernel_matrix(slow, x).H)


def test_non_finite_kernel_names_the_pair():
    k = PairKernel(lambda a, b: float("nan") if a[0] == 2 else 0.0)
    with pytest.raises(NumericError, match=r"\(2, 0\)"):
        kernel_matrix(k, np.array([0.0, 1.0, 2.0]))


def test_matrix_from_array_detects_asymmetry():
    assert matrix_from_array([[1, 2], [2, 1]]).symmetric
    assert not matrix_from_array([[1, 2], [3, 1]]).symmetric
    with pytest.raises(ParameterError):
        matrix_from_array([[1, 2, 3]])


def test_asymmetric_offdiag_uses_ordered_pairs():
    km = matrix_from_array([[0, 1], [3, 0]])
    assert km.u_offdiag == pytest.approx(2.0)


def test_dataset_validation():
    with pytest.raises(ParameterError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    d = Dataset(np.arange(3.0))
    assert d.points.shape == (3, 1)
    assert d.permuted([2, 0, 1]).points[:, 0].tolist() == [2, 0, 1]


def test_degree_two_statistic_matches_kernel_matrix():
    x = np.array([0.5, -1.0, 2.0, 3.5])
    km = kernel_matrix(variance_kernel(), x)
    deg2 = u_statistic_degree_r(lambda a, b: 0.5 * float(np.sum((a - b) ** 2)), x, 2)
    assert deg2 == pytest.approx(km.u_offdiag)


def test_degree_three_statistic():
    # triples of (1, 2, 3, 4): products 6, 8, 12, 24
    val = u_statistic_degree_r(lambda a, b, c: float(a[0] * b[0] * c[0]), np.array([1.0, 2.0, 3.0, 4.0]), 3)
    assert val == pytest.approx(12.5)
    with pytest.raises(ParameterError):
        u_statistic_degree_r(lambda a: 0.0, np.zeros(2), 3)


def test_clustering_matrix_matches_scatter():
    rng = np.random.default_rng(3)
    data = Dataset(rng.normal(size=(7, 2)))
    part = [0, 1, 0, 2, 1, 0, 2]
    km = clustering_matrix(data, part)
    assert km.H.sum() / 49 == pytest.approx(cluster_scatter(data, part))
    assert km.H[0, 1] == 0.0


def test_ranking_kernel_is_symmetric():
    k = ranking_kernel(lambda x: float(x[0] - x[1]))
    a = np.array([1.0, 0.0, 1.0])
    b = np.array([0.0, 2.0, -1.0])
    assert k(a, b) == k(b, a)
    assert k(a, b) == 0.0  # well ordered pair, margin 3 * 2 beyond the hinge


def test_dispersion_formula():
    H = np.array([[1.0, 2.0], [2.0, 5.0]])
    km = matrix_from_array(H)
    hb = H.mean(axis=1)
    expect = np.linalg.norm(hb - hb.mean()) + 2 * np.linalg.norm(H - hb[:, None])
    assert dispersion(km) == pytest.approx(expect)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.integers(2, 8), elements=st.floats(-100, 100)))
def test_full_statistic_is_mean_of_partials(x):
    km = kernel_matrix(product_kernel(), x)
    assert km.u_full == pytest.approx(km.H.mean(), rel=1e-9, abs=1e-9)
    n = len(x)
    assert km.u_full == pytest.approx(((n - 1) * km.u_offdiag + np.trace(km.H) / n) / n, rel=1e-9, abs=1e-6)
