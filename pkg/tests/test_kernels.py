import numpy as np
import pytest

from lkdl.kernels import (KernelSpec, parse_kernel, kernel_eval, kernel_matrix, kernel_diagonal,
                          kernel_matrix_blocks, check_psd, LINEAR, POLYNOMIAL, GAUSSIAN)
from lkdl.utils import make_rng

POLY4 = KernelSpec(POLYNOMIAL, degree=4)
GAUSS = KernelSpec(GAUSSIAN, sigma=1.5)

def test_linear_kernel_matrix_is_gram(samples):
    K = kernel_matrix(KernelSpec(LINEAR), samples)
    np.testing.assert_allclose(K, samples.T.dot(samples), atol=1e-12)

@pytest.mark.parametrize("kernel", [KernelSpec(LINEAR), POLY4, KernelSpec(POLYNOMIAL, degree=2, offset=1.0), GAUSS])
def test_matrix_matches_pairwise_eval(kernel, samples):
    Y = samples[:, :7] + 0.5
    K = kernel_matrix(kernel, samples, Y)
    assert K.shape == (40, 7)
    for i, j in [(0, 0), (3, 6), (39, 2)]:
        assert K[i, j] == pytest.approx(kernel_eval(kernel, samples[:, i], Y[:, j]), rel=1e-10)

@pytest.mark.parametrize("kernel", [KernelSpec(LINEAR), POLY4, GAUSS])
def test_gram_matrix_symmetric_with_matching_diagonal(kernel, samples):
    K = kernel_matrix(kernel, samples)
    assert np.array_equal(K, K.T)
    np.testing.assert_allclose(np.diag(K), kernel_diagonal(kernel, samples), rtol=1e-10)

def test_gaussian_diagonal_is_one(samples):
    assert np.all(np.diag(kernel_matrix(GAUSS, samples)) == 1.0)

def test_blockwise_assembly_matches_dense(samples):
    dense = kernel_matrix(GAUSS, samples, samples[:, :30] * 2)
    budget = 8 * 40 * 4
    blocked = kernel_matrix(GAUSS, samples, samples[:, :30] * 2, budget=budget)
    np.testing.assert_allclose(blocked, dense, atol=1e-12)
    widths = [cols.stop - cols.start for cols, _ in kernel_matrix_blocks(GAUSS, samples, samples, budget)]
    assert sum(widths) == 40 and len(widths) > 1

def test_dimension_mismatch_raises(samples):
    with pytest.raises(ValueError):
        kernel_matrix(POLY4, samples, np.ones((4, 3)))
    with pytest.raises(ValueError):
        kernel_eval(POLY4, np.ones(3), np.ones(4))

def test_non_finite_input_raises():
    X = np.ones((2, 3))
    X[0, 1] = np.nan
    with pytest.raises(ValueError):
        kernel_matrix(GAUSS, X)

@pytest.mark.parametrize("text,expected", [
    ("linear", KernelSpec(LINEAR)),
    ("poly:4", POLY4),
    ("poly:2:1.0", KernelSpec(POLYNOMIAL, degree=2, offset=1.0)),
    ("gaussian:1.5", GAUSS),
])
def test_parse_kernel(text, expected):
    assert parse_kernel(text) == expected
    assert parse_kernel(str(expected)) == expected

@pytest.mark.parametrize("text", ["cosine", "poly", "poly:x", "gaussian:-1", "poly:0"])
def test_parse_kernel_rejects(text):
    with pytest.raises(ValueError):
        parse_kernel(text)

def test_check_psd_names_kernel():
    with pytest.raises(ValueError, match="poly:4"):
        check_psd(np.array([[1.0, 2.0], [2.0, 1.0]]), POLY4)
    assert check_psd(np.eye(3)) == pytest.approx(1.0)

@pytest.mark.parametrize("kernel", [KernelSpec(LINEAR), POLY4, KernelSpec(POLYNOMIAL, degree=2, offset=1.0), GAUSS])
def test_kernel_matrices_are_positive_semidefinite(kernel):
    rng = make_rng(21)
    for _ in range(50):
        X = rng.standard_normal((int(rng.integers(1, 8)), int(rng.integers(2, 31))))
        K = kernel_matrix(kernel, X)
        assert np.linalg.eigvalsh(K).min() >= -1e-8 * np.trace(K)

def test_streamed_blocks_fit_the_budget(samples):
    budget = 3 * 8 * 40 * 5
    blocks = list(kernel_matrix_blocks(GAUSS, samples, samples, budget))
    assert all(block.nbytes * 3 <= budget for _, block in blocks)
    np.testing.assert_allclose(np.hstack([block for _, block in blocks]), kernel_matrix(GAUSS, samples), atol=1e-12)
