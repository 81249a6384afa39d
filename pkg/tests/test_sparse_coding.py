import itertools
import time

import numpy as np
import pytest
from scipy.linalg import hadamard

from lkdl.sparse_coding import (omp, omp_batch, komp, komp_batch, gram_pursuit, gram_pursuit_batch,
                                normalize_coefficient_dictionary, coefficient_norms)
from lkdl.datasets import mutual_coherence
from lkdl.nystrom import exact_virtual_samples
from lkdl.utils import make_rng, normalize_columns

def random_dictionary(rng, d, m):
    return normalize_columns(rng.standard_normal((d, m)))[0]

def test_atom_is_coded_exactly(rng):
    D = random_dictionary(rng, 8, 12)
    code = omp(D, D[:, 5], 3)
    assert code.support == [5]
    assert code.values[0] == pytest.approx(1.0)
    assert code.residual_norm == pytest.approx(0.0, abs=1e-12)

def test_orthogonal_signal_keeps_full_residual():
    D = np.eye(4)[:, :2]
    x = np.array([0.0, 0.0, 3.0, 4.0])
    code = omp(D, x, 1)
    assert code.residual_norm == pytest.approx(5.0)
    np.testing.assert_array_equal(code.dense(2), 0.0)

def test_zero_signal_has_empty_support(rng):
    code = omp(random_dictionary(rng, 5, 6), np.zeros(5), 3)
    assert code.support == [] and code.residual_norm == 0.0

def test_residual_trace_non_increasing(rng):
    D = random_dictionary(rng, 10, 25)
    code = omp(D, rng.standard_normal(10), 6)
    assert len(code.support) == 6
    assert np.all(np.diff(code.residual_trace) <= 1e-12)

def test_tolerance_stops_early():
    D = np.eye(10)
    x = np.zeros(10)
    x[[0, 3, 6]] = [2.0, -1.0, 0.01]
    code = omp(D, x, 8, eps=0.05)
    assert code.support == [0, 3]
    assert code.residual_norm == pytest.approx(0.01)

def test_cardinality_capped_by_atoms(rng):
    D = random_dictionary(rng, 6, 3)
    assert len(omp(D, rng.standard_normal(6), 10).support) == 3

def test_invalid_arguments_raise(rng):
    D = random_dictionary(rng, 6, 3)
    with pytest.raises(ValueError):
        omp(D, np.ones(6), 0)
    with pytest.raises(ValueError):
        omp(D, np.ones(5), 2)
    with pytest.raises(ValueError):
        omp_batch(D, np.ones((5, 3)), 2)

def test_batch_matches_single(rng):
    D = random_dictionary(rng, 12, 30)
    X = rng.standard_normal((12, 25))
    Gamma = omp_batch(D, X, 4)
    assert Gamma.shape == (30, 25)
    assert np.all(np.count_nonzero(Gamma, axis=0) <= 4)
    for i in range(25):
        np.testing.assert_allclose(Gamma[:, i], omp(D, X[:, i], 4).dense(30), atol=1e-10)
    assert omp_batch(D, np.zeros((12, 0)), 4).shape == (30, 0)

def test_singular_support_is_flagged():
    G = np.array([[1.0, 1.0], [1.0, 1.0]])
    code = gram_pursuit(G, np.array([1.0, 0.5]), 2.0, 2)
    assert code.degenerate
    assert code.support == [0]

def test_singular_support_is_flagged_in_batch():
    G = np.array([[1.0, 1.0], [1.0, 1.0]])
    B = np.array([[1.0, 0.5, 0.0], [0.5, 1.0, 0.0]])
    energies = np.array([2.0, 2.0, 0.0])
    Gamma, degenerate = gram_pursuit_batch(G, B, energies, 2)
    assert degenerate.tolist() == [True, True, False]
    for i in range(3):
        np.testing.assert_allclose(Gamma[:, i], gram_pursuit(G, B[:, i], energies[i], 2).dense(2), atol=1e-12)

def test_batch_tolerance_matches_single(rng):
    D = random_dictionary(rng, 10, 20)
    X = D[:, :6].dot(rng.standard_normal((6, 30)))
    X[:, :10] = D[:, 3:4] + 0.01 * rng.standard_normal((10, 10))
    Gamma = omp_batch(D, X, 6, eps=0.2)
    for i in range(30):
        np.testing.assert_allclose(Gamma[:, i], omp(D, X[:, i], 6, eps=0.2).dense(20), atol=1e-10)
    assert np.all(np.count_nonzero(Gamma[:, :10], axis=0) <= 2)

def test_batch_codes_many_signals_quickly(rng):
    D = random_dictionary(rng, 32, 64)
    X = rng.standard_normal((32, 20000))
    start = time.perf_counter()
    Gamma = omp_batch(D, X, 5)
    assert time.perf_counter() - start < 10.0
    assert np.all(np.count_nonzero(Gamma, axis=0) == 5)

@pytest.mark.parametrize("q", [1, 3, 6])
def test_residual_orthogonal_to_selected_atoms(rng, q):
    D = random_dictionary(rng, 12, 30)
    for _ in range(20):
        x = rng.standard_normal(12)
        code = omp(D, x, q)
        residual = x - D[:, code.support].dot(code.values)
        assert np.max(np.abs(D[:, code.support].T.dot(residual))) <= 1e-8

def test_exact_recovery_on_incoherent_dictionary():
    # identity plus normalized Hadamard: coherence 1/4 < 1/(2q - 1) for q = 2
    D = np.hstack([np.eye(16), hadamard(16) / 4.0])
    assert mutual_coherence(D) == pytest.approx(0.25)
    rng = make_rng(3)
    for _ in range(50):
        support = np.sort(rng.choice(32, size=2, replace=False))
        x = D[:, support].dot(rng.choice([-1.0, 1.0], 2) * (1.0 + rng.random(2)))
        code = omp(D, x, 2)
        assert sorted(code.support) == support.tolist()
        assert code.residual_norm < 1e-10

def _best_pair_objective(D, x):
    best = np.inf
    for pair in itertools.combinations(range(D.shape[1]), 2):
        sub = D[:, pair]
        coef = np.linalg.lstsq(sub, x, rcond=None)[0]
        best = min(best, float(np.sum((x - sub.dot(coef)) ** 2)))
    return best

def test_near_oracle_against_exhaustive_search():
    rng = make_rng(11)
    start = time.perf_counter()
    near, coherent, recovered = 0, 0, 0
    for _ in range(200):
        D = random_dictionary(rng, 8, 12)
        support = rng.choice(12, size=2, replace=False)
        x = D[:, support].dot(rng.choice([-1.0, 1.0], 2) * (1.0 + rng.random(2)))
        code = omp(D, x, 2)
        objective = code.residual_norm ** 2
        oracle = _best_pair_objective(D, x)
        if objective <= 1.05 * oracle + 1e-12:
            near += 1
        if mutual_coherence(D) < 1.0 / 3.0:
            coherent += 1
            recovered += sorted(code.support) == sorted(support.tolist())
    assert recovered == coherent
    assert near >= 0.6 * 200
    assert time.perf_counter() - start < 30.0

def tight_frame_complement():
    """
    Unit-norm 8 x 12 frame of coherence 1/4: the complement of the
    24-cell lines in R^4, whose frame operator is 3I
    """
    halves = [np.array((1.0,) + signs) / 2.0 for signs in itertools.product([1.0, -1.0], repeat=3)]
    F = np.column_stack(list(np.eye(4)) + halves)
    values, vectors = np.linalg.eigh(np.eye(12) - F.T.dot(F) / 3.0)
    complement = vectors[:, values > 0.5].T
    return complement / np.linalg.norm(complement, axis=0)

def test_near_oracle_on_incoherent_frames():
    rng = make_rng(17)
    frame = tight_frame_complement()
    assert frame.shape == (8, 12)
    assert mutual_coherence(frame) == pytest.approx(0.25)
    for _ in range(100):
        Q = np.linalg.qr(rng.standard_normal((8, 8)))[0]
        D = Q.dot(frame[:, rng.permutation(12)]) * rng.choice([-1.0, 1.0], 12)
        support = rng.choice(12, size=2, replace=False)
        x = D[:, support].dot(rng.choice([-1.0, 1.0], 2) * (1.0 + rng.random(2)))
        x += 1e-3 * rng.standard_normal(8)
        code = omp(D, x, 2)
        assert sorted(code.support) == sorted(support.tolist())
        assert code.residual_norm ** 2 <= 1.05 * _best_pair_objective(D, x) + 1e-12

def test_komp_matches_omp_under_linear_kernel():
    rng = make_rng(5)
    start = time.perf_counter()
    for _ in range(100):
        p = int(rng.integers(4, 20))
        n = int(rng.integers(10, 51))
        m = int(rng.integers(2, 31))
        q = int(rng.integers(1, 6))
        X = rng.standard_normal((p, n))
        K = X.T.dot(X)
        A = normalize_coefficient_dictionary(K, rng.standard_normal((n, m)))
        D = X.dot(A)
        z = rng.standard_normal(p)
        expected = omp(D, z, q)
        code = komp(K, X.T.dot(z), z.dot(z), A, q)
        assert code.support == expected.support
        np.testing.assert_allclose(code.values, expected.values, atol=1e-8)
        assert code.residual_norm == pytest.approx(expected.residual_norm, abs=1e-6)
    assert time.perf_counter() - start < 10.0

def test_komp_matches_omp_on_exact_virtual_samples():
    rng = make_rng(9)
    for _ in range(10):
        Y = rng.standard_normal((30, 20))
        K = np.exp(Y.T.dot(Y) / 30.0)
        F = exact_virtual_samples(K, 20)
        A = normalize_coefficient_dictionary(K, rng.standard_normal((20, 10)))
        D = F.dot(A)
        np.testing.assert_allclose(np.linalg.norm(D, axis=0), 1.0, atol=1e-10)
        for i in range(20):
            expected = omp(D, F[:, i], 3)
            code = komp(K, K[i], K[i, i], A, 3)
            assert code.residual_norm ** 2 == pytest.approx(expected.residual_norm ** 2, abs=1e-8)

def test_komp_batch_matches_single(rng):
    X = rng.standard_normal((5, 20))
    Z = rng.standard_normal((5, 6))
    K = X.T.dot(X)
    A = normalize_coefficient_dictionary(K, rng.standard_normal((20, 8)))
    K_ZX = Z.T.dot(X)
    Gamma = komp_batch(K, K_ZX, np.sum(Z * Z, axis=0), A, 3)
    for i in range(6):
        np.testing.assert_allclose(Gamma[:, i], komp(K, K_ZX[i], Z[:, i].dot(Z[:, i]), A, 3).dense(8), atol=1e-10)

def test_coefficient_normalization(rng):
    X = rng.standard_normal((4, 10))
    K = X.T.dot(X)
    A = normalize_coefficient_dictionary(K, rng.standard_normal((10, 3)))
    np.testing.assert_allclose(coefficient_norms(K, A), 1.0)
    with pytest.raises(ValueError):
        normalize_coefficient_dictionary(K, np.zeros((10, 2)))
