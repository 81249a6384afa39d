"""
Desk-scale end-to-end checks. USPS runs are gated on LKDL_USPS_MANIFEST
pointing at a dataset manifest.
"""
import os
import time

import numpy as np
import pytest

from lkdl import nystrom, classify
from lkdl.config import validate
from lkdl.datasets import load_manifest
from lkdl.kernels import KernelSpec, kernel_matrix, GAUSSIAN, POLYNOMIAL
from lkdl.pipeline import run_repeat
from lkdl.sampling import SamplerSpec
from lkdl.utils import make_rng, normalize_columns

USPS_MANIFEST = os.environ.get('LKDL_USPS_MANIFEST')

pytestmark = pytest.mark.slow

def circles_config(manifest, pipeline, **fields):
    raw = {'dataset': manifest,
           'pipeline': pipeline,
           'kernel': {'kind': 'gaussian', 'sigma': 1.0},
           'sampler': {'method': 'uniform', 'c_over_n': 0.2},
           'k': 20,
           'learner': {'type': 'per_class', 'm_per_class': 20, 'q': 3, 'iterations': 5}}
    raw.update(fields)
    return validate(raw)

def test_kernel_pipeline_beats_linear_on_circles(circles_manifest):
    manifest = circles_manifest(n_per_class=1000)
    lkdl = run_repeat(circles_config(manifest, 'lkdl'), 0)
    linear = run_repeat(circles_config(manifest, 'linear'), 0)
    assert lkdl['accuracy'] >= 0.95
    assert lkdl['accuracy'] - linear['accuracy'] >= 0.15

def gaussian_mixture(n, p=10, centers=5, seed=0):
    rng = make_rng(seed)
    means = 3.0 * rng.standard_normal((p, centers))
    assignment = rng.integers(centers, size=n)
    return means[:, assignment] + rng.standard_normal((p, n))

def nystrom_error(X, K, kernel, method, c, seed):
    nystrom_map = nystrom.fit(X, kernel, SamplerSpec(method, c, seed), c)
    return nystrom.approximation_error(K, nystrom.nystrom_approximation(nystrom_map, X))

def test_kmeans_landmarks_beat_uniform_landmarks():
    X = gaussian_mixture(2000)
    kernel = KernelSpec(GAUSSIAN, sigma=3.0)
    K = kernel_matrix(kernel, X)
    wins = 0
    for seed in range(10):
        kmeans = nystrom_error(X, K, kernel, 'kmeans', 200, seed)
        uniform = nystrom_error(X, K, kernel, 'uniform', 200, seed)
        wins += kmeans <= uniform
    assert wins >= 8

@pytest.mark.parametrize('method', ['uniform', 'diagonal', 'column_norm', 'kmeans', 'coreset'])
def test_median_error_decreases_with_landmarks(method):
    X = gaussian_mixture(2000, seed=1)
    kernel = KernelSpec(GAUSSIAN, sigma=3.0)
    K = kernel_matrix(kernel, X)
    medians = []
    for fraction in (0.05, 0.1, 0.2, 0.4):
        c = int(round(fraction * X.shape[1]))
        bound = nystrom.approximation_error(K, nystrom.svd_approximation(K, c))
        errors = [nystrom_error(X, K, kernel, method, c, seed) for seed in range(10)]
        assert min(errors) >= bound - 1e-10
        medians.append(np.median(errors))
    assert all(later <= earlier + 1e-12 for earlier, later in zip(medians, medians[1:]))

def test_corruption_trend_on_circles(circles_manifest):
    manifest = circles_manifest(n_per_class=200)
    n_test = load_manifest(manifest)[1].n
    means = []
    for sigma in (0.0, 0.1, 0.2, 0.3):
        corruption = {'kind': 'gaussian', 'sigma': sigma}
        kernel_config = circles_config(manifest, 'lkdl', corruption=corruption)
        linear_config = circles_config(manifest, 'linear', corruption=corruption)
        accuracies = []
        for repeat in range(5):
            kernel = run_repeat(kernel_config, repeat)['accuracy']
            assert kernel >= run_repeat(linear_config, repeat)['accuracy']
            accuracies.append(kernel)
        means.append(np.mean(accuracies))
    assert all(later <= earlier + 1.0 / n_test for earlier, later in zip(means, means[1:]))

def scaling_slope(sizes, seconds):
    return np.polyfit(np.log(sizes), np.log(seconds), 1)[0]

def best_time(run, repeats=2):
    timings = []
    for _ in range(repeats):
        start = time.perf_counter()
        run()
        timings.append(time.perf_counter() - start)
    return min(timings)

def test_virtual_samples_scale_better_than_the_exact_kernel():
    kernel = KernelSpec(POLYNOMIAL, degree=2)
    sizes, baseline, lkdl = [2000, 4000, 8000], [], []
    for n in sizes:
        X = normalize_columns(gaussian_mixture(n, p=16, centers=4, seed=n))[0]
        labels = np.arange(n) % 2

        def kernel_run():
            classify.train_kernel_per_class(X, labels, kernel, 50, 3, 5, seed=0)

        def lkdl_run():
            nystrom_map = nystrom.fit(X, kernel, SamplerSpec('uniform', 200, 0), 100)
            classify.train_per_class(nystrom.transform(nystrom_map, X), labels, 50, 3, 5, seed=0)

        baseline.append(best_time(kernel_run))
        lkdl.append(best_time(lkdl_run))
    assert scaling_slope(sizes, baseline) >= 1.6
    assert scaling_slope(sizes, lkdl) <= 1.3
    assert lkdl[-1] < baseline[-1]

@pytest.mark.skipif(USPS_MANIFEST is None, reason='LKDL_USPS_MANIFEST is not set')
def test_usps_kmeans_approximation():
    train, _ = load_manifest(USPS_MANIFEST)
    X = train.samples[:, :2000]
    kernel = KernelSpec(POLYNOMIAL, degree=4)
    K = kernel_matrix(kernel, X)
    assert nystrom_error(X, K, kernel, 'kmeans', 200, 0) <= 0.02
