"""
Landmark selection for the Nystrom approximation.

Five samplers pick the c columns X_R that drive C = K(X, X_R) and
W = K(X_R, X_R): uniform, diagonal, column-norm, k-means centers and
coreset sampling. Every sampler is a pure function of (inputs, c, seed).
"""
import logging
from collections import namedtuple
from dataclasses import dataclass

import numpy as np

from .kernels import kernel_diagonal, kernel_matrix, MEMORY_BUDGET
from .utils import make_rng

log = logging.getLogger(__name__)

UNIFORM = 'uniform'
DIAGONAL = 'diagonal'
COLUMN_NORM = 'column_norm'
KMEANS = 'kmeans'
CORESET = 'coreset'
SAMPLING_METHODS = (UNIFORM, DIAGONAL, COLUMN_NORM, KMEANS, CORESET)

KMEANS_MAX_ITERS = 100
KMEANS_TOLERANCE = 1e-6

LandmarkSet = namedtuple('LandmarkSet', 'X_R, source_indices, method, uniform_fallback')
LandmarkSet.__new__.__defaults__ = (None, UNIFORM, False)

class KernelBudgetError(MemoryError):
    pass

@dataclass(frozen=True)
class SamplerSpec(object):
    method: str = UNIFORM
    c: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.method not in SAMPLING_METHODS:
            msg = 'Unknown sampling method "%s", expected one of %s' % (self.method, ', '.join(SAMPLING_METHODS))
            log.error( msg )
            raise ValueError( msg )
        if self.c < 1:
            msg = 'The number of landmarks must be positive, got %s' % self.c
            log.error( msg )
            raise ValueError( msg )

class WeightedSampler(object):
    """
    Weighted sampling without replacement by sequential draw-and-renormalize
    """

    def __init__(self, weights, rng):
        self.weights = np.array(weights, dtype=float)
        self.rng = rng

    def probabilities(self):
        total = self.weights.sum()
        return self.weights / total

    def draw(self, c):
        weights = self.weights.copy()
        chosen = []
        for _ in range(c):
            total = weights.sum()
            if not total > 0:
                # Remaining mass is zero: finish uniformly over what is left
                remaining = np.flatnonzero(~np.isin(np.arange(weights.size), chosen))
                extra = self.rng.choice(remaining, size=c - len(chosen), replace=False)
                chosen.extend(int(i) for i in extra)
                break
            positive = np.flatnonzero(weights > 0)
            cumulative = np.cumsum(weights[positive])
            target = self.rng.random() * cumulative[-1]
            position = int(np.searchsorted(cumulative, target, side='right'))
            index = int(positive[min(position, positive.size - 1)])
            chosen.append(index)
            weights[index] = 0.0
        return np.array(chosen, dtype=np.int64)

def _check_count( X, c ):
    n = X.shape[1]
    if c < 1 or c > n:
        msg = 'Cannot select %d landmarks out of %d samples' % (c, n)
        log.error( msg )
        raise ValueError( msg )

def _landmarks( X, indices, method, fallback=False ):
    indices = np.asarray(indices, dtype=np.int64)
    return LandmarkSet(X[:, indices].copy(), indices, method, fallback)

def sample_uniform( X, c, seed ):
    X = np.asarray(X, dtype=float)
    _check_count(X, c)
    rng = make_rng(seed)
    indices = rng.choice(X.shape[1], size=c, replace=False)
    return _landmarks(X, indices, UNIFORM)

def diagonal_weights( kernel, X ):
    diag = kernel_diagonal(kernel, X)
    weights = diag ** 2
    total = weights.sum()
    if not total > 0:
        msg = 'The %s kernel diagonal is zero on every sample' % kernel
        log.error( msg )
        raise ValueError( msg )
    return weights / total

def sample_diagonal( kernel, X, c, seed ):
    X = np.asarray(X, dtype=float)
    _check_count(X, c)
    sampler = WeightedSampler(diagonal_weights(kernel, X), make_rng(seed))
    return _landmarks(X, sampler.draw(c), DIAGONAL)

def column_norm_weights( kernel, X, budget=MEMORY_BUDGET ):
    n = X.shape[1]
    if n * n * 8 > budget:
        msg = ('Column-norm sampling needs the full %d x %d kernel matrix, which exceeds '
               'the %d byte budget; use the diagonal, uniform or coreset sampler' % (n, n, budget))
        log.error( msg )
        raise KernelBudgetError( msg )
    K = kernel_matrix(kernel, X)
    weights = np.sum(K * K, axis=0)
    total = weights.sum()
    if not total > 0:
        msg = 'The %s kernel matrix is zero' % kernel
        log.error( msg )
        raise ValueError( msg )
    return weights / total

def sample_column_norm( kernel, X, c, seed, budget=MEMORY_BUDGET ):
    X = np.asarray(X, dtype=float)
    _check_count(X, c)
    sampler = WeightedSampler(column_norm_weights(kernel, X, budget), make_rng(seed))
    return _landmarks(X, sampler.draw(c), COLUMN_NORM)

def _squared_distances( X, centers ):
    x_sq = np.sum(X * X, axis=0)
    c_sq = np.sum(centers * centers, axis=0)
    dist = x_sq[:, None] + c_sq[None, :] - 2.0 * X.T.dot(centers)
    return np.maximum(dist, 0.0)

def kmeans_plusplus( X, c, rng ):
    """
    k-means++ seeding on the columns of X
    """
    n = X.shape[1]
    indices = [int(rng.integers(n))]
    closest = _squared_distances(X, X[:, indices])[:, 0]
    for _ in range(1, c):
        total = closest.sum()
        if total > 0:
            index = int(WeightedSampler(closest, rng).draw(1)[0])
        else:
            # Fewer distinct points than centers
            remaining = np.setdiff1d(np.arange(n), indices)
            index = int(rng.choice(remaining))
        indices.append(index)
        closest = np.minimum(closest, _squared_distances(X, X[:, [index]])[:, 0])
    return X[:, indices].copy()

def sample_kmeans( X, c, seed, max_iters=KMEANS_MAX_ITERS, tolerance=KMEANS_TOLERANCE ):
    """
    Lloyd's algorithm with k-means++ seeding; the landmarks are the c
    cluster centers rather than data columns
    """
    X = np.asarray(X, dtype=float)
    _check_count(X, c)
    rng = make_rng(seed)
    centers = kmeans_plusplus(X, c, rng)
    for iteration in range(max_iters):
        dist = _squared_distances(X, centers)
        # argmin keeps the lowest-index center on ties
        assignment = np.argmin(dist, axis=1)
        own = dist[np.arange(X.shape[1]), assignment]
        new_centers = np.empty_like(centers)
        for j in range(c):
            members = assignment == j
            if np.any(members):
                new_centers[:, j] = X[:, members].mean(axis=1)
            else:
                # Empty cluster: re-seed from the worst represented point
                far = int(np.argmax(own))
                log.debug('Re-seeding empty cluster %d from sample %d' % (j, far))
                new_centers[:, j] = X[:, far]
                own[far] = 0.0
        shift = np.max(np.sqrt(np.sum((new_centers - centers) ** 2, axis=0)))
        centers = new_centers
        if shift <= tolerance:
            log.debug('k-means converged after %d iterations' % (iteration + 1))
            break
    return LandmarkSet(centers, None, KMEANS, False)

def coreset_errors( X ):
    """
    Representation error of every sample by the scaled dataset mean,
    err_i = ||x_i - gamma_i mu||^2 with the least-squares gamma_i
    """
    mu = X.mean(axis=1)
    mu_sq = float(mu.dot(mu))
    if not mu_sq > 0:
        msg = 'Coreset sampling needs a non-zero dataset mean'
        log.error( msg )
        raise ValueError( msg )
    gamma = mu.dot(X) / mu_sq
    residual = X - np.outer(mu, gamma)
    return np.sum(residual * residual, axis=0)

def coreset_weights( X ):
    """
    Returns (weights, fallback); fallback is True when every sample is
    collinear with the mean and the weights degrade to uniform
    """
    errors = coreset_errors(X)
    total = errors.sum()
    energy = np.sum(X * X)
    if not total > 1e-12 * energy:
        log.warning('All samples are collinear with their mean, coreset sampling falls back to uniform')
        return np.full(X.shape[1], 1.0 / X.shape[1]), True
    return errors / total, False

def sample_coreset( X, c, seed ):
    X = np.asarray(X, dtype=float)
    _check_count(X, c)
    weights, fallback = coreset_weights(X)
    rng = make_rng(seed)
    if fallback:
        indices = rng.choice(X.shape[1], size=c, replace=False)
    else:
        indices = WeightedSampler(weights, rng).draw(c)
    return _landmarks(X, indices, CORESET, fallback)

def sample_landmarks( spec, X, kernel, max_iters=KMEANS_MAX_ITERS ):
    """
    Dispatch on the sampler specification
    """
    log.info('Sampling %d landmarks with the %s sampler' % (spec.c, spec.method))
    if spec.method == UNIFORM:
        return sample_uniform(X, spec.c, spec.seed)
    if spec.method == DIAGONAL:
        return sample_diagonal(kernel, X, spec.c, spec.seed)
    if spec.method == COLUMN_NORM:
        return sample_column_norm(kernel, X, spec.c, spec.seed)
    if spec.method == KMEANS:
        return sample_kmeans(X, spec.c, spec.seed, max_iters)
    return sample_coreset(X, spec.c, spec.seed)
