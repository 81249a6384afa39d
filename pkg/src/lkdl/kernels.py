"""
Mercer kernels and kernel-matrix construction.

Samples are stored column-wise: a SampleMatrix is a p x N array whose
columns are the signals. Every kernel here is symmetric and positive
semi-definite.

    linear       k(x, y) = x.y
    polynomial   k(x, y) = (x.y + offset) ** degree
    gaussian     k(x, y) = exp(-||x - y||**2 / (2 sigma**2))
"""
import logging
from dataclasses import dataclass

import numpy as np

log = logging.getLogger(__name__)

LINEAR = 'linear'
POLYNOMIAL = 'polynomial'
GAUSSIAN = 'gaussian'
KERNEL_KINDS = (LINEAR, POLYNOMIAL, GAUSSIAN)

# Default memory budget for a single materialized kernel block (2 GiB)
MEMORY_BUDGET = 2 * 1024 ** 3
# Relative tolerance of the Mercer check, as a fraction of the trace
PSD_TOLERANCE = 1e-8

@dataclass(frozen=True)
class KernelSpec(object):
    kind: str = LINEAR
    degree: int = 2
    sigma: float = 1.0
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            msg = 'Unknown kernel "%s", expected one of %s' % (self.kind, ', '.join(KERNEL_KINDS))
            log.error( msg )
            raise ValueError( msg )
        if self.kind == POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 1:
                msg = 'Polynomial degree must be an integer >= 1, got %s' % self.degree
                log.error( msg )
                raise ValueError( msg )
            if self.offset < 0:
                msg = 'Polynomial offset must be non-negative, got %s' % self.offset
                log.error( msg )
                raise ValueError( msg )
        if self.kind == GAUSSIAN and not self.sigma > 0:
            msg = 'Gaussian sigma must be positive, got %s' % self.sigma
            log.error( msg )
            raise ValueError( msg )

    def __str__(self):
        if self.kind == POLYNOMIAL:
            if self.offset:
                return 'poly:%d:%g' % (self.degree, self.offset)
            return 'poly:%d' % self.degree
        if self.kind == GAUSSIAN:
            return 'gaussian:%g' % self.sigma
        return LINEAR

def parse_kernel( text ):
    """
    Parse a kernel description: linear, poly:<degree>[:<offset>], gaussian:<sigma>
    """
    parts = text.strip().lower().split(':')
    name = parts[0]
    try:
        if name == LINEAR and len(parts) == 1:
            return KernelSpec(LINEAR)
        if name in ('poly', POLYNOMIAL) and len(parts) in (2, 3):
            offset = float(parts[2]) if len(parts) == 3 else 0.0
            return KernelSpec(POLYNOMIAL, degree=int(parts[1]), offset=offset)
        if name in ('gauss', GAUSSIAN, 'rbf') and len(parts) == 2:
            return KernelSpec(GAUSSIAN, sigma=float(parts[1]))
    except ValueError as err:
        msg = 'Invalid kernel description "%s": %s' % (text, err)
        log.error( msg )
        raise ValueError( msg )
    msg = 'Invalid kernel description "%s"' % text
    log.error( msg )
    raise ValueError( msg )

def _as_samples( X, name ):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        msg = '%s must be a p x N sample matrix, got shape %s' % (name, X.shape)
        log.error( msg )
        raise ValueError( msg )
    if not np.all(np.isfinite(X)):
        msg = '%s contains non-finite values' % name
        log.error( msg )
        raise ValueError( msg )
    return X

def _check_dimensions( X, Y ):
    if X.shape[0] != Y.shape[0]:
        msg = 'Sample dimension mismatch: %d vs %d' % (X.shape[0], Y.shape[0])
        log.error( msg )
        raise ValueError( msg )

def kernel_eval( kernel, x, y ):
    """
    Evaluate the kernel on a pair of signals
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size == 0 or x.size != y.size:
        msg = 'Kernel inputs must have equal, non-zero dimension (%d vs %d)' % (x.size, y.size)
        log.error( msg )
        raise ValueError( msg )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        msg = 'Kernel inputs contain non-finite values'
        log.error( msg )
        raise ValueError( msg )
    if kernel.kind == GAUSSIAN:
        diff = x - y
        return float(np.exp(-np.dot(diff, diff) / (2.0 * kernel.sigma ** 2)))
    inner = float(np.dot(x, y))
    if kernel.kind == POLYNOMIAL:
        return (inner + kernel.offset) ** kernel.degree
    return inner

def _block( kernel, X, Y, x_sq=None, same=False ):
    inner = X.T.dot(Y)
    if kernel.kind == LINEAR:
        return inner
    if kernel.kind == POLYNOMIAL:
        return (inner + kernel.offset) ** kernel.degree
    if x_sq is None:
        x_sq = np.sum(X * X, axis=0)
    y_sq = np.sum(Y * Y, axis=0)
    dist = x_sq[:, None] + y_sq[None, :] - 2.0 * inner
    np.maximum(dist, 0.0, out=dist)
    if same:
        np.fill_diagonal(dist, 0.0)
    return np.exp(-dist / (2.0 * kernel.sigma ** 2))

def kernel_diagonal( kernel, X ):
    """
    The N values k(x_i, x_i), in O(N) space
    """
    X = _as_samples(X, 'X')
    if kernel.kind == GAUSSIAN:
        return np.ones(X.shape[1])
    sq = np.sum(X * X, axis=0)
    if kernel.kind == POLYNOMIAL:
        return (sq + kernel.offset) ** kernel.degree
    return sq

def block_columns( n_rows, n_cols, budget=MEMORY_BUDGET ):
    """
    Number of columns per block so that an n_rows x cols float64 block
    (and its temporaries) stays inside the memory budget
    """
    per_column = max(1, 3 * 8 * max(n_rows, 1))
    return int(max(1, min(n_cols, budget // per_column)))

def kernel_matrix_blocks( kernel, X, Y, budget=MEMORY_BUDGET ):
    """
    Stream K(X, Y) as (column slice, block) pairs that each fit the budget
    """
    X = _as_samples(X, 'X')
    Y = _as_samples(Y, 'Y')
    _check_dimensions(X, Y)
    step = block_columns(X.shape[1], Y.shape[1], budget)
    x_sq = np.sum(X * X, axis=0)
    for start in range(0, Y.shape[1], step):
        cols = slice(start, min(start + step, Y.shape[1]))
        yield cols, _block(kernel, X, Y[:, cols], x_sq)

def kernel_matrix( kernel, X, Y=None, budget=MEMORY_BUDGET ):
    """
    Dense N_X x N_Y kernel matrix with entry (i, j) = k(x_i, y_j).

    Passing Y=None (or the same array object) builds the symmetric Gram
    matrix of X, which is symmetrized exactly.

    The full output is always allocated. Above the budget only the
    temporaries are bounded, by filling it block by block; callers that
    cannot hold N_X x N_Y floats must iterate kernel_matrix_blocks instead.
    """
    same = Y is None or Y is X
    X = _as_samples(X, 'X')
    Y = X if same else _as_samples(Y, 'Y')
    _check_dimensions(X, Y)
    n_x, n_y = X.shape[1], Y.shape[1]
    if n_x * n_y * 8 <= budget:
        K = _block(kernel, X, Y, same=same)
    else:
        log.debug('Building %d x %d kernel matrix block-wise' % (n_x, n_y))
        K = np.empty((n_x, n_y))
        for cols, block in kernel_matrix_blocks(kernel, X, Y, budget):
            K[:, cols] = block
        if same and kernel.kind == GAUSSIAN:
            np.fill_diagonal(K, 1.0)
    if same:
        K = 0.5 * (K + K.T)
    return K

def check_psd( K, kernel=None, tolerance=PSD_TOLERANCE ):
    """
    Verify that a symmetric kernel matrix is numerically positive
    semi-definite, returning its minimum eigenvalue
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        msg = 'Kernel matrix must be square, got shape %s' % (K.shape,)
        log.error( msg )
        raise ValueError( msg )
    if K.shape[0] == 0:
        return 0.0
    min_eig = float(np.linalg.eigvalsh(0.5 * (K + K.T))[0])
    limit = -tolerance * max(abs(np.trace(K)), np.finfo(float).tiny)
    if min_eig < limit:
        name = str(kernel) if kernel is not None else 'supplied'
        msg = 'The %s kernel matrix is indefinite (min eigenvalue %.3e < %.3e)' % (name, min_eig, limit)
        log.error( msg )
        raise ValueError( msg )
    return min_eig
