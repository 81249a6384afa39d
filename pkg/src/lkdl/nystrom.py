"""
Nystrom virtual samples.

fit() samples the landmark set X_R, eigendecomposes the c x c matrix
W = K(X_R, X_R) = V S V^T and keeps the k leading eigenpairs. transform()
then maps any sample set through

    F = S_k^(-1/2) V_k^T K(X_R, X)

so that F^T F = C W_k^+ C^T approximates the kernel matrix. The blocks S
and B of the full N x N matrix are never formed.
"""
import logging

import numpy as np
from scipy import linalg

from . import container
from .kernels import kernel_matrix, check_psd, PSD_TOLERANCE
from .sampling import sample_landmarks

log = logging.getLogger(__name__)

# Eigenvalues below this fraction of the largest one are treated as zero
EIGEN_CUTOFF = 1e-10

class NystromMap(object):
    """
    Fitted virtual-sample embedding. Immutable once built.
    """

    def __init__(self, kernel, X_R, V_k, sigma_k, requested_k=None, source_indices=None):
        self.kernel = kernel
        self.X_R = _frozen(X_R)
        self.V_k = _frozen(V_k)
        self.sigma_k = _frozen(sigma_k)
        self.source_indices = None if source_indices is None else _frozen(source_indices)
        self.requested_k = self.k if requested_k is None else int(requested_k)

    @property
    def k(self):
        return int(self.sigma_k.size)

    @property
    def c(self):
        return int(self.X_R.shape[1])

    @property
    def p(self):
        return int(self.X_R.shape[0])

    @property
    def truncated(self):
        return self.k < self.requested_k

    def projection(self):
        """
        The k x c matrix S_k^(-1/2) V_k^T
        """
        return (self.V_k / np.sqrt(self.sigma_k)).T

    def __repr__(self):
        return 'NystromMap(kernel=%s, p=%d, c=%d, k=%d)' % (self.kernel, self.p, self.c, self.k)

def _frozen( array ):
    array = np.array(array)
    array.setflags(write=False)
    return array

def leading_eigenpairs( M, k, cutoff=EIGEN_CUTOFF ):
    """
    The k largest eigenpairs of a symmetric PSD matrix in descending order,
    dropping eigenvalues below cutoff * largest
    """
    values, vectors = linalg.eigh(0.5 * (M + M.T))
    order = np.argsort(values)[::-1]
    values, vectors = values[order], vectors[:, order]
    if values.size == 0 or not values[0] > 0:
        return np.zeros(0), np.zeros((M.shape[0], 0))
    keep = values[:k] > cutoff * values[0]
    values, vectors = values[:k][keep], vectors[:, :k][:, keep]
    return values, vectors

def fit( X_train, kernel, sampler, k ):
    """
    Fit the virtual-sample map on a training set
    """
    X_train = np.asarray(X_train, dtype=float)
    if k < 1 or k > sampler.c or sampler.c > X_train.shape[1]:
        msg = 'Need 1 <= k <= c <= N, got k=%d, c=%d, N=%d' % (k, sampler.c, X_train.shape[1])
        log.error( msg )
        raise ValueError( msg )
    landmarks = sample_landmarks(sampler, X_train, kernel)
    log.info('Computing the %d x %d landmark kernel matrix' % (sampler.c, sampler.c))
    W = kernel_matrix(kernel, landmarks.X_R)
    check_psd(W, kernel, PSD_TOLERANCE)
    sigma_k, V_k = leading_eigenpairs(W, k)
    if sigma_k.size == 0:
        msg = 'The %s landmark kernel matrix is zero' % kernel
        log.error( msg )
        raise ValueError( msg )
    if sigma_k.size < k:
        log.warning('Landmark kernel matrix has numerical rank %d, truncating k from %d' % (sigma_k.size, k))
    return NystromMap(kernel, landmarks.X_R, V_k, sigma_k, k, landmarks.source_indices)

def transform( nystrom_map, X ):
    """
    Virtual samples (k x N) of the columns of X; train and test sets alike
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != nystrom_map.p:
        msg = 'Sample dimension %d does not match the map dimension %d' % (X.shape[0], nystrom_map.p)
        log.error( msg )
        raise ValueError( msg )
    C_T = kernel_matrix(nystrom_map.kernel, nystrom_map.X_R, X)
    return nystrom_map.projection().dot(C_T)

def exact_virtual_samples( K, k ):
    """
    Virtual samples from the full kernel matrix, F_k = L_k^(1/2) U_k^T
    """
    K = np.asarray(K, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        msg = 'Kernel matrix must be square, got shape %s' % (K.shape,)
        log.error( msg )
        raise ValueError( msg )
    if not np.allclose(K, K.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(K).max(initial=0.0))):
        msg = 'Kernel matrix is not symmetric'
        log.error( msg )
        raise ValueError( msg )
    check_psd(K)
    values, vectors = leading_eigenpairs(K, k)
    return np.sqrt(values)[:, None] * vectors.T

def nystrom_approximation( nystrom_map, X ):
    """
    C W_k^+ C^T for the columns of X; only for error benchmarks
    """
    F = transform(nystrom_map, X)
    return F.T.dot(F)

def svd_approximation( K, rank ):
    """
    Best rank-r approximation of a symmetric PSD matrix
    """
    values, vectors = leading_eigenpairs(np.asarray(K, dtype=float), rank, cutoff=0.0)
    return (vectors * values).dot(vectors.T)

def approximation_error( K, K_approx ):
    """
    Normalized approximation error ||K - K_approx||_F / ||K||_F
    """
    K = np.asarray(K, dtype=float)
    K_approx = np.asarray(K_approx, dtype=float)
    if K.shape != K_approx.shape:
        msg = 'Shape mismatch: %s vs %s' % (K.shape, K_approx.shape)
        log.error( msg )
        raise ValueError( msg )
    norm = np.linalg.norm(K)
    if not norm > 0:
        msg = 'Reference kernel matrix has zero norm'
        log.error( msg )
        raise ValueError( msg )
    return float(np.linalg.norm(K - K_approx) / norm)

def save( nystrom_map, path ):
    arrays = [('X_R', nystrom_map.X_R), ('V_k', nystrom_map.V_k), ('sigma_k', nystrom_map.sigma_k)]
    if nystrom_map.source_indices is not None:
        arrays.append(('source_indices', nystrom_map.source_indices.astype(float)))
    container.write(path, container.NYSTROM_MAP, arrays,
                    kernel=nystrom_map.kernel,
                    dims=(nystrom_map.p, nystrom_map.c, nystrom_map.k),
                    metadata={'requested_k': nystrom_map.requested_k})
    log.info('Saved %r to "%s"' % (nystrom_map, path))

def load( path ):
    record = container.read(path, expected_kind=container.NYSTROM_MAP)
    indices = record.arrays.get('source_indices')
    if indices is not None:
        indices = indices.astype(np.int64)
    return NystromMap(record.kernel, record.arrays['X_R'], record.arrays['V_k'],
                      record.arrays['sigma_k'], record.metadata.get('requested_k'), indices)
