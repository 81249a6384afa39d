"""
Greedy pursuit: OMP, batch OMP and kernel OMP (KOMP).

All three run the same Gram-domain loop. With G the atom Gram matrix,
b the atom/signal correlations and xx the signal energy, each iteration

    atom selection   j = argmax |b_j - G[j, S] gamma_S|
    least squares    gamma_S = G[S, S]^-1 b_S

For OMP G = D^T D and b = D^T x. For KOMP G = A^T K(X, X) A and
b = A^T K(X, z), so the kernel never leaves the N x N train matrix.
The batch variants advance every signal by one atom per step.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

log = logging.getLogger(__name__)

# Cholesky breakdown threshold for a new support atom, relative to its norm
BREAKDOWN_TOLERANCE = 1e-12
# Correlations below this fraction of the signal norm cannot reduce the residual
CORRELATION_TOLERANCE = 1e-12

@dataclass
class SparseCode(object):
    support: list
    values: np.ndarray
    residual_norm: float
    degenerate: bool = False
    residual_trace: list = field(default_factory=list)

    def dense(self, m):
        gamma = np.zeros(m)
        gamma[self.support] = self.values
        return gamma

def _cholesky_append( L, g_S, g_jj ):
    """
    Extend the lower Cholesky factor of G[S, S] by one atom; None on breakdown
    """
    if L.shape[0] == 0:
        return np.array([[np.sqrt(g_jj)]]) if g_jj > 0 else None
    w = linalg.solve_triangular(L, g_S, lower=True)
    d2 = g_jj - w.dot(w)
    if not d2 > BREAKDOWN_TOLERANCE * max(g_jj, 1.0):
        return None
    n = L.shape[0]
    L_new = np.zeros((n + 1, n + 1))
    L_new[:n, :n] = L
    L_new[n, :n] = w
    L_new[n, n] = np.sqrt(d2)
    return L_new

def _least_squares( L, G, b, support ):
    gamma = linalg.cho_solve((L, True), b[support])
    if not np.all(np.isfinite(gamma)):
        # Progressive factor broke down numerically, re-solve from scratch
        gamma = linalg.lstsq(G[np.ix_(support, support)], b[support])[0]
    return gamma

def gram_pursuit( G, b, xx, q, eps=0.0 ):
    """
    Greedy pursuit in the Gram domain; returns a SparseCode whose
    residual_norm is the Gram-domain estimate sqrt(xx - gamma^T b_S)
    """
    m = G.shape[0]
    q = min(int(q), m)
    support = []
    gamma = np.zeros(0)
    L = np.zeros((0, 0))
    degenerate = False
    scale = np.sqrt(max(xx, 0.0))
    residual = scale
    trace = [residual]
    while len(support) < q and residual > eps:
        corr = b - G[:, support].dot(gamma)
        corr[support] = 0.0
        j = int(np.argmax(np.abs(corr)))
        if support and abs(corr[j]) <= CORRELATION_TOLERANCE * max(scale, 1e-300):
            break
        L_new = _cholesky_append(L, G[support, j], G[j, j])
        if L_new is None:
            log.debug('Support Gram matrix became singular at atom %d' % j)
            degenerate = True
            break
        L = L_new
        support.append(j)
        gamma = _least_squares(L, G, b, support)
        residual = np.sqrt(max(xx - gamma.dot(b[support]), 0.0))
        trace.append(residual)
    return SparseCode(support, gamma, float(residual), degenerate, trace)

def _batch_least_squares( G_SS, b_S ):
    try:
        gamma = np.linalg.solve(G_SS, b_S[..., None])[..., 0]
    except np.linalg.LinAlgError:
        gamma = np.full(b_S.shape, np.nan)
    for i in np.flatnonzero(~np.all(np.isfinite(gamma), axis=1)):
        gamma[i] = linalg.lstsq(G_SS[i], b_S[i])[0]
    return gamma

def gram_pursuit_batch( G, B, energies, q, eps=0.0 ):
    """
    Vectorised gram_pursuit over every column of B at once. Each step
    selects one atom per still-active column, so the Python loop runs q
    times rather than once per signal. Returns (Gamma, degenerate) with
    Gamma the m x N code matrix and degenerate a boolean mask.
    """
    m, n = B.shape
    q = min(int(q), m)
    Gamma = np.zeros((m, n))
    degenerate = np.zeros(n, dtype=bool)
    supports = np.zeros((n, q), dtype=int)
    chosen = np.zeros((m, n), dtype=bool)
    scale = np.sqrt(np.maximum(energies, 0.0))
    floor = CORRELATION_TOLERANCE * np.maximum(scale, 1e-300)
    active = scale > eps
    diagonal = np.diag(G)
    for t in range(q):
        cols = np.flatnonzero(active)
        if cols.size == 0:
            break
        corr = B[:, cols] - G.dot(Gamma[:, cols])
        corr[chosen[:, cols]] = 0.0
        j = np.argmax(np.abs(corr), axis=0)
        g_jj = diagonal[j]
        if t == 0:
            keep = g_jj > 0
        else:
            best = np.abs(corr[j, np.arange(cols.size)])
            stalled = best <= floor[cols]
            S = supports[cols, :t]
            G_SS = G[S[:, :, None], S[:, None, :]]
            g_S = G[S, j[:, None]]
            w = _batch_least_squares(G_SS, g_S)
            d2 = g_jj - np.sum(g_S * w, axis=1)
            keep = d2 > BREAKDOWN_TOLERANCE * np.maximum(g_jj, 1.0)
            active[cols[stalled]] = False
            keep &= ~stalled
        broken = ~keep & active[cols]
        degenerate[cols[broken]] = True
        active[cols[broken]] = False
        if np.any(broken):
            log.debug('%d supports became singular at step %d' % (np.count_nonzero(broken), t))
        cols, j = cols[keep], j[keep]
        if cols.size == 0:
            break
        supports[cols, t] = j
        chosen[j, cols] = True
        S = supports[cols, :t + 1]
        b_S = B[S, cols[:, None]]
        gamma = _batch_least_squares(G[S[:, :, None], S[:, None, :]], b_S)
        Gamma[:, cols] = 0.0
        Gamma[S, cols[:, None]] = gamma
        residual = np.sqrt(np.maximum(energies[cols] - np.sum(gamma * b_S, axis=1), 0.0))
        active[cols[residual <= eps]] = False
    return Gamma, degenerate

def _check_dictionary( D, q ):
    if q < 1:
        msg = 'Cardinality must be at least 1, got %s' % q
        log.error( msg )
        raise ValueError( msg )
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[1] == 0:
        msg = 'Dictionary must be a non-empty d x m matrix'
        log.error( msg )
        raise ValueError( msg )
    return D

def omp( D, x, q, eps=0.0 ):
    """
    Orthogonal matching pursuit of a single signal over unit-norm atoms
    """
    D = _check_dictionary(D, q)
    x = np.asarray(x, dtype=float).ravel()
    if x.size != D.shape[0]:
        msg = 'Signal dimension %d does not match dictionary dimension %d' % (x.size, D.shape[0])
        log.error( msg )
        raise ValueError( msg )
    code = gram_pursuit(D.T.dot(D), D.T.dot(x), float(x.dot(x)), q, eps)
    code.residual_norm = float(np.linalg.norm(x - D[:, code.support].dot(code.values)))
    return code

def omp_batch( D, X, q, eps=0.0 ):
    """
    Batch OMP: the Gram matrix D^T D and the correlations D^T X are formed
    once and shared by every column. Returns the m x N coefficient matrix.
    """
    D = _check_dictionary(D, q)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != D.shape[0]:
        msg = 'Signal dimension %d does not match dictionary dimension %d' % (X.shape[0], D.shape[0])
        log.error( msg )
        raise ValueError( msg )
    n = X.shape[1]
    if n == 0:
        return np.zeros((D.shape[1], 0))
    Gamma, degenerate = gram_pursuit_batch(D.T.dot(D), D.T.dot(X), np.sum(X * X, axis=0), q, eps)
    if np.any(degenerate):
        log.warning('%d of %d signals stopped early on a singular support' % (np.count_nonzero(degenerate), n))
    return Gamma

def coefficient_norms( K, A ):
    """
    Feature-space atom norms sqrt(a_j^T K a_j)
    """
    return np.sqrt(np.maximum(np.sum(A * K.dot(A), axis=0), 0.0))

def normalize_coefficient_dictionary( K, A ):
    """
    Scale every coefficient atom so that a_j^T K a_j = 1
    """
    A = np.array(A, dtype=float)
    norms = coefficient_norms(K, A)
    if np.any(norms <= 0):
        msg = 'Coefficient atoms %s have zero feature-space norm' % np.flatnonzero(norms <= 0).tolist()
        log.error( msg )
        raise ValueError( msg )
    return A / norms

def komp( K_XX, K_zX, kzz, A, q, eps=0.0 ):
    """
    Kernel OMP of one signal z given its kernel row K(z, X) and k(z, z)
    """
    if q < 1:
        msg = 'Cardinality must be at least 1, got %s' % q
        log.error( msg )
        raise ValueError( msg )
    K_XX = np.asarray(K_XX, dtype=float)
    A = np.asarray(A, dtype=float)
    K_zX = np.asarray(K_zX, dtype=float).ravel()
    if K_zX.size != K_XX.shape[0] or A.shape[0] != K_XX.shape[0]:
        msg = 'Kernel row (%d), train kernel (%d) and coefficient dictionary (%d) disagree' % (
            K_zX.size, K_XX.shape[0], A.shape[0])
        log.error( msg )
        raise ValueError( msg )
    G = A.T.dot(K_XX).dot(A)
    return gram_pursuit(G, A.T.dot(K_zX), float(kzz), q, eps)

def komp_batch( K_XX, K_ZX, kzz, A, q, eps=0.0 ):
    """
    KOMP over every row of K_ZX (one row per signal); returns m x N_Z codes
    """
    K_XX = np.asarray(K_XX, dtype=float)
    A = np.asarray(A, dtype=float)
    K_ZX = np.atleast_2d(np.asarray(K_ZX, dtype=float))
    kzz = np.asarray(kzz, dtype=float).ravel()
    if K_ZX.shape[1] != K_XX.shape[0] or kzz.size != K_ZX.shape[0]:
        msg = 'Kernel rows %s do not match the train kernel %s' % (K_ZX.shape, K_XX.shape)
        log.error( msg )
        raise ValueError( msg )
    G = A.T.dot(K_XX).dot(A)
    B = A.T.dot(K_ZX.T)
    if K_ZX.shape[0] == 0:
        return np.zeros((A.shape[1], 0))
    return gram_pursuit_batch(G, B, kzz, q, eps)[0]
