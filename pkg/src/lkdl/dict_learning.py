"""
Dictionary learning by MOD and K-SVD, plus kernel MOD over a coefficient
dictionary A (Phi(D) = Phi(X) A).

learn() alternates batch OMP and a dictionary update. A fresh code only
replaces the previous code of a signal when it represents the signal at
least as well, so the traced objective ||X - D Gamma||_F^2 never increases.
Atoms that nearly repeat an earlier atom are re-seeded from badly
represented signals at the start of an iteration when that helps.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from . import container
from .sparse_coding import omp_batch, komp_batch, coefficient_norms
from .utils import make_rng, normalize_columns

log = logging.getLogger(__name__)

MOD = 'mod'
KSVD = 'ksvd'
LEARNING_METHODS = (MOD, KSVD)
DATA_COLUMNS = 'data_columns'
PROVIDED = 'provided'

# Relative singular-value cutoff of the MOD pseudo-inverse
PINV_CUTOFF = 1e-10
POWER_TOLERANCE = 1e-10
POWER_MAX_ITERS = 1000
# Atoms this correlated with an earlier atom are re-seeded
DUPLICATE_COHERENCE = 0.99

@dataclass
class LearnReport(object):
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    replaced_atoms: int = 0
    degenerate: bool = False

def objective( X, D, Gamma ):
    R = X - D.dot(Gamma)
    return float(np.sum(R * R))

def _column_errors( X, D, Gamma ):
    R = X - D.dot(Gamma)
    return np.sum(R * R, axis=0)

def _check_finite( value, stage ):
    if not np.isfinite(value):
        msg = 'Non-finite objective after the %s stage' % stage
        log.error( msg )
        raise FloatingPointError( msg )

def _replace_unused( X, D, Gamma, atoms, report ):
    """
    Replace atoms by the worst represented signals; the atoms' code rows are
    zero, so D Gamma is unchanged
    """
    if len(atoms) == 0:
        return
    errors = _column_errors(X, D, Gamma)
    norms = np.sqrt(np.sum(X * X, axis=0))
    errors[norms <= 0] = -1.0
    for j in atoms:
        worst = int(np.argmax(errors))
        if errors[worst] < 0:
            break
        D[:, j] = X[:, worst] / norms[worst]
        Gamma[j, :] = 0.0
        errors[worst] = -1.0
        report.replaced_atoms += 1
    log.debug('Replaced %d unused atoms' % len(atoms))

def mod_update( X, Gamma ):
    """
    Method of optimal directions, D = X Gamma^+, followed by atom
    renormalization. Gamma rows are rescaled so that D Gamma is preserved.

    Returns (D, Gamma, degenerate).
    """
    X = np.asarray(X, dtype=float)
    Gamma = np.array(Gamma, dtype=float)
    singular = np.linalg.svd(Gamma, compute_uv=False)
    degenerate = bool(singular.size == 0 or singular[-1] <= PINV_CUTOFF * singular[0]
                      or Gamma.shape[0] > Gamma.shape[1])
    if degenerate:
        log.debug('Gamma Gamma^T is singular, using the truncated pseudo-inverse')
    D = X.dot(np.linalg.pinv(Gamma, rcond=PINV_CUTOFF))
    D, norms = normalize_columns(D)
    Gamma *= norms[:, None]
    return D, Gamma, degenerate

def _leading_singular_pair( E, u ):
    """
    Power iteration for the leading left singular vector of E, warm-started
    at u; returns (u, E^T u)
    """
    u = u / np.linalg.norm(u)
    for _ in range(POWER_MAX_ITERS):
        v = E.T.dot(u)
        w = E.dot(v)
        norm = np.linalg.norm(w)
        if not norm > 0:
            break
        w /= norm
        change = np.linalg.norm(w - u)
        u = w
        if change <= POWER_TOLERANCE:
            break
    return u, E.T.dot(u)

def ksvd_update( X, D, Gamma, report=None ):
    """
    One K-SVD sweep: atoms are updated in ascending order by the rank-1
    approximation of the residual restricted to the signals using them.
    Supports of Gamma are unchanged. Returns (D, Gamma).
    """
    X = np.asarray(X, dtype=float)
    D = np.array(D, dtype=float)
    Gamma = np.array(Gamma, dtype=float)
    if report is None:
        report = LearnReport()
    R = X - D.dot(Gamma)
    unused = []
    for j in range(D.shape[1]):
        users = np.flatnonzero(Gamma[j, :])
        if users.size == 0:
            unused.append(j)
            continue
        E = R[:, users] + np.outer(D[:, j], Gamma[j, users])
        d, g = _leading_singular_pair(E, D[:, j])
        D[:, j] = d
        Gamma[j, users] = g
        R[:, users] = E - np.outer(d, g)
    _replace_unused(X, D, Gamma, unused, report)
    return D, Gamma

def _coherent_atoms( gram ):
    """
    Atoms whose correlation with an earlier atom exceeds DUPLICATE_COHERENCE
    """
    overlap = np.abs(np.triu(gram, 1))
    return np.flatnonzero(np.any(overlap > DUPLICATE_COHERENCE, axis=0))

def _swap_coherent( X, D, Gamma, q, eps, report ):
    """
    Re-seed near-duplicate atoms from the worst represented signals and
    recode; the swap is kept only when it lowers the objective
    """
    atoms = _coherent_atoms(D.T.dot(D))
    if atoms.size == 0:
        return D, Gamma
    D_new, Gamma_new = D.copy(), Gamma.copy()
    swap = LearnReport()
    _replace_unused(X, D_new, Gamma_new, atoms, swap)
    Gamma_new = omp_batch(D_new, X, q, eps)
    if not objective(X, D_new, Gamma_new) < objective(X, D, Gamma):
        return D, Gamma
    log.debug('Re-seeded %d coherent atoms' % swap.replaced_atoms)
    report.replaced_atoms += swap.replaced_atoms
    return D_new, Gamma_new

def _initial_indices( n, m, rng ):
    if m <= n:
        return rng.choice(n, size=m, replace=False)
    log.warning('Dictionary size %d exceeds the %d training samples' % (m, n))
    return np.concatenate([rng.permutation(n), rng.choice(n, size=m - n, replace=True)])

def initial_dictionary( X, m, rng ):
    """
    A random subset of m training columns, normalized
    """
    indices = _initial_indices(X.shape[1], m, rng)
    D, norms = normalize_columns(X[:, indices])
    dead = np.flatnonzero(norms <= 0)
    if X.shape[1] < m or dead.size:
        # Duplicated or zero columns get random unit directions instead
        fill = list(dead) + list(range(X.shape[1], m))
        noise = rng.standard_normal((X.shape[0], len(fill)))
        D[:, fill] = normalize_columns(noise)[0]
    return D

def _keep_better( X, D, Gamma_new, Gamma_old ):
    if Gamma_old is None:
        return Gamma_new
    worse = _column_errors(X, D, Gamma_new) > _column_errors(X, D, Gamma_old)
    if np.any(worse):
        Gamma_new[:, worse] = Gamma_old[:, worse]
    return Gamma_new

def learn( X, m, q, iterations, method=KSVD, init=DATA_COLUMNS, seed=0, D0=None, eps=0.0 ):
    """
    Alternate batch OMP and the MOD or K-SVD update.

    Returns (D, Gamma, LearnReport); the trace starts with the objective of
    the initial dictionary.
    """
    X = np.asarray(X, dtype=float)
    if method not in LEARNING_METHODS:
        msg = 'Unknown learning method "%s", expected one of %s' % (method, ', '.join(LEARNING_METHODS))
        log.error( msg )
        raise ValueError( msg )
    if q < 1 or m < 1 or iterations < 0:
        msg = 'Need m >= 1, q >= 1 and iterations >= 0 (m=%s, q=%s, iterations=%s)' % (m, q, iterations)
        log.error( msg )
        raise ValueError( msg )
    if init == PROVIDED:
        if D0 is None or D0.shape != (X.shape[0], m):
            msg = 'A provided initial dictionary must be %d x %d' % (X.shape[0], m)
            log.error( msg )
            raise ValueError( msg )
        D = normalize_columns(np.array(D0, dtype=float))[0]
    else:
        D = initial_dictionary(X, m, make_rng(seed))
    report = LearnReport()
    Gamma = omp_batch(D, X, q, eps)
    report.objective_trace.append(objective(X, D, Gamma))
    _check_finite(report.objective_trace[-1], 'initial coding')
    log.debug('Initial objective %.6g' % report.objective_trace[-1])
    for iteration in range(iterations):
        D, Gamma = _swap_coherent(X, D, Gamma, q, eps, report)
        if method == MOD:
            unused = np.flatnonzero(~np.any(Gamma, axis=1))
            D, Gamma, degenerate = mod_update(X, Gamma)
            report.degenerate |= degenerate
            _replace_unused(X, D, Gamma, unused, report)
        else:
            D, Gamma = ksvd_update(X, D, Gamma, report)
        _check_finite(objective(X, D, Gamma), '%s update' % method)
        Gamma = _keep_better(X, D, omp_batch(D, X, q, eps), Gamma)
        report.objective_trace.append(objective(X, D, Gamma))
        _check_finite(report.objective_trace[-1], 'sparse coding')
        report.iterations = iteration + 1
        log.debug('Iteration %d objective %.6g' % (iteration + 1, report.objective_trace[-1]))
    log.info('Learned %d atoms (%s, q=%d) in %d iterations, objective %.6g' % (
        m, method, q, report.iterations, report.objective_trace[-1]))
    return D, Gamma, report

def kernel_objective( K, A, Gamma ):
    """
    ||Phi(X) - Phi(X) A Gamma||_F^2 = tr(K) - 2 tr(K A Gamma) + tr(Gamma^T A^T K A Gamma)
    """
    return float(np.sum(_kernel_column_errors(K, A, Gamma)))

def _kernel_column_errors( K, A, Gamma ):
    KA = K.dot(A)
    G = A.T.dot(KA)
    cross = np.sum(KA.T * Gamma, axis=0)
    quadratic = np.sum(Gamma * G.dot(Gamma), axis=0)
    return np.diag(K) - 2.0 * cross + quadratic

def _kernel_replace_unused( K, A, Gamma, atoms, report ):
    if len(atoms) == 0:
        return
    errors = _kernel_column_errors(K, A, Gamma)
    diag = np.diag(K)
    errors[diag <= 0] = -np.inf
    for j in atoms:
        worst = int(np.argmax(errors))
        if not np.isfinite(errors[worst]):
            break
        A[:, j] = 0.0
        A[worst, j] = 1.0 / np.sqrt(diag[worst])
        Gamma[j, :] = 0.0
        errors[worst] = -np.inf
        report.replaced_atoms += 1

def _kernel_swap_coherent( K, A, Gamma, q, eps, report ):
    atoms = _coherent_atoms(A.T.dot(K).dot(A))
    if atoms.size == 0:
        return A, Gamma
    A_new, Gamma_new = A.copy(), Gamma.copy()
    swap = LearnReport()
    _kernel_replace_unused(K, A_new, Gamma_new, atoms, swap)
    Gamma_new = komp_batch(K, K, np.diag(K), A_new, q, eps)
    if not kernel_objective(K, A_new, Gamma_new) < kernel_objective(K, A, Gamma):
        return A, Gamma
    log.debug('Re-seeded %d coherent kernel atoms' % swap.replaced_atoms)
    report.replaced_atoms += swap.replaced_atoms
    return A_new, Gamma_new

def kernel_mod_learn( K_XX, m, q, iterations, seed=0, A0=None, eps=0.0 ):
    """
    Kernel dictionary learning with KOMP coding and the kernel MOD update
    A = Gamma^+. Atoms are kept at unit feature-space norm.

    Returns (A, Gamma, LearnReport).
    """
    K = np.asarray(K_XX, dtype=float)
    n = K.shape[0]
    if K.ndim != 2 or K.shape[1] != n:
        msg = 'Train kernel matrix must be square, got shape %s' % (K.shape,)
        log.error( msg )
        raise ValueError( msg )
    diag = np.diag(K)
    if A0 is None:
        indices = _initial_indices(n, m, make_rng(seed))
        if np.any(diag[indices] <= 0):
            msg = 'Initial atoms must have non-zero feature-space norm'
            log.error( msg )
            raise ValueError( msg )
        A = np.zeros((n, m))
        A[indices, np.arange(m)] = 1.0 / np.sqrt(diag[indices])
    else:
        A = np.array(A0, dtype=float)
        A = A / coefficient_norms(K, A)
    report = LearnReport()
    Gamma = komp_batch(K, K, diag, A, q, eps)
    report.objective_trace.append(kernel_objective(K, A, Gamma))
    _check_finite(report.objective_trace[-1], 'initial coding')
    for iteration in range(iterations):
        A, Gamma = _kernel_swap_coherent(K, A, Gamma, q, eps, report)
        unused = np.flatnonzero(~np.any(Gamma, axis=1))
        singular = np.linalg.svd(Gamma, compute_uv=False)
        if singular.size == 0 or singular[-1] <= PINV_CUTOFF * singular[0]:
            report.degenerate = True
        A = np.linalg.pinv(Gamma, rcond=PINV_CUTOFF)
        norms = coefficient_norms(K, A)
        dead = np.flatnonzero(norms <= 1e-12 * max(norms.max(initial=0.0), 1.0))
        norms[dead] = 1.0
        A /= norms
        Gamma = Gamma * norms[:, None]
        _kernel_replace_unused(K, A, Gamma, sorted(set(unused) | set(dead)), report)
        _check_finite(kernel_objective(K, A, Gamma), 'kernel MOD update')
        fresh = komp_batch(K, K, diag, A, q, eps)
        worse = _kernel_column_errors(K, A, fresh) > _kernel_column_errors(K, A, Gamma)
        fresh[:, worse] = Gamma[:, worse]
        Gamma = fresh
        report.objective_trace.append(kernel_objective(K, A, Gamma))
        _check_finite(report.objective_trace[-1], 'kernel sparse coding')
        report.iterations = iteration + 1
    log.info('Learned %d kernel atoms over %d samples in %d iterations, objective %.6g' % (
        m, n, report.iterations, report.objective_trace[-1]))
    return A, Gamma, report

def save_dictionary( D, path ):
    container.write(path, container.DICTIONARY, [('D', D)], dims=(D.shape[0], D.shape[1], 0))

def load_dictionary( path ):
    return container.read(path, container.DICTIONARY).arrays['D']

def save_coefficient_dictionary( A, path, kernel=None, X_train=None ):
    arrays = [('A', A)]
    if X_train is not None:
        arrays.append(('X', X_train))
    container.write(path, container.COEFFICIENT_DICTIONARY, arrays, kernel=kernel,
                    dims=(A.shape[0], A.shape[1], 0))

def load_coefficient_dictionary( path ):
    """
    Returns (A, kernel, X_train); kernel and X_train may be None
    """
    record = container.read(path, container.COEFFICIENT_DICTIONARY)
    return record.arrays['A'], record.kernel, record.arrays.get('X')
