"""
Label-consistent K-SVD.

Training stacks the signals with the ideal discriminative codes Q and (for
the second variant) the one-hot labels H,

    X_new = [X; sqrt(alpha) Q; sqrt(beta) H],  D_new = [D; sqrt(alpha) T; sqrt(beta) Theta]

and runs plain dictionary learning on the stacked pair. LC1 stacks only
[X; sqrt(alpha) Q] and fits the linear classifier Theta afterwards by ridge
regression on the codes.
"""
import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from . import container
from .dict_learning import learn, KSVD, PROVIDED
from .sparse_coding import omp_batch
from .utils import make_rng, normalize_columns

log = logging.getLogger(__name__)

LC1 = 'LC1'
LC2 = 'LC2'
VARIANTS = (LC1, LC2)
DEFAULT_TAU2 = 1e-4

@dataclass
class LabelStructures(object):
    H: np.ndarray
    Q: np.ndarray
    atom_assignment: np.ndarray
    classes: list

@dataclass
class LCKSVDModel(object):
    D: np.ndarray
    T: np.ndarray
    Theta: np.ndarray
    labels: list
    q: int
    sqrt_alpha: float = 0.0
    sqrt_beta: float = 0.0
    variant: str = LC2
    tau2: float = DEFAULT_TAU2
    atom_assignment: np.ndarray = None
    atom_scales: np.ndarray = None
    report: object = None

    def stacked_dictionary(self):
        """
        Re-stack the extracted blocks into the learned D_new
        """
        scales = np.ones(self.D.shape[1]) if self.atom_scales is None else self.atom_scales
        blocks = [self.D, self.sqrt_alpha * self.T]
        if self.variant == LC2:
            blocks.append(self.sqrt_beta * self.Theta)
        return np.vstack(blocks) * scales

def _fail( msg ):
    log.error( msg )
    raise ValueError( msg )

def default_atom_counts( n_classes, m ):
    """
    Split m atoms as evenly as possible, extra atoms to the lowest labels
    """
    base, extra = divmod(m, n_classes)
    return [base + (1 if i < extra else 0) for i in range(n_classes)]

def build_label_structures( labels, m, class_atom_counts=None ):
    """
    One-hot label matrix H (L x N), ideal code matrix Q (m x N) and the
    atom to class map; atoms are assigned contiguously in label order
    """
    labels = np.asarray(labels).astype(np.int64)
    classes = [int(c) for c in np.unique(labels)]
    if not classes:
        _fail('Cannot build label structures without samples')
    if class_atom_counts is None:
        class_atom_counts = default_atom_counts(len(classes), m)
    class_atom_counts = [int(c) for c in class_atom_counts]
    if len(class_atom_counts) != len(classes):
        _fail('Got %d atom counts for %d classes' % (len(class_atom_counts), len(classes)))
    if sum(class_atom_counts) != m or min(class_atom_counts) < 1:
        _fail('Atom counts %s must be positive and sum to m=%d' % (class_atom_counts, m))
    class_index = np.searchsorted(classes, labels)
    H = np.zeros((len(classes), labels.size))
    H[class_index, np.arange(labels.size)] = 1.0
    atom_assignment = np.repeat(classes, class_atom_counts)
    Q = (atom_assignment[:, None] == labels[None, :]).astype(float)
    return LabelStructures(H, Q, atom_assignment, classes)

def solve_classifier( Gamma, H, tau2 ):
    """
    Ridge classifier Theta = H Gamma^T (Gamma Gamma^T + tau2 I)^-1
    """
    if not tau2 > 0:
        _fail('The ridge parameter tau2 must be positive, got %s' % tau2)
    m = Gamma.shape[0]
    try:
        Theta = linalg.solve(Gamma.dot(Gamma.T) + tau2 * np.eye(m), Gamma.dot(H.T), assume_a='pos').T
    except linalg.LinAlgError as error:
        _fail('Gamma Gamma^T + tau2 I is singular: %s' % error)
    if not np.all(np.isfinite(Theta)):
        _fail('The ridge classifier is not finite')
    return Theta

def initial_dictionary( X, labels, structures, seed ):
    """
    Class-wise initialization: the atoms of each class are random
    normalized training columns of that class
    """
    rng = make_rng(seed)
    labels = np.asarray(labels).astype(np.int64)
    columns = []
    for label in structures.classes:
        members = np.flatnonzero(labels == label)
        count = int(np.sum(structures.atom_assignment == label))
        columns.extend(rng.choice(members, size=count, replace=count > members.size))
    D, norms = normalize_columns(X[:, columns])
    dead = norms <= 0
    if np.any(dead):
        D[:, dead] = normalize_columns(rng.standard_normal((X.shape[0], int(dead.sum()))))[0]
    return D

def train( X, labels, m, q, alpha, beta, iterations, variant=LC2, tau2=DEFAULT_TAU2, seed=0,
           class_atom_counts=None, method=KSVD ):
    """
    Train LC-KSVD; alpha and beta are the weights of the label-consistency
    and classification terms (their square roots scale the stacked rows)
    """
    X = np.asarray(X, dtype=float)
    if variant not in VARIANTS:
        _fail('Unknown LC-KSVD variant "%s", expected %s' % (variant, ' or '.join(VARIANTS)))
    if alpha < 0 or beta < 0:
        _fail('LC-KSVD weights must be non-negative, got alpha=%s, beta=%s' % (alpha, beta))
    if not tau2 > 0:
        _fail('The ridge parameter tau2 must be positive, got %s' % tau2)
    if variant == LC2 and (alpha == 0 or beta == 0):
        log.warning('LC2 with a zero weight (alpha=%s, beta=%s) drops the corresponding term' % (alpha, beta))
    structures = build_label_structures(labels, m, class_atom_counts)
    sqrt_alpha, sqrt_beta = float(np.sqrt(alpha)), float(np.sqrt(beta))
    p = X.shape[0]

    D0 = initial_dictionary(X, labels, structures, seed)
    Gamma0 = omp_batch(D0, X, q)
    blocks = [D0, sqrt_alpha * np.eye(m)]
    data = [X, sqrt_alpha * structures.Q]
    if variant == LC2:
        blocks.append(sqrt_beta * solve_classifier(Gamma0, structures.H, tau2))
        data.append(sqrt_beta * structures.H)
    log.info('Training %s on %d samples with %d atoms (q=%d)' % (variant, X.shape[1], m, q))
    D_new, Gamma, report = learn(np.vstack(data), m, q, iterations, method=method,
                                 init=PROVIDED, D0=np.vstack(blocks))

    # D_new = [D s; sqrt(alpha) T s; sqrt(beta) Theta s] with s_j the norm of
    # the signal block of atom j; dividing every block by s keeps each
    # product term of the stacked objective once Gamma rows absorb s
    scales = np.sqrt(np.sum(D_new[:p] ** 2, axis=0))
    zero = scales <= 0
    if np.any(zero):
        log.warning('%d atoms have no signal component' % int(zero.sum()))
        scales[zero] = 1.0
    D = D_new[:p] / scales
    T = D_new[p:p + m] / scales / sqrt_alpha if sqrt_alpha > 0 else np.zeros((m, m))
    if variant == LC2:
        Theta = D_new[p + m:] / scales / sqrt_beta if sqrt_beta > 0 else np.zeros((len(structures.classes), m))
    else:
        Theta = solve_classifier(omp_batch(D, X, q), structures.H, tau2)
    return LCKSVDModel(D, T, Theta, structures.classes, q, sqrt_alpha, sqrt_beta, variant, tau2,
                       structures.atom_assignment, scales, report)

def predict_batch( model, X, q=None ):
    """
    Code over D then apply Theta; returns (labels, L x N scores)
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != model.D.shape[0]:
        _fail('Sample dimension %d does not match the dictionary dimension %d' % (X.shape[0], model.D.shape[0]))
    scores = model.Theta.dot(omp_batch(model.D, X, model.q if q is None else q))
    # argmax keeps the first maximum, the lowest label
    return np.asarray(model.labels)[np.argmax(scores, axis=0)], scores

def predict( model, x, q=None ):
    predicted, scores = predict_batch(model, np.asarray(x, dtype=float).ravel(), q)
    return int(predicted[0]), scores[:, 0]

def atom_usage( model, X, labels, label, q=None ):
    """
    Per-atom sum of absolute sparse coefficients over the samples of one class
    """
    labels = np.asarray(labels)
    members = np.flatnonzero(labels == label)
    if members.size == 0:
        _fail('No samples of class %s' % label)
    Gamma = omp_batch(model.D, np.asarray(X, dtype=float)[:, members], model.q if q is None else q)
    return np.sum(np.abs(Gamma), axis=1)

def write_atom_usage( path, usage_by_class ):
    """
    CSV rows atom,class,abs_sum from a {label: usage vector} mapping
    """
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['atom', 'class', 'abs_sum'])
        for label in sorted(usage_by_class):
            for atom, value in enumerate(usage_by_class[label]):
                writer.writerow([atom, label, '%.17g' % value])

def save( model, path ):
    arrays = [('D', model.D), ('T', model.T), ('Theta', model.Theta)]
    if model.atom_scales is not None:
        arrays.append(('atom_scales', model.atom_scales))
    if model.atom_assignment is not None:
        arrays.append(('atom_assignment', model.atom_assignment.astype(float)))
    metadata = {'labels': model.labels, 'q': model.q, 'sqrt_alpha': model.sqrt_alpha,
                'sqrt_beta': model.sqrt_beta, 'variant': model.variant, 'tau2': model.tau2}
    container.write(path, container.LCKSVD_MODEL, arrays,
                    dims=(model.D.shape[0], model.D.shape[1], 0), metadata=metadata)

def load( path ):
    record = container.read(path, container.LCKSVD_MODEL)
    meta = record.metadata
    assignment = record.arrays.get('atom_assignment')
    if assignment is not None:
        assignment = assignment.astype(np.int64)
    return LCKSVDModel(record.arrays['D'], record.arrays['T'], record.arrays['Theta'],
                       meta['labels'], meta['q'], meta['sqrt_alpha'], meta['sqrt_beta'],
                       meta['variant'], meta['tau2'], assignment, record.arrays.get('atom_scales'))
