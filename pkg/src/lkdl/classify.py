"""
Per-class dictionaries and minimum reconstruction error classification.

A test signal is coded over every class dictionary and assigned to the
class with the smallest residual ||f - D_i gamma_i||^2; equal residuals go
to the lowest label. The exact-kernel baseline does the same in feature
space through per-class kernel sub-matrices and coefficient dictionaries.
"""
import csv
import logging

import numpy as np

from . import container
from .dict_learning import learn, kernel_mod_learn, KSVD
from .kernels import kernel_matrix, kernel_diagonal
from .sparse_coding import omp, omp_batch, komp_batch
from .utils import make_rng, derive_seed, normalize_columns

log = logging.getLogger(__name__)

class ClassDictionaryModel(object):
    """
    One learned dictionary per class label, labels in ascending order
    """

    def __init__(self, labels, dictionaries, q):
        self.labels = [int(l) for l in labels]
        self.dictionaries = [np.asarray(D, dtype=float) for D in dictionaries]
        self.q = int(q)
        if len(set(self.labels)) != len(self.labels) or len(self.labels) != len(self.dictionaries):
            msg = 'Class labels must be distinct, one per dictionary'
            log.error( msg )
            raise ValueError( msg )
        if len(set(D.shape[0] for D in self.dictionaries)) > 1:
            msg = 'Class dictionaries have different row dimensions'
            log.error( msg )
            raise ValueError( msg )

    @property
    def space_dim(self):
        return self.dictionaries[0].shape[0]

    def __repr__(self):
        return 'ClassDictionaryModel(classes=%d, d=%d, q=%d)' % (len(self.labels), self.space_dim, self.q)

def class_partitions( labels ):
    """
    Sorted class labels and the column indices of each class
    """
    labels = np.asarray(labels).astype(np.int64)
    classes = np.unique(labels)
    return [(int(label), np.flatnonzero(labels == label)) for label in classes]

def _check_labels( X, labels ):
    labels = np.asarray(labels)
    if labels.size != X.shape[1]:
        msg = 'Got %d labels for %d samples' % (labels.size, X.shape[1])
        log.error( msg )
        raise ValueError( msg )
    if labels.size == 0:
        msg = 'Cannot train on an empty sample set'
        log.error( msg )
        raise ValueError( msg )

def train_per_class( F_train, labels, m_per_class, q, iterations, method=KSVD, seed=0, classes=None ):
    """
    Learn one dictionary per class partition of F_train.

    Every class gets its own seed derived from the master seed and its label.
    classes optionally lists labels that must all be present.
    """
    F_train = np.asarray(F_train, dtype=float)
    _check_labels(F_train, labels)
    partitions = class_partitions(labels)
    if classes is not None:
        missing = sorted(set(int(c) for c in classes) - set(label for label, _ in partitions))
        if missing:
            msg = 'No training samples for class(es) %s' % ', '.join(str(c) for c in missing)
            log.error( msg )
            raise ValueError( msg )
    dictionaries = []
    for label, members in partitions:
        if members.size < m_per_class:
            log.warning('Class %d has %d samples, fewer than the %d atoms requested' % (
                label, members.size, m_per_class))
        log.info('Training the class %d dictionary on %d samples' % (label, members.size))
        D, _, _ = learn(F_train[:, members], m_per_class, q, iterations,
                        method=method, seed=derive_seed(seed, label))
        dictionaries.append(D)
    return ClassDictionaryModel([label for label, _ in partitions], dictionaries, q)

def _check_dimension( model_dim, d ):
    if d != model_dim:
        msg = 'Sample dimension %d does not match the model dimension %d' % (d, model_dim)
        log.error( msg )
        raise ValueError( msg )

def _decide( labels, residuals ):
    # argmin returns the first minimum, which is the lowest label
    return labels[int(np.argmin(residuals))]

def classify( model, f ):
    """
    Returns (label, residuals) with residuals in model label order
    """
    f = np.asarray(f, dtype=float).ravel()
    _check_dimension(model.space_dim, f.size)
    residuals = np.array([omp(D, f, model.q).residual_norm ** 2 for D in model.dictionaries])
    return _decide(model.labels, residuals), residuals

def classify_batch( model, F ):
    """
    Classify every column of F; returns (predicted labels, L x N residuals)
    """
    F = np.asarray(F, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    _check_dimension(model.space_dim, F.shape[0])
    residuals = np.empty((len(model.labels), F.shape[1]))
    for i, D in enumerate(model.dictionaries):
        R = F - D.dot(omp_batch(D, F, model.q))
        residuals[i] = np.sum(R * R, axis=0)
    predicted = np.asarray(model.labels)[np.argmin(residuals, axis=0)]
    return predicted, residuals

def accuracy( true_labels, predicted ):
    true_labels = np.asarray(true_labels)
    if true_labels.size == 0:
        return 0.0
    return float(np.mean(true_labels == np.asarray(predicted)))

class KernelClassModel(object):
    """
    Exact-kernel baseline: per class the training samples X_i and a
    coefficient dictionary A_i with Phi(D_i) = Phi(X_i) A_i
    """

    def __init__(self, kernel, labels, samples, coefficients, q):
        self.kernel = kernel
        self.labels = [int(l) for l in labels]
        self.samples = [np.asarray(X, dtype=float) for X in samples]
        self.coefficients = [np.asarray(A, dtype=float) for A in coefficients]
        self.q = int(q)
        self._grams = [None] * len(self.labels)

    @property
    def space_dim(self):
        return self.samples[0].shape[0]

    def gram(self, i):
        if self._grams[i] is None:
            self._grams[i] = kernel_matrix(self.kernel, self.samples[i])
        return self._grams[i]

def train_kernel_per_class( X_train, labels, kernel, m_per_class, q, iterations, seed=0 ):
    """
    Kernel MOD per class on the per-class kernel sub-matrices K(X_i, X_i)
    """
    X_train = np.asarray(X_train, dtype=float)
    _check_labels(X_train, labels)
    partitions = class_partitions(labels)
    samples, coefficients, grams = [], [], []
    for label, members in partitions:
        X_i = X_train[:, members]
        log.info('Computing the %d x %d kernel sub-matrix of class %d' % (members.size, members.size, label))
        K_i = kernel_matrix(kernel, X_i)
        if members.size < m_per_class:
            log.warning('Class %d has %d samples, fewer than the %d atoms requested' % (
                label, members.size, m_per_class))
        A_i, _, _ = kernel_mod_learn(K_i, m_per_class, q, iterations, seed=derive_seed(seed, label))
        samples.append(X_i)
        coefficients.append(A_i)
        grams.append(K_i)
    model = KernelClassModel(kernel, [label for label, _ in partitions], samples, coefficients, q)
    model._grams = grams
    return model

def classify_kernel( model, Z ):
    """
    Classify the columns of Z by feature-space residuals
    r_i = k(z, z) - 2 K(z, X_i) A_i g + g^T A_i^T K_i A_i g

    Returns (predicted labels, L x N residuals).
    """
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    _check_dimension(model.space_dim, Z.shape[0])
    kzz = kernel_diagonal(model.kernel, Z)
    residuals = np.empty((len(model.labels), Z.shape[1]))
    for i, (X_i, A_i) in enumerate(zip(model.samples, model.coefficients)):
        K_i = model.gram(i)
        K_ZX = kernel_matrix(model.kernel, Z, X_i)
        Gamma = komp_batch(K_i, K_ZX, kzz, A_i, model.q)
        cross = np.sum(K_ZX.dot(A_i).T * Gamma, axis=0)
        quadratic = np.sum(Gamma * A_i.T.dot(K_i).dot(A_i).dot(Gamma), axis=0)
        residuals[i] = np.maximum(kzz - 2.0 * cross + quadratic, 0.0)
    predicted = np.asarray(model.labels)[np.argmin(residuals, axis=0)]
    return predicted, residuals

def corrupt_gaussian( X, sigma_noise, seed, renormalize=True ):
    """
    Add white Gaussian noise and re-normalize the columns to unit norm.
    Sets whose samples were never normalized pass renormalize=False.
    """
    X = np.asarray(X, dtype=float)
    if sigma_noise < 0:
        msg = 'Noise level must be non-negative, got %s' % sigma_noise
        log.error( msg )
        raise ValueError( msg )
    if sigma_noise == 0:
        return X.copy()
    noisy = X + sigma_noise * make_rng(seed).standard_normal(X.shape)
    return normalize_columns(noisy)[0] if renormalize else noisy

def corrupt_missing( X, fraction, seed, renormalize=True ):
    """
    Zero floor(fraction * p) uniformly chosen entries of every column and
    re-normalize the columns that remain non-zero.

    Returns (X_corrupted, zero_columns).
    """
    X = np.array(X, dtype=float)
    if not 0.0 <= fraction <= 1.0:
        msg = 'Missing fraction must lie in [0, 1], got %s' % fraction
        log.error( msg )
        raise ValueError( msg )
    p, n = X.shape
    count = int(np.floor(fraction * p))
    if count == 0:
        return X, np.sum(X * X, axis=0) == 0
    rng = make_rng(seed)
    for i in range(n):
        X[rng.choice(p, size=count, replace=False), i] = 0.0
    if renormalize:
        X, norms = normalize_columns(X)
    else:
        norms = np.sqrt(np.sum(X * X, axis=0))
    zero_columns = norms == 0
    if np.any(zero_columns):
        log.warning('%d columns are entirely missing' % int(zero_columns.sum()))
    return X, zero_columns

def write_predictions( path, true_labels, predicted, residuals, labels ):
    """
    CSV rows sample_index,true_label,predicted_label,residual_1..residual_L
    """
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(['sample_index', 'true_label', 'predicted_label'] +
                        ['residual_%d' % label for label in labels])
        for i in range(len(predicted)):
            true = '' if true_labels is None else int(true_labels[i])
            writer.writerow([i, true, int(predicted[i])] + ['%.17g' % r for r in residuals[:, i]])
    log.info('Wrote %d predictions to "%s"' % (len(predicted), path))

def save_model( model, path ):
    arrays = [('D_%d' % label, D) for label, D in zip(model.labels, model.dictionaries)]
    container.write(path, container.CLASS_MODEL, arrays,
                    dims=(model.space_dim, len(model.labels), 0),
                    metadata={'labels': model.labels, 'q': model.q})

def load_model( path ):
    record = container.read(path, container.CLASS_MODEL)
    labels = record.metadata['labels']
    return ClassDictionaryModel(labels, [record.arrays['D_%d' % l] for l in labels], record.metadata['q'])

def save_kernel_model( model, path ):
    arrays = []
    for label, X_i, A_i in zip(model.labels, model.samples, model.coefficients):
        arrays.append(('X_%d' % label, X_i))
        arrays.append(('A_%d' % label, A_i))
    container.write(path, container.KERNEL_CLASS_MODEL, arrays, kernel=model.kernel,
                    dims=(model.space_dim, len(model.labels), 0),
                    metadata={'labels': model.labels, 'q': model.q})

def load_kernel_model( path ):
    record = container.read(path, container.KERNEL_CLASS_MODEL)
    labels = record.metadata['labels']
    return KernelClassModel(record.kernel, labels,
                            [record.arrays['X_%d' % l] for l in labels],
                            [record.arrays['A_%d' % l] for l in labels],
                            record.metadata['q'])
