"""
Dataset ingestion (IDX, CSV, manifests), normalization, splitting and the
synthetic generators used by the desk-scale experiments.

Samples are stored column-wise, p x N, with integer labels in [1..L].
"""
import os
import csv
import gzip
import json
import struct
import logging
from dataclasses import dataclass

import numpy as np

from .utils import make_rng, normalize_columns

log = logging.getLogger(__name__)

IDX_IMAGES_MAGIC = 2051
IDX_LABELS_MAGIC = 2049
# IDX digit labels start at 0
IDX_LABEL_OFFSET = 1

CIRCLE_RADII = (1.0, 3.0)
CIRCLE_NOISE = 0.1
PLANTED_MAX_ATTEMPTS = 100

class DatasetFormatError(ValueError):
    pass

def _format_error( msg ):
    log.error( msg )
    raise DatasetFormatError( msg )

@dataclass
class LabeledDataset(object):
    samples: np.ndarray
    labels: np.ndarray
    source: str = ''
    normalized: bool = False

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.samples.ndim != 2 or self.labels.size != self.samples.shape[1]:
            msg = 'Dataset "%s" has %d labels for sample matrix %s' % (
                self.source, self.labels.size, self.samples.shape)
            log.error( msg )
            raise ValueError( msg )

    @property
    def p(self):
        return self.samples.shape[0]

    @property
    def n(self):
        return self.samples.shape[1]

    @property
    def classes(self):
        return [int(c) for c in np.unique(self.labels)]

    def subset(self, indices, source=None):
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.samples[:, indices], self.labels[indices],
                              source or self.source, self.normalized)

    def __repr__(self):
        return 'LabeledDataset(source=%s, p=%d, N=%d, classes=%d)' % (
            self.source, self.p, self.n, len(self.classes))

def _open( path ):
    if not os.path.exists(path):
        msg = 'Dataset file "%s" does not exist' % path
        log.error( msg )
        raise IOError( msg )
    if path.endswith('.gz'):
        return gzip.open(path, 'rb')
    return open(path, 'rb')

def _read_idx( path, magic, ndim ):
    with _open(path) as handle:
        data = handle.read()
    header = 4 * (ndim + 1)
    if len(data) < header:
        _format_error('Truncated IDX header in "%s"' % path)
    found = struct.unpack('>I', data[:4])[0]
    if found != magic:
        _format_error('Bad IDX magic 0x%08x in "%s", expected 0x%08x' % (found, path, magic))
    dims = struct.unpack('>%dI' % ndim, data[4:header])
    size = int(np.prod(dims))
    if len(data) - header < size:
        _format_error('Truncated IDX file "%s": expected %d bytes of data, found %d' % (
            path, size, len(data) - header))
    values = np.frombuffer(data, dtype=np.uint8, count=size, offset=header)
    return values.reshape(dims)

def load_idx( images_path, labels_path, label_offset=IDX_LABEL_OFFSET ):
    """
    Load an IDX image/label pair; pixels are scaled to [0, 1] and every
    image becomes one column (row-major flattening)
    """
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1)
    if images.shape[0] != labels.shape[0]:
        _format_error('"%s" holds %d images but "%s" holds %d labels' % (
            images_path, images.shape[0], labels_path, labels.shape[0]))
    samples = images.reshape(images.shape[0], -1).T.astype(float) / 255.0
    log.info('Loaded %d images of %dx%d from "%s"' % (images.shape[0], images.shape[1],
                                                       images.shape[2], images_path))
    return LabeledDataset(samples, labels.astype(np.int64) + label_offset, images_path)

def _label_index( label_column, header, width, path ):
    if isinstance(label_column, str):
        if header is None:
            _format_error('Label column "%s" named but "%s" has no header' % (label_column, path))
        if label_column not in header:
            _format_error('Label column "%s" not found in the header of "%s"' % (label_column, path))
        return header.index(label_column)
    index = int(label_column)
    if not -width <= index < width:
        _format_error('Label column %d is out of range for %d columns in "%s"' % (index, width, path))
    return index % width

def load_csv( path, label_column=-1, header=False, label_offset=0 ):
    """
    Load a CSV file with one sample per row and an integer label column
    """
    names = None
    rows, labels = [], []
    label_index = None
    with open(path, newline='') as handle:
        for line_number, row in enumerate(csv.reader(handle), start=1):
            if not row or not any(cell.strip() for cell in row):
                continue
            if header and names is None:
                names = [cell.strip() for cell in row]
                continue
            if label_index is None:
                width = len(row)
                label_index = _label_index(label_column, names, width, path)
            if len(row) != width:
                _format_error('Line %d of "%s" has %d cells, expected %d' % (line_number, path, len(row), width))
            try:
                values = [float(cell) for cell in row]
            except ValueError:
                _format_error('Non-numeric cell on line %d of "%s"' % (line_number, path))
            label = values.pop(label_index)
            if label != int(label):
                _format_error('Non-integer label %s on line %d of "%s"' % (label, line_number, path))
            labels.append(int(label) + label_offset)
            rows.append(values)
    if not rows:
        _format_error('No samples in "%s"' % path)
    log.info('Loaded %d samples of dimension %d from "%s"' % (len(rows), len(rows[0]), path))
    return LabeledDataset(np.array(rows).T, np.array(labels), path)

def write_csv( dataset, path, header=False ):
    """
    One sample per row, label in the last column
    """
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        if header:
            writer.writerow(['x%d' % i for i in range(dataset.p)] + ['label'])
        for i in range(dataset.n):
            writer.writerow(['%.17g' % v for v in dataset.samples[:, i]] + [int(dataset.labels[i])])

def normalize_unit( dataset ):
    """
    Scale every sample to unit l2 norm; zero samples are rejected
    """
    samples, norms = normalize_columns(dataset.samples)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        msg = 'Cannot normalize %d zero samples of "%s" (first at column %d)' % (zero.size, dataset.source, zero[0])
        log.error( msg )
        raise ValueError( msg )
    return LabeledDataset(samples, dataset.labels.copy(), dataset.source, True)

def subsample_fraction( dataset, fraction, seed ):
    """
    Uniformly draw round(fraction * N) samples without replacement;
    every class must keep at least one sample
    """
    if not 0.0 < fraction <= 1.0:
        msg = 'Subsample fraction must lie in (0, 1], got %s' % fraction
        log.error( msg )
        raise ValueError( msg )
    count = max(1, int(round(fraction * dataset.n)))
    indices = make_rng(seed).choice(dataset.n, size=count, replace=False)
    lost = sorted(set(dataset.classes) - set(int(l) for l in dataset.labels[indices]))
    if lost:
        msg = 'Subsampling %s of "%s" leaves class(es) %s without samples' % (
            fraction, dataset.source, ', '.join(str(c) for c in lost))
        log.error( msg )
        raise ValueError( msg )
    return dataset.subset(indices)

def train_test_split( dataset, test_fraction, seed ):
    """
    Stratified split; every class keeps at least one training sample
    """
    if not 0.0 < test_fraction < 1.0:
        msg = 'Test fraction must lie in (0, 1), got %s' % test_fraction
        log.error( msg )
        raise ValueError( msg )
    rng = make_rng(seed)
    train, test = [], []
    for label in dataset.classes:
        members = rng.permutation(np.flatnonzero(dataset.labels == label))
        n_test = min(int(round(test_fraction * members.size)), members.size - 1)
        test.extend(members[:n_test])
        train.extend(members[n_test:])
    return dataset.subset(sorted(train)), dataset.subset(sorted(test))

def synth_circles( n_per_class, radii=CIRCLE_RADII, noise_sigma=CIRCLE_NOISE, seed=0 ):
    """
    Concentric circles in the plane, one class per radius (labels 1, 2, ...),
    with isotropic Gaussian noise
    """
    rng = make_rng(seed)
    samples, labels = [], []
    for label, radius in enumerate(radii, start=1):
        angles = rng.uniform(0.0, 2.0 * np.pi, n_per_class)
        points = radius * np.vstack([np.cos(angles), np.sin(angles)])
        if noise_sigma > 0:
            points = points + noise_sigma * rng.standard_normal(points.shape)
        samples.append(points)
        labels.append(np.full(n_per_class, label))
    return LabeledDataset(np.hstack(samples), np.concatenate(labels), 'circles')

def mutual_coherence( D ):
    """
    Largest absolute inner product between two distinct unit-norm atoms
    """
    G = np.abs(D.T.dot(D))
    np.fill_diagonal(G, 0.0)
    return float(G.max()) if G.size > 1 else 0.0

def synth_planted_sparse( p, N, m, q, seed, n_classes=1, coherence_threshold=None ):
    """
    X = D0 Gamma0 with a random unit-norm D0 and exactly q-sparse columns.

    With several classes the atoms are split contiguously between classes
    and every sample only uses atoms of its own class. Dictionaries above
    coherence_threshold are regenerated.

    Returns (dataset, D0, Gamma0).
    """
    if m % n_classes or q > m // n_classes:
        msg = 'Cannot plant %d-sparse codes over %d atoms split into %d classes' % (q, m, n_classes)
        log.error( msg )
        raise ValueError( msg )
    rng = make_rng(seed)
    for attempt in range(PLANTED_MAX_ATTEMPTS):
        D0 = normalize_columns(rng.standard_normal((p, m)))[0]
        coherence = mutual_coherence(D0)
        if coherence_threshold is None or coherence <= coherence_threshold:
            break
        log.debug('Planted dictionary coherence %.3f above %.3f, regenerating' % (coherence, coherence_threshold))
    else:
        msg = 'No planted dictionary with coherence <= %s in %d attempts' % (coherence_threshold, PLANTED_MAX_ATTEMPTS)
        log.error( msg )
        raise ValueError( msg )
    per_class = m // n_classes
    labels = np.sort(np.arange(N) % n_classes) + 1
    Gamma0 = np.zeros((m, N))
    for i in range(N):
        first = (labels[i] - 1) * per_class
        support = first + rng.choice(per_class, size=q, replace=False)
        magnitudes = 1.0 + rng.random(q)
        Gamma0[support, i] = magnitudes * rng.choice([-1.0, 1.0], size=q)
    log.info('Planted %d-sparse data over %d atoms, coherence %.3f' % (q, m, coherence))
    dataset = LabeledDataset(D0.dot(Gamma0), labels, 'planted')
    return dataset, D0, Gamma0

def _resolve( base, path ):
    return path if os.path.isabs(path) else os.path.join(base, path)

def _load_part( spec, part, base ):
    fmt = spec['format']
    entry = spec[part]
    if fmt == 'idx':
        return load_idx(_resolve(base, entry['images']), _resolve(base, entry['labels']),
                        spec.get('label_offset', IDX_LABEL_OFFSET))
    return load_csv(_resolve(base, entry['path']), spec.get('label_column', -1),
                    spec.get('header', False), spec.get('label_offset', 0))

def _synthetic( params ):
    params = dict(params)
    generator = params.pop('generator', 'circles')
    test_fraction = params.pop('test_fraction', 0.5)
    seed = params.get('seed', 0)
    if generator == 'circles':
        dataset = synth_circles(params['n_per_class'], tuple(params.get('radii', CIRCLE_RADII)),
                                params.get('noise_sigma', CIRCLE_NOISE), seed)
    elif generator == 'planted':
        dataset = synth_planted_sparse(params['p'], params['N'], params['m'], params['q'], seed,
                                       params.get('n_classes', 1), params.get('coherence_threshold'))[0]
    else:
        _format_error('Unknown synthetic generator "%s"' % generator)
    return train_test_split(dataset, test_fraction, seed)

def load_manifest( path ):
    """
    Read a dataset manifest and return (train, test) datasets.

    {"format": "idx" | "csv" | "synthetic",
     "train": {"images": ..., "labels": ...} or {"path": ...},
     "test":  the same,
     "label_column": -1, "header": false, "label_offset": 0,
     "normalize": true,
     "synthetic": {"generator": "circles" | "planted", ..., "test_fraction": 0.5}}

    Relative paths are resolved against the manifest directory.
    """
    with open(path) as handle:
        try:
            spec = json.load(handle)
        except ValueError as error:
            _format_error('Manifest "%s" is not valid JSON: %s' % (path, error))
    fmt = spec.get('format')
    base = os.path.dirname(os.path.abspath(path))
    if fmt == 'synthetic':
        train, test = _synthetic(spec.get('synthetic', {}))
    elif fmt in ('idx', 'csv'):
        if 'train' not in spec or 'test' not in spec:
            _format_error('Manifest "%s" needs both train and test entries' % path)
        train, test = _load_part(spec, 'train', base), _load_part(spec, 'test', base)
    else:
        _format_error('Unknown dataset format "%s" in "%s"' % (fmt, path))
    if spec.get('normalize', fmt != 'synthetic'):
        train, test = normalize_unit(train), normalize_unit(test)
    if train.p != test.p:
        _format_error('Train dimension %d differs from test dimension %d' % (train.p, test.p))
    return train, test
