"""
End-to-end LKDL runs: preprocessing (landmarks, Nystrom map, virtual
samples), per-class or LC-KSVD training, classification and the CSV reports
of experiments, sweeps and approximation-error benchmarks.
"""
import os
import sys
import csv
import json
import logging
import functools
import multiprocessing
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __VERSION__
from . import classify, lcksvd, nystrom, container
from .config import LINEAR_PIPELINE, LKDL_PIPELINE, KERNEL_BASELINE, apply_overrides, validate
from .datasets import LabeledDataset, load_manifest, subsample_fraction
from .kernels import kernel_matrix, MEMORY_BUDGET
from .sampling import KernelBudgetError, SAMPLING_METHODS
from .utils import create_directory, derive_seed, Stopwatch

log = logging.getLogger(__name__)

EXPERIMENT_COLUMNS = ['pipeline', 'kernel', 'sampler', 'c_over_N', 'k', 'repeat',
                      'accuracy', 't_preprocess', 't_train', 't_test']
SWEEP_COLUMNS = ['pipeline', 'kernel', 'sampler', 'c_over_N', 'k', 'repeats',
                 'accuracy', 'accuracy_std', 't_preprocess', 't_train', 't_test']
APPROX_COLUMNS = ['sampler', 'c_over_N', 'seed', 'error']
SWEEP_AXES = ('c_over_N', 'noise_sigma', 'missing_fraction', 'train_fraction',
              'atoms_per_class', 'cardinality')

# Offsets of the stage seeds derived from a repeat seed
SAMPLER_STREAM = 0
CORRUPTION_STREAM = 1
SUBSAMPLE_STREAM = 2
LEARNER_STREAM = 3

MAP_FILE = 'nystrom_map.lkdl'
MODEL_FILE = 'model.lkdl'

class StageError(RuntimeError):

    def __init__(self, stage, error):
        self.stage = stage
        super(StageError, self).__init__('[%s] %s' % (stage, error))

@dataclass
class RunReport(object):
    rows: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def _values(self, key):
        return np.array([row[key] for row in self.rows if row.get(key) is not None], dtype=float)

    def mean(self, key):
        values = self._values(key)
        return float(values.mean()) if values.size else float('nan')

    def std(self, key):
        values = self._values(key)
        return float(values.std()) if values.size else float('nan')

    def median(self, key):
        values = self._values(key)
        return float(np.median(values)) if values.size else float('nan')

    @property
    def accuracy(self):
        return self.mean('accuracy')

    @property
    def accuracy_std(self):
        return self.std('accuracy')

@dataclass
class PreparedData(object):
    train: object
    test: object
    F_train: np.ndarray
    F_test: np.ndarray
    nystrom_map: object = None
    c_over_n: float = None

def _stage( name, function, *args, **kwargs ):
    try:
        return function(*args, **kwargs)
    except StageError:
        raise
    except Exception as error:
        raise StageError(name, error)

def load_data( config, seed ):
    """
    Train and test sets with the configured subsampling and test corruption
    """
    train, test = load_manifest(config.dataset)
    if config.train_fraction < 1.0:
        train = subsample_fraction(train, config.train_fraction, derive_seed(seed, SUBSAMPLE_STREAM))
    corruption = config.corruption
    if corruption is not None:
        corruption_seed = derive_seed(seed, CORRUPTION_STREAM)
        if corruption.kind == 'gaussian':
            samples = classify.corrupt_gaussian(test.samples, corruption.sigma, corruption_seed,
                                                renormalize=test.normalized)
        else:
            samples = classify.corrupt_missing(test.samples, corruption.fraction, corruption_seed,
                                               renormalize=test.normalized)[0]
        test = LabeledDataset(samples, test.labels, test.source, test.normalized)
    return train, test

def preprocess( config, train, test, seed ):
    """
    Virtual samples for the LKDL pipeline; the other pipelines keep the
    input samples
    """
    if config.pipeline != LKDL_PIPELINE:
        return PreparedData(train, test, train.samples, test.samples)
    kernel = config.kernel.spec()
    sampler = config.sampler.spec(train.n, derive_seed(seed, SAMPLER_STREAM))
    nystrom_map = nystrom.fit(train.samples, kernel, sampler, config.k)
    F_train = nystrom.transform(nystrom_map, train.samples)
    F_test = nystrom.transform(nystrom_map, test.samples)
    return PreparedData(train, test, F_train, F_test, nystrom_map, sampler.c / float(train.n))

def train_model( config, data, seed ):
    learner = config.learner
    learner_seed = derive_seed(seed, LEARNER_STREAM)
    labels = data.train.labels
    if config.pipeline == KERNEL_BASELINE:
        return classify.train_kernel_per_class(data.train.samples, labels, config.kernel.spec(),
                                               learner.m_per_class, learner.q, learner.iterations,
                                               seed=learner_seed)
    if learner.type == 'lcksvd':
        return lcksvd.train(data.F_train, labels, learner.m, learner.q, learner.alpha, learner.beta,
                            learner.iterations, variant=learner.variant, tau2=learner.tau2,
                            seed=learner_seed)
    return classify.train_per_class(data.F_train, labels, learner.m_per_class, learner.q,
                                    learner.iterations, method=learner.method, seed=learner_seed)

def predict( config, model, data ):
    """
    Returns (predicted labels, L x N residuals or scores)
    """
    if config.pipeline == KERNEL_BASELINE:
        return classify.classify_kernel(model, data.test.samples)
    if config.learner.type == 'lcksvd':
        return lcksvd.predict_batch(model, data.F_test, config.learner.test_q)
    return classify.classify_batch(model, data.F_test)

def describe( config, c_over_n=None ):
    """
    The identifying columns of a report row
    """
    lkdl = config.pipeline == LKDL_PIPELINE
    kernel = 'linear' if config.pipeline == LINEAR_PIPELINE else str(config.kernel.spec())
    return {'pipeline': config.pipeline,
            'kernel': kernel,
            'sampler': config.sampler.method if lkdl else '',
            'c_over_N': c_over_n if lkdl else '',
            'k': config.k if lkdl else ''}

def measure_approximation( config, data ):
    n = data.train.n
    if n * n * 8 > MEMORY_BUDGET:
        log.warning('Skipping the approximation error, the %d x %d kernel matrix exceeds the budget' % (n, n))
        return None
    K = kernel_matrix(config.kernel.spec(), data.train.samples)
    return nystrom.approximation_error(K, data.F_train.T.dot(data.F_train))

def run_repeat( config, repeat, artifacts=None ):
    """
    One full pipeline run with the seed of the given repeat. Stage failures
    are returned as {'repeat', 'stage', 'message'} instead of raised.
    A failed approximation error leaves approx_error empty. When artifacts
    is a dict it receives the prepared data and the trained model.
    """
    seed = config.repeat_seed(repeat)
    try:
        train, test = _stage('load', load_data, config, seed)
        with Stopwatch() as t_preprocess:
            data = _stage('preprocess', preprocess, config, train, test, seed)
        with Stopwatch() as t_train:
            model = _stage('train', train_model, config, data, seed)
        with Stopwatch() as t_test:
            predicted, _ = _stage('test', predict, config, model, data)
        row = describe(config, data.c_over_n)
        row.update({'repeat': repeat,
                    'accuracy': classify.accuracy(test.labels, predicted),
                    't_preprocess': t_preprocess.seconds,
                    't_train': t_train.seconds,
                    't_test': t_test.seconds})
    except StageError as error:
        log.error('Repeat %d failed: %s' % (repeat, error))
        return {'repeat': repeat, 'stage': error.stage, 'message': str(error)}
    if config.measure_approx_error and data.nystrom_map is not None:
        try:
            row['approx_error'] = _stage('approx-error', measure_approximation, config, data)
        except StageError as error:
            log.error('Repeat %d approximation error failed: %s' % (repeat, error))
            row['approx_error'] = None
    if artifacts is not None:
        artifacts.update(data=data, model=model)
    log.info('Repeat %d accuracy %.4f' % (repeat, row['accuracy']))
    return row

def _format( value ):
    if isinstance(value, float):
        return '%.6g' % value if np.isfinite(value) else 'nan'
    return value

def write_rows( path, columns, rows ):
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row.get(column, '')) for column in columns])
    log.info('Wrote %d rows to "%s"' % (len(rows), path))

def _timestamp():
    return datetime.now(timezone.utc).isoformat()

class LKDLPipeline( object ):
    """
    Output layout: <output>/log_files, <output>/artifacts, <output>/results
    """

    def __init__( self, config, debug=False ):
        self.config = config
        self.debug = debug
        self.started = _timestamp()
        self._initialize_project()
        self._initialize_logging()

    def _initialize_project( self ):
        create_directory( self.config.output )
        for d in ['log_files', 'artifacts', 'results']:
            sub_dir = os.path.join( self.config.output, d )
            create_directory( sub_dir )
            setattr(self, d, sub_dir)

    def _initialize_logging( self ):
        log_format = "%(asctime)s [%(levelname)s] %(funcName)s %(message)s"
        log_file = os.path.join( self.log_files, "lkdl.log" )
        logging.basicConfig( level=logging.DEBUG if self.debug else logging.INFO,
                             format=log_format,
                             handlers=[logging.StreamHandler( sys.stdout ),
                                       logging.FileHandler( log_file )],
                             force=True )

    def _artifact( self, name ):
        return os.path.join( self.artifacts, name )

    def _result( self, name ):
        return os.path.join( self.results, name )

    def write_manifest( self, command, extra=None ):
        manifest = {'command': command,
                    'version': __VERSION__,
                    'rng': self.config.rng.model_dump(),
                    'config': self.config.dump(),
                    'started': self.started,
                    'finished': _timestamp()}
        manifest.update(extra or {})
        with open(self._result('manifest.json'), 'w') as handle:
            json.dump(manifest, handle, indent=2, sort_keys=True)

    def _repeats( self, config, artifacts=None ):
        """
        Run every repeat; with artifacts, repeat 0 runs in this process and
        hands over its data and model
        """
        runner = functools.partial(run_repeat, config)
        repeats = list(range(config.repeats))
        results = []
        if artifacts is not None:
            results.append(run_repeat(config, repeats.pop(0), artifacts))
        if config.threads > 1 and len(repeats) > 1:
            log.info('Running %d repeats on %d processes' % (len(repeats), config.threads))
            pool = multiprocessing.Pool( min(config.threads, len(repeats)) )
            try:
                results.extend(pool.map(runner, repeats))
            finally:
                pool.close()
                pool.join()
        else:
            results.extend(runner(repeat) for repeat in repeats)
        report = RunReport()
        for result in sorted(results, key=lambda r: r['repeat']):
            if 'stage' in result:
                report.failures.append(result)
            else:
                report.rows.append(result)
        return report

    def run_preprocess( self ):
        """
        Fit the Nystrom map on the train set and save it with the virtual
        train and test samples
        """
        config = self.config
        if config.pipeline == KERNEL_BASELINE:
            msg = 'The kernel baseline has no preprocessing stage'
            log.error( msg )
            raise ValueError( msg )
        train, test = _stage('load', load_data, config, config.seed)
        with Stopwatch() as watch:
            data = _stage('preprocess', preprocess, config, train, test, config.seed)
        log.info('Preprocessing took %.3f s' % watch.seconds)
        if data.nystrom_map is not None:
            nystrom.save(data.nystrom_map, self._artifact(MAP_FILE))
        np.save(self._artifact('F_train.npy'), data.F_train)
        np.save(self._artifact('F_test.npy'), data.F_test)
        np.save(self._artifact('labels_train.npy'), train.labels)
        np.save(self._artifact('labels_test.npy'), test.labels)
        self.write_manifest('preprocess', {'t_preprocess': watch.seconds})
        return data

    def run_train( self ):
        config = self.config
        train, test = _stage('load', load_data, config, config.seed)
        data = _stage('preprocess', preprocess, config, train, test, config.seed)
        with Stopwatch() as watch:
            model = _stage('train', train_model, config, data, config.seed)
        log.info('Training took %.3f s' % watch.seconds)
        if data.nystrom_map is not None:
            nystrom.save(data.nystrom_map, self._artifact(MAP_FILE))
        self._save_model(model)
        self.write_manifest('train', {'t_train': watch.seconds})
        return model

    def _save_model( self, model ):
        path = self._artifact(MODEL_FILE)
        if isinstance(model, classify.KernelClassModel):
            classify.save_kernel_model(model, path)
        elif isinstance(model, lcksvd.LCKSVDModel):
            lcksvd.save(model, path)
        else:
            classify.save_model(model, path)
        log.info('Saved the trained model to "%s"' % path)

    def _load_model( self ):
        path = self._artifact(MODEL_FILE)
        kind = container.read(path).kind
        if kind == container.KERNEL_CLASS_MODEL:
            return classify.load_kernel_model(path)
        if kind == container.LCKSVD_MODEL:
            return lcksvd.load(path)
        return classify.load_model(path)

    def run_classify( self ):
        """
        Classify the test set with the artifacts of a previous train run
        """
        config = self.config
        _, test = _stage('load', load_data, config, config.seed)
        model = self._load_model()
        F_test = test.samples
        if config.pipeline == LKDL_PIPELINE:
            F_test = nystrom.transform(nystrom.load(self._artifact(MAP_FILE)), test.samples)
        data = PreparedData(None, test, None, F_test)
        with Stopwatch() as watch:
            predicted, residuals = _stage('test', predict, config, model, data)
        score = classify.accuracy(test.labels, predicted)
        log.info('Classified %d samples in %.3f s, accuracy %.4f' % (test.n, watch.seconds, score))
        classify.write_predictions(self._result('predictions.csv'), test.labels, predicted,
                                   residuals, model.labels)
        self.write_manifest('classify', {'accuracy': score, 't_test': watch.seconds})
        return predicted, residuals

    def run_experiment( self, artifacts=None ):
        config = self.config
        log.info('Running the %s pipeline %d times' % (config.pipeline, config.repeats))
        report = self._repeats(config, artifacts)
        columns = list(EXPERIMENT_COLUMNS)
        if config.measure_approx_error:
            columns.append('approx_error')
        write_rows(self._result('experiment.csv'), columns, report.rows)
        log.info('Accuracy %.4f +- %.4f over %d repeats (%d failed)' % (
            report.accuracy, report.accuracy_std, len(report.rows), len(report.failures)))
        self.write_manifest('experiment', {'failures': report.failures,
                                           'accuracy': report.accuracy,
                                           'accuracy_std': report.accuracy_std})
        return report

    def sweep_config( self, axis, value ):
        """
        The config of one sweep point
        """
        learner = self.config.learner
        if axis == 'c_over_N':
            overrides = ['sampler.c=null', 'sampler.c_over_n=%r' % float(value)]
        elif axis == 'noise_sigma':
            overrides = ['corruption={"kind": "gaussian", "sigma": %r}' % float(value)]
        elif axis == 'missing_fraction':
            overrides = ['corruption={"kind": "missing", "fraction": %r}' % float(value)]
        elif axis == 'train_fraction':
            overrides = ['train_fraction=%r' % float(value)]
        elif axis == 'atoms_per_class':
            key = 'learner.m' if learner.type == 'lcksvd' else 'learner.m_per_class'
            overrides = ['%s=%d' % (key, int(value))]
        elif axis == 'cardinality':
            overrides = ['learner.q=%d' % int(value)]
        else:
            msg = 'Unknown sweep axis "%s", expected one of %s' % (axis, ', '.join(SWEEP_AXES))
            log.error( msg )
            raise ValueError( msg )
        return validate(apply_overrides(self.config.dump(), overrides))

    def run_sweep( self, axis, values ):
        if not values:
            msg = 'A sweep needs at least one value'
            log.error( msg )
            raise ValueError( msg )
        rows, failures = [], []
        for value in values:
            config = self.sweep_config(axis, value)
            log.info('Sweep point %s=%s' % (axis, value))
            report = self._repeats(config)
            failures.extend(dict(failure, **{axis: value}) for failure in report.failures)
            c_over_n = report.mean('c_over_N') if config.pipeline == LKDL_PIPELINE else None
            row = describe(config, c_over_n)
            row.update({axis: value,
                        'repeats': len(report.rows),
                        'accuracy': report.accuracy,
                        'accuracy_std': report.accuracy_std,
                        't_preprocess': report.mean('t_preprocess'),
                        't_train': report.mean('t_train'),
                        't_test': report.mean('t_test')})
            if config.measure_approx_error:
                row['approx_error'] = report.median('approx_error')
            rows.append(row)
        columns = [axis] + [column for column in SWEEP_COLUMNS if column != axis]
        if self.config.measure_approx_error:
            columns.append('approx_error')
        write_rows(self._result('sweep_%s.csv' % axis), columns, rows)
        self.write_manifest('sweep', {'axis': axis, 'values': list(values), 'failures': failures})
        return rows

    def approx_error( self, samplers=SAMPLING_METHODS, fractions=(0.05, 0.1, 0.2, 0.4), seeds=10, rank=None ):
        """
        Normalized Nystrom approximation error of the train kernel matrix per
        sampler, c/N and seed, plus the rank-c eigendecomposition reference.
        The Nystrom rank is c unless rank is given.
        """
        config = self.config
        train, _ = load_data(config, config.seed)
        n = train.n
        if n * n * 8 > MEMORY_BUDGET:
            msg = 'The %d x %d kernel matrix exceeds the memory budget, subsample the train set' % (n, n)
            log.error( msg )
            raise KernelBudgetError( msg )
        kernel = config.kernel.spec()
        K = kernel_matrix(kernel, train.samples)
        rows = []
        for fraction in fractions:
            c = max(1, int(round(fraction * n)))
            k = c if rank is None else min(rank, c)
            for method in samplers:
                for index in range(seeds):
                    seed = derive_seed(config.seed, index)
                    sampler = config.sampler.model_copy(update={'method': method, 'c': c, 'c_over_n': None, 'seed': None})
                    try:
                        nystrom_map = nystrom.fit(train.samples, kernel, sampler.spec(n, seed), k)
                    except (ValueError, KernelBudgetError) as error:
                        log.warning('%s sampling at c=%d failed: %s' % (method, c, error))
                        continue
                    error = nystrom.approximation_error(K, nystrom.nystrom_approximation(nystrom_map, train.samples))
                    rows.append({'sampler': method, 'c_over_N': fraction, 'seed': seed, 'error': error})
            rows.append({'sampler': 'svd', 'c_over_N': fraction, 'seed': '',
                         'error': nystrom.approximation_error(K, nystrom.svd_approximation(K, k))})
        write_rows(self._result('approx_error.csv'), APPROX_COLUMNS, rows)
        self.write_manifest('approx-error', {'samplers': list(samplers), 'fractions': list(fractions),
                                             'seeds': seeds})
        return rows

    def run_lcksvd( self ):
        """
        LC-KSVD experiment plus the per-class atom usage of the test set
        """
        config = self.config
        if config.learner.type != 'lcksvd':
            msg = 'The lcksvd command needs a learner of type "lcksvd"'
            log.error( msg )
            raise ValueError( msg )
        artifacts = {}
        report = self.run_experiment(artifacts)
        if 'model' not in artifacts:
            msg = 'Repeat 0 failed, there is no LC-KSVD model to report the atom usage of'
            log.error( msg )
            raise ValueError( msg )
        model, data = artifacts['model'], artifacts['data']
        self._save_model(model)
        test = data.test
        usage = dict((label, lcksvd.atom_usage(model, data.F_test, test.labels, label, config.learner.test_q))
                     for label in test.classes)
        lcksvd.write_atom_usage(self._result('atom_usage.csv'), usage)
        return report
