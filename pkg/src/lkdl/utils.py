import os
import time
import logging

import numpy as np

log = logging.getLogger(__name__)

# The only generator the experiment configs may name
RNG_ALGORITHM = 'PCG64'
RNG_VERSION = 1

def make_rng( seed ):
    """
    Create the pinned PCG64 generator for a 64-bit seed
    """
    if seed is None or int(seed) < 0:
        msg = 'Seeds must be non-negative integers, got "%s"' % seed
        log.error( msg )
        raise ValueError( msg )
    return np.random.Generator( np.random.PCG64( int(seed) ) )

def derive_seed( master_seed, index ):
    """
    Derive the seed of a repeat (or class, or sweep point) from a master seed.

    Seeds are split by counter through SeedSequence spawn keys, so every
    derived stream is independent of the others and reproducible.
    """
    sequence = np.random.SeedSequence( int(master_seed), spawn_key=(int(index),) )
    return int( sequence.generate_state(1, dtype=np.uint64)[0] )

def column_norms( X ):
    return np.sqrt( np.sum(X * X, axis=0) )

def normalize_columns( X ):
    """
    Scale every column of X to unit l2 norm, returning (X_normalized, norms).
    Zero columns are left untouched and reported with a zero norm.
    """
    norms = column_norms( X )
    scale = np.where(norms > 0, norms, 1.0)
    return X / scale, norms

def create_directory( directory ):
    """
    Create a directory if it doesn't already exist
    """
    if os.path.isdir( directory ):
        return
    try:
        os.makedirs( directory )
    except OSError:
        msg = 'Unable to create directory "%s"' % directory
        log.error( msg )
        raise IOError( msg )

class Stopwatch(object):
    """
    Monotonic wall-clock timer, reported in seconds at millisecond resolution

        with Stopwatch() as watch:
            ...
        watch.seconds
    """

    def __init__(self):
        self._start = None
        self.seconds = 0.0

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc_info):
        elapsed = time.perf_counter() - self._start
        self.seconds = round(elapsed, 3)
        return False
