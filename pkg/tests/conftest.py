import os
import json
import struct

import numpy as np
import pytest

from lkdl.utils import make_rng

def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale end-to-end runs (deselect with -m 'not slow')")

@pytest.fixture
def rng():
    return make_rng(1234)

@pytest.fixture
def samples(rng):
    """
    A small 5 x 40 sample matrix
    """
    return rng.standard_normal((5, 40))

def write_idx_images(path, images):
    images = np.asarray(images, dtype=np.uint8)
    with open(path, 'wb') as handle:
        handle.write(struct.pack('>IIII', 2051, *images.shape))
        handle.write(images.tobytes())

def write_idx_labels(path, labels):
    labels = np.asarray(labels, dtype=np.uint8)
    with open(path, 'wb') as handle:
        handle.write(struct.pack('>II', 2049, labels.size))
        handle.write(labels.tobytes())

@pytest.fixture
def circles_manifest(tmp_path):
    """
    Manifest of a small synthetic concentric-circles problem
    """
    def make(n_per_class=60, noise_sigma=0.1, seed=0):
        path = os.path.join(str(tmp_path), 'circles_%d_%d.json' % (n_per_class, seed))
        spec = {'format': 'synthetic',
                'normalize': False,
                'synthetic': {'generator': 'circles', 'n_per_class': n_per_class,
                              'noise_sigma': noise_sigma, 'test_fraction': 0.5, 'seed': seed}}
        with open(path, 'w') as handle:
            json.dump(spec, handle)
        return path
    return make
