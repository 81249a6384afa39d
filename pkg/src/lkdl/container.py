"""
Versioned binary container shared by every persisted model.

Layout (all integers little-endian):

    magic          4 bytes  b"LKDL"
    version        u16
    record kind    u16
    kernel         u8 kind code, u32 degree, f64 sigma, f64 offset
    dims           u32 p, u32 c, u32 k   (p, c, k for a Nystrom map;
                                          rows, columns, 0 otherwise)
    metadata       u32 length + UTF-8 JSON
    array count    u16
    per array      u8 name length, name, u8 ndim, u32 per dimension,
                   float64 little-endian values in row-major order
"""
import json
import struct
import logging
from collections import namedtuple, OrderedDict

import numpy as np

from .kernels import KernelSpec, LINEAR, POLYNOMIAL, GAUSSIAN

log = logging.getLogger(__name__)

MAGIC = b'LKDL'
FORMAT_VERSION = 1

NYSTROM_MAP = 1
DICTIONARY = 2
COEFFICIENT_DICTIONARY = 3
CLASS_MODEL = 4
LCKSVD_MODEL = 5
KERNEL_CLASS_MODEL = 6
RECORD_KINDS = {NYSTROM_MAP: 'nystrom map',
                DICTIONARY: 'dictionary',
                COEFFICIENT_DICTIONARY: 'coefficient dictionary',
                CLASS_MODEL: 'class dictionary model',
                LCKSVD_MODEL: 'LC-KSVD model',
                KERNEL_CLASS_MODEL: 'kernel class dictionary model'}

_KERNEL_CODES = {None: 0, LINEAR: 1, POLYNOMIAL: 2, GAUSSIAN: 3}
_KERNEL_NAMES = dict((code, name) for name, code in _KERNEL_CODES.items())

Record = namedtuple('Record', 'kind, kernel, dims, metadata, arrays')

class ContainerError(ValueError):
    pass

def _fail( msg ):
    log.error( msg )
    raise ContainerError( msg )

def encode( kind, arrays, kernel=None, dims=(0, 0, 0), metadata=None ):
    parts = [MAGIC, struct.pack('<HH', FORMAT_VERSION, kind)]
    if kernel is None:
        parts.append(struct.pack('<BIdd', 0, 0, 0.0, 0.0))
    else:
        parts.append(struct.pack('<BIdd', _KERNEL_CODES[kernel.kind], int(kernel.degree),
                                 float(kernel.sigma), float(kernel.offset)))
    parts.append(struct.pack('<III', *[int(d) for d in dims]))
    text = json.dumps(metadata or {}, sort_keys=True).encode('utf-8')
    parts.append(struct.pack('<I', len(text)))
    parts.append(text)
    arrays = list(arrays.items()) if isinstance(arrays, dict) else list(arrays)
    parts.append(struct.pack('<H', len(arrays)))
    for name, array in arrays:
        array = np.ascontiguousarray(array, dtype='<f8')
        name = name.encode('utf-8')
        parts.append(struct.pack('<B', len(name)))
        parts.append(name)
        parts.append(struct.pack('<B', array.ndim))
        parts.append(struct.pack('<%dI' % array.ndim, *array.shape))
        parts.append(array.tobytes(order='C'))
    return b''.join(parts)

class _Reader(object):

    def __init__(self, data):
        self.data = data
        self.offset = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            _fail('Truncated container at byte %d' % self.offset)
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def raw(self, size):
        if self.offset + size > len(self.data):
            _fail('Truncated container at byte %d' % self.offset)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

def decode( data, expected_kind=None ):
    reader = _Reader(data)
    if reader.raw(4) != MAGIC:
        _fail('Not an LKDL container (bad magic)')
    version, kind = reader.take('<HH')
    if version != FORMAT_VERSION:
        _fail('Unsupported container version %d' % version)
    if kind not in RECORD_KINDS:
        _fail('Unknown record kind %d' % kind)
    if expected_kind is not None and kind != expected_kind:
        _fail('Expected a %s, found a %s' % (RECORD_KINDS[expected_kind], RECORD_KINDS[kind]))
    code, degree, sigma, offset = reader.take('<BIdd')
    if code not in _KERNEL_NAMES:
        _fail('Unknown kernel code %d' % code)
    kernel = None
    if code:
        kernel = KernelSpec(_KERNEL_NAMES[code], degree=degree, sigma=sigma, offset=offset)
    dims = reader.take('<III')
    length, = reader.take('<I')
    metadata = json.loads(reader.raw(length).decode('utf-8'))
    count, = reader.take('<H')
    arrays = OrderedDict()
    for _ in range(count):
        name_length, = reader.take('<B')
        name = reader.raw(name_length).decode('utf-8')
        ndim, = reader.take('<B')
        shape = reader.take('<%dI' % ndim)
        size = int(np.prod(shape)) * 8
        arrays[name] = np.frombuffer(reader.raw(size), dtype='<f8').reshape(shape).astype(float)
    if reader.offset != len(data):
        _fail('Trailing bytes after the last array')
    return Record(kind, kernel, tuple(dims), metadata, arrays)

def write( path, kind, arrays, kernel=None, dims=(0, 0, 0), metadata=None ):
    with open(path, 'wb') as handle:
        handle.write(encode(kind, arrays, kernel, dims, metadata))

def read( path, expected_kind=None ):
    with open(path, 'rb') as handle:
        return decode(handle.read(), expected_kind)
