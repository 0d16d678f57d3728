"""
Utilities used in perchs package.

License and Copyright
---------------------

ASL 2.0
"""

import collections
import math
import numbers

import numpy as np

VALID_INT_TYPES = (numbers.Integral, )
VALID_REAL_TYPES = (numbers.Real, )

_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def is_int(value):
    """ Check if given value is an integer (bool excluded). """
    return isinstance(value, VALID_INT_TYPES) and not isinstance(value, bool)


def is_real(value):
    """ Check if given value is a real number (bool excluded). """
    return isinstance(value, VALID_REAL_TYPES) and not isinstance(value, bool)


def splitmix64(values):
    """Vectorized splitmix64 finalizer on unsigned 64-bit integers."""
    z = np.asarray(values, dtype=np.uint64)
    with np.errstate(over='ignore'):
        z = (z + _GOLDEN) & _MASK64
        z = ((z ^ (z >> np.uint64(30))) * _MIX1) & _MASK64
        z = ((z ^ (z >> np.uint64(27))) * _MIX2) & _MASK64
        z = z ^ (z >> np.uint64(31))
    return z


def site_uniform(seed, i, j, stream=0):
    """Return uniforms in [0, 1) attached to lattice sites (i, j).

    The value only depends on (seed, stream, i, j), so shifting the lattice
    by whole periods shifts the random field with it.
    """
    i = np.asarray(i, dtype=np.int64).astype(np.uint64)
    j = np.asarray(j, dtype=np.int64).astype(np.uint64)
    with np.errstate(over='ignore'):
        key = splitmix64(np.uint64(seed % 2 ** 64))
        key = splitmix64(key ^ np.uint64(stream))
        z = splitmix64(key ^ i)
        z = splitmix64(z ^ (j * _GOLDEN))
    return (z >> np.uint64(11)).astype(np.float64) / float(2 ** 53)


def format_float(value):
    """Serialize a float with 17 significant digits."""
    return '%.17g' % value


def to_uint8(values, defined=None):
    """Scale an array linearly onto 0..255; undefined cells become 0."""
    values = np.asarray(values, dtype=float)
    if defined is None:
        defined = np.isfinite(values)
    out = np.zeros(values.shape, dtype=np.uint8)
    if not defined.any():
        return out
    lo = values[defined].min()
    hi = values[defined].max()
    if hi > lo:
        scaled = (values[defined] - lo) / (hi - lo) * 255.0
    else:
        scaled = np.full(int(defined.sum()), 255.0)
    out[defined] = np.rint(scaled).astype(np.uint8)
    return out


def write_pgm(path, image):
    """Write a (nx, ny) uint8 array as a binary PGM (P5) file.

    Array index i runs along x and j along y; the first image row is the top
    (largest y) grid row.
    """
    image = np.asarray(image, dtype=np.uint8)
    nx, ny = image.shape
    rows = np.ascontiguousarray(image.T[::-1, :])
    fileh = open(path, 'wb')
    try:
        fileh.write(('P5\n%d %d\n255\n' % (nx, ny)).encode('ascii'))
        fileh.write(rows.tobytes())
    finally:
        fileh.close()


def read_pgm(path):
    """Read a binary PGM written by :py:func:`write_pgm` back to (nx, ny)."""
    fileh = open(path, 'rb')
    try:
        data = fileh.read()
    finally:
        fileh.close()
    fields = []
    pos = 0
    while len(fields) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    pos += 1
    if fields[0] != b'P5':
        raise ValueError("not a binary PGM file: %s" % path)
    nx, ny = int(fields[1]), int(fields[2])
    rows = np.frombuffer(data[pos:pos + nx * ny], dtype=np.uint8)
    return rows.reshape(ny, nx)[::-1, :].T.copy()


METRICS_HEADER = ('experiment_id', 'epsilon', 'seed', 't', 'metric', 'value')


class MetricsRecord(collections.namedtuple('MetricsRecord', METRICS_HEADER)):
    """One row of a metrics CSV.

    ``t`` is the time of temporal experiments and the abscissa (radius,
    level, scale index) of the others.
    """
    __slots__ = ()

    def __new__(cls, experiment_id, epsilon, seed, t, metric, value):
        value = float(value)
        if not math.isfinite(value):
            raise ValueError("metric %s has a non-finite value" % metric)
        return super(MetricsRecord, cls).__new__(
            cls, str(experiment_id), float(epsilon), int(seed), float(t),
            str(metric), value)

    def to_row(self):
        return ','.join((self.experiment_id, format_float(self.epsilon),
                         '%d' % self.seed, format_float(self.t), self.metric,
                         format_float(self.value)))

    @classmethod
    def from_row(cls, line):
        fields = line.rstrip('\r\n').split(',')
        if len(fields) != len(METRICS_HEADER):
            raise ValueError("bad metrics row: %r" % line)
        return cls(fields[0], float(fields[1]), int(fields[2]),
                   float(fields[3]), fields[4], float(fields[5]))
