"""Perforated domains on uniform grids.

=================
Domain generation
=================

Usage::

    from perchs.geometry import GridSpec, PerforationModel, generate_domain

    grid = GridSpec.box(-2.0, 2.0, -2.0, 2.0, 1.0 / 64)
    model = PerforationModel('square_site', inclusion_scale=0.5,
                             occupancy_prob=0.5, period=0.125, seed=7)
    mask = generate_domain(model, grid)
    print(mask.n_fluid, volume_fraction(mask))

Description
-----------

    A perforated domain is the plane minus a family of well separated
    inclusions placed on a lattice. Each lattice site carries an inclusion
    with probability ``occupancy_prob``; the decision (and any random shape
    parameter) is a hash of the seed and the site coordinates, so the law of
    the domain is invariant under translations by whole periods.

    Supported kinds:

    none
        no perforations at all

    square_site
        square lattice of spacing ``period``, a centred square of side
        ``inclusion_scale * period`` per occupied site

    triangular_site
        triangular lattice with nearest neighbour distance ``period``,
        a disc of diameter ``inclusion_scale * period`` per occupied site

    chessboard
        irregular chessboard whose column widths and row heights are drawn in
        [period/2, period]; cells of even parity are occupied with
        probability ``occupancy_prob`` and carry a centred sub-rectangle
        scaled by ``inclusion_scale``

    ``shape_jitter`` shrinks every inclusion by an independent factor drawn
    in [1 - shape_jitter, 1].

Rasterization
-------------

    A cell is solid iff its centre lies strictly inside an inclusion. Faces
    between two fluid cells are open, all the others are closed (zero flux).
    Rasterization may cut the fluid set into pieces at coarse resolution;
    such samples are repaired by opening the fewest solid cells along a
    shortest path, at most three times.

    Periodic masks (used by the cell problems) wrap opposite edges. The
    lattice is stretched by an affine map so that a whole number of periods
    fits the grid; the stretch factors are recorded in the mask metadata.

License and Copyright
---------------------

ASL 2.0
"""

import collections
import json
import logging
import math

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from perchs.Exceptions import GeometryError
from perchs.utils import is_int, is_real, site_uniform, write_pgm

LOG = logging.getLogger(__name__)

KINDS = ('none', 'square_site', 'triangular_site', 'chessboard')

# random streams attached to lattice sites
_STREAM_OCCUPANCY = 0
_STREAM_COLUMN = 1
_STREAM_ROW = 2
_STREAM_JITTER = 4

_REPAIR_LIMIT = 3
_SQRT3_2 = math.sqrt(3.0) / 2.0


class GridSpec(object):
    """Uniform cell centred grid.

    Cell (i, j) covers [ox + i h, ox + (i+1) h] x [oy + j h, oy + (j+1) h];
    arrays attached to the grid have shape (nx, ny).
    """
    def __init__(self, nx, ny, h, origin=(0.0, 0.0)):
        """
        Arguments:
            nx, ny
                cell counts (at least 4 each)
            h
                cell width in physical units
            origin
                lower left corner

        Raise:
            TypeError     - wrong input data types provided
            GeometryError - invalid sizes
        """
        if not is_int(nx) or not is_int(ny):
            raise TypeError("'nx' and 'ny' should be integers")
        if not is_real(h):
            raise TypeError("'h' should be a real number")
        if nx < 4 or ny < 4:
            raise GeometryError("grid needs at least 4x4 cells, got %dx%d" %
                                (nx, ny))
        if not h > 0:
            raise GeometryError("cell width must be positive, got %r" % h)
        self.nx = int(nx)
        self.ny = int(ny)
        self.h = float(h)
        self.origin = (float(origin[0]), float(origin[1]))

    @classmethod
    def box(cls, xmin, xmax, ymin, ymax, h):
        """Grid covering [xmin, xmax] x [ymin, ymax] with cells of width h."""
        nx = int(round((xmax - xmin) / h))
        ny = int(round((ymax - ymin) / h))
        return cls(nx, ny, h, origin=(xmin, ymin))

    @property
    def shape(self):
        return (self.nx, self.ny)

    @property
    def extent(self):
        return (self.nx * self.h, self.ny * self.h)

    def axes(self):
        """Return the x and y coordinates of the cell centres."""
        xs = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        ys = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return xs, ys

    def centers(self):
        """Return (X, Y) arrays of cell centre coordinates."""
        xs, ys = self.axes()
        return np.meshgrid(xs, ys, indexing='ij')

    def center_of(self, cell):
        """Physical coordinates of the centre of cell (i, j)."""
        return (self.origin[0] + (cell[0] + 0.5) * self.h,
                self.origin[1] + (cell[1] + 0.5) * self.h)

    def cell_at(self, x, y):
        """Cell (i, j) containing the point (x, y), clipped to the grid."""
        i = int(math.floor((x - self.origin[0]) / self.h))
        j = int(math.floor((y - self.origin[1]) / self.h))
        return (min(max(i, 0), self.nx - 1), min(max(j, 0), self.ny - 1))

    def center_cell(self):
        """The cell containing the centre of the grid."""
        return self.cell_at(self.origin[0] + 0.5 * self.nx * self.h,
                            self.origin[1] + 0.5 * self.ny * self.h)

    def distance_from(self, cell):
        """Array of distances from the centre of ``cell`` to every centre."""
        cx, cy = self.center_of(cell)
        X, Y = self.centers()
        return np.hypot(X - cx, Y - cy)

    def refined(self, factor=2):
        """The same box with cells ``factor`` times smaller."""
        return GridSpec(self.nx * factor, self.ny * factor, self.h / factor,
                        self.origin)

    def to_dict(self):
        return {'nx': self.nx, 'ny': self.ny, 'h': self.h,
                'origin': list(self.origin)}

    @classmethod
    def from_dict(cls, data):
        return cls(data['nx'], data['ny'], data['h'],
                   tuple(data.get('origin', (0.0, 0.0))))

    def __eq__(self, other):
        return isinstance(other, GridSpec) and \
            self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return hash((self.nx, self.ny, self.h, self.origin))

    def __repr__(self):
        return 'GridSpec(nx=%d, ny=%d, h=%r, origin=%r)' % \
            (self.nx, self.ny, self.h, self.origin)


class PerforationModel(object):
    """Law of a random perforated domain."""
    def __init__(self, kind='none', inclusion_scale=0.5, occupancy_prob=1.0,
                 period=1.0, seed=0, shape_jitter=0.0):
        """
        Arguments:
            kind
                one of none, square_site, triangular_site, chessboard
            inclusion_scale
                inclusion size as a fraction of its lattice cell, in (0, 1)
            occupancy_prob
                probability that a site carries an inclusion, in [0, 1]
            period
                microstructure period (epsilon) in physical units
            seed
                64-bit seed of the site hash
            shape_jitter
                random shrink amplitude of the inclusions, in [0, 1)

        Raise:
            TypeError     - wrong input data types provided
            GeometryError - values out of range
        """
        if kind not in KINDS:
            raise GeometryError("unknown perforation kind %r (expected one "
                                "of %s)" % (kind, ', '.join(KINDS)))
        for name, value in (('inclusion_scale', inclusion_scale),
                            ('occupancy_prob', occupancy_prob),
                            ('period', period),
                            ('shape_jitter', shape_jitter)):
            if not is_real(value):
                raise TypeError("'%s' should be a real number" % name)
        if not is_int(seed):
            raise TypeError("'seed' should be integer")
        if not 0.0 < inclusion_scale < 1.0:
            raise GeometryError("inclusion_scale must lie in (0, 1)")
        if not 0.0 <= occupancy_prob <= 1.0:
            raise GeometryError("occupancy_prob must lie in [0, 1]")
        if not period > 0:
            raise GeometryError("period must be positive")
        if not 0.0 <= shape_jitter < 1.0:
            raise GeometryError("shape_jitter must lie in [0, 1)")
        if not 0 <= seed < 2 ** 64:
            raise GeometryError("seed must fit in 64 bits")
        self.kind = kind
        self.inclusion_scale = float(inclusion_scale)
        self.occupancy_prob = float(occupancy_prob)
        self.period = float(period)
        self.seed = int(seed)
        self.shape_jitter = float(shape_jitter)

    @property
    def perforated(self):
        """True when the model can place at least one inclusion."""
        return self.kind != 'none' and self.occupancy_prob > 0.0

    @property
    def deterministic(self):
        """True when every sample of the model is the same periodic domain."""
        return not self.perforated or (self.occupancy_prob >= 1.0 and
                                       self.shape_jitter == 0.0 and
                                       self.kind != 'chessboard')

    def separation_bound(self):
        """Nominal minimal gap d0 between two inclusions."""
        gap = (1.0 - self.inclusion_scale) * self.period
        if self.kind == 'chessboard':
            return 0.5 * gap
        return gap

    def diameter_bound(self):
        """Nominal maximal inclusion diameter."""
        return self.inclusion_scale * self.period * math.sqrt(2.0)

    def with_period(self, period):
        """Copy of the model at another microstructure scale."""
        return PerforationModel(self.kind, self.inclusion_scale,
                                self.occupancy_prob, period, self.seed,
                                self.shape_jitter)

    def with_seed(self, seed):
        """Copy of the model with another seed."""
        return PerforationModel(self.kind, self.inclusion_scale,
                                self.occupancy_prob, self.period, seed,
                                self.shape_jitter)

    def to_dict(self):
        """JSON model descriptor."""
        return {'kind': self.kind,
                'inclusion_scale': self.inclusion_scale,
                'occupancy_prob': self.occupancy_prob,
                'period': self.period,
                'seed': self.seed,
                'shape_jitter': self.shape_jitter}

    @classmethod
    def from_dict(cls, data):
        return cls(data.get('kind', 'none'),
                   data.get('inclusion_scale', 0.5),
                   data.get('occupancy_prob', 1.0),
                   data.get('period', 1.0),
                   data.get('seed', 0),
                   data.get('shape_jitter', 0.0))

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def __eq__(self, other):
        return isinstance(other, PerforationModel) and \
            self.to_dict() == other.to_dict()

    def __ne__(self, other):
        return not self.__eq__(other)

    def __repr__(self):
        return 'PerforationModel(%s)' % ', '.join(
            '%s=%r' % item for item in sorted(self.to_dict().items()))


# shape is 'rect' (hx, hy half sizes) or 'disc' (hx = hy = radius)
Inclusion = collections.namedtuple('Inclusion',
                                   ['shape', 'cx', 'cy', 'hx', 'hy', 'site'])


class SeparationReport(object):
    """Result of :py:func:`verify_separation`."""
    def __init__(self, min_gap, max_diameter, gap_bound, diameter_bound,
                 count):
        self.min_gap = min_gap
        self.max_diameter = max_diameter
        self.gap_bound = gap_bound
        self.diameter_bound = diameter_bound
        self.count = count
        slack = 1e-9 * max(gap_bound, diameter_bound, 1e-300)
        self.passed = (min_gap >= gap_bound - slack and
                       max_diameter <= diameter_bound + slack)

    def __repr__(self):
        return ('SeparationReport(passed=%s, min_gap=%r, max_diameter=%r, '
                'count=%d)' % (self.passed, self.min_gap, self.max_diameter,
                               self.count))


class DomainMask(object):
    """Rasterized perforated domain.

    Attributes:
        grid            - the GridSpec
        fluid           - (nx, ny) bool, True in the fluid region
        open_x, open_y  - bool per face, True when flux may cross; shapes
                          (nx-1, ny) and (nx, ny-1), or (nx, ny) when
                          periodic (the last row/column is the wrap face)
        outer_dirichlet - (nx, ny) bool, fluid cells on the grid edge whose
                          outer faces carry the zero Dirichlet condition
        periodic        - opposite edges identified
        inclusions      - placed inclusions (physical coordinates)

    Masks are immutable after creation.
    """
    def __init__(self, grid, fluid, open_x, open_y, outer_dirichlet,
                 periodic=False, inclusions=(), model=None, metadata=None):
        if not isinstance(grid, GridSpec):
            raise TypeError("'grid' should be a GridSpec")
        fluid = np.array(fluid, dtype=bool)
        if fluid.shape != grid.shape:
            raise GeometryError("fluid array shape %r does not match grid "
                                "%r" % (fluid.shape, grid.shape))
        self.grid = grid
        self.periodic = bool(periodic)
        self.fluid = fluid
        self.open_x = np.array(open_x, dtype=bool)
        self.open_y = np.array(open_y, dtype=bool)
        self.outer_dirichlet = np.array(outer_dirichlet, dtype=bool)
        self.inclusions = tuple(inclusions)
        self.model = model
        self.metadata = dict(metadata or {})
        self.cells = np.flatnonzero(fluid.ravel())
        index = np.full(grid.nx * grid.ny, -1, dtype=np.int64)
        index[self.cells] = np.arange(self.cells.size)
        self.index = index.reshape(grid.shape)
        for array in (self.fluid, self.open_x, self.open_y,
                      self.outer_dirichlet, self.cells, self.index):
            array.flags.writeable = False

    @classmethod
    def from_fluid(cls, grid, fluid, dirichlet=True, periodic=False,
                   **kwargs):
        """Build faces and the Dirichlet layer from a fluid array."""
        fluid = np.array(fluid, dtype=bool)
        if periodic:
            open_x = fluid & np.roll(fluid, -1, axis=0)
            open_y = fluid & np.roll(fluid, -1, axis=1)
            dirichlet = False
        else:
            open_x = fluid[:-1, :] & fluid[1:, :]
            open_y = fluid[:, :-1] & fluid[:, 1:]
        edge = np.zeros(grid.shape, dtype=bool)
        if dirichlet:
            edge[0, :] = edge[-1, :] = True
            edge[:, 0] = edge[:, -1] = True
        return cls(grid, fluid, open_x, open_y, edge & fluid,
                   periodic=periodic, **kwargs)

    @classmethod
    def all_fluid(cls, grid, dirichlet=True, periodic=False):
        """Unperforated mask."""
        return cls.from_fluid(grid, np.ones(grid.shape, dtype=bool),
                              dirichlet=dirichlet, periodic=periodic)

    @property
    def shape(self):
        return self.grid.shape

    @property
    def n_fluid(self):
        return int(self.cells.size)

    @property
    def has_dirichlet(self):
        return bool(self.outer_dirichlet.any())

    @property
    def is_all_fluid(self):
        return bool(self.fluid.all())

    def dirichlet_faces(self):
        """Number of Dirichlet faces along x and along y, per cell."""
        nx_faces = np.zeros(self.shape, dtype=np.int64)
        ny_faces = np.zeros(self.shape, dtype=np.int64)
        if self.periodic:
            return nx_faces, ny_faces
        d = self.outer_dirichlet
        nx_faces[0, :] += d[0, :]
        nx_faces[-1, :] += d[-1, :]
        ny_faces[:, 0] += d[:, 0]
        ny_faces[:, -1] += d[:, -1]
        return nx_faces, ny_faces

    def faces_consistent(self):
        """Check that a face is open iff both adjacent cells are fluid."""
        f = self.fluid
        if self.periodic:
            want_x = f & np.roll(f, -1, axis=0)
            want_y = f & np.roll(f, -1, axis=1)
        else:
            want_x = f[:-1, :] & f[1:, :]
            want_y = f[:, :-1] & f[:, 1:]
        return bool(np.array_equal(want_x, self.open_x) and
                    np.array_equal(want_y, self.open_y))

    def to_image(self):
        """uint8 image: 0 solid, 255 fluid."""
        return np.where(self.fluid, 255, 0).astype(np.uint8)

    def to_pgm(self, path):
        write_pgm(path, self.to_image())

    def descriptor(self):
        """JSON friendly description of how the mask was built."""
        data = {'grid': self.grid.to_dict(), 'periodic': self.periodic}
        if self.model is not None:
            data['model'] = self.model.to_dict()
        data.update(self.metadata)
        return data

    def __repr__(self):
        return 'DomainMask(%r, fluid=%d/%d, periodic=%s)' % \
            (self.grid, self.n_fluid, self.grid.nx * self.grid.ny,
             self.periodic)


#
# placement
#

def _site_range(lo, hi, step, offset=0.0):
    """Indices a such that lattice lines offset + a*step cover [lo, hi]."""
    first = int(math.floor((lo - offset) / step)) - 1
    last = int(math.ceil((hi - offset) / step)) + 1
    return np.arange(first, last + 1)


def _shrink(model, a, b):
    if model.shape_jitter == 0.0:
        return np.ones(np.broadcast(a, b).shape)
    return 1.0 - model.shape_jitter * site_uniform(model.seed, a, b,
                                                   _STREAM_JITTER)


def _occupied(model, a, b):
    if model.occupancy_prob >= 1.0:
        return np.ones(np.broadcast(a, b).shape, dtype=bool)
    return site_uniform(model.seed, a, b,
                        _STREAM_OCCUPANCY) < model.occupancy_prob


def _periods_in(length, step, even=False):
    count = int(round(length / step))
    if even:
        count = 2 * max(1, int(round(length / (2.0 * step))))
    return max(count, 2 if even else 1)


def _place_square(model, grid, periodic, meta):
    P = model.period
    half = 0.5 * model.inclusion_scale * P
    if periodic:
        n = _periods_in(grid.extent[0], P)
        m = _periods_in(grid.extent[1], P)
        sx = grid.extent[0] / (n * P)
        sy = grid.extent[1] / (m * P)
        meta['lattice_stretch'] = [sx, sy]
        meta['lattice_periods'] = [n, m]
        A, B = np.meshgrid(np.arange(n), np.arange(m), indexing='ij')
        cx = grid.origin[0] + (A + 0.5) * P * sx
        cy = grid.origin[1] + (B + 0.5) * P * sy
    else:
        sx = sy = 1.0
        x0, y0 = grid.origin
        x1, y1 = x0 + grid.extent[0], y0 + grid.extent[1]
        A, B = np.meshgrid(_site_range(x0, x1, P), _site_range(y0, y1, P),
                           indexing='ij')
        cx = (A + 0.5) * P
        cy = (B + 0.5) * P
    keep = _occupied(model, A, B)
    shrink = _shrink(model, A, B)
    return [Inclusion('rect', float(x), float(y), float(half * s * sx),
                      float(half * s * sy), (int(a), int(b)))
            for x, y, s, a, b in zip(cx[keep], cy[keep], shrink[keep],
                                     A[keep], B[keep])]


def _place_triangular(model, grid, periodic, meta):
    P = model.period
    row = _SQRT3_2 * P
    radius = 0.5 * model.inclusion_scale * P
    meta['lattice_basis'] = [[P, 0.0], [0.5 * P, row]]
    if periodic:
        n = _periods_in(grid.extent[0], P)
        m = _periods_in(grid.extent[1], row, even=True)
        sx = grid.extent[0] / (n * P)
        sy = grid.extent[1] / (m * row)
        meta['lattice_stretch'] = [sx, sy]
        meta['lattice_periods'] = [n, m]
        A, B = np.meshgrid(np.arange(n), np.arange(m), indexing='ij')
        cx = grid.origin[0] + (A + 0.5 * (B % 2)) * P * sx
        cy = grid.origin[1] + B * row * sy
        radius *= min(sx, sy)
    else:
        x0, y0 = grid.origin
        x1, y1 = x0 + grid.extent[0], y0 + grid.extent[1]
        A, B = np.meshgrid(_site_range(x0, x1, P), _site_range(y0, y1, row),
                           indexing='ij')
        cx = (A + 0.5 * (B % 2)) * P
        cy = B * row
    keep = _occupied(model, A, B)
    shrink = _shrink(model, A, B)
    return [Inclusion('disc', float(x), float(y), float(radius * s),
                      float(radius * s), (int(a), int(b)))
            for x, y, s, a, b in zip(cx[keep], cy[keep], shrink[keep],
                                     A[keep], B[keep])]


def _chessboard_lines(model, lo, hi, stream, periodic_count=None):
    """Random line positions with spacings in [P/2, P] covering [lo, hi]."""
    P = model.period
    if periodic_count is not None:
        idx = np.arange(periodic_count)
        widths = P * (0.5 + 0.5 * site_uniform(model.seed, idx, 0, stream))
        widths *= (hi - lo) / widths.sum()
        return idx, lo + np.concatenate(([0.0], np.cumsum(widths)))
    first = int(math.floor(2.0 * lo / P)) - 1
    last = int(math.ceil(2.0 * hi / P)) + 1
    up = np.arange(0, max(last, 0) + 1)
    down = np.arange(min(first, 0), 0)
    w_up = P * (0.5 + 0.5 * site_uniform(model.seed, up, 0, stream))
    w_down = P * (0.5 + 0.5 * site_uniform(model.seed, down, 0, stream))
    upper = np.concatenate(([0.0], np.cumsum(w_up)))
    lower = -np.cumsum(w_down[::-1])[::-1]
    lines = np.concatenate((lower, upper))
    idx = np.concatenate((down, up))
    return idx, lines


def _place_chessboard(model, grid, periodic, meta):
    x0, y0 = grid.origin
    x1, y1 = x0 + grid.extent[0], y0 + grid.extent[1]
    if periodic:
        n = _periods_in(grid.extent[0], 0.75 * model.period, even=True)
        m = _periods_in(grid.extent[1], 0.75 * model.period, even=True)
        meta['lattice_periods'] = [n, m]
        cols, xl = _chessboard_lines(model, x0, x1, _STREAM_COLUMN, n)
        rows, yl = _chessboard_lines(model, y0, y1, _STREAM_ROW, m)
    else:
        cols, xl = _chessboard_lines(model, x0, x1, _STREAM_COLUMN)
        rows, yl = _chessboard_lines(model, y0, y1, _STREAM_ROW)
    A, B = np.meshgrid(cols, rows, indexing='ij')
    wx = np.diff(xl)[:, None] * np.ones((1, rows.size))
    wy = np.ones((cols.size, 1)) * np.diff(yl)[None, :]
    cx = 0.5 * (xl[:-1] + xl[1:])[:, None] * np.ones((1, rows.size))
    cy = np.ones((cols.size, 1)) * 0.5 * (yl[:-1] + yl[1:])[None, :]
    keep = ((A + B) % 2 == 0) & _occupied(model, A, B)
    shrink = _shrink(model, A, B)
    s = 0.5 * model.inclusion_scale
    return [Inclusion('rect', float(x), float(y), float(s * k * u),
                      float(s * k * v), (int(a), int(b)))
            for x, y, u, v, k, a, b in zip(cx[keep], cy[keep], wx[keep],
                                           wy[keep], shrink[keep], A[keep],
                                           B[keep])]


_PLACERS = {'square_site': _place_square,
            'triangular_site': _place_triangular,
            'chessboard': _place_chessboard}


def place_inclusions(model, grid, periodic=False):
    """Return (inclusions, metadata) for the model over the grid box."""
    meta = {}
    if not model.perforated:
        return [], meta
    return _PLACERS[model.kind](model, grid, periodic, meta), meta


def rasterize(inclusions, grid, periodic=False):
    """Boolean solid array: cells whose centre lies inside an inclusion."""
    solid = np.zeros(grid.shape, dtype=bool)
    xs, ys = grid.axes()
    h = grid.h
    Lx, Ly = grid.extent
    shifts = [(0.0, 0.0)]
    if periodic:
        shifts = [(sx, sy) for sx in (-Lx, 0.0, Lx) for sy in (-Ly, 0.0, Ly)]
    for inc in inclusions:
        for dx, dy in shifts:
            cx, cy = inc.cx + dx, inc.cy + dy
            i0 = max(int(math.floor((cx - inc.hx - grid.origin[0]) / h)), 0)
            i1 = min(int(math.ceil((cx + inc.hx - grid.origin[0]) / h)),
                     grid.nx)
            j0 = max(int(math.floor((cy - inc.hy - grid.origin[1]) / h)), 0)
            j1 = min(int(math.ceil((cy + inc.hy - grid.origin[1]) / h)),
                     grid.ny)
            if i0 >= i1 or j0 >= j1:
                continue
            X = xs[i0:i1, None] - cx
            Y = ys[None, j0:j1] - cy
            if inc.shape == 'disc':
                inside = X * X + Y * Y < inc.hx * inc.hx
            else:
                inside = (np.abs(X) < inc.hx) & (np.abs(Y) < inc.hy)
            solid[i0:i1, j0:j1] |= inside
    return solid


#
# connectivity
#

def fluid_components(fluid, periodic=False):
    """Label the face connected components of a boolean array.

    Return: (labels, count); labels are 1..count, 0 outside.
    """
    labels, count = ndimage.label(fluid)
    if not periodic or count < 2:
        return labels, count
    parent = list(range(count + 1))

    def find(k):
        while parent[k] != k:
            parent[k] = parent[parent[k]]
            k = parent[k]
        return k

    for first, second in ((labels[0, :], labels[-1, :]),
                          (labels[:, 0], labels[:, -1])):
        for a, b in zip(first, second):
            if a and b:
                ra, rb = find(int(a)), find(int(b))
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = sorted(set(find(k) for k in range(1, count + 1)))
    relabel = np.zeros(count + 1, dtype=labels.dtype)
    for k in range(1, count + 1):
        relabel[k] = roots.index(find(k)) + 1
    return relabel[labels], len(roots)


def _neighbours(cell, shape, periodic):
    i, j = cell
    nx, ny = shape
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        a, b = i + di, j + dj
        if periodic:
            yield a % nx, b % ny
        elif 0 <= a < nx and 0 <= b < ny:
            yield a, b


def _open_path(fluid, labels, source, target, periodic):
    """Open the fewest solid cells joining component source to target."""
    shape = fluid.shape
    cost = np.full(shape, np.iinfo(np.int64).max, dtype=np.int64)
    parent = {}
    queue = collections.deque()
    for cell in zip(*np.nonzero(labels == source)):
        cost[cell] = 0
        queue.append(cell)
    while queue:
        cell = queue.popleft()
        if labels[cell] == target:
            opened = 0
            while cell in parent:
                if not fluid[cell]:
                    fluid[cell] = True
                    opened += 1
                cell = parent[cell]
            return opened
        for nb in _neighbours(cell, shape, periodic):
            step = 0 if fluid[nb] else 1
            if cost[cell] + step < cost[nb]:
                cost[nb] = cost[cell] + step
                parent[nb] = cell
                if step:
                    queue.append(nb)
                else:
                    queue.appendleft(nb)
    return 0


def _repair_connectivity(fluid, periodic):
    fluid = fluid.copy()
    opened = 0
    for attempt in range(_REPAIR_LIMIT + 1):
        labels, count = fluid_components(fluid, periodic)
        if count <= 1:
            if opened:
                LOG.warning("connectivity repair opened %d solid cells",
                            opened)
            return fluid, opened
        if attempt == _REPAIR_LIMIT:
            break
        sizes = np.bincount(labels.ravel())[1:]
        main = int(np.argmax(sizes)) + 1
        for comp in range(1, count + 1):
            if comp != main:
                opened += _open_path(fluid, labels, comp, main, periodic)
    raise GeometryError("fluid set still disconnected after %d repairs "
                        "(%d components)" % (_REPAIR_LIMIT, count))


def connected_across_periods(fluid):
    """True if the periodic lift of the fluid set is connected.

    The cell is tiled 3x3; a representative fluid cell of the central copy
    must share its component with its translates one period away in x and
    in y, and the unlifted set must be connected.
    """
    if not fluid.any():
        return False
    if fluid_components(fluid, periodic=True)[1] != 1:
        return False
    nx, ny = fluid.shape
    labels, _ = ndimage.label(np.tile(fluid, (3, 3)))
    i, j = [int(v) for v in np.argwhere(fluid)[0]]
    here = labels[nx + i, ny + j]
    return bool(here == labels[2 * nx + i, ny + j] and
                here == labels[nx + i, 2 * ny + j])


#
# public operations
#

def generate_domain(model, grid, dirichlet=True, periodic=False):
    """Generate and rasterize a perforated domain.

    Arguments:
        model     - PerforationModel
        grid      - GridSpec
        dirichlet - zero Dirichlet condition on the grid edge (ignored
                    for periodic masks)
        periodic  - identify opposite edges (cell problems)

    Return: DomainMask (deterministic in (model, grid))

    Raise:
        GeometryError - resolution too coarse, or the fluid set stays
                        disconnected after the repair limit
    """
    if not isinstance(model, PerforationModel):
        raise TypeError("'model' should be a PerforationModel")
    if not isinstance(grid, GridSpec):
        raise TypeError("'grid' should be a GridSpec")
    if model.perforated:
        if model.period < 4.0 * grid.h * (1.0 - 1e-12):
            raise GeometryError("resolution too coarse: period %g needs "
                                "h <= %g, got h = %g" %
                                (model.period, model.period / 4.0, grid.h))
        if model.period < 8.0 * grid.h:
            LOG.info("period %g resolved by fewer than 8 cells",
                     model.period)
    inclusions, meta = place_inclusions(model, grid, periodic)
    solid = rasterize(inclusions, grid, periodic)
    fluid, opened = _repair_connectivity(~solid, periodic)
    if not fluid.any():
        raise GeometryError("no fluid cell left in the domain")
    meta['repaired_cells'] = opened
    LOG.debug("generated %s on %r: %d inclusions, %d fluid cells",
              model.kind, grid, len(inclusions), int(fluid.sum()))
    return DomainMask.from_fluid(grid, fluid, dirichlet=dirichlet,
                                 periodic=periodic, inclusions=inclusions,
                                 model=model, metadata=meta)


def _gap(a, b):
    if a.shape == 'disc' and b.shape == 'disc':
        return max(0.0, math.hypot(a.cx - b.cx, a.cy - b.cy) - a.hx - b.hx)
    if a.shape == 'rect' and b.shape == 'rect':
        gx = max(0.0, abs(a.cx - b.cx) - a.hx - b.hx)
        gy = max(0.0, abs(a.cy - b.cy) - a.hy - b.hy)
        return math.hypot(gx, gy)
    disc, rect = (a, b) if a.shape == 'disc' else (b, a)
    gx = max(0.0, abs(disc.cx - rect.cx) - rect.hx)
    gy = max(0.0, abs(disc.cy - rect.cy) - rect.hy)
    return max(0.0, math.hypot(gx, gy) - disc.hx)


def _diameter(inc):
    if inc.shape == 'disc':
        return 2.0 * inc.hx
    return 2.0 * math.hypot(inc.hx, inc.hy)


def verify_separation(model, inclusions):
    """Check the separation and diameter bounds on placed inclusions.

    Return: SeparationReport with the minimal pairwise gap (``inf`` when
    there are fewer than two inclusions) and the maximal diameter.
    """
    gap_bound = model.separation_bound()
    diameter_bound = model.diameter_bound()
    inclusions = list(inclusions)
    if not inclusions:
        return SeparationReport(float('inf'), 0.0, gap_bound,
                                diameter_bound, 0)
    max_diameter = max(_diameter(inc) for inc in inclusions)
    if len(inclusions) < 2:
        return SeparationReport(float('inf'), max_diameter, gap_bound,
                                diameter_bound, 1)
    centers = np.array([(inc.cx, inc.cy) for inc in inclusions])
    tree = cKDTree(centers)
    reach = max_diameter
    radius = reach + max(gap_bound, model.period)
    span = np.ptp(centers, axis=0).max() + reach + 1.0
    pairs = tree.query_pairs(radius)
    while not pairs and radius < 2.0 * span:
        radius *= 2.0
        pairs = tree.query_pairs(radius)
    if not pairs:
        return SeparationReport(float('inf'), max_diameter, gap_bound,
                                diameter_bound, len(inclusions))
    best = min(_gap(inclusions[a], inclusions[b]) for a, b in pairs)
    # a closer pair has centres at most best + reach apart
    if best + reach > radius:
        pairs = tree.query_pairs(best + reach)
        best = min(_gap(inclusions[a], inclusions[b]) for a, b in pairs)
    return SeparationReport(best, max_diameter, gap_bound, diameter_bound,
                            len(inclusions))


def volume_fraction(mask):
    """Fraction of fluid cells."""
    return float(mask.fluid.sum()) / float(mask.grid.nx * mask.grid.ny)


def region_mask(grid, region):
    """Rasterize a region descriptor onto the grid (cell centre inside).

    Arguments:
        region - a boolean (nx, ny) array, or a dictionary
                 {'kind': 'disc', 'center': [x, y], 'radius': r} or
                 {'kind': 'polygon', 'vertices': [[x, y], ...]}
    """
    if isinstance(region, np.ndarray):
        if region.shape != grid.shape:
            raise GeometryError("region shape %r does not match grid %r" %
                                (region.shape, grid.shape))
        return region.astype(bool)
    X, Y = grid.centers()
    kind = region.get('kind', 'disc')
    if kind == 'disc':
        cx, cy = region.get('center', (0.0, 0.0))
        r = float(region['radius'])
        return np.hypot(X - cx, Y - cy) < r
    if kind == 'polygon':
        verts = np.asarray(region['vertices'], dtype=float)
        if verts.ndim != 2 or verts.shape[0] < 3:
            raise GeometryError("polygon needs at least three vertices")
        inside = np.zeros(grid.shape, dtype=bool)
        for k in range(verts.shape[0]):
            x0, y0 = verts[k]
            x1, y1 = verts[(k + 1) % verts.shape[0]]
            if y0 == y1:
                continue
            crosses = (Y >= min(y0, y1)) & (Y < max(y0, y1))
            xcross = x0 + (Y - y0) * (x1 - x0) / (y1 - y0)
            inside ^= crosses & (X < xcross)
        return inside
    raise GeometryError("unknown region kind %r" % kind)
