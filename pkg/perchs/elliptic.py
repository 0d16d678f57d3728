"""Finite volume elliptic operators on perforated masks.

Description
-----------

    Unknowns live on fluid cells. Every open face between two fluid cells
    carries the flux (u_a - u_b) / h; closed faces (perforation walls) carry
    no flux, which is the discrete zero Neumann condition. Fluid cells on the
    grid edge of a mask with an outer Dirichlet layer see a zero value on
    the edge itself (antisymmetric ghost, coefficient 2 / h^2).

    The resulting operator ``L`` (``-Laplacian``) is symmetric positive
    semidefinite, definite as soon as a Dirichlet face exists. The
    anisotropic variant discretizes ``-div(A grad u)``: faces carry a11 or
    a22, and the mixed derivative uses the corner cross differences of the
    standard 9-point stencil (all fluid masks only).

Solvers
-------

    ``cg``
        conjugate gradients with a diagonal preconditioner (scipy), falling
        back to SOR when the iteration cap is hit
    ``sor``
        red-black (or four colour) successive over-relaxation
    ``direct``
        sparse LU (scipy SuperLU)

    A "ball" of radius r around a cell is the set of fluid cells whose
    centres lie within Euclidean distance r of the cell centre.

License and Copyright
---------------------

ASL 2.0
"""

import logging
import math
import weakref

import numpy as np
import scipy.sparse as sps
from scipy import ndimage
from scipy.sparse.linalg import cg, spsolve

from perchs.Exceptions import ConvergenceError, ProbeError, SolverError
from perchs.geometry import DomainMask, GridSpec, fluid_components
from perchs.utils import format_float, is_int, is_real, to_uint8, write_pgm

LOG = logging.getLogger(__name__)

METHODS = ('cg', 'sor', 'direct')

# assembled operators and colourings, per mask
_OPERATORS = weakref.WeakKeyDictionary()


class SolverConfig(object):
    """Solver settings shared by the linear and obstacle solvers."""
    def __init__(self, tol=1e-10, max_iter=20000, relaxation=None,
                 method='cg', inner_max=50):
        """
        Arguments:
            tol
                relative residual target (linear solves), update size
                target (obstacle solves)
            max_iter
                iteration cap
            relaxation
                over-relaxation factor in (0, 2); None picks the optimal
                factor of the grid's Dirichlet box at solve time
            method
                cg, sor or direct
            inner_max
                cap on the fixed point iterations of one time step

        Raise:
            TypeError  - wrong input data types provided
            SolverError - values out of range
        """
        if not is_real(tol) or not (relaxation is None or
                                    is_real(relaxation)):
            raise TypeError("'tol' and 'relaxation' should be real numbers")
        if not is_int(max_iter) or not is_int(inner_max):
            raise TypeError("'max_iter' and 'inner_max' should be integers")
        if not tol > 0:
            raise SolverError("tol must be positive")
        if max_iter < 1 or inner_max < 1:
            raise SolverError("iteration caps must be at least 1")
        if relaxation is not None and not 0.0 < relaxation < 2.0:
            raise SolverError("relaxation must lie in (0, 2)")
        if method not in METHODS:
            raise SolverError("unknown method %r" % method)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.relaxation = None if relaxation is None else float(relaxation)
        self.method = method
        self.inner_max = int(inner_max)

    def omega(self, shape):
        """Relaxation factor for a grid of the given shape."""
        if self.relaxation is not None:
            return self.relaxation
        jacobi = 0.5 * (math.cos(math.pi / shape[0]) +
                        math.cos(math.pi / shape[1]))
        return 2.0 / (1.0 + math.sqrt(1.0 - jacobi * jacobi))

    def replace(self, **changes):
        """Copy with some settings changed."""
        data = self.to_dict()
        data.update(changes)
        return SolverConfig(**data)

    def to_dict(self):
        return {'tol': self.tol, 'max_iter': self.max_iter,
                'relaxation': self.relaxation, 'method': self.method,
                'inner_max': self.inner_max}

    def __repr__(self):
        return 'SolverConfig(%s)' % ', '.join(
            '%s=%r' % item for item in sorted(self.to_dict().items()))


class ScalarField(object):
    """Cell centred values on a grid; solid cells hold NaN."""
    def __init__(self, grid, values):
        if not isinstance(grid, GridSpec):
            raise TypeError("'grid' should be a GridSpec")
        values = np.array(values, dtype=float)
        if values.shape != grid.shape:
            raise SolverError("shape mismatch: values %r, grid %r" %
                              (values.shape, grid.shape))
        self.grid = grid
        self.values = values

    @classmethod
    def from_vector(cls, mask, vector, fill=np.nan):
        """Scatter a fluid cell vector onto the grid."""
        vector = np.asarray(vector, dtype=float)
        if vector.shape != (mask.n_fluid, ):
            raise SolverError("shape mismatch: vector %r for %d fluid "
                              "cells" % (vector.shape, mask.n_fluid))
        full = np.full(mask.grid.nx * mask.grid.ny, fill, dtype=float)
        full[mask.cells] = vector
        return cls(mask.grid, full.reshape(mask.grid.shape))

    @classmethod
    def zeros(cls, mask):
        return cls.from_vector(mask, np.zeros(mask.n_fluid))

    def vector(self, mask):
        """Gather the fluid cell values in mask order."""
        if self.grid.shape != mask.grid.shape:
            raise SolverError("shape mismatch: field %r, mask %r" %
                              (self.grid.shape, mask.grid.shape))
        return self.values.ravel()[mask.cells]

    def copy(self):
        return ScalarField(self.grid, self.values.copy())

    def max(self):
        return float(np.nanmax(self.values))

    def min(self):
        return float(np.nanmin(self.values))

    def to_csv(self, path):
        """Write one ``i,j,value`` row per defined cell."""
        fileh = open(path, 'w')
        try:
            fileh.write('i,j,value\n')
            for i, j in zip(*np.nonzero(np.isfinite(self.values))):
                fileh.write('%d,%d,%s\n' %
                            (i, j, format_float(self.values[i, j])))
        finally:
            fileh.close()

    def to_pgm(self, path):
        """Linearly scaled PGM snapshot; solid cells are black."""
        write_pgm(path, to_uint8(self.values))


def as_vector(mask, value):
    """Fluid cell vector from a ScalarField, array or scalar."""
    if isinstance(value, ScalarField):
        return value.vector(mask)
    if np.isscalar(value):
        return np.full(mask.n_fluid, float(value))
    value = np.asarray(value, dtype=float)
    if value.shape == mask.grid.shape:
        return value.ravel()[mask.cells]
    if value.shape == (mask.n_fluid, ):
        return value
    raise SolverError("shape mismatch: %r for grid %r" %
                      (value.shape, mask.grid.shape))


#
# operator assembly
#

def tensor_coefficients(tensor):
    """(a11, a12, a22) of an effective tensor, identity when None."""
    if tensor is None:
        return (1.0, 0.0, 1.0)
    return (float(tensor.a11), float(tensor.a12), float(tensor.a22))


def _face_pairs(index, open_faces, axis, periodic):
    if periodic:
        first, second = index, np.roll(index, -1, axis=axis)
    elif axis == 0:
        first, second = index[:-1, :], index[1:, :]
    else:
        first, second = index[:, :-1], index[:, 1:]
    return first[open_faces], second[open_faces]


def _diagonal_pairs(index, periodic, rising):
    if periodic:
        shifted = np.roll(np.roll(index, -1, axis=0), -1 if rising else 1,
                          axis=1)
        return index.ravel(), shifted.ravel()
    if rising:
        return index[:-1, :-1].ravel(), index[1:, 1:].ravel()
    return index[:-1, 1:].ravel(), index[1:, :-1].ravel()


def _operators(mask):
    return _OPERATORS.setdefault(mask, {})


def assemble_operator(mask, tensor=None):
    """Sparse CSR matrix of ``-div(A grad)`` on the fluid cells of mask.

    Raise:
        SolverError - mixed coefficient a12 on a perforated mask
    """
    key = tensor_coefficients(tensor)
    cached = _operators(mask).get(key)
    if cached is not None:
        return cached
    a11, a12, a22 = key
    if a12 != 0.0 and not mask.is_all_fluid:
        raise SolverError("the anisotropic operator with a12 != 0 needs an "
                          "all fluid mask")
    n = mask.n_fluid
    h2 = mask.grid.h ** 2
    index = mask.index
    diag = np.zeros(n)
    rows, cols, vals = [], [], []

    def couple(a, b, weight):
        rows.extend((a, b))
        cols.extend((b, a))
        vals.extend((np.full(a.size, -weight), np.full(b.size, -weight)))
        np.add.at(diag, a, weight)
        np.add.at(diag, b, weight)

    couple(*(_face_pairs(index, mask.open_x, 0, mask.periodic) +
             (a11 / h2, )))
    couple(*(_face_pairs(index, mask.open_y, 1, mask.periodic) +
             (a22 / h2, )))
    dx, dy = mask.dirichlet_faces()
    diag += (2.0 * a11 / h2) * dx.ravel()[mask.cells] + \
        (2.0 * a22 / h2) * dy.ravel()[mask.cells]
    if a12 != 0.0:
        c = a12 / (2.0 * h2)
        for rising, weight in ((True, c), (False, -c)):
            a, b = _diagonal_pairs(index, mask.periodic, rising)
            rows.extend((a, b))
            cols.extend((b, a))
            vals.extend((np.full(a.size, -weight), np.full(b.size, -weight)))
    if rows:
        off = sps.coo_matrix((np.concatenate(vals),
                              (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n, n))
    else:
        off = sps.coo_matrix((n, n))
    matrix = (off + sps.diags(diag)).tocsr()
    matrix.sum_duplicates()
    _operators(mask)[key] = matrix
    return matrix


def colour_vector(mask, tensor=None):
    """Colour of every fluid cell such that no two coupled cells share one."""
    key = ('colours', ) + tensor_coefficients(tensor)
    cached = _operators(mask).get(key)
    if cached is not None:
        return cached
    I, J = np.meshgrid(np.arange(mask.grid.nx), np.arange(mask.grid.ny),
                       indexing='ij')
    if tensor_coefficients(tensor)[1] != 0.0:
        colours = (I % 2) * 2 + J % 2
    else:
        colours = (I + J) % 2
    colours = colours.ravel()[mask.cells]
    matrix = assemble_operator(mask, tensor)
    if not _valid_colouring(matrix, colours):
        colours = greedy_colouring(matrix)
    _operators(mask)[key] = colours
    return colours


def _valid_colouring(matrix, colours):
    coo = matrix.tocoo()
    off = coo.row != coo.col
    return not np.any(colours[coo.row[off]] == colours[coo.col[off]])


def greedy_colouring(matrix):
    """Greedy graph colouring of the sparsity pattern of a matrix."""
    matrix = matrix.tocsr()
    n = matrix.shape[0]
    colours = np.full(n, -1, dtype=np.int64)
    for row in range(n):
        nbrs = matrix.indices[matrix.indptr[row]:matrix.indptr[row + 1]]
        used = set(colours[nbrs].tolist())
        colour = 0
        while colour in used:
            colour += 1
        colours[row] = colour
    return colours


class Sweeper(object):
    """Colour-ordered (projected) SOR sweeps on a sparse SPD matrix."""
    def __init__(self, matrix, colours=None):
        matrix = matrix.tocsr()
        if colours is None or not _valid_colouring(matrix, colours):
            colours = greedy_colouring(matrix)
        self.matrix = matrix
        self.diag = matrix.diagonal()
        if np.any(self.diag <= 0):
            raise SolverError("non-positive diagonal entry in operator")
        self.classes = []
        for colour in np.unique(colours):
            idx = np.flatnonzero(colours == colour)
            self.classes.append((idx, matrix[idx], self.diag[idx]))

    def sweep(self, x, b, omega, project=False):
        """One sweep in place. Return the largest update."""
        delta = 0.0
        for idx, rows, diag in self.classes:
            old = x[idx]
            new = old + omega * (b[idx] - rows.dot(x)) / diag
            if project:
                np.maximum(new, 0.0, out=new)
            if new.size:
                delta = max(delta, float(np.max(np.abs(new - old))))
            x[idx] = new
        return delta


def _sor_solve(matrix, b, cfg, x0, colours, bnorm, shape):
    sweeper = Sweeper(matrix, colours)
    omega = cfg.omega(shape)
    x = np.array(x0, dtype=float)
    res = np.inf
    for it in range(1, cfg.max_iter + 1):
        sweeper.sweep(x, b, omega)
        if it % 10 == 0 or it == cfg.max_iter:
            res = np.linalg.norm(b - matrix.dot(x)) / bnorm
            if res <= cfg.tol:
                LOG.debug("SOR converged in %d sweeps (residual %.3e)",
                          it, res)
                return x
    raise ConvergenceError("SOR did not converge in %d sweeps (residual "
                           "%.3e)" % (cfg.max_iter, res),
                           iterations=cfg.max_iter, residual=res)


def solve_linear(matrix, b, cfg, x0=None, colours=None, shape=None):
    """Solve ``matrix x = b`` to relative residual ``cfg.tol``.

    Raise:
        ConvergenceError - iteration cap reached
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float)
    method = cfg.method
    if method == 'direct':
        x = np.atleast_1d(spsolve(matrix.tocsc(), b))
        res = np.linalg.norm(b - matrix.dot(x)) / bnorm
        if not np.all(np.isfinite(x)) or res > cfg.tol:
            raise SolverError("direct solve failed (residual %.3e)" % res)
        return x
    if method == 'cg':
        precond = sps.diags(1.0 / matrix.diagonal())
        x = x0
        for attempt in range(2):
            x, info = cg(matrix, b, x0=x, rtol=0.5 * cfg.tol, atol=0.0,
                         maxiter=cfg.max_iter, M=precond)
            res = np.linalg.norm(b - matrix.dot(x)) / bnorm
            if res <= cfg.tol:
                LOG.debug("CG converged (residual %.3e)", res)
                return x
            if info > 0:
                break
        LOG.warning("CG stopped at residual %.3e, falling back to SOR", res)
        x0 = x
    if shape is None:
        side = max(2, int(math.ceil(math.sqrt(n))))
        shape = (side, side)
    return _sor_solve(matrix, b, cfg, x0, colours, bnorm, shape)


#
# public operations
#

def apply_operator(mask, x, tensor=None):
    """Return ``L x`` as a ScalarField.

    Raise:
        SolverError - shape mismatch
    """
    if isinstance(x, ScalarField) and x.grid.shape != mask.grid.shape:
        raise SolverError("shape mismatch: field %r, mask %r" %
                          (x.grid.shape, mask.grid.shape))
    vec = as_vector(mask, x)
    return ScalarField.from_vector(mask, assemble_operator(mask,
                                                           tensor).dot(vec))


def boundary_flux(mask, x, tensor=None):
    """Total flux through the Dirichlet faces, in units of ``sum(L x) h^2``.

    Exact counterpart of the operator row sums for diagonal tensors.
    """
    a11, _, a22 = tensor_coefficients(tensor)
    vec = as_vector(mask, x)
    dx, dy = mask.dirichlet_faces()
    weight = 2.0 * (a11 * dx.ravel()[mask.cells] +
                    a22 * dy.ravel()[mask.cells])
    return float(np.dot(weight, vec))


def solve_poisson(mask, rhs, cfg, tensor=None):
    """Solve ``L v = rhs`` with the mask's boundary conditions.

    Without Dirichlet faces the right hand side must have zero mean; the
    returned solution then has zero mean.

    Raise:
        SolverError      - singular system (pure Neumann, nonzero mean)
        ConvergenceError - iteration cap reached
    """
    b = as_vector(mask, rhs)
    matrix = assemble_operator(mask, tensor)
    dirichlet = mask.has_dirichlet and not mask.periodic
    if not dirichlet:
        scale = max(np.abs(b).sum(), 1e-300)
        if abs(b.sum()) > cfg.tol * scale:
            raise SolverError("singular system: pure Neumann problem with "
                              "nonzero mean right hand side")
    x = solve_linear(matrix, b, cfg, colours=colour_vector(mask, tensor),
                     shape=mask.grid.shape)
    if not dirichlet:
        x = x - x.mean()
    return ScalarField.from_vector(mask, x)


def anchored_region(mask, inside):
    """Restrict a boolean fluid region to the components that touch a fixed
    value: a fluid cell outside the region or a Dirichlet face."""
    inside = inside & mask.fluid
    if not inside.any():
        return inside
    if mask.periodic:
        labels, count = fluid_components(inside, periodic=True)
    else:
        labels, count = ndimage.label(inside)
    outside = mask.fluid & ~inside
    touching = ndimage.binary_dilation(outside) & inside
    if mask.periodic:
        for axis in (0, 1):
            for shift in (-1, 1):
                touching |= np.roll(outside, shift, axis=axis) & inside
    touching |= mask.outer_dirichlet & inside
    keep = np.unique(labels[touching])
    keep = keep[keep > 0]
    return np.isin(labels, keep) & inside


def solve_on_subset(mask, inside, rhs, cfg, boundary=None, tensor=None,
                    faces=False):
    """Dirichlet problem on a fluid subregion.

    Unknowns are the fluid cells of ``inside`` that are connected to fixed
    data; every other fluid cell keeps the value ``boundary`` (zero by
    default), and grid edge Dirichlet faces keep zero.

    With ``faces`` the zero condition sits on the faces between the region
    and the remaining fluid cells (ghost coefficient 2 / h^2, as on the
    grid edge) instead of on the neighbouring cell centres.

    Return: (vector over the fluid cells, solved region as (nx, ny) bool)
    """
    matrix = assemble_operator(mask, tensor)
    region = anchored_region(mask, np.asarray(inside, dtype=bool))
    sel = region.ravel()[mask.cells]
    fixed = np.zeros(mask.n_fluid) if boundary is None else \
        as_vector(mask, boundary).copy()
    rhs = as_vector(mask, rhs)
    unknown = np.flatnonzero(sel)
    known = np.flatnonzero(~sel)
    result = fixed.copy()
    if unknown.size == 0:
        return result, region
    sub = matrix[unknown]
    b = rhs[unknown] - sub[:, known].dot(fixed[known])
    system = sub[:, unknown]
    if faces:
        exits = _exit_faces(mask, region, tensor)[unknown]
        system = system + sps.diags(exits)
    colours = colour_vector(mask, tensor)[unknown]
    result[unknown] = solve_linear(system.tocsr(), b, cfg, colours=colours,
                                   shape=mask.grid.shape)
    return result, region


def _exit_faces(mask, region, tensor):
    """Per fluid cell weight of the open faces leaving region."""
    a11, _, a22 = tensor_coefficients(tensor)
    other = mask.fluid & ~region
    weight = np.zeros(mask.shape)
    for axis, faces, coef in ((0, mask.open_x, a11), (1, mask.open_y, a22)):
        if mask.periodic:
            ahead = faces & np.roll(other, -1, axis=axis)
            behind = np.roll(faces, 1, axis=axis) & \
                np.roll(other, 1, axis=axis)
        else:
            ahead = np.zeros(mask.shape, dtype=bool)
            behind = np.zeros(mask.shape, dtype=bool)
            if axis == 0:
                ahead[:-1, :] = faces & other[1:, :]
                behind[1:, :] = faces & other[:-1, :]
            else:
                ahead[:, :-1] = faces & other[:, 1:]
                behind[:, 1:] = faces & other[:, :-1]
        weight += coef * (ahead.astype(float) + behind.astype(float))
    weight *= region / mask.grid.h ** 2
    return weight.ravel()[mask.cells]


def ball(mask, center, r):
    """Fluid cells whose centres lie within distance r of the centre cell."""
    return mask.fluid & (mask.grid.distance_from(center) <= r)


def greens_function(mask, y, cfg, radius=None, tensor=None):
    """Green's function with pole at cell y: ``L G = delta_y / h^2``.

    Arguments:
        radius - optional truncation disc: fluid cells at distance >= radius
                 from y are held at zero; otherwise the mask's outer
                 Dirichlet layer truncates the plane

    Raise:
        SolverError - y not fluid, or no Dirichlet data at all
    """
    y = tuple(int(v) for v in y)
    if not mask.fluid[y]:
        raise SolverError("y-not-fluid: cell %r is solid" % (y, ))
    inside = mask.fluid.copy()
    if radius is not None:
        inside &= mask.grid.distance_from(y) < radius
    elif not mask.has_dirichlet:
        raise SolverError("Green's function needs an outer Dirichlet layer "
                          "or a truncation radius")
    rhs = np.zeros(mask.n_fluid)
    rhs[mask.index[y]] = 1.0 / mask.grid.h ** 2
    vec, region = solve_on_subset(mask, inside, rhs, cfg, tensor=tensor)
    if not region[y]:
        raise SolverError("the component of y carries no Dirichlet data")
    return ScalarField.from_vector(mask, vec)


def boundary_data(name, X, Y, center_xy, r):
    """Evaluate named boundary data on cell centres."""
    cx, cy = center_xy
    if callable(name):
        return np.asarray(name(X, Y, cx, cy, r), dtype=float)
    if name == 'constant':
        return np.ones(X.shape)
    if name == 'split':
        return np.where(Y >= cy, 1.0, 0.1)
    if name == 'antisymmetric':
        return (X - cx) / r
    raise ProbeError("unknown boundary data %r" % (name, ))


def _ball_solution(mask, center, r, cfg, data):
    center = tuple(int(v) for v in center)
    if not mask.fluid[center]:
        raise ProbeError("probe centre %r is solid" % (center, ))
    dist = mask.grid.distance_from(center)
    X, Y = mask.grid.centers()
    g = boundary_data(data, X, Y, mask.grid.center_of(center), r)
    inside = mask.fluid & (dist < r)
    vec, region = solve_on_subset(mask, inside, 0.0, cfg, boundary=g)
    values = ScalarField.from_vector(mask, vec).values
    return values, region, dist


def harnack_probe(mask, center, radii, cfg, data='split'):
    """Harnack quotients ``sup / inf`` over the half ball, one per radius.

    For each r the nonnegative discrete harmonic function on B_r(center)
    with the given boundary data is computed; the quotient is taken over the
    fluid cells of B_{r/2} connected to the data. A nonpositive infimum
    gives ``inf``.

    Raise:
        ProbeError - empty fluid intersection
    """
    quotients = []
    for r in radii:
        values, region, dist = _ball_solution(mask, center, r, cfg, data)
        half = region & (dist <= 0.5 * r)
        if not half.any():
            raise ProbeError("empty fluid intersection for r = %g" % r)
        lo = float(values[half].min())
        hi = float(values[half].max())
        quotients.append(hi / lo if lo > 0 else float('inf'))
        LOG.debug("harnack r=%g: sup %.6g inf %.6g", r, hi, lo)
    return quotients


def holder_probe(mask, center, r, cfg, levels=None, data='antisymmetric'):
    """Oscillation decay ratios ``osc(B_{r/2^k}) / osc(B_{r/2^(k-1)})``.

    Arguments:
        levels - number of halvings K (default: down to about 2 cells)

    Return: list of K ratios; 0/0 is reported as NaN.

    Raise:
        ProbeError - empty fluid intersection
    """
    values, region, dist = _ball_solution(mask, center, r, cfg, data)
    if levels is None:
        levels = max(1, int(math.floor(math.log(r / (2.0 * mask.grid.h),
                                                2.0))))
    osc = []
    for k in range(levels + 1):
        cells = region & (dist <= r / 2.0 ** k)
        if k == 0:
            cells = region & (dist < r)
        if not cells.any():
            raise ProbeError("empty fluid intersection at scale %g" %
                             (r / 2.0 ** k))
        osc.append(float(values[cells].max() - values[cells].min()))
    ratios = []
    for k in range(1, levels + 1):
        if osc[k - 1] == 0.0:
            ratios.append(float('nan'))
        else:
            ratios.append(osc[k] / osc[k - 1])
    return ratios


__all__ = ['SolverConfig', 'ScalarField', 'DomainMask', 'apply_operator',
           'assemble_operator', 'solve_poisson', 'solve_linear',
           'solve_on_subset', 'greens_function', 'harnack_probe',
           'holder_probe', 'boundary_flux', 'ball']
