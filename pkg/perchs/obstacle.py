"""Static obstacle problem on a DomainMask.

Usage
-----

    sol = solve_obstacle(mask, load, SolverConfig())
    report = complementarity_report(sol, load)

Description
-----------

    The solution p minimizes ``1/2 <L p, p> - <load, p>`` over ``p >= 0``,
    equivalently ``L p = load`` where ``p > 0``, ``L p >= load`` where
    ``p = 0``. It is computed with projected SOR in colour order, clamping
    at zero after every update. Only the cells near the support of the
    load and of the initial guess are swept; the set grows when a cell
    outside it violates ``L p >= load``. Once the positivity set settles
    the linear problem on it is solved with CG, and the result replaces
    the iterate when it stays nonnegative.

    A sweep sequence is considered converged when the largest update falls
    below ``tol * max(1, max p)`` and the complementarity conditions hold to
    ``tol * scale`` where ``scale = max(1, max|load|, max diag(L) * max(1,
    max p))``.

    The positivity set ``{p > 0}`` is read with the activation threshold
    ``1e-12 * max(1, max p)``; clamped zeros are exact.

License and Copyright
---------------------

ASL 2.0
"""

import json
import logging

import numpy as np
from scipy import ndimage

from perchs.Exceptions import ConvergenceError, SolverError
from perchs.elliptic import (ScalarField, Sweeper, anchored_region,
                             as_vector, assemble_operator, colour_vector,
                             solve_linear, tensor_coefficients)
from perchs.utils import to_uint8, write_pgm

LOG = logging.getLogger(__name__)

ACTIVATION = 1e-12

MARGIN = 4
POLISH_EVERY = 10
POLISH_TOL = 1e-2


def activation_threshold(pmax):
    return ACTIVATION * max(1.0, float(pmax))


def residual_scale(matrix, load, pmax):
    diag = matrix.diagonal()
    dmax = float(diag.max()) if diag.size else 0.0
    fmax = float(np.abs(load).max()) if load.size else 0.0
    return max(1.0, fmax, dmax * max(1.0, float(pmax)))


def boundary_cells(mask, active):
    """Active cells with an inactive fluid neighbour across an open face."""
    active = np.asarray(active, dtype=bool) & mask.fluid
    inactive = mask.fluid & ~active
    out = np.zeros(mask.shape, dtype=bool)
    if mask.periodic:
        for axis, faces in ((0, mask.open_x), (1, mask.open_y)):
            out |= active & faces & np.roll(inactive, -1, axis=axis)
            out |= active & np.roll(faces, 1, axis=axis) & \
                np.roll(inactive, 1, axis=axis)
        return out
    ox, oy = mask.open_x, mask.open_y
    out[:-1, :] |= active[:-1, :] & ox & inactive[1:, :]
    out[1:, :] |= active[1:, :] & ox & inactive[:-1, :]
    out[:, :-1] |= active[:, :-1] & oy & inactive[:, 1:]
    out[:, 1:] |= active[:, 1:] & oy & inactive[:, :-1]
    return out


def _kkt(residual, p, bound, threshold):
    active = p > threshold
    if np.any(active) and np.abs(residual[active]).max() > bound:
        return False
    if np.any(~active) and residual[~active].min() < -bound:
        return False
    return True


class ObstacleSolution(object):
    """Solution of one obstacle problem.

    Attributes:
        mask, tensor   - the problem the solution belongs to
        p              - ScalarField, nonnegative on fluid cells
        active         - (nx, ny) bool, the positivity set
        iterations     - projected SOR sweeps used
        residual_stats - complementarity metrics, see complementarity_report
    """
    def __init__(self, mask, p, load, tol, tensor=None, iterations=0):
        self.mask = mask
        self.tensor = tensor
        self.p = p
        self.tol = float(tol)
        self.iterations = int(iterations)
        self.vector = p.vector(mask)
        pmax = float(self.vector.max()) if self.vector.size else 0.0
        self.threshold = activation_threshold(pmax)
        full = np.zeros(mask.grid.nx * mask.grid.ny, dtype=bool)
        full[mask.cells] = self.vector > self.threshold
        self.active = full.reshape(mask.shape)
        self.residual_stats = complementarity_report(self, load)

    @property
    def max_p(self):
        return float(self.vector.max()) if self.vector.size else 0.0

    @property
    def active_area(self):
        return float(self.active.sum()) * self.mask.grid.h ** 2

    def summary(self):
        data = {'cells_active': int(self.active.sum()),
                'active_area': self.active_area,
                'max_p': self.max_p,
                'iterations': self.iterations,
                'threshold': self.threshold,
                'tensor': list(tensor_coefficients(self.tensor)),
                'grid': self.mask.grid.to_dict()}
        for key, value in self.residual_stats.items():
            if isinstance(value, float) and not np.isfinite(value):
                value = None
            data[key] = value
        return data

    def to_json(self, path):
        """Write the summary as JSON."""
        fileh = open(path, 'w')
        try:
            json.dump(self.summary(), fileh, indent=2, sort_keys=True)
            fileh.write('\n')
        finally:
            fileh.close()

    def active_to_pgm(self, path):
        """Active set as PGM: 255 active, 128 inactive fluid, 0 solid."""
        image = np.where(self.active, 255,
                         np.where(self.mask.fluid, 128, 0))
        write_pgm(path, image.astype(np.uint8))

    def to_pgm(self, path):
        write_pgm(path, to_uint8(self.p.values))


def complementarity_report(sol, load, tol=None):
    """KKT audit of an obstacle solution.

    Return: dict with
        max_negative_p        - largest violation of p >= 0 (0 when none)
        max_active_residual   - max |L p - load| on the active set
        min_inactive_residual - min (L p - load) on the inactive set
        max_complementarity   - max |p (L p - load)|
        scale, tol, passed
    """
    mask = sol.mask
    f = as_vector(mask, load)
    p = sol.vector
    matrix = assemble_operator(mask, sol.tensor)
    residual = matrix.dot(p) - f
    tol = sol.tol if tol is None else float(tol)
    pmax = float(p.max()) if p.size else 0.0
    scale = residual_scale(matrix, f, pmax)
    active = p > sol.threshold
    stats = {
        'max_negative_p': float(max(0.0, -p.min())) if p.size else 0.0,
        'max_active_residual': float(np.abs(residual[active]).max())
        if active.any() else 0.0,
        'min_inactive_residual': float(residual[~active].min())
        if (~active).any() else float('inf'),
        'max_complementarity': float(np.abs(p * residual).max())
        if p.size else 0.0,
        'scale': scale,
        'tol': tol,
    }
    bound = tol * scale
    stats['passed'] = bool(stats['max_negative_p'] == 0.0 and
                           stats['max_active_residual'] <= bound and
                           stats['min_inactive_residual'] >= -bound)
    return stats


def _candidates(mask, p, f, margin):
    """Fluid cells within margin cells of where the load or p is positive.

    Return None when the whole fluid region has to be swept: no Dirichlet
    data, or a grown component that touches no fixed value.
    """
    if mask.periodic or not mask.has_dirichlet:
        return None
    flat = np.zeros(mask.grid.nx * mask.grid.ny, dtype=bool)
    flat[mask.cells] = (f > 0.0) | (p > 0.0)
    grown = ndimage.binary_dilation(flat.reshape(mask.shape),
                                    iterations=margin) & mask.fluid
    if grown.sum() == mask.n_fluid:
        return None
    if not np.array_equal(anchored_region(mask, grown), grown):
        return None
    return grown.ravel()[mask.cells]


def _extent(mask, candidates):
    if candidates is None:
        return mask.shape
    flat = np.zeros(mask.grid.nx * mask.grid.ny, dtype=bool)
    flat[mask.cells] = candidates
    rows, cols = np.nonzero(flat.reshape(mask.shape))
    return (max(2, int(rows.max() - rows.min() + 1)),
            max(2, int(cols.max() - cols.min() + 1)))


def _audit(matrix, f, p, cfg, candidates):
    """'ok' when p passes the KKT gate, 'grow' when a cell outside the
    candidates wants to become positive, 'sweep' otherwise."""
    pmax = float(p.max())
    residual = matrix.dot(p) - f
    bound = cfg.tol * residual_scale(matrix, f, pmax)
    if _kkt(residual, p, bound, activation_threshold(pmax)):
        return 'ok'
    if candidates is not None and \
            np.any(~candidates & (residual < -bound)):
        return 'grow'
    return 'sweep'


def _polish(mask, sub, b, x, idx, cfg):
    """Linear solve of the restricted problem on the positivity set of x.

    Return the corrected iterate, or None when it has a negative entry.
    """
    positive = x > activation_threshold(float(x.max()))
    flat = np.zeros(mask.grid.nx * mask.grid.ny, dtype=bool)
    flat[mask.cells[idx[positive]]] = True
    anchored = anchored_region(mask, flat.reshape(mask.shape))
    keep = np.flatnonzero(anchored.ravel()[mask.cells[idx]])
    if keep.size == 0:
        return None
    method = 'direct' if cfg.method == 'direct' else 'cg'
    y = np.zeros_like(x)
    y[keep] = solve_linear(sub[keep][:, keep], b[keep],
                           cfg.replace(tol=POLISH_TOL * cfg.tol,
                                       method=method), x0=x[keep])
    if y.min() < 0.0:
        return None
    return y


def solve_obstacle(mask, load, cfg, tensor=None, x0=None):
    """Solve ``min 1/2 <L p, p> - <load, p>`` over ``p >= 0``.

    Sweeps are restricted to the candidate cells: the fluid cells within
    ``MARGIN`` cells of where the load or the initial guess is positive.
    Every other cell stays at zero; the candidate set is grown (doubling
    the margin) whenever one of them violates ``L p >= load``. Every
    ``POLISH_EVERY`` sweeps, if the positivity set has not changed, the
    linear problem on that set is solved with CG and replaces the iterate
    when it is nonnegative.

    Arguments:
        mask   - DomainMask
        load   - ScalarField, array or scalar
        cfg    - SolverConfig (tol, max_iter, relaxation)
        tensor - optional EffectiveTensor for ``-div(A grad)``
        x0     - optional initial guess (clamped at 0)

    Return: ObstacleSolution

    Raise:
        SolverError      - unbounded below (no Dirichlet data and a load
                           with positive total), unbounded load
        ConvergenceError - iteration cap reached
    """
    f = as_vector(mask, load)
    if not np.all(np.isfinite(f)):
        raise SolverError("load must be finite on every fluid cell")
    dirichlet = mask.has_dirichlet and not mask.periodic
    if not dirichlet and f.sum() > 0.0:
        raise SolverError("unbounded below: positive total load without "
                          "Dirichlet data")
    matrix = assemble_operator(mask, tensor)
    if x0 is None:
        p = np.zeros(mask.n_fluid)
    else:
        p = np.maximum(as_vector(mask, x0), 0.0)
    if not np.any(f > 0.0):
        LOG.debug("nonpositive load, zero solution")
        return ObstacleSolution(mask, ScalarField.from_vector(
            mask, np.zeros(mask.n_fluid)), f, cfg.tol, tensor, 0)
    colours = colour_vector(mask, tensor)
    margin = MARGIN
    polish = True
    sweeps = 0
    delta = np.inf
    while sweeps < cfg.max_iter:
        candidates = _candidates(mask, p, f, margin)
        if candidates is None:
            idx = np.arange(mask.n_fluid)
        else:
            idx = np.flatnonzero(candidates)
            p[~candidates] = 0.0
        sub = matrix[idx][:, idx].tocsr()
        sweeper = Sweeper(sub, colours[idx])
        omega = cfg.omega(_extent(mask, candidates))
        x, b = p[idx], f[idx]
        last = x > activation_threshold(float(x.max()))
        verdict = 'sweep'
        while sweeps < cfg.max_iter and verdict == 'sweep':
            sweeps += 1
            delta = sweeper.sweep(x, b, omega, project=True)
            p[idx] = x
            if delta < cfg.tol * max(1.0, float(x.max())):
                verdict = _audit(matrix, f, p, cfg, candidates)
            elif polish and sweeps % POLISH_EVERY == 0:
                positive = x > activation_threshold(float(x.max()))
                if np.array_equal(positive, last):
                    try:
                        y = _polish(mask, sub, b, x, idx, cfg)
                    except SolverError as err:
                        LOG.debug("no linear correction: %s", err)
                        polish, y = False, None
                    if y is not None:
                        x[:] = y
                        p[idx] = x
                        verdict = _audit(matrix, f, p, cfg, candidates)
                last = positive
        if verdict == 'ok':
            LOG.debug("projected SOR converged in %d sweeps on %d of %d "
                      "cells", sweeps, idx.size, mask.n_fluid)
            return ObstacleSolution(mask, ScalarField.from_vector(mask, p),
                                    f, cfg.tol, tensor, sweeps)
        if verdict == 'grow':
            margin *= 2
            LOG.debug("growing the candidate cells to a margin of %d",
                      margin)
    raise ConvergenceError("projected SOR did not converge in %d sweeps "
                           "(last update %.3e)" % (cfg.max_iter, delta),
                           iterations=cfg.max_iter, residual=delta)


def growth_constant(sol, load, radii, cells=None):
    """Quadratic growth ceiling at the free boundary.

    For free boundary cells x and radii r, the smallest C with
    ``sup_{B_r(x)} p <= C max|load| r^2``.
    """
    mask = sol.mask
    fmax = float(np.abs(as_vector(mask, load)).max())
    if fmax == 0.0:
        return 0.0
    if cells is None:
        cells = list(zip(*np.nonzero(boundary_cells(mask, sol.active))))
    best = 0.0
    values = np.where(mask.fluid, sol.p.values, -np.inf)
    for cell in cells:
        dist = mask.grid.distance_from(cell)
        for r in radii:
            sup = float(values[dist <= r].max())
            best = max(best, sup / (fmax * r * r))
    return best
