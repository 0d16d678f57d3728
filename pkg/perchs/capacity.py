"""Condenser capacities and Green's function bounds on perforated masks.

Description
-----------

    The capacity of an inner set relative to an outer set is the Dirichlet
    energy of the potential equal to 1 on the inner set and 0 on the outer
    set, discrete harmonic elsewhere with zero flux through inclusion walls.
    When the mask carries an outer Dirichlet layer its faces belong to the
    outer set. The energy is ``h^2 v.L v``, the sum of ``(dv)^2`` over open
    faces plus the Dirichlet face terms.

    In two dimensions the capacity of a bounded set relative to the whole
    plane vanishes, so every capacity here is a condenser capacity with an
    explicit outer set.

License and Copyright
---------------------

ASL 2.0
"""

import logging
import math

import numpy as np

from perchs.Exceptions import CapacityError, ProbeError
from perchs.elliptic import (ScalarField, assemble_operator, ball,
                             greens_function, solve_on_subset)
from perchs.geometry import DomainMask, fluid_components, generate_domain, \
    region_mask
from perchs.utils import MetricsRecord

LOG = logging.getLogger(__name__)

# conformal radius of a square seen from its centre, per unit half side
SQUARE_CONFORMAL_RADIUS = 1.1803405990160962


class CapacityResult(object):
    """Capacity of a condenser.

    Attributes:
        value     - Dirichlet energy of the capacitary potential
        potential - ScalarField with values in [0, 1]
        inner_set, outer_set - (nx, ny) bool arrays on the fluid cells
        flags     - 'adjacent' when inner and outer share an open face,
                    'no-path' when no fluid path joins them (value 0)
        edge_is_outer - the mask's Dirichlet faces were part of the outer set
    """
    def __init__(self, value, potential, inner_set, outer_set, flags=(),
                 edge_is_outer=False):
        self.value = float(value)
        self.potential = potential
        self.inner_set = inner_set
        self.outer_set = outer_set
        self.flags = tuple(flags)
        self.edge_is_outer = bool(edge_is_outer)

    @property
    def degenerate(self):
        return 'adjacent' in self.flags

    @property
    def connected(self):
        return 'no-path' not in self.flags

    def __repr__(self):
        return 'CapacityResult(value=%.8g, flags=%r)' % (self.value,
                                                          self.flags)


def _as_set(mask, cells):
    if cells is None:
        return np.zeros(mask.shape, dtype=bool)
    return region_mask(mask.grid, cells) & mask.fluid


def _adjacent(mask, first, second):
    """True when a cell of first and a cell of second share an open face."""
    if mask.periodic:
        for axis, faces in ((0, mask.open_x), (1, mask.open_y)):
            ahead_a = faces & first & np.roll(second, -1, axis=axis)
            ahead_b = faces & second & np.roll(first, -1, axis=axis)
            if ahead_a.any() or ahead_b.any():
                return True
        return False
    ox, oy = mask.open_x, mask.open_y
    return bool(np.any(ox & first[:-1, :] & second[1:, :]) or
                np.any(ox & second[:-1, :] & first[1:, :]) or
                np.any(oy & first[:, :-1] & second[:, 1:]) or
                np.any(oy & second[:, :-1] & first[:, 1:]))


def capacity(mask, inner, outer, cfg):
    """Condenser capacity of inner relative to outer.

    Arguments:
        inner, outer - boolean (nx, ny) arrays or region descriptors; outer
                       may be None when the mask has an outer Dirichlet
                       layer

    Raise:
        CapacityError - overlapping sets, a set without fluid cells
    """
    inner = _as_set(mask, inner)
    outer = _as_set(mask, outer)
    edge = mask.has_dirichlet and not mask.periodic
    if not inner.any():
        raise CapacityError("inner set has no fluid cell")
    if not outer.any() and not edge:
        raise CapacityError("outer set has no fluid cell and the mask has "
                            "no Dirichlet layer")
    if np.any(inner & outer):
        raise CapacityError("inner and outer sets overlap")
    flags = []
    if _adjacent(mask, inner, outer):
        LOG.warning("inner and outer sets touch: degenerate condenser")
        flags.append('adjacent')
    labels, _ = fluid_components(mask.fluid, mask.periodic)
    grounded = outer | (mask.outer_dirichlet if edge else False)
    if not np.intersect1d(labels[inner], labels[grounded]).size:
        LOG.warning("no fluid path between inner and outer sets")
        flags.append('no-path')
    free = mask.fluid & ~inner & ~outer
    data = inner.astype(float)
    vec, _ = solve_on_subset(mask, free, 0.0, cfg, boundary=data)
    vec = np.clip(vec, 0.0, 1.0)
    matrix = assemble_operator(mask)
    value = float(vec.dot(matrix.dot(vec))) * mask.grid.h ** 2
    if 'no-path' in flags:
        value = 0.0
    return CapacityResult(value, ScalarField.from_vector(mask, vec), inner,
                          outer, flags, edge)


def level_set_capacity_check(mask, y, a_list, cfg, green=None):
    """Products ``a * Cap(J(a))`` for the level sets ``J(a) = {G >= a}``.

    Capacities are relative to the mask's Dirichlet layer, the set where
    the Green's function vanishes.

    Raise:
        ProbeError - empty level set, or one reaching the outer layer
    """
    if green is None:
        green = greens_function(mask, y, cfg)
    values = np.where(mask.fluid, green.values, -np.inf)
    off = values.copy()
    off[tuple(y)] = -np.inf
    top = float(off.max())
    out = []
    for a in a_list:
        if a > top:
            raise ProbeError("level-set-empty: a=%g above max G=%g off the "
                             "source" % (a, top))
        level = values >= a
        if np.any(level & mask.outer_dirichlet):
            raise ProbeError("level-set-touches-outer-boundary at a=%g" % a)
        cap = capacity(mask, level, None, cfg)
        out.append((float(a), float(a) * cap.value))
        LOG.debug("a=%g: %d cells, capacity %.6g", a, int(level.sum()),
                  cap.value)
    return out


def _outer_radius(mask, y, radius):
    if radius is not None:
        return float(radius)
    cx, cy = mask.grid.center_of(y)
    x0, y0 = mask.grid.origin
    w, hgt = mask.grid.extent
    half = min(cx - x0, x0 + w - cx, cy - y0, y0 + hgt - cy)
    return SQUARE_CONFORMAL_RADIUS * half


def green_bounds_check(mask, y, radii, cfg, radius=None):
    """Green's function on circles against the disc reference.

    Arguments:
        radius - truncation disc (default: the mask's outer box, whose
                 conformal radius from y stands in for the disc radius)

    Return: one dict per r with min, max, reference, min_ratio, max_ratio,
            inverse_capacity and sandwich (min <= 1/Cap(B_r) <= max within
            2 percent)

    Raise:
        ProbeError - empty shell
    """
    y = tuple(int(v) for v in y)
    green = greens_function(mask, y, cfg, radius=radius)
    far = _outer_radius(mask, y, radius)
    dist = mask.grid.distance_from(y)
    outer = None
    if radius is not None:
        outer = mask.fluid & (dist >= radius)
    h = mask.grid.h
    rows = []
    for r in radii:
        shell = mask.fluid & (np.abs(dist - r) <= 0.5 * h)
        if not shell.any():
            raise ProbeError("empty shell at r=%g" % r)
        lo = float(green.values[shell].min())
        hi = float(green.values[shell].max())
        ref = math.log(far / r) / (2.0 * math.pi)
        cap = capacity(mask, ball(mask, y, r), outer, cfg)
        inverse = 1.0 / cap.value if cap.value > 0 else float('inf')
        rows.append({'r': float(r), 'min': lo, 'max': hi, 'reference': ref,
                     'min_ratio': lo / ref, 'max_ratio': hi / ref,
                     'inverse_capacity': inverse,
                     'sandwich': bool(0.98 * lo <= inverse <= 1.02 * hi)})
    return rows


def capacity_lower_bound_check(model, eps_list, r, cfg, grid, center=None,
                               outer_factor=2.0,
                               experiment_id='capacity'):
    """Ratios ``Cap_eps(B_r) / Cap(B_r)`` per epsilon.

    The condenser is the ball B_r(center) inside the ball of radius
    ``outer_factor * r``; the same cells serve every epsilon.

    Return: list of MetricsRecord (metric capacity_ratio, t = r)
    """
    if center is None:
        center = grid.center_cell()
    center = tuple(int(v) for v in center)
    dist = grid.distance_from(center)
    flat = DomainMask.all_fluid(grid)
    inner = dist <= r
    outer = dist >= outer_factor * r
    reference = capacity(flat, inner, outer, cfg).value
    records = []
    for eps in eps_list:
        mask = generate_domain(model.with_period(eps), grid)
        value = capacity(mask, inner & mask.fluid, outer & mask.fluid,
                         cfg).value
        records.append(MetricsRecord(experiment_id, eps, model.seed, r,
                                     'capacity_ratio', value / reference))
        LOG.info("epsilon %g: capacity ratio %.6g", eps, value / reference)
    return records
