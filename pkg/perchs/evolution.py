"""Hele-Shaw evolution through the time integrated pressure.

Usage
-----

    state = init_state(mask, {'kind': 'disc', 'center': (0, 0), 'radius': 1})
    trajectory = evolve(mask, state, T=1.0, dt=1.0 / 64, cfg=SolverConfig())
    u = recover_u(trajectory[-1], mask, cfg)
    records = evolution_checks(trajectory)

Description
-----------

    The droplet is never tracked directly. At time t the integrated pressure
    p(., t) solves the obstacle problem with load

        f = mu * (-1 outside D0 + tau)

    where tau(x) is the time x has spent inside the positivity set so far
    and mu the fluid volume fraction (1 unless a homogenized tensor is
    given). One time step turns tau into ``tau + dt * 1{p > 0}``:

    explicit
        the positivity set at the start of the step (plus D0) is used
    fixed_point
        starting from the explicit solution, tau is rebuilt from the new
        positivity set and the obstacle problem solved again until the set
        stops growing; loads and iterates only increase along the way. A
        shrinking set or the inner_max cap falls back to the explicit
        result with a warning.

    The pressure u solves ``-div(A grad u) = mu`` on the positivity set with
    zero data on its faces towards the dry fluid cells; walls of the
    perforations keep their zero flux.

License and Copyright
---------------------

ASL 2.0
"""

import logging
import math

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from perchs.Exceptions import (GeometryError, InnerIterationError,
                               ProbeError, SolverError)
from perchs.elliptic import ScalarField, solve_on_subset
from perchs.geometry import fluid_components, region_mask
from perchs.obstacle import activation_threshold, boundary_cells, \
    growth_constant, solve_obstacle
from perchs.utils import MetricsRecord, format_float, write_pgm

LOG = logging.getLogger(__name__)

MODES = ('explicit', 'fixed_point')

TRAJECTORY_HEADER = ('t', 'area', 'max_p', 'fb_cell_count',
                     'lipschitz_ratio', 'area_ratio')


class ObstacleState(object):
    """Evolution state at time t.

    Attributes:
        t          - time
        p          - ScalarField, integrated pressure (>= 0)
        tau        - ScalarField, accumulated wet time per cell (0 <= tau <= t)
        d0_mask    - (nx, ny) bool, initial set intersected with the fluid
        mask       - the DomainMask the state lives on
        mu         - load density
        inner_iterations, inner_violations - fixed point statistics of the
                     step that produced the state
    """
    def __init__(self, mask, t, p, tau, d0_mask, mu=1.0, step_index=0,
                 inner_iterations=0, inner_violations=0):
        self.mask = mask
        self.t = float(t)
        self.p = p
        self.tau = tau
        self.d0_mask = np.asarray(d0_mask, dtype=bool)
        self.mu = float(mu)
        self.step_index = int(step_index)
        self.inner_iterations = int(inner_iterations)
        self.inner_violations = int(inner_violations)
        values = np.where(mask.fluid, p.values, 0.0)
        self.max_p = float(values.max()) if values.size else 0.0
        self.active = mask.fluid & (values > activation_threshold(self.max_p))

    @property
    def region(self):
        """The wet set D_t: positivity set, plus D0 once t > 0."""
        if self.t > 0.0:
            return self.active | self.d0_mask
        return self.d0_mask.copy()

    @property
    def area(self):
        return float(self.region.sum()) * self.mask.grid.h ** 2

    def equivalent_radius(self):
        """Radius of the disc with the area of D_t."""
        return math.sqrt(self.area / math.pi)

    def load(self):
        """The obstacle load p solves: ``mu * (tau - 1 outside D0)``."""
        return _load(self, self.tau, self.mu)

    def active_to_pgm(self, path):
        """Snapshot: 255 wet, 128 dry fluid, 0 solid."""
        image = np.where(self.region, 255, np.where(self.mask.fluid, 128, 0))
        write_pgm(path, image.astype(np.uint8))

    def __repr__(self):
        return 'ObstacleState(t=%g, area=%g, max_p=%g)' % \
            (self.t, self.area, self.max_p)


class FreeBoundary(object):
    """Cells of the free boundary relative to the fluid region.

    Attributes:
        cells - (K, 2) int array of (i, j) indices
        grid  - GridSpec
    """
    def __init__(self, cells, grid):
        self.cells = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
        self.grid = grid

    def __len__(self):
        return int(self.cells.shape[0])

    @property
    def is_empty(self):
        return len(self) == 0

    def points(self):
        h = self.grid.h
        return np.column_stack(
            (self.grid.origin[0] + (self.cells[:, 0] + 0.5) * h,
             self.grid.origin[1] + (self.cells[:, 1] + 0.5) * h))

    def to_array(self):
        out = np.zeros(self.grid.shape, dtype=bool)
        out[self.cells[:, 0], self.cells[:, 1]] = True
        return out


def init_state(mask, d0):
    """Initial state: t = 0, p = tau = 0, D0 rasterized onto the fluid.

    Arguments:
        d0 - region descriptor (disc or polygon dict, or a boolean array)

    Raise:
        GeometryError - empty initial set
    """
    d0_mask = region_mask(mask.grid, d0) & mask.fluid
    if not d0_mask.any():
        raise GeometryError("empty-initial-set: the initial set has no "
                            "fluid cell")
    if fluid_components(d0_mask, mask.periodic)[1] > 1:
        LOG.warning("initial set is not connected on the fluid cells")
    zero = ScalarField.from_vector(mask, np.zeros(mask.n_fluid))
    return ObstacleState(mask, 0.0, zero, zero.copy(), d0_mask)


def _load(state, tau, mu):
    dry = ~state.d0_mask
    return mu * (tau.values - dry.astype(float))


def _advance_tau(state, dt, wet):
    values = state.tau.values + dt * (wet & state.mask.fluid)
    return ScalarField(state.mask.grid,
                       np.where(state.mask.fluid, values, np.nan))


def _fixed_point(state, dt, cfg, mask, tensor, mu, sol, wet):
    """Iterate tau from the new positivity set until it stops growing."""
    violations = 0
    for inner in range(1, cfg.inner_max + 1):
        grown = sol.active | state.d0_mask
        if np.array_equal(grown, wet):
            return sol, inner - 1, violations
        if np.any(wet & ~grown):
            raise InnerIterationError("active set shrank during the fixed "
                                      "point iteration at t=%g" % state.t)
        wet = grown
        tau = _advance_tau(state, dt, wet)
        nxt = solve_obstacle(mask, _load(state, tau, mu), cfg, tensor,
                             x0=sol.p)
        slack = 10.0 * cfg.tol * max(1.0, sol.max_p)
        violations += int(np.sum(nxt.vector < sol.vector - slack))
        sol = nxt
    raise InnerIterationError("no stable active set after %d fixed point "
                              "iterations at t=%g" % (cfg.inner_max, state.t))


def step(state, dt, mode, cfg, mask, tensor=None):
    """Advance state by dt.

    Return: new ObstacleState

    Raise:
        SolverError - bad dt or mode, solver failures
    """
    if not dt > 0:
        raise SolverError("dt must be positive")
    if mode not in MODES:
        raise SolverError("unknown stepping mode %r" % (mode, ))
    mu = 1.0 if tensor is None else float(tensor.mu)
    wet = (state.active | state.d0_mask) & mask.fluid
    tau = _advance_tau(state, dt, wet)
    sol = solve_obstacle(mask, _load(state, tau, mu), cfg, tensor,
                         x0=state.p)
    inner, violations = 0, 0
    if mode == 'fixed_point':
        try:
            fixed, inner, violations = _fixed_point(state, dt, cfg, mask,
                                                    tensor, mu, sol, wet)
        except InnerIterationError as err:
            LOG.warning("%s; falling back to explicit stepping", err)
        else:
            sol = fixed
            tau = _advance_tau(state, dt, sol.active | state.d0_mask)
    LOG.debug("t=%g: %d active cells, max p %.6g, %d inner iterations",
              state.t + dt, int(sol.active.sum()), sol.max_p, inner)
    return ObstacleState(mask, state.t + dt, sol.p, tau, state.d0_mask,
                         mu=mu, step_index=state.step_index + 1,
                         inner_iterations=inner, inner_violations=violations)


def evolve(mask, state, T, dt, cfg, mode='explicit', tensor=None,
           record_every=1, on_step=None):
    """March state up to time T.

    Arguments:
        record_every - keep every n-th state (the first and last always)
        on_step      - optional callable(state) after every step

    Return: list of ObstacleState, the trajectory
    """
    steps = int(round(T / dt))
    if steps < 1 or abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise SolverError("T=%g is not a whole number of steps dt=%g" %
                          (T, dt))
    trajectory = [state]
    for k in range(1, steps + 1):
        state = step(state, dt, mode, cfg, mask, tensor)
        if on_step is not None:
            on_step(state)
        if k % record_every == 0 or k == steps:
            trajectory.append(state)
    return trajectory


def recover_u(state, mask, cfg, tensor=None):
    """Pressure ``u`` on the positivity set of state.

    Raise:
        SolverError - empty positivity set, solver failures
    """
    if not state.active.any():
        raise SolverError("cannot recover the pressure of an empty "
                          "positivity set")
    mu = 1.0 if tensor is None else float(tensor.mu)
    vec, _ = solve_on_subset(mask, state.active, mu, cfg, tensor=tensor,
                             faces=True)
    return ScalarField.from_vector(mask, vec)


def time_derivative(previous, current):
    """Difference quotient ``(p(t) - p(t - dt)) / dt`` as a ScalarField."""
    dt = current.t - previous.t
    if not dt > 0:
        raise SolverError("states are not in time order")
    return ScalarField(current.p.grid,
                       (current.p.values - previous.p.values) / dt)


def extract_free_boundary(state, mask):
    """Wet cells with a dry fluid neighbour; perforation walls excluded."""
    cells = np.argwhere(boundary_cells(mask, state.active))
    return FreeBoundary(cells, mask.grid)


def hausdorff_distance(a, b, grid=None):
    """Hausdorff distance between the cell centres of two free boundaries.

    Raise:
        ProbeError - empty input
    """
    if a.is_empty or b.is_empty:
        raise ProbeError("empty-input: Hausdorff distance of an empty set")
    if grid is not None:
        a, b = FreeBoundary(a.cells, grid), FreeBoundary(b.cells, grid)
    pa, pb = a.points(), b.points()
    ab = cKDTree(pb).query(pa)[0].max()
    ba = cKDTree(pa).query(pb)[0].max()
    return float(max(ab, ba))


class NondegeneracyReport(object):
    """Growth of p away from the free boundary.

    Attributes:
        slope       - median log-log slope of sup_{B_r(x)} p against r
        slopes      - one slope per sampled free boundary cell
        coefficient - min over samples and radii of sup_{B_r(x)} p / r^2
        samples     - sampled cells
    """
    def __init__(self, slope, slopes, coefficient, samples):
        self.slope = float(slope)
        self.slopes = [float(s) for s in slopes]
        self.coefficient = float(coefficient)
        self.samples = samples

    def __repr__(self):
        return 'NondegeneracyReport(slope=%.4f, coefficient=%.4g, n=%d)' % \
            (self.slope, self.coefficient, len(self.samples))


def nondegeneracy_probe(state, mask, radii=None, samples=16):
    """Fit sup of p over balls centred on the free boundary against r.

    Arguments:
        radii   - candidate radii; for each cell only those in
                  [2h, dist(x, D0) / 2] are used (default: 8 geometric
                  radii spanning that range)
        samples - number of free boundary cells, evenly spread

    Raise:
        ProbeError - free boundary empty or fewer than two usable radii
    """
    fb = extract_free_boundary(state, mask)
    if fb.is_empty:
        raise ProbeError("insufficient data: empty free boundary")
    h = mask.grid.h
    to_d0 = ndimage.distance_transform_edt(~state.d0_mask, sampling=h)
    order = np.lexsort((fb.cells[:, 1], fb.cells[:, 0]))
    cells = fb.cells[order]
    picks = np.unique(np.linspace(0, len(cells) - 1,
                                  min(samples, len(cells))).astype(int))
    values = np.where(mask.fluid, state.p.values, -np.inf)
    slopes, used = [], []
    coefficient = np.inf
    for k in picks:
        cell = tuple(int(v) for v in cells[k])
        top = 0.5 * to_d0[cell]
        if radii is None:
            rs = np.geomspace(2.0 * h, top, 8) if top > 2.0 * h else []
        else:
            rs = [r for r in radii if 2.0 * h <= r <= top]
        if len(rs) < 2:
            continue
        dist = mask.grid.distance_from(cell)
        sups = np.array([values[dist <= r].max() for r in rs])
        if np.any(sups <= 0):
            continue
        rs = np.asarray(rs, dtype=float)
        slopes.append(np.polyfit(np.log(rs), np.log(sups), 1)[0])
        coefficient = min(coefficient, float(np.min(sups / rs ** 2)))
        used.append(cell)
    if not slopes:
        raise ProbeError("insufficient-radii: no free boundary cell admits "
                         "two radii in [2h, dist(x, D0) / 2]")
    return NondegeneracyReport(np.median(slopes), slopes, coefficient, used)


def containment_radius(earlier, later):
    """Smallest rho with D_later inside D_earlier dilated by rho."""
    outside = later & ~earlier
    if not outside.any():
        return 0.0
    if not earlier.any():
        return float('inf')
    dist = ndimage.distance_transform_edt(~earlier)
    return float(dist[outside].max())


def evolution_checks(trajectory, experiment_id='evolve', epsilon=0.0,
                     seed=0, tol=1e-10):
    """Per step regularity metrics of a trajectory.

    Emits at every later time t2 of consecutive states (t1, t2):
    monotonicity_violations, lipschitz_ratio, containment_radius and
    containment_ratio (radius over sqrt(t2 - t1)); and area_ratio
    ``|D_t| exp(-t) / |D_0|`` at every time.
    """
    if not trajectory:
        return []
    first = trajectory[0]
    h = first.mask.grid.h
    area0 = float(first.d0_mask.sum())
    records = []

    def emit(t, metric, value):
        records.append(MetricsRecord(experiment_id, epsilon, seed, t, metric,
                                     value))

    emit(first.t, 'area_ratio', first.region.sum() * math.exp(-first.t) /
         area0)
    for s1, s2 in zip(trajectory[:-1], trajectory[1:]):
        gap = s2.t - s1.t
        fluid = s1.mask.fluid
        p1 = np.where(fluid, s1.p.values, 0.0)
        p2 = np.where(fluid, s2.p.values, 0.0)
        slack = 10.0 * tol * max(1.0, s1.max_p)
        rho = containment_radius(s1.region, s2.region) * h
        emit(s2.t, 'monotonicity_violations',
             int(np.sum(p2 < p1 - slack)))
        emit(s2.t, 'lipschitz_ratio', float(np.abs(p2 - p1).max()) / gap)
        emit(s2.t, 'containment_radius', rho)
        emit(s2.t, 'containment_ratio', rho / math.sqrt(gap))
        emit(s2.t, 'area_ratio', s2.region.sum() * math.exp(-s2.t) / area0)
    return records


def containment_exponent(radii_by_dt):
    """Log-log slope of containment radius against dt.

    Arguments:
        radii_by_dt - mapping dt -> representative containment radius
    """
    pairs = sorted((dt, rho) for dt, rho in radii_by_dt.items() if rho > 0)
    if len(pairs) < 2:
        raise ProbeError("insufficient data: need two positive radii")
    dts, rhos = zip(*pairs)
    return float(np.polyfit(np.log(dts), np.log(rhos), 1)[0])


class StarShapeReport(object):
    """Result of star_shape_check."""
    def __init__(self, violations, boundary_violations, checked):
        self.violations = int(violations)
        self.boundary_violations = int(boundary_violations)
        self.checked = int(checked)
        self.passed = self.violations == 0

    def __bool__(self):
        return self.passed

    def __repr__(self):
        return 'StarShapeReport(passed=%s, violations=%d, boundary=%d)' % \
            (self.passed, self.violations, self.boundary_violations)


def star_shape_check(state, center, r, directions=8, stride=1):
    """Check that every wet cell sees the ball B_r(center) inside D_t.

    Segments run from y to x, sampled every h/2, for y the centre, every
    fluid cell centre in B_r(center) and ``directions`` points of the
    circle of radius r. ``stride`` keeps every stride-th cell centre along
    each axis. The targets x are the wet cells on the edge of D_t: the
    segment to an interior cell extends to one ending on the edge. Dry
    samples adjacent to the wet set are counted separately and do not fail
    the check.

    Arguments:
        center - (x, y) point
    """
    grid = state.mask.grid
    wet = state.region
    near = ndimage.binary_dilation(wet, structure=np.ones((3, 3), bool))
    targets = np.argwhere(wet & ~ndimage.binary_erosion(wet, border_value=0))
    if targets.size == 0:
        return StarShapeReport(0, 0, 0)
    h = grid.h
    xs = grid.origin[0] + (targets[:, 0] + 0.5) * h
    ys = grid.origin[1] + (targets[:, 1] + 0.5) * h
    angles = 2.0 * math.pi * np.arange(directions) / directions
    X, Y = grid.centers()
    inner = state.mask.fluid & \
        (np.hypot(X - center[0], Y - center[1]) <= r)
    thin = np.zeros(grid.shape, dtype=bool)
    thin[::stride, ::stride] = True
    sources = [(float(center[0]), float(center[1]))] + \
        [(center[0] + r * math.cos(a), center[1] + r * math.sin(a))
         for a in angles] + \
        list(zip(X[inner & thin].tolist(), Y[inner & thin].tolist()))
    bad = np.zeros(len(targets), dtype=bool)
    edge = np.zeros(len(targets), dtype=bool)
    for sx, sy in sources:
        length = np.hypot(xs - sx, ys - sy).max()
        n = int(math.ceil(length / (0.5 * h))) + 1
        s = np.linspace(0.0, 1.0, n + 1)[:, None]
        px = sx + s * (xs - sx)[None, :]
        py = sy + s * (ys - sy)[None, :]
        i = np.floor((px - grid.origin[0]) / h).astype(np.int64)
        j = np.floor((py - grid.origin[1]) / h).astype(np.int64)
        inside = (i >= 0) & (i < grid.nx) & (j >= 0) & (j < grid.ny)
        i = np.clip(i, 0, grid.nx - 1)
        j = np.clip(j, 0, grid.ny - 1)
        dry = ~wet[i, j] | ~inside
        bad |= np.any(dry & ~(near[i, j] & inside), axis=0)
        edge |= np.any(dry & near[i, j] & inside, axis=0)
    return StarShapeReport(int(bad.sum()), int((edge & ~bad).sum()),
                           len(targets))


def _star_radius(state, center):
    """Half the distance from center to the complement of D0."""
    grid = state.mask.grid
    cell = grid.cell_at(*center)
    if not state.d0_mask[cell]:
        return 0.0
    depth = ndimage.distance_transform_edt(state.d0_mask, sampling=grid.h)
    return 0.5 * float(depth[cell])


def trajectory_diagnostics(trajectory, cfg, center, r=None, tensor=None,
                           experiment_id='evolve', epsilon=0.0, seed=0,
                           gaps=(1, 2, 4)):
    """Diagnostics of a whole trajectory, emitted at the final time.

    star_shape_violations
        star_shape_check of the final state against B_r(center); r is half
        the distance from center to the complement of D0 by default
    containment_exponent
        log-log slope of the largest containment radius between states
        ``gap`` records apart against the time gap
    u_dpdt_error
        max |u - dp/dt| on the common positivity set of the last two
        states, relative to max u
    growth_constant
        of the final state, radii 2h and 4h

    A diagnostic without enough data is skipped with a debug message.
    """
    final = trajectory[-1]
    mask = final.mask
    h = mask.grid.h
    rows = []
    if r is None:
        r = _star_radius(final, center)
    if r > 0.0:
        stride = max(1, int(r / (4.0 * h)))
        report = star_shape_check(final, center, r, stride=stride)
        rows.append(('star_shape_violations', report.violations))
    else:
        LOG.debug("centre %r outside the initial set, no star shape check",
                  center)
    radii = {}
    for gap in gaps:
        pairs = list(zip(trajectory[:-gap], trajectory[gap:]))
        if not pairs:
            continue
        rho = max(containment_radius(a.region, b.region) for a, b in pairs)
        radii[pairs[0][1].t - pairs[0][0].t] = rho * h
    try:
        rows.append(('containment_exponent', containment_exponent(radii)))
    except ProbeError as error:
        LOG.debug("containment exponent: %s", error)
    if len(trajectory) > 1 and final.active.any():
        previous = trajectory[-2]
        common = previous.active & final.active
        if common.any():
            u = recover_u(final, mask, cfg, tensor)
            du = time_derivative(previous, final)
            top = float(np.nanmax(u.values))
            error = float(np.abs(u.values - du.values)[common].max())
            rows.append(('u_dpdt_error', error / top if top > 0 else error))
    if final.active.any():
        rows.append(('growth_constant',
                     growth_constant(final, final.load(), [2 * h, 4 * h])))
    return [MetricsRecord(experiment_id, epsilon, seed, final.t, metric,
                          float(value)) for metric, value in rows]


def write_trajectory_csv(trajectory, path):
    """One row per state: t, area, max_p, fb_cell_count, lipschitz_ratio,
    area_ratio."""
    fileh = open(path, 'w')
    try:
        fileh.write(','.join(TRAJECTORY_HEADER) + '\n')
        area0 = trajectory[0].area if trajectory else 0.0
        previous = None
        for state in trajectory:
            mask = state.mask
            lipschitz = 0.0
            if previous is not None:
                diff = np.where(mask.fluid, state.p.values -
                                previous.p.values, 0.0)
                lipschitz = float(np.abs(diff).max()) / \
                    (state.t - previous.t)
            row = (state.t, state.area, state.max_p,
                   len(extract_free_boundary(state, mask)), lipschitz,
                   state.area * math.exp(-state.t) / area0)
            fileh.write(','.join(format_float(v) if isinstance(v, float)
                                 else '%d' % v for v in row) + '\n')
            previous = state
    finally:
        fileh.close()


def save_trajectory(trajectory, path):
    """Store the states of a trajectory in a compressed npz file."""
    np.savez_compressed(
        path,
        t=np.array([s.t for s in trajectory]),
        step_index=np.array([s.step_index for s in trajectory]),
        p=np.stack([s.p.values for s in trajectory]),
        tau=np.stack([s.tau.values for s in trajectory]),
        d0_mask=trajectory[0].d0_mask,
        mu=np.array([s.mu for s in trajectory]))


def load_trajectory(path, mask):
    """Inverse of save_trajectory on the mask the states belong to."""
    with np.load(path) as data:
        states = []
        for k in range(data['t'].size):
            states.append(ObstacleState(
                mask, data['t'][k],
                ScalarField(mask.grid, data['p'][k]),
                ScalarField(mask.grid, data['tau'][k]), data['d0_mask'],
                mu=data['mu'][k], step_index=data['step_index'][k]))
    return states
