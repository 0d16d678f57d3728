"""Cell problems, effective coefficients and homogenization experiments.

Usage
-----

    cell = periodic_cell(model)
    tensor = effective_tensor(cell, SolverConfig())
    records = linear_homogenization_experiment(model, [0.25, 0.125], 1.0,
                                               grid, SolverConfig())

Description
-----------

    The corrector in direction xi is ``w = xi . x + chi`` with chi periodic
    over the cell and zero flux through the walls of the inclusions. On the
    finite volume grid the periodic part solves ``L chi = b`` where b_c is
    the imbalance of the open faces of cell c in direction xi, divided by h.

    The effective tensor has the cell averages of ``1_fluid grad w`` as its
    columns. Periodic models need one cell; random models average an 8 x 8
    period supercell over 8 seeds. The result is symmetrized and the
    asymmetry before symmetrization is kept for inspection.

    The homogenized problems use the 9-point anisotropic operator on an all
    fluid mask with the source scaled by the volume fraction mu.

License and Copyright
---------------------

ASL 2.0
"""

import json
import logging
import math

import numpy as np

from perchs.Exceptions import GeometryError, SolverError
from perchs.elliptic import (ScalarField, assemble_operator, colour_vector,
                             solve_linear, solve_poisson)
from perchs.evolution import (evolve, extract_free_boundary,
                              hausdorff_distance, init_state, recover_u,
                              trajectory_diagnostics)
from perchs.geometry import (DomainMask, GridSpec, PerforationModel,
                             connected_across_periods, generate_domain,
                             volume_fraction)
from perchs.utils import MetricsRecord

LOG = logging.getLogger(__name__)

DEFAULT_SEEDS = 8
DEFAULT_PERIODS = 8


class EffectiveTensor(object):
    """Symmetric effective tensor A with the volume fraction mu."""
    def __init__(self, a11, a12, a22, mu, asymmetry=0.0, std=None,
                 model=None, grid=None, seeds=()):
        """
        Arguments:
            a11, a12, a22 - entries of the symmetric matrix A
            mu            - volume fraction in (0, 1]
            asymmetry     - |A12 - A21| before symmetrization
            std           - across-seed standard deviation of the entries
            model, grid, seeds - provenance, serialized with the tensor

        Raise:
            SolverError - mu out of range, non-finite entries
        """
        values = (a11, a12, a22, mu)
        if not all(np.isfinite(v) for v in values):
            raise SolverError("effective tensor entries must be finite")
        if not 0.0 < mu <= 1.0:
            raise SolverError("volume fraction mu=%r out of (0, 1]" % mu)
        self.a11 = float(a11)
        self.a12 = float(a12)
        self.a22 = float(a22)
        self.mu = float(mu)
        self.asymmetry = float(asymmetry)
        self.std = None if std is None else [float(s) for s in std]
        self.model = model
        self.grid = grid
        self.seeds = [int(s) for s in seeds]

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 1.0, 1.0)

    @property
    def matrix(self):
        return np.array([[self.a11, self.a12], [self.a12, self.a22]])

    @property
    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)

    @property
    def is_spd(self):
        return bool(self.eigenvalues[0] > 0.0)

    def rotated90(self):
        """Tensor of the cell rotated by a quarter turn: R A R^T."""
        return EffectiveTensor(self.a22, -self.a12, self.a11, self.mu,
                               self.asymmetry)

    def to_dict(self):
        data = {'a11': self.a11, 'a12': self.a12, 'a22': self.a22,
                'mu': self.mu, 'asymmetry': self.asymmetry,
                'seeds': self.seeds}
        if self.std is not None:
            data['std'] = self.std
        if self.model is not None:
            data['model_descriptor'] = self.model.to_dict()
        if self.grid is not None:
            data['grid'] = self.grid.to_dict()
        return data

    @classmethod
    def from_dict(cls, data):
        model = data.get('model_descriptor')
        grid = data.get('grid')
        return cls(data['a11'], data['a12'], data['a22'], data['mu'],
                   data.get('asymmetry', 0.0), data.get('std'),
                   PerforationModel.from_dict(model) if model else None,
                   GridSpec.from_dict(grid) if grid else None,
                   data.get('seeds', ()))

    def to_json(self, path):
        fileh = open(path, 'w')
        try:
            json.dump(self.to_dict(), fileh, indent=2, sort_keys=True)
            fileh.write('\n')
        finally:
            fileh.close()

    @classmethod
    def from_json(cls, path):
        fileh = open(path)
        try:
            return cls.from_dict(json.load(fileh))
        finally:
            fileh.close()

    def __repr__(self):
        return 'EffectiveTensor(a11=%.8g, a12=%.3g, a22=%.8g, mu=%.6g)' % \
            (self.a11, self.a12, self.a22, self.mu)


class CorrectorSolution(object):
    """Corrector in one direction.

    Attributes:
        w        - ScalarField, xi . x + chi on the cell
        chi      - ScalarField, periodic part with zero mean
        xi       - direction
        flux_avg - cell average of 1_fluid grad w
        residual - max |L chi - b| relative to max |b|
    """
    def __init__(self, mask, w, chi, xi, flux_avg, residual):
        self.mask = mask
        self.w = w
        self.chi = chi
        self.xi = np.asarray(xi, dtype=float)
        self.flux_avg = np.asarray(flux_avg, dtype=float)
        self.residual = float(residual)


def periodic_cell(model, cells_per_period=16, periods=1):
    """Periodized mask covering ``periods x periods`` lattice periods."""
    n = int(cells_per_period) * int(periods)
    grid = GridSpec(n, n, model.period / float(cells_per_period))
    return generate_domain(model, grid, dirichlet=False, periodic=True)


def _face_imbalance(mask, xi):
    ox = mask.open_x.astype(float)
    oy = mask.open_y.astype(float)
    b = xi[0] * (ox - np.roll(ox, 1, axis=0)) + \
        xi[1] * (oy - np.roll(oy, 1, axis=1))
    return (b / mask.grid.h).ravel()[mask.cells]


def solve_corrector(mask, xi, cfg):
    """Solve the periodic cell problem in direction xi.

    Raise:
        SolverError   - mask not periodized, solver failures
        GeometryError - fluid set disconnected across periods
    """
    if not mask.periodic:
        raise SolverError("the cell problem needs a periodized mask")
    if not connected_across_periods(mask.fluid):
        raise GeometryError("fluid set is disconnected across periods")
    xi = np.asarray(xi, dtype=float)
    matrix = assemble_operator(mask)
    b = _face_imbalance(mask, xi)
    if cfg.method == 'direct':
        cfg = cfg.replace(method='cg')
    chi = solve_linear(matrix, b, cfg, colours=colour_vector(mask),
                       shape=mask.shape)
    chi = chi - chi.mean()
    bmax = float(np.abs(b).max()) if b.size else 0.0
    residual = float(np.abs(matrix.dot(chi) - b).max()) / bmax \
        if bmax > 0 else 0.0
    grid = mask.grid
    full = ScalarField.from_vector(mask, chi).values
    X, Y = grid.centers()
    w = ScalarField(grid, np.where(mask.fluid,
                                   xi[0] * X + xi[1] * Y + full, np.nan))
    values = np.where(mask.fluid, full, 0.0)
    flux = []
    for axis, faces in ((0, mask.open_x), (1, mask.open_y)):
        grad = (np.roll(values, -1, axis=axis) - values) / grid.h + xi[axis]
        flux.append(float(grad[faces].sum()) / float(grid.nx * grid.ny))
    LOG.debug("corrector xi=%s: flux %s, residual %.3e", xi, flux, residual)
    return CorrectorSolution(mask, w, ScalarField(grid, np.where(
        mask.fluid, full, np.nan)), xi, flux, residual)


def effective_tensor(mask_period, cfg):
    """Effective tensor of one periodized (super)cell."""
    first = solve_corrector(mask_period, (1.0, 0.0), cfg).flux_avg
    second = solve_corrector(mask_period, (0.0, 1.0), cfg).flux_avg
    a = np.column_stack((first, second))
    asymmetry = abs(a[0, 1] - a[1, 0])
    norm = np.linalg.norm(a)
    if norm > 0 and asymmetry > 1e-6 * norm:
        LOG.warning("effective tensor asymmetry %.3e before symmetrization",
                    asymmetry)
    sym = 0.5 * (a + a.T)
    return EffectiveTensor(sym[0, 0], sym[0, 1], sym[1, 1],
                           volume_fraction(mask_period), asymmetry,
                           model=mask_period.model, grid=mask_period.grid)


def model_tensor(model, cfg, cells_per_period=16, periods=None, seeds=None):
    """Effective tensor of a perforation model.

    Deterministic models use a single period; random ones an
    ``periods x periods`` supercell averaged over seeds (default 8 of each),
    with the across-seed standard deviation of (a11, a12, a22, mu).
    """
    if not model.perforated:
        return EffectiveTensor(1.0, 0.0, 1.0, 1.0, model=model)
    if model.deterministic:
        tensor = effective_tensor(periodic_cell(model, cells_per_period, 1),
                                  cfg)
        tensor.seeds = [model.seed]
        return tensor
    periods = DEFAULT_PERIODS if periods is None else int(periods)
    if seeds is None:
        seeds = [model.seed + k for k in range(DEFAULT_SEEDS)]
    samples = []
    grid = None
    for seed in seeds:
        cell = periodic_cell(model.with_seed(seed), cells_per_period,
                             periods)
        grid = cell.grid
        t = effective_tensor(cell, cfg)
        samples.append((t.a11, t.a12, t.a22, t.mu, t.asymmetry))
        LOG.debug("seed %d: %r", seed, t)
    samples = np.array(samples)
    mean = samples.mean(axis=0)
    std = samples[:, :4].std(axis=0)
    return EffectiveTensor(mean[0], mean[1], mean[2], mean[3],
                           samples[:, 4].max(), std, model=model, grid=grid,
                           seeds=seeds)


def quadratic_form(tensor, p):
    """Q(p) = (A p . p) / mu."""
    p = np.asarray(p, dtype=float)
    return float(p.dot(tensor.matrix.dot(p))) / tensor.mu


def normal_velocity(tensor, grad):
    """Homogenized front speed Q(grad u) / |grad u| (0 where grad u = 0).

    Arguments:
        grad - array of shape (..., 2)
    """
    grad = np.asarray(grad, dtype=float)
    a = tensor.matrix
    q = np.einsum('...i,ij,...j->...', grad, a, grad) / tensor.mu
    norm = np.linalg.norm(grad, axis=-1)
    with np.errstate(invalid='ignore', divide='ignore'):
        speed = np.where(norm > 0, q / np.where(norm > 0, norm, 1.0), 0.0)
    return speed if speed.ndim else float(speed)


def _rhs_values(rhs, grid):
    if callable(rhs):
        X, Y = grid.centers()
        return np.asarray(rhs(X, Y), dtype=float)
    return np.full(grid.shape, float(rhs))


def _check_eps_list(eps_list, grid):
    eps_list = [float(e) for e in eps_list]
    if not eps_list:
        raise SolverError("eps_list is empty")
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise SolverError("eps_list must be strictly descending")
    for eps in eps_list:
        if eps < 4.0 * grid.h * (1.0 - 1e-12):
            raise GeometryError("resolution too coarse: epsilon %g needs "
                                "h <= %g" % (eps, eps / 4.0))
    return eps_list


def linear_homogenization_experiment(model, eps_list, rhs, grid, cfg,
                                     tensor=None,
                                     experiment_id='converge-linear'):
    """Compare perforated Dirichlet solutions with the homogenized one.

    For each epsilon the model is scaled to period epsilon and
    ``-Laplace u_eps = rhs`` solved on the perforated grid; the homogenized
    ``-div(A grad u) = mu rhs`` is solved once on the all fluid grid.
    Errors are measured on the fluid cells: l2_error, linf_error and
    rel_l2_error.
    """
    eps_list = _check_eps_list(eps_list, grid)
    if tensor is None:
        tensor = model_tensor(model, cfg)
    values = _rhs_values(rhs, grid)
    flat = DomainMask.all_fluid(grid)
    homog = solve_poisson(flat, tensor.mu * values, cfg, tensor).values
    records = []
    for eps in eps_list:
        mask = generate_domain(model.with_period(eps), grid)
        u_eps = solve_poisson(mask, values, cfg).values
        diff = (u_eps - homog)[mask.fluid]
        l2 = math.sqrt(float(np.sum(diff ** 2))) * grid.h
        ref = math.sqrt(float(np.sum(homog[mask.fluid] ** 2))) * grid.h
        for metric, value in (('l2_error', l2),
                              ('linf_error', float(np.abs(diff).max())),
                              ('rel_l2_error', l2 / ref if ref > 0 else 0.0)):
            records.append(MetricsRecord(experiment_id, eps, model.seed,
                                         0.0, metric, value))
        LOG.info("epsilon %g: l2 error %.6g", eps, l2)
    return records


def homogenized_evolution(tensor, d0, T, dt, grid, cfg, mode='explicit',
                          record_every=1, on_step=None):
    """Hele-Shaw evolution of the homogenized problem on an all fluid grid.

    Raise:
        SolverError - tensor not positive definite
    """
    if not tensor.is_spd:
        raise SolverError("homogenized evolution needs an SPD tensor, got "
                          "%r" % tensor)
    mask = DomainMask.all_fluid(grid)
    state = init_state(mask, d0)
    return evolve(mask, state, T, dt, cfg, mode=mode, tensor=tensor,
                  record_every=record_every, on_step=on_step)


def compare_trajectories(perforated, homogenized):
    """(t, sup_norm_diff, hausdorff) per common time; hausdorff is None
    when one of the free boundaries is empty."""
    by_step = dict((s.step_index, s) for s in homogenized)
    rows = []
    for state in perforated:
        ref = by_step.get(state.step_index)
        if ref is None or state.t == 0.0:
            continue
        mask = state.mask
        diff = np.abs(state.p.values - ref.p.values)[mask.fluid]
        sup = float(diff.max()) if diff.size else 0.0
        fb = extract_free_boundary(state, mask)
        fb_ref = extract_free_boundary(ref, ref.mask)
        dist = None
        if not fb.is_empty and not fb_ref.is_empty:
            dist = hausdorff_distance(fb, fb_ref, mask.grid)
        rows.append((state.t, sup, dist))
    return rows


def _axis_front(state, u, cell, axis, sign, fit):
    """Outer face of the positivity run from cell along one half axis and
    the slope of u over the last ``fit`` cells of the run; None when the
    run is shorter than two cells."""
    grid = state.mask.grid
    if axis == 0:
        line, values = state.active[:, cell[1]], u.values[:, cell[1]]
    else:
        line, values = state.active[cell[0], :], u.values[cell[0], :]
    k = cell[axis]
    if not line[k]:
        return None
    while 0 <= k + sign < line.size and line[k + sign]:
        k += sign
    run = np.arange(k, k - sign * fit, -sign)
    run = run[(run >= 0) & (run < line.size)]
    if run.size < 2 or not np.all(line[run]):
        return None
    coords = grid.origin[axis] + (run + 0.5) * grid.h
    slope = float(np.polyfit(coords, values[run], 1)[0])
    return grid.origin[axis] + (k + 0.5 + 0.5 * sign) * grid.h, slope


def front_speeds(state, u, tensor, center, fit=4):
    """Extent of the positivity set and predicted front speed per axis.

    Along each half axis through center the gradient of u is fitted over
    the last ``fit`` cells before the front and turned into a speed with
    :py:func:`normal_velocity`.

    Return: {axis: (extent, mean speed of the two half axes)}
    """
    cell = state.mask.grid.cell_at(*center)
    out = {}
    for axis in (0, 1):
        ends = [_axis_front(state, u, cell, axis, sign, fit)
                for sign in (-1, 1)]
        if None in ends:
            continue
        speeds = []
        for _, slope in ends:
            grad = np.zeros(2)
            grad[axis] = slope
            speeds.append(normal_velocity(tensor, grad))
        out[axis] = (ends[1][0] - ends[0][0], float(np.mean(speeds)))
    return out


def elongation(state):
    """sqrt of the ratio of the x and y second moments of D_t."""
    X, Y = state.mask.grid.centers()
    region = state.region
    vx, vy = np.var(X[region]), np.var(Y[region])
    return math.sqrt(vx / vy) if vy > 0 else float('inf')


def homogenized_evolution_checks(trajectory, tensor, cfg, center=(0.0, 0.0),
                                 experiment_id='evolve-homogenized',
                                 epsilon=0.0, seed=0, fit=4):
    """Checks of a homogenized Hele-Shaw trajectory.

    Emits area_ratio ``|D_t| exp(-t) / |D_0|`` and elongation at every
    recorded time; at the final time the measured front speeds
    front_speed_x and front_speed_y (half the growth of the extent of the
    positivity set along the axes through center, per unit time), the
    predicted_speed_x and predicted_speed_y averaged over the recorded
    states, their largest relative difference front_speed_error, and the
    diagnostics of :py:func:`perchs.evolution.trajectory_diagnostics`.
    """
    records = []

    def emit(t, metric, value):
        records.append(MetricsRecord(experiment_id, epsilon, seed, t, metric,
                                     float(value)))

    first = trajectory[0]
    area0 = float(first.d0_mask.sum())
    for state in trajectory:
        emit(state.t, 'area_ratio',
             state.region.sum() * math.exp(-state.t) / area0)
        emit(state.t, 'elongation', elongation(state))
    samples = []
    for state in trajectory[1:]:
        if not state.active.any():
            continue
        u = recover_u(state, state.mask, cfg, tensor)
        samples.append((state.t, front_speeds(state, u, tensor, center,
                                              fit)))
    final = trajectory[-1]
    errors = []
    for axis, name in ((0, 'x'), (1, 'y')):
        rows = [(t, fronts[axis]) for t, fronts in samples if axis in fronts]
        if len(rows) < 2 or rows[-1][0] <= rows[0][0]:
            LOG.debug("not enough fronts along %s for a speed", name)
            continue
        (t0, (e0, _)), (t1, (e1, _)) = rows[0], rows[-1]
        measured = 0.5 * (e1 - e0) / (t1 - t0)
        times = np.array([t for t, _ in rows])
        speeds = np.array([speed for _, (_, speed) in rows])
        predicted = float(np.sum(0.5 * (speeds[1:] + speeds[:-1]) *
                                 np.diff(times))) / (t1 - t0)
        emit(final.t, 'front_speed_%s' % name, measured)
        emit(final.t, 'predicted_speed_%s' % name, predicted)
        if predicted > 0:
            errors.append(abs(measured - predicted) / predicted)
    if errors:
        emit(final.t, 'front_speed_error', max(errors))
    return records + trajectory_diagnostics(
        trajectory, cfg, center, tensor=tensor, experiment_id=experiment_id,
        epsilon=epsilon, seed=seed)


def heleshaw_convergence_experiment(model, eps_list, d0, T, dt, grid, cfg,
                                    tensor=None, mode='explicit',
                                    record_every=1, reference=None,
                                    experiment_id='converge-heleshaw'):
    """Perforated against homogenized Hele-Shaw evolution per epsilon.

    Arguments:
        reference - precomputed homogenized trajectory on the same grid
                    and with the same dt and record_every

    Emits sup_norm_diff and hausdorff at every recorded time.
    """
    eps_list = _check_eps_list(eps_list, grid)
    if reference is None:
        if tensor is None:
            tensor = model_tensor(model, cfg)
        reference = homogenized_evolution(tensor, d0, T, dt, grid, cfg,
                                          mode=mode,
                                          record_every=record_every)
    records = []
    for eps in eps_list:
        mask = generate_domain(model.with_period(eps), grid)
        trajectory = evolve(mask, init_state(mask, d0), T, dt, cfg,
                            mode=mode, record_every=record_every)
        for t, sup, dist in compare_trajectories(trajectory, reference):
            records.append(MetricsRecord(experiment_id, eps, model.seed, t,
                                         'sup_norm_diff', sup))
            if dist is None:
                LOG.warning("epsilon %g, t=%g: empty free boundary, no "
                            "Hausdorff distance", eps, t)
            else:
                records.append(MetricsRecord(experiment_id, eps, model.seed,
                                             t, 'hausdorff', dist))
    return records
