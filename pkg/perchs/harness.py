"""Experiment orchestration.

Usage
-----

    config = load_config('converge.json', ['eps_list=[0.25,0.125]'])
    metrics = run(config)
    summarize([metrics])

Description
-----------

    :py:func:`run` turns a configuration into jobs, one per (epsilon, seed)
    pair in configuration order (a single job for ``homogenize``, one per
    seed for ``corrector``), queues them in ``<output_dir>/jobs`` and lets
    ``jobs`` worker processes consume the queue. Each job writes a private
    staging file ``staging/job_NNNN.csv`` (or ``job_NNNN.err`` on failure);
    the reducer concatenates the staging files in job order into
    ``metrics.csv``, so identical configurations give identical files.

    Work shared by all jobs (effective tensor, homogenized trajectory) is
    done once in the parent before the workers start.

Outputs
-------

    metrics.csv        experiment_id,epsilon,seed,t,metric,value
    config-echo.json   the resolved configuration
    tensor.json        effective tensor (homogenize, converge-*)
    snapshots/job_NNNN/state_000012.pgm
                       wet set snapshots every ``snapshot_every`` steps
    domains/, fields/  masks, descriptors and solution fields

License and Copyright
---------------------

ASL 2.0
"""

import json
import logging
import math
import multiprocessing
import os
import shutil
import sys

import numpy as np
from scipy import ndimage

from perchs import Exceptions
from perchs.Exceptions import PerchsError, ProbeError, SchemaError
from perchs.JobQueue import JobQueue
from perchs.capacity import (capacity_lower_bound_check, green_bounds_check,
                             level_set_capacity_check)
from perchs.config import ExperimentConfig
from perchs.elliptic import (apply_operator, greens_function, harnack_probe,
                             holder_probe, solve_poisson)
from perchs.evolution import (evolution_checks, evolve, init_state,
                              load_trajectory, nondegeneracy_probe,
                              recover_u, save_trajectory,
                              trajectory_diagnostics, write_trajectory_csv)
from perchs.geometry import (DomainMask, generate_domain, verify_separation,
                             volume_fraction)
from perchs.homogenization import (
    EffectiveTensor, heleshaw_convergence_experiment, homogenized_evolution,
    homogenized_evolution_checks, linear_homogenization_experiment,
    model_tensor, periodic_cell, solve_corrector)
from perchs.utils import METRICS_HEADER, MetricsRecord

LOG = logging.getLogger(__name__)

MONOTONE_METRICS = ('l2_error', 'linf_error', 'rel_l2_error',
                    'sup_norm_diff', 'hausdorff')


def _tag(job):
    return 'job_%04d' % job['index']


def plan_jobs(config):
    """Job descriptors in the deterministic reduction order."""
    if config.kind == 'homogenize':
        pairs = [(config.model.period, config.seeds[0])]
    elif config.kind == 'corrector':
        pairs = [(config.model.period, seed) for seed in config.seeds]
    else:
        pairs = [(eps, seed) for eps in config.epsilons()
                 for seed in config.seeds]
    return [{'index': index, 'epsilon': float(eps), 'seed': int(seed)}
            for index, (eps, seed) in enumerate(pairs)]


#
# experiments
#

def _model(config, job):
    return config.model.build(period=job['epsilon'], seed=job['seed'])


def _mask(config, job):
    return generate_domain(_model(config, job), config.grid.build())


def _center_cell(config, mask):
    """Fluid cell nearest to the configured centre (grid centre default)."""
    grid = mask.grid
    if config.center is None:
        cell = grid.center_cell()
    else:
        cell = grid.cell_at(*config.center)
    if mask.fluid[cell]:
        return cell
    _, (ii, jj) = ndimage.distance_transform_edt(~mask.fluid,
                                                 return_indices=True)
    return (int(ii[cell]), int(jj[cell]))


def _d0_center(config):
    """Centre of the initial disc, or the mean vertex of the polygon."""
    if config.d0.kind == 'polygon':
        return tuple(float(v) for v in np.mean(config.d0.vertices, axis=0))
    return tuple(config.d0.center)


def _default_radii(config, grid):
    if config.radii:
        return sorted(config.radii)
    top = 0.25 * min(grid.extent)
    return [float(r) for r in np.geomspace(4.0 * grid.h, top, 6)]


def _records(config, job, rows):
    out = []
    for t, metric, value in rows:
        if value is None or not math.isfinite(value):
            LOG.warning("%s job %d: dropping non-finite %s at t=%g",
                        config.kind, job['index'], metric, t)
            continue
        out.append(MetricsRecord(config.kind, job['epsilon'], job['seed'],
                                 t, metric, value))
    return out


def _gen_domain(config, job, context, out):
    mask = _mask(config, job)
    folder = os.path.join(out, 'domains')
    os.makedirs(folder, exist_ok=True)
    mask.to_pgm(os.path.join(folder, 'mask_%s.pgm' % _tag(job)))
    with open(os.path.join(folder, 'mask_%s.json' % _tag(job)), 'w') as fh:
        json.dump(mask.descriptor(), fh, indent=2, sort_keys=True)
    rows = [(0.0, 'volume_fraction', volume_fraction(mask)),
            (0.0, 'inclusions', len(mask.inclusions)),
            (0.0, 'repaired_cells', mask.metadata.get('repaired_cells', 0))]
    if mask.model.perforated:
        report = verify_separation(mask.model, mask.inclusions)
        rows += [(0.0, 'min_gap', report.min_gap),
                 (0.0, 'max_diameter', report.max_diameter),
                 (0.0, 'separation_passed', float(report.passed))]
    return _records(config, job, rows)


def _solve_linear(config, job, context, out):
    mask = _mask(config, job)
    cfg = config.solver.build()
    v = solve_poisson(mask, config.rhs, cfg)
    folder = os.path.join(out, 'fields')
    os.makedirs(folder, exist_ok=True)
    v.to_csv(os.path.join(folder, 'poisson_%s.csv' % _tag(job)))
    v.to_pgm(os.path.join(folder, 'poisson_%s.pgm' % _tag(job)))
    vec = v.vector(mask)
    residual = apply_operator(mask, v).vector(mask) - config.rhs
    scale = abs(config.rhs) * math.sqrt(vec.size) or 1.0
    rows = [(0.0, 'max_value', float(vec.max())),
            (0.0, 'l2_norm', float(np.linalg.norm(vec)) * mask.grid.h),
            (0.0, 'residual', float(np.linalg.norm(residual)) / scale)]
    return _records(config, job, rows)


def _snapshots(config, job, out):
    if not config.snapshot_every:
        return None
    folder = os.path.join(out, 'snapshots', _tag(job))
    os.makedirs(folder, exist_ok=True)

    def on_step(state):
        if state.step_index % config.snapshot_every == 0:
            state.active_to_pgm(os.path.join(
                folder, 'state_%06d.pgm' % state.step_index))
    return on_step


def _evolve(config, job, context, out):
    mask = _mask(config, job)
    cfg = config.solver.build()
    state = init_state(mask, config.d0.descriptor())
    trajectory = evolve(mask, state, config.T, config.dt, cfg,
                        mode=config.mode,
                        on_step=_snapshots(config, job, out))
    write_trajectory_csv(trajectory, os.path.join(
        out, 'trajectory_%s.csv' % _tag(job)))
    records = evolution_checks(trajectory, config.kind, job['epsilon'],
                               job['seed'], cfg.tol)
    records += trajectory_diagnostics(trajectory, cfg, _d0_center(config),
                                      experiment_id=config.kind,
                                      epsilon=job['epsilon'],
                                      seed=job['seed'])
    final = trajectory[-1]
    center = _center_cell(config, mask) if config.center is not None \
        else mask.grid.cell_at(*_d0_center(config))
    rows = [(final.t, 'fb_radius', final.equivalent_radius()),
            (final.t, 'inner_iterations',
             max(s.inner_iterations for s in trajectory)),
            (final.t, 'inner_violations',
             sum(s.inner_violations for s in trajectory))]
    if mask.fluid[center]:
        rows.append((final.t, 'p_center', float(final.p.values[center])))
        if final.active.any():
            u = recover_u(final, mask, cfg)
            rows.append((final.t, 'u_center', float(u.values[center])))
    return records + _records(config, job, rows)


def _corrector(config, job, context, out):
    model = _model(config, job)
    cell = periodic_cell(model, config.cells_per_period)
    cfg = config.solver.build()
    rows = []
    folder = os.path.join(out, 'fields')
    os.makedirs(folder, exist_ok=True)
    for label, xi in (('e1', (1.0, 0.0)), ('e2', (0.0, 1.0))):
        sol = solve_corrector(cell, xi, cfg)
        sol.w.to_pgm(os.path.join(folder, 'corrector_%s_%s.pgm' %
                                  (label, _tag(job))))
        rows += [(0.0, 'flux_%s_x' % label, sol.flux_avg[0]),
                 (0.0, 'flux_%s_y' % label, sol.flux_avg[1]),
                 (0.0, 'residual_%s' % label, sol.residual)]
    rows.append((0.0, 'mu', volume_fraction(cell)))
    return _records(config, job, rows)


def _tensor_rows(tensor):
    lo, hi = tensor.eigenvalues
    rows = [(0.0, 'a11', tensor.a11), (0.0, 'a12', tensor.a12),
            (0.0, 'a22', tensor.a22), (0.0, 'mu', tensor.mu),
            (0.0, 'asymmetry', tensor.asymmetry),
            (0.0, 'lambda_min', lo), (0.0, 'lambda_max', hi)]
    if tensor.std is not None:
        for name, value in zip(('a11', 'a12', 'a22', 'mu'), tensor.std):
            rows.append((0.0, 'std_%s' % name, value))
    return rows


def _homogenize(config, job, context, out):
    tensor = EffectiveTensor.from_json(context['tensor'])
    return _records(config, job, _tensor_rows(tensor))


def _converge_linear(config, job, context, out):
    tensor = EffectiveTensor.from_json(context['tensor'])
    return linear_homogenization_experiment(
        _model(config, job), [job['epsilon']], config.rhs,
        config.grid.build(), config.solver.build(), tensor=tensor,
        experiment_id=config.kind)


def _converge_heleshaw(config, job, context, out):
    tensor = EffectiveTensor.from_json(context['tensor'])
    grid = config.grid.build()
    cfg = config.solver.build()
    reference = load_trajectory(context['homogenized'],
                                DomainMask.all_fluid(grid))
    records = heleshaw_convergence_experiment(
        _model(config, job), [job['epsilon']], config.d0.descriptor(),
        config.T, config.dt, grid, cfg, tensor=tensor, mode=config.mode,
        reference=reference, experiment_id=config.kind)
    if job['index'] == 0:
        # the homogenized trajectory is shared, epsilon 0 marks its rows
        records += homogenized_evolution_checks(
            reference, tensor, cfg, _d0_center(config),
            experiment_id=config.kind, epsilon=0.0, seed=job['seed'])
    return records


def _green(config, job, context, out):
    mask = _mask(config, job)
    cfg = config.solver.build()
    y = _center_cell(config, mask)
    radii = _default_radii(config, mask.grid)
    green = greens_function(mask, y, cfg)
    rows = []
    for row in green_bounds_check(mask, y, radii, cfg):
        rows += [(row['r'], 'min_ratio', row['min_ratio']),
                 (row['r'], 'max_ratio', row['max_ratio']),
                 (row['r'], 'sandwich', float(row['sandwich']))]
    dist = mask.grid.distance_from(y)
    levels = config.levels or [
        float(green.values[mask.fluid & (dist <= r)].min())
        for r in radii[1:-1]]
    for a, product in level_set_capacity_check(mask, y, levels, cfg,
                                               green=green):
        rows.append((a, 'level_capacity_product', product))
    return _records(config, job, rows)


def _capacity(config, job, context, out):
    grid = config.grid.build()
    center = None
    if config.center is not None:
        center = grid.cell_at(*config.center)
    return capacity_lower_bound_check(
        _model(config, job), [job['epsilon']], config.capacity_radius,
        config.solver.build(), grid, center=center,
        experiment_id=config.kind)


def _probe(config, job, context, out):
    mask = _mask(config, job)
    cfg = config.solver.build()
    center = _center_cell(config, mask)
    radii = _default_radii(config, mask.grid)
    rows = []
    for r, quotient in zip(radii, harnack_probe(mask, center, radii, cfg)):
        rows.append((r, 'harnack_quotient', quotient))
    for k, ratio in enumerate(holder_probe(mask, center, radii[-1], cfg), 1):
        rows.append((float(k), 'holder_ratio', ratio))
    trajectory = evolve(mask, init_state(mask, config.d0.descriptor()),
                        config.T, config.dt, cfg, mode=config.mode,
                        on_step=_snapshots(config, job, out))
    for state in trajectory[1:]:
        try:
            report = nondegeneracy_probe(state, mask)
        except ProbeError as error:
            LOG.debug("t=%g: %s", state.t, error)
            continue
        rows += [(state.t, 'nondegeneracy_slope', report.slope),
                 (state.t, 'nondegeneracy_coefficient', report.coefficient)]
    return _records(config, job, rows)


EXPERIMENTS = {
    'gen-domain': _gen_domain,
    'solve-linear': _solve_linear,
    'evolve': _evolve,
    'corrector': _corrector,
    'homogenize': _homogenize,
    'converge-linear': _converge_linear,
    'converge-heleshaw': _converge_heleshaw,
    'green': _green,
    'capacity': _capacity,
    'probe': _probe,
}


def prepare(config, out):
    """Shared work done once before the workers start."""
    context = {}
    if config.kind in ('homogenize', 'converge-linear', 'converge-heleshaw'):
        model = config.model.build(seed=config.seeds[0])
        seeds = None if model.deterministic or len(config.seeds) < 2 \
            else config.seeds
        tensor = model_tensor(model, config.solver.build(),
                              config.cells_per_period, seeds=seeds)
        context['tensor'] = os.path.join(out, 'tensor.json')
        tensor.to_json(context['tensor'])
        LOG.info("effective tensor %r", tensor)
        if config.kind == 'converge-heleshaw':
            trajectory = homogenized_evolution(
                tensor, config.d0.descriptor(), config.T, config.dt,
                config.grid.build(), config.solver.build(), mode=config.mode)
            context['homogenized'] = os.path.join(out, 'homogenized.npz')
            save_trajectory(trajectory, context['homogenized'])
    return context


#
# workers and reducer
#

def _write_atomically(path, text):
    tmp = path + '.tmp'
    with open(tmp, 'w') as fileh:
        fileh.write(text)
    os.rename(tmp, path)


def run_job(config, job, context, out):
    """Run one job and write its staging file."""
    staging = os.path.join(out, 'staging', _tag(job))
    LOG.info("start %s epsilon=%g seed=%d", config.kind, job['epsilon'],
             job['seed'])
    try:
        records = EXPERIMENTS[config.kind](config, job, context, out)
    except Exception as error:
        kind = type(error).__name__ if isinstance(error, PerchsError) \
            else 'PerchsError'
        message = "%s epsilon=%g seed=%d: %s" % (config.kind, job['epsilon'],
                                                 job['seed'], error)
        if isinstance(error, PerchsError):
            LOG.error("%s", message)
        else:
            LOG.exception("%s", message)
        _write_atomically(staging + '.err', json.dumps(
            {'type': kind, 'message': message}))
        return False
    lines = [','.join(METRICS_HEADER)] + [r.to_row() for r in records]
    _write_atomically(staging + '.csv', '\n'.join(lines) + '\n')
    LOG.info("end %s epsilon=%g seed=%d: %d records", config.kind,
             job['epsilon'], job['seed'], len(records))
    return True


def _worker_main(config_json, out, context):
    config = ExperimentConfig.model_validate_json(config_json)
    queue = JobQueue(os.path.join(out, 'jobs'))
    for name in queue:
        if not queue.lock(name):
            continue
        job = queue.get(name)
        run_job(config, job, context, out)
        queue.remove(name)


def reduce_staging(out, jobs):
    """Concatenate staging files in job order into metrics.csv.

    Raise:
        PerchsError subclass of the first failed job
    """
    lines = [','.join(METRICS_HEADER)]
    for job in jobs:
        base = os.path.join(out, 'staging', _tag(job))
        if os.path.exists(base + '.err'):
            with open(base + '.err') as fileh:
                failure = json.load(fileh)
            error = getattr(Exceptions, failure['type'], PerchsError)
            raise error(failure['message'])
        if not os.path.exists(base + '.csv'):
            raise PerchsError("job %d left no staging file" % job['index'])
        with open(base + '.csv') as fileh:
            lines.extend(line.rstrip('\n') for line in fileh.readlines()[1:])
    path = os.path.join(out, 'metrics.csv')
    _write_atomically(path, '\n'.join(lines) + '\n')
    return path


def run(config):
    """Run an experiment; return the path of metrics.csv.

    Raise:
        PerchsError - configuration or solver failures, with context
    """
    out = config.output_dir
    os.makedirs(out, exist_ok=True)
    for stale in ('jobs', 'staging'):
        shutil.rmtree(os.path.join(out, stale), ignore_errors=True)
    os.makedirs(os.path.join(out, 'staging'))
    _write_atomically(os.path.join(out, 'config-echo.json'), config.echo())
    jobs = plan_jobs(config)
    queue = JobQueue(os.path.join(out, 'jobs'))
    for job in jobs:
        queue.add(job)
    context = prepare(config, out)
    config_json = config.model_dump_json()
    workers = min(config.jobs, len(jobs))
    if workers <= 1:
        _worker_main(config_json, out, context)
    else:
        procs = [multiprocessing.Process(target=_worker_main,
                                         args=(config_json, out, context))
                 for _ in range(workers)]
        for proc in procs:
            proc.start()
        for proc in procs:
            proc.join()
    queue.purge()
    return reduce_staging(out, jobs)


#
# summaries
#

def read_metrics(path):
    """Records of one metrics CSV.

    Raise:
        SchemaError - header mismatch or malformed row
    """
    with open(path) as fileh:
        header = fileh.readline().rstrip('\r\n')
        if tuple(header.split(',')) != METRICS_HEADER:
            raise SchemaError("%s: unexpected header %r" % (path, header))
        records = []
        for number, line in enumerate(fileh, 2):
            if not line.strip():
                continue
            try:
                records.append(MetricsRecord.from_row(line))
            except ValueError as error:
                raise SchemaError("%s:%d: %s" % (path, number, error))
    return records


def summarize(paths, stream=None):
    """Print mean, min and max per (metric, epsilon, t), averaging over
    seeds, and monotonicity verdicts for the convergence metrics.

    A convergence metric is monotone when its mean decreases strictly with
    epsilon at the last time reported for at least two epsilons.

    Return: (rows, verdicts) with rows (metric, epsilon, t, count, mean,
            min, max) and verdicts {metric: bool}
    """
    stream = sys.stdout if stream is None else stream
    groups = {}
    for path in paths:
        for record in read_metrics(path):
            groups.setdefault((record.metric, record.epsilon, record.t),
                              []).append(record.value)
    rows = []
    for (metric, eps, t) in sorted(groups, key=lambda k: (k[0], k[2],
                                                          -k[1])):
        values = np.array(groups[(metric, eps, t)])
        rows.append((metric, eps, t, values.size, float(values.mean()),
                     float(values.min()), float(values.max())))
    verdicts = {}
    for metric in MONOTONE_METRICS:
        by_t = {}
        for row in rows:
            if row[0] == metric:
                by_t.setdefault(row[2], []).append(row[4])
        times = [t for t in sorted(by_t) if len(by_t[t]) > 1]
        if times:
            means = by_t[times[-1]]
            verdicts[metric] = all(b < a for a, b in zip(means, means[1:]))
    stream.write('%-28s %12s %12s %6s %16s %16s %16s\n' %
                 ('metric', 'epsilon', 't', 'n', 'mean', 'min', 'max'))
    for metric, eps, t, count, mean, lo, hi in rows:
        stream.write('%-28s %12.6g %12.6g %6d %16.9g %16.9g %16.9g\n' %
                     (metric, eps, t, count, mean, lo, hi))
    for metric, ok in sorted(verdicts.items()):
        stream.write('%s: monotone: %s\n' % (metric, 'yes' if ok else 'no'))
    return rows, verdicts
