# -*- coding: utf-8 -*-

import math
import os
import shutil
import tempfile
import time
import unittest

import numpy as np

from perchs.Exceptions import GeometryError, ProbeError, SolverError
from perchs.elliptic import SolverConfig
from perchs.evolution import (FreeBoundary, containment_exponent,
                              containment_radius, evolution_checks, evolve,
                              extract_free_boundary, hausdorff_distance,
                              init_state, load_trajectory,
                              nondegeneracy_probe, recover_u,
                              save_trajectory, star_shape_check, step,
                              time_derivative, trajectory_diagnostics,
                              write_trajectory_csv)
from perchs.geometry import (DomainMask, GridSpec, PerforationModel,
                             generate_domain)
from perchs.obstacle import solve_obstacle

__all__ = ['TestStep', 'TestRadialDroplet', 'TestPerforatedDroplet',
           'TestFreeBoundary', 'TestFineRadialDroplet']

SLOW = os.environ.get('PERCHS_SLOW') == '1'

DISC = {'kind': 'disc', 'center': [0.0, 0.0], 'radius': 1.0}

SMALL_DISC = {'kind': 'disc', 'center': [0.0, 0.0], 'radius': 0.5}

_CACHE = {}


def radial_run():
    """Droplet from the unit disc on [-3, 3]^2, h = 1/16, dt = 1/32."""
    if 'radial' not in _CACHE:
        grid = GridSpec.box(-3.0, 3.0, -3.0, 3.0, 1.0 / 16)
        mask = DomainMask.all_fluid(grid)
        cfg = SolverConfig(tol=1e-9)
        trajectory = evolve(mask, init_state(mask, DISC), 1.0, 1.0 / 32,
                            cfg)
        _CACHE['radial'] = (mask, cfg, trajectory)
    return _CACHE['radial']


def fine_radial_run():
    """The same droplet on [-4, 4]^2 with h = dt = 1/64, timed."""
    if 'fine' not in _CACHE:
        grid = GridSpec.box(-4.0, 4.0, -4.0, 4.0, 1.0 / 64)
        mask = DomainMask.all_fluid(grid)
        start = time.time()
        trajectory = evolve(mask, init_state(mask, DISC), 1.0, 1.0 / 64,
                            SolverConfig(), record_every=16)
        _CACHE['fine'] = (mask, trajectory, time.time() - start)
    return _CACHE['fine']


def center_rate_error(dt, T=0.5):
    """|u - dp/dt| at the centre of a droplet at time T."""
    grid = GridSpec.box(-2.0, 2.0, -2.0, 2.0, 1.0 / 32)
    mask = DomainMask.all_fluid(grid)
    cfg = SolverConfig(tol=1e-9)
    trajectory = evolve(mask, init_state(mask, DISC), T, dt, cfg)
    previous, current = trajectory[-2], trajectory[-1]
    center = grid.cell_at(0.0, 0.0)
    u = recover_u(current, mask, cfg)
    rate = time_derivative(previous, current)
    return abs(u.values[center] - rate.values[center])


class TestEvolution(unittest.TestCase):

    def setUp(self):
        self.tempdir = tempfile.mkdtemp(prefix='perchs-evolution')
        self.grid = GridSpec.box(-2.0, 2.0, -2.0, 2.0, 1.0 / 16)
        self.flat = DomainMask.all_fluid(self.grid)
        self.cfg = SolverConfig(tol=1e-9)

    def tearDown(self):
        shutil.rmtree(self.tempdir, ignore_errors=True)


class TestStep(TestEvolution):

    def test1_init(self):
        'init_state()'
        state = init_state(self.flat, DISC)
        self.assertEqual(state.t, 0.0)
        self.assertEqual(state.max_p, 0.0)
        self.assertAlmostEqual(state.area, math.pi, delta=0.05)
        far = {'kind': 'disc', 'center': [10.0, 10.0], 'radius': 0.5}
        self.assertRaises(GeometryError, init_state, self.flat, far)

    def test2_checks(self):
        'step() argument checks'
        state = init_state(self.flat, DISC)
        self.assertRaises(SolverError, step, state, 0.0, 'explicit',
                          self.cfg, self.flat)
        self.assertRaises(SolverError, step, state, 0.1, 'implicit',
                          self.cfg, self.flat)
        self.assertRaises(SolverError, evolve, self.flat, state, 1.0, 0.3,
                          self.cfg)

    def test3_tau(self):
        'step() accumulates wet time'
        state = init_state(self.flat, DISC)
        dt = 1.0 / 32
        nxt = step(state, dt, 'explicit', self.cfg, self.flat)
        self.assertEqual(nxt.step_index, 1)
        self.assertTrue(np.all(nxt.tau.values[state.d0_mask] == dt))
        self.assertTrue(np.all(nxt.tau.values[~state.d0_mask] == 0.0))
        self.assertTrue(nxt.active.any())

    def test4_fixed_point(self):
        'step() fixed point iterates are monotone'
        # iterates only grow, up to the solver tolerance
        cfg = SolverConfig(tol=1e-8, relaxation=1.0)
        mask = DomainMask.all_fluid(GridSpec.box(-2.0, 2.0, -2.0, 2.0,
                                                 1.0 / 8))
        state = init_state(mask, DISC)
        trajectory = evolve(mask, state, 0.25, 1.0 / 16, cfg,
                            mode='fixed_point')
        for s in trajectory[1:]:
            self.assertLessEqual(s.inner_iterations, cfg.inner_max)
            self.assertEqual(s.inner_violations, 0)
        explicit = evolve(mask, state, 0.25, 1.0 / 16, cfg)
        self.assertGreaterEqual(trajectory[-1].area, explicit[-1].area)

    def test5_load(self):
        'ObstacleState.load() is the load p solves'
        mask, cfg, trajectory = radial_run()
        state = trajectory[16]
        sol = solve_obstacle(mask, state.load(), cfg)
        self.assertTrue(np.allclose(sol.vector, state.p.vector(mask),
                                    atol=1e-6))
        self.assertTrue(np.all(state.load()[state.d0_mask] >= 0.0))


class TestRadialDroplet(TestEvolution):

    def test1_radius(self):
        'radial droplet radius and central pressure at t = 1'
        mask, _, trajectory = radial_run()
        final = trajectory[-1]
        self.assertAlmostEqual(final.t, 1.0)
        self.assertAlmostEqual(final.equivalent_radius(), math.exp(0.5),
                               delta=0.05 * math.exp(0.5))
        center = mask.grid.cell_at(0.0, 0.0)
        self.assertAlmostEqual(final.p.values[center], (math.e - 1) / 4,
                               delta=0.05 * (math.e - 1) / 4)

    def test2_checks(self):
        'evolution_checks() on the radial droplet'
        _, cfg, trajectory = radial_run()
        records = evolution_checks(trajectory, tol=cfg.tol)
        by_metric = {}
        for record in records:
            by_metric.setdefault(record.metric, []).append(record.value)
        self.assertEqual(max(by_metric['monotonicity_violations']), 0)
        for ratio in by_metric['area_ratio']:
            self.assertAlmostEqual(ratio, 1.0, delta=0.05)
        self.assertEqual(len(by_metric['lipschitz_ratio']),
                         len(trajectory) - 1)
        self.assertTrue(all(r >= 0 for r in by_metric['containment_radius']))

    def test3_pressure(self):
        'recover_u() matches the time difference of p'
        mask, cfg, trajectory = radial_run()
        previous, current = trajectory[-2], trajectory[-1]
        u = recover_u(current, mask, cfg)
        du = time_derivative(previous, current)
        common = previous.active & current.active
        error = np.abs(u.values - du.values)[common].max()
        self.assertLess(error, 0.25 * np.nanmax(u.values))

    def test4_star_shape(self):
        'star_shape_check() on a disc'
        mask, _, trajectory = radial_run()
        for state in trajectory[::8]:
            report = star_shape_check(state, (0.0, 0.0), 0.5)
            self.assertTrue(report.passed, repr(report))

    def test5_nondegeneracy(self):
        'nondegeneracy_probe() quadratic growth'
        mask, _, trajectory = radial_run()
        report = nondegeneracy_probe(trajectory[-1], mask)
        self.assertTrue(1.5 <= report.slope <= 2.5, repr(report))
        self.assertGreater(report.coefficient, 0.0)
        self.assertRaises(ProbeError, nondegeneracy_probe, trajectory[0],
                          mask)

    def test6_outputs(self):
        'write_trajectory_csv() / save_trajectory()'
        mask, _, trajectory = radial_run()
        path = os.path.join(self.tempdir, 'trajectory.csv')
        write_trajectory_csv(trajectory, path)
        lines = open(path).read().splitlines()
        self.assertEqual(lines[0],
                         't,area,max_p,fb_cell_count,lipschitz_ratio,'
                         'area_ratio')
        self.assertEqual(len(lines), len(trajectory) + 1)
        path = os.path.join(self.tempdir, 'trajectory.npz')
        save_trajectory(trajectory, path)
        loaded = load_trajectory(path, mask)
        self.assertEqual([s.step_index for s in loaded],
                         [s.step_index for s in trajectory])
        self.assertTrue(np.array_equal(loaded[-1].active,
                                       trajectory[-1].active))

    def test7_rate_first_order(self):
        'recover_u() against dp/dt is first order in dt'
        coarse = center_rate_error(1.0 / 8)
        fine = center_rate_error(1.0 / 16)
        self.assertTrue(1.3 <= coarse / fine <= 3.0, (coarse, fine))

    def test8_diagnostics(self):
        'trajectory_diagnostics() on the radial droplet'
        _, cfg, trajectory = radial_run()
        records = trajectory_diagnostics(trajectory, cfg, (0.0, 0.0),
                                         epsilon=0.0, seed=4)
        values = dict((r.metric, r.value) for r in records)
        self.assertEqual(set(values), set(['star_shape_violations',
                                           'containment_exponent',
                                           'u_dpdt_error',
                                           'growth_constant']))
        self.assertEqual(values['star_shape_violations'], 0.0)
        self.assertLess(values['u_dpdt_error'], 0.25)
        self.assertTrue(0.0 < values['growth_constant'] < 10.0)
        for record in records:
            self.assertAlmostEqual(record.t, 1.0)
            self.assertEqual(record.seed, 4)

class TestPerforatedDroplet(TestEvolution):

    def test1_area_law(self):
        'area of the wet fluid grows like exp(t)'
        model = PerforationModel('square_site', 0.5, 1.0, 0.5)
        mask = generate_domain(model, self.grid)
        trajectory = evolve(mask, init_state(mask, DISC), 0.5, 1.0 / 32,
                            self.cfg)
        records = evolution_checks(trajectory, epsilon=0.5,
                                   tol=self.cfg.tol)
        for record in records:
            if record.metric == 'area_ratio':
                self.assertAlmostEqual(record.value, 1.0, delta=0.05)
            if record.metric == 'monotonicity_violations':
                self.assertEqual(record.value, 0)
        final = trajectory[-1]
        self.assertFalse(np.any(final.active & ~mask.fluid))

    def test2_fixed_point(self):
        'fixed point stepping on a perforated mask'
        model = PerforationModel('square_site', 0.5, 1.0, 0.125)
        mask = generate_domain(model, GridSpec.box(-1.5, 1.5, -1.5, 1.5,
                                                   1.0 / 32))
        cfg = SolverConfig(tol=1e-8)
        state = init_state(mask, SMALL_DISC)
        trajectory = evolve(mask, state, 0.25, 1.0 / 16, cfg,
                            mode='fixed_point')
        for s in trajectory[1:]:
            self.assertLessEqual(s.inner_iterations, cfg.inner_max)
            self.assertEqual(s.inner_violations, 0)
        for record in evolution_checks(trajectory, epsilon=0.125,
                                       tol=cfg.tol):
            if record.metric == 'monotonicity_violations':
                self.assertEqual(record.value, 0)
        explicit = evolve(mask, state, 0.25, 1.0 / 16, cfg)
        self.assertGreaterEqual(trajectory[-1].area, explicit[-1].area)

    def test3_containment_sweep(self):
        'containment_exponent() over a sweep of time steps'
        model = PerforationModel('square_site', 0.5, 1.0, 0.25)
        grid = GridSpec.box(-2.0, 2.0, -2.0, 2.0, 1.0 / 32)
        mask = generate_domain(model, grid)
        radii = {}
        for dt in (1.0 / 4, 1.0 / 8, 1.0 / 16):
            trajectory = evolve(mask, init_state(mask, DISC), 0.5, dt,
                                self.cfg)
            radii[dt] = grid.h * max(
                containment_radius(a.region, b.region)
                for a, b in zip(trajectory[:-1], trajectory[1:]))
        self.assertTrue(radii[1.0 / 4] > radii[1.0 / 16] > 0.0, radii)
        exponent = containment_exponent(radii)
        self.assertTrue(0.4 <= exponent <= 1.5, exponent)


class TestFreeBoundary(TestEvolution):

    def test1_hausdorff(self):
        'hausdorff_distance()'
        a = FreeBoundary([(0, 0), (4, 0)], self.grid)
        b = FreeBoundary([(0, 3)], self.grid)
        h = self.grid.h
        self.assertAlmostEqual(hausdorff_distance(a, b), 5 * h)
        self.assertEqual(hausdorff_distance(a, a), 0.0)
        self.assertRaises(ProbeError, hausdorff_distance, a,
                          FreeBoundary([], self.grid))

    def test2_extract(self):
        'extract_free_boundary() ignores perforation walls'
        model = PerforationModel('square_site', 0.5, 1.0, 0.5)
        mask = generate_domain(model, self.grid)
        state = step(init_state(mask, DISC), 1.0 / 32, 'explicit',
                     self.cfg, mask)
        fb = extract_free_boundary(state, mask).to_array()
        self.assertTrue(fb.any())
        self.assertFalse(np.any(fb & ~state.active))

    def test3_containment(self):
        'containment_radius() / containment_exponent()'
        earlier = np.zeros((8, 8), dtype=bool)
        earlier[2:4, 2:4] = True
        later = earlier.copy()
        later[2:4, 4:6] = True
        self.assertEqual(containment_radius(earlier, later), 2.0)
        self.assertEqual(containment_radius(later, earlier), 0.0)
        slope = containment_exponent({0.01: 0.1, 0.04: 0.2, 0.16: 0.4})
        self.assertAlmostEqual(slope, 0.5)

    def test4_not_star_shaped(self):
        'star_shape_check() fails on a ring'
        X, Y = self.grid.centers()
        radius = np.hypot(X, Y)
        ring = (radius > 0.6) & (radius < 1.2)
        state = init_state(self.flat, ring)
        report = star_shape_check(state, (0.0, 0.0), 0.25)
        self.assertFalse(report.passed)
        self.assertGreater(report.violations, 0)
        disc = init_state(self.flat, radius < 1.2)
        self.assertTrue(star_shape_check(disc, (0.0, 0.0), 0.25, stride=2))


@unittest.skipUnless(SLOW, 'set PERCHS_SLOW=1 to run')
class TestFineRadialDroplet(TestEvolution):

    def test1_radius(self):
        'radial droplet at h = 1/64 within 3 percent'
        mask, trajectory, _ = fine_radial_run()
        final = trajectory[-1]
        self.assertAlmostEqual(final.t, 1.0)
        self.assertAlmostEqual(final.equivalent_radius(), math.exp(0.5),
                               delta=0.03 * math.exp(0.5))
        center = mask.grid.cell_at(0.0, 0.0)
        self.assertAlmostEqual(final.p.values[center], (math.e - 1) / 4,
                               delta=0.03 * (math.e - 1) / 4)

    def test2_elapsed(self):
        'radial droplet at h = 1/64 runs in under two minutes'
        _, trajectory, elapsed = fine_radial_run()
        self.assertEqual(trajectory[-1].step_index, 64)
        self.assertLess(elapsed, 120.0)


def main():
    testcases = [TestStep,
                 TestRadialDroplet,
                 TestPerforatedDroplet,
                 TestFreeBoundary,
                 TestFineRadialDroplet]
    for tc in testcases:
        unittest.TextTestRunner(verbosity=2).\
            run(unittest.TestLoader().loadTestsFromTestCase(tc))


if __name__ == "__main__":
    main()
