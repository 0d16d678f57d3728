# -*- coding: utf-8 -*-

import io
import json
import os
import shutil
import tempfile
import unittest

import numpy as np

from perchs import cli
from perchs.Exceptions import GeometryError, SchemaError
from perchs.config import validate
from perchs.harness import plan_jobs, read_metrics, run, summarize
from perchs.utils import read_pgm

__all__ = ['TestPlan', 'TestRun', 'TestSummarize', 'TestCommandLine']

SMALL_GRID = {'xmin': -1.0, 'xmax': 1.0, 'ymin': -1.0, 'ymax': 1.0,
              'h': 0.0625}

SMALL_GRID_FLAGS = ['--set', 'grid.xmin=-1', '--set', 'grid.xmax=1',
                    '--set', 'grid.ymin=-1', '--set', 'grid.ymax=1',
                    '--set', 'grid.h=0.0625']


class TestHarness(unittest.TestCase):

    def setUp(self):
        self.tempdir = tempfile.mkdtemp(prefix='perchs-harness')

    def tearDown(self):
        shutil.rmtree(self.tempdir, ignore_errors=True)

    def config(self, name='out', **data):
        data.setdefault('grid', SMALL_GRID)
        data['output_dir'] = os.path.join(self.tempdir, name)
        return validate(data)

    def write_metrics(self, rows, name='metrics.csv',
                      header='experiment_id,epsilon,seed,t,metric,value'):
        path = os.path.join(self.tempdir, name)
        fileh = open(path, 'w')
        try:
            fileh.write(header + '\n')
            for row in rows:
                fileh.write(row + '\n')
        finally:
            fileh.close()
        return path


class TestPlan(TestHarness):

    def test1_order(self):
        'plan_jobs() epsilon major, seed minor'
        config = self.config(eps_list=[0.5, 0.25], seeds=[1, 2])
        pairs = [(job['epsilon'], job['seed']) for job in plan_jobs(config)]
        self.assertEqual(pairs, [(0.5, 1), (0.5, 2), (0.25, 1), (0.25, 2)])
        self.assertEqual([job['index'] for job in plan_jobs(config)],
                         [0, 1, 2, 3])

    def test2_single_kinds(self):
        'plan_jobs() homogenize and corrector'
        config = self.config(kind='homogenize', seeds=[4, 5],
                             model={'period': 0.5})
        self.assertEqual(plan_jobs(config),
                         [{'index': 0, 'epsilon': 0.5, 'seed': 4}])
        config = self.config(kind='corrector', seeds=[4, 5],
                             eps_list=[0.25, 0.125], model={'period': 0.5})
        self.assertEqual([job['seed'] for job in plan_jobs(config)], [4, 5])


class TestRun(TestHarness):

    def test1_gen_domain(self):
        'run() gen-domain without perforations'
        config = self.config(model={'kind': 'none'})
        path = run(config)
        records = read_metrics(path)
        values = dict((r.metric, r.value) for r in records)
        self.assertEqual(values, {'volume_fraction': 1.0, 'inclusions': 0.0,
                                  'repaired_cells': 0.0})
        image = read_pgm(os.path.join(config.output_dir, 'domains',
                                      'mask_job_0000.pgm'))
        self.assertEqual(image.shape, (32, 32))
        self.assertTrue(np.all(image == 255))
        echo = json.load(open(os.path.join(config.output_dir,
                                           'config-echo.json')))
        self.assertEqual(validate(echo), config)

    def test2_deterministic(self):
        'run() identical configurations give identical metrics'
        data = {'model': {'kind': 'square_site', 'occupancy_prob': 0.5,
                          'period': 0.5},
                'eps_list': [0.5, 0.25], 'seeds': [1, 2]}
        first = run(self.config('first', **data))
        second = run(self.config('second', jobs=2, **data))
        self.assertEqual(open(first).read(), open(second).read())
        lines = open(first).read().splitlines()
        self.assertEqual(lines[0],
                         'experiment_id,epsilon,seed,t,metric,value')
        seeds = [int(line.split(',')[2]) for line in lines[1:]]
        self.assertEqual(seeds[0], 1)
        self.assertEqual(seeds[-1], 2)

    def test3_failure(self):
        'run() reraises job failures'
        config = self.config(model={'period': 0.125})
        self.assertRaises(GeometryError, run, config)
        err = os.path.join(config.output_dir, 'staging', 'job_0000.err')
        failure = json.load(open(err))
        self.assertEqual(failure['type'], 'GeometryError')
        self.assertFalse(os.path.exists(os.path.join(config.output_dir,
                                                     'metrics.csv')))

    def test4_evolve_snapshots(self):
        'run() evolve with snapshots'
        config = self.config(kind='evolve', model={'kind': 'none'},
                             d0={'radius': 0.5}, T=0.125, dt=0.03125,
                             snapshot_every=2, solver={'tol': 1e-9})
        path = run(config)
        metrics = set(r.metric for r in read_metrics(path))
        for name in ('fb_radius', 'p_center', 'u_center', 'area_ratio',
                     'growth_constant', 'u_dpdt_error',
                     'star_shape_violations'):
            self.assertIn(name, metrics)
        star = [r.value for r in read_metrics(path)
                if r.metric == 'star_shape_violations']
        self.assertEqual(star, [0.0])
        folder = os.path.join(config.output_dir, 'snapshots', 'job_0000')
        self.assertEqual(sorted(os.listdir(folder)),
                         ['state_000002.pgm', 'state_000004.pgm'])
        self.assertTrue(os.path.exists(os.path.join(
            config.output_dir, 'trajectory_job_0000.csv')))

    def test5_heleshaw_checks(self):
        'run() converge-heleshaw adds the homogenized checks'
        config = self.config(kind='converge-heleshaw', eps_list=[0.5],
                             model={'period': 0.5}, d0={'radius': 0.5},
                             T=0.125, dt=0.03125, cells_per_period=8)
        records = read_metrics(run(config))
        perforated = set(r.metric for r in records if r.epsilon == 0.5)
        homogenized = set(r.metric for r in records if r.epsilon == 0.0)
        self.assertIn('sup_norm_diff', perforated)
        for name in ('area_ratio', 'elongation', 'front_speed_x',
                     'predicted_speed_y', 'star_shape_violations'):
            self.assertIn(name, homogenized)


class TestSummarize(TestHarness):

    def test1_single_row(self):
        'summarize() one row'
        path = self.write_metrics(['evolve,0.5,1,1,fb_radius,1.625'])
        stream = io.StringIO()
        rows, verdicts = summarize([path], stream)
        self.assertEqual(rows,
                         [('fb_radius', 0.5, 1.0, 1, 1.625, 1.625, 1.625)])
        self.assertEqual(verdicts, {})

    def test2_monotone(self):
        'summarize() monotonicity verdicts'
        path = self.write_metrics([
            'converge-linear,0.5,1,1,l2_error,0.4',
            'converge-linear,0.25,1,1,l2_error,0.2',
            'converge-linear,0.125,1,1,l2_error,0.1',
            'converge-linear,0.5,1,1,linf_error,0.4',
            'converge-linear,0.25,1,1,linf_error,0.5'])
        stream = io.StringIO()
        rows, verdicts = summarize([path], stream)
        self.assertEqual(verdicts, {'l2_error': True, 'linf_error': False})
        self.assertEqual([r[1] for r in rows if r[0] == 'l2_error'],
                         [0.5, 0.25, 0.125])
        text = stream.getvalue()
        self.assertIn('l2_error: monotone: yes', text)
        self.assertIn('linf_error: monotone: no', text)

    def test3_per_time(self):
        'summarize() averages over seeds, not over times'
        path = self.write_metrics([
            'converge-heleshaw,0.5,1,0.5,sup_norm_diff,0.1',
            'converge-heleshaw,0.25,1,0.5,sup_norm_diff,0.5',
            'converge-heleshaw,0.5,1,1,sup_norm_diff,0.4',
            'converge-heleshaw,0.25,1,1,sup_norm_diff,0.2',
            'converge-heleshaw,0.25,2,1,sup_norm_diff,0.1'])
        rows, verdicts = summarize([path], io.StringIO())
        self.assertEqual([(r[1], r[2], r[3]) for r in rows],
                         [(0.5, 0.5, 1), (0.25, 0.5, 1), (0.5, 1.0, 1),
                          (0.25, 1.0, 2)])
        self.assertAlmostEqual(rows[-1][4], 0.15)
        # pooled over t the means would be 0.25 and 0.27
        self.assertEqual(verdicts, {'sup_norm_diff': True})

    def test4_schema(self):
        'read_metrics() rejects foreign files'
        path = self.write_metrics([], header='metric,value')
        self.assertRaises(SchemaError, summarize, [path], io.StringIO())
        path = self.write_metrics(['evolve,0.5,1,1,fb_radius'], name='bad')
        self.assertRaises(SchemaError, read_metrics, path)


class TestCommandLine(TestHarness):

    def test1_list(self):
        'cli.main() -l'
        self.assertEqual(cli.main(['-l']), 0)

    def test2_config_errors(self):
        'cli.main() configuration errors exit with 2'
        out = os.path.join(self.tempdir, 'cli')
        self.assertEqual(cli.main(['gen-domain', '--set', 'bogus=1',
                                   '-o', out]), 2)
        self.assertEqual(cli.main(['teleport', '-o', out]), 2)
        self.assertEqual(cli.main(['summarize']), 2)

    def test3_run(self):
        'cli.main() run and failure exit codes'
        out = os.path.join(self.tempdir, 'cli')
        argv = ['gen-domain', '-o', out] + SMALL_GRID_FLAGS
        self.assertEqual(cli.main(argv + ['--set', 'model.kind=none']), 0)
        metrics = os.path.join(out, 'metrics.csv')
        self.assertTrue(os.path.exists(metrics))
        self.assertEqual(cli.main(['summarize', metrics]), 0)
        self.assertEqual(cli.main(argv + ['--set', 'model.period=0.125']),
                         3)


def main():
    testcases = [TestPlan,
                 TestRun,
                 TestSummarize,
                 TestCommandLine]
    for tc in testcases:
        unittest.TextTestRunner(verbosity=2).\
            run(unittest.TestLoader().loadTestsFromTestCase(tc))


if __name__ == "__main__":
    main()
