# -*- coding: utf-8 -*-

import json
import os
import shutil
import tempfile
import unittest

from perchs.Exceptions import ConfigError
from perchs.config import (ExperimentConfig, apply_override, load_config,
                           parse_override, validate)

__all__ = ['TestValidate', 'TestOverrides', 'TestLoadConfig']


class TestConfig(unittest.TestCase):

    def setUp(self):
        self.tempdir = tempfile.mkdtemp(prefix='perchs-config')

    def tearDown(self):
        shutil.rmtree(self.tempdir, ignore_errors=True)

    def write(self, data, name='config.json'):
        path = os.path.join(self.tempdir, name)
        fileh = open(path, 'w')
        try:
            json.dump(data, fileh)
        finally:
            fileh.close()
        return path


class TestValidate(TestConfig):

    def test1_defaults(self):
        'ExperimentConfig() defaults'
        config = ExperimentConfig()
        self.assertEqual(config.kind, 'gen-domain')
        self.assertEqual(config.epsilons(), [0.125])
        self.assertEqual(config.solver.build().method, 'cg')
        grid = config.grid.build()
        self.assertEqual(grid.shape, (512, 512))

    def test2_unknown_field(self):
        'validate() rejects unknown fields by name'
        try:
            validate({'model': {'perid': 0.25}})
        except ConfigError as error:
            self.assertIn('model.perid', str(error))
        else:
            self.fail('ConfigError not raised')

    def test3_ranges(self):
        'validate() range checks'
        for data in ({'kind': 'converge-linear'},
                     {'eps_list': [0.25, -0.125]},
                     {'seeds': []},
                     {'T': 1.0, 'dt': 0.3},
                     {'grid': {'xmin': 0.0, 'xmax': 1.0, 'h': 0.3}},
                     {'model': {'occupancy_prob': 1.5}},
                     {'solver': {'relaxation': 2.0}},
                     {'d0': {'kind': 'polygon', 'vertices': [[0, 0]]}},
                     {'kind': 'bogus'}):
            self.assertRaises(ConfigError, validate, data)

    def test4_echo(self):
        'ExperimentConfig.echo() reproduces the configuration'
        config = validate({'kind': 'converge-heleshaw',
                           'eps_list': [0.5, 0.25], 'seeds': [3, 4],
                           'd0': {'radius': 0.5}, 'center': [0.5, 0.5]})
        again = validate(json.loads(config.echo()))
        self.assertEqual(again, config)
        self.assertEqual(again.echo(), config.echo())


class TestOverrides(TestConfig):

    def test1_parse(self):
        'parse_override()'
        self.assertEqual(parse_override('model.period=0.25'),
                         ('model.period', 0.25))
        self.assertEqual(parse_override('kind=evolve'), ('kind', 'evolve'))
        self.assertEqual(parse_override('eps_list=[0.5, 0.25]'),
                         ('eps_list', [0.5, 0.25]))
        self.assertRaises(ConfigError, parse_override, 'model.period')
        self.assertRaises(ConfigError, parse_override, '=1')
        self.assertRaises(ConfigError, parse_override, 'T=NaN')

    def test2_apply(self):
        'apply_override()'
        data = {'kind': 'evolve'}
        apply_override(data, 'solver.tol', 1e-8)
        self.assertEqual(data, {'kind': 'evolve', 'solver': {'tol': 1e-8}})
        self.assertRaises(ConfigError, apply_override, data, 'kind.x', 1)


class TestLoadConfig(TestConfig):

    def test1_precedence(self):
        'load_config() file < overrides < flags'
        path = self.write({'kind': 'evolve', 'jobs': 2,
                           'model': {'period': 0.5}})
        config = load_config(path, ['model.period=0.25', 'jobs=3'], jobs=4,
                             output_dir=None)
        self.assertEqual(config.kind, 'evolve')
        self.assertEqual(config.model.period, 0.25)
        self.assertEqual(config.jobs, 4)
        self.assertEqual(config.output_dir, 'perchs-out')

    def test2_bad_files(self):
        'load_config() unreadable files'
        self.assertRaises(ConfigError, load_config,
                          os.path.join(self.tempdir, 'missing.json'))
        path = os.path.join(self.tempdir, 'broken.json')
        open(path, 'w').write('{"kind": ')
        self.assertRaises(ConfigError, load_config, path)
        self.assertRaises(ConfigError, load_config, self.write([1, 2]))
        self.assertRaises(ConfigError, load_config, None, ['jobs=0'])


def main():
    testcases = [TestValidate,
                 TestOverrides,
                 TestLoadConfig]
    for tc in testcases:
        unittest.TextTestRunner(verbosity=2).\
            run(unittest.TestLoader().loadTestsFromTestCase(tc))


if __name__ == "__main__":
    main()
