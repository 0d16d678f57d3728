# -*- coding: utf-8 -*-

import os
import shutil
import tempfile
import unittest

import numpy as np

from perchs.Exceptions import GeometryError
from perchs.geometry import (DomainMask, GridSpec, PerforationModel,
                             connected_across_periods, fluid_components,
                             generate_domain, region_mask, verify_separation,
                             volume_fraction)
from perchs.utils import read_pgm

__all__ = ['TestGridSpec', 'TestPerforationModel', 'TestGenerateDomain']


class TestGeometry(unittest.TestCase):

    def setUp(self):
        self.tempdir = tempfile.mkdtemp(prefix='perchs-geometry')
        self.grid = GridSpec.box(-1.0, 1.0, -1.0, 1.0, 1.0 / 32)

    def tearDown(self):
        shutil.rmtree(self.tempdir, ignore_errors=True)


class TestGridSpec(TestGeometry):

    def test1_box(self):
        'GridSpec.box()'
        self.assertEqual(self.grid.shape, (64, 64))
        self.assertEqual(self.grid.origin, (-1.0, -1.0))
        self.assertEqual(self.grid.center_of((0, 0)),
                         (-1.0 + 1.0 / 64, -1.0 + 1.0 / 64))
        self.assertEqual(self.grid.cell_at(0.0, 0.0), (32, 32))
        self.assertEqual(self.grid.cell_at(5.0, -5.0), (63, 0))

    def test2_types(self):
        'GridSpec.__init__() argument checks'
        self.assertRaises(TypeError, GridSpec, 4.5, 4, 0.1)
        self.assertRaises(TypeError, GridSpec, 4, 4, 'h')
        self.assertRaises(GeometryError, GridSpec, 3, 8, 0.1)
        self.assertRaises(GeometryError, GridSpec, 8, 8, -0.1)

    def test3_dict(self):
        'GridSpec.to_dict() / from_dict()'
        self.assertEqual(GridSpec.from_dict(self.grid.to_dict()), self.grid)
        self.assertEqual(self.grid.refined().shape, (128, 128))


class TestPerforationModel(TestGeometry):

    def test1_ranges(self):
        'PerforationModel.__init__() ranges'
        self.assertRaises(GeometryError, PerforationModel, 'hexagon')
        self.assertRaises(GeometryError, PerforationModel, 'square_site',
                          inclusion_scale=1.0)
        self.assertRaises(GeometryError, PerforationModel, 'square_site',
                          occupancy_prob=1.5)
        self.assertRaises(GeometryError, PerforationModel, 'square_site',
                          period=0.0)
        self.assertRaises(TypeError, PerforationModel, 'square_site',
                          seed=1.5)

    def test2_flags(self):
        'PerforationModel.perforated / deterministic'
        self.assertFalse(PerforationModel('none').perforated)
        self.assertFalse(PerforationModel('square_site',
                                          occupancy_prob=0.0).perforated)
        self.assertTrue(PerforationModel('square_site').deterministic)
        self.assertFalse(PerforationModel('square_site',
                                          occupancy_prob=0.5).deterministic)
        self.assertFalse(PerforationModel('chessboard').deterministic)

    def test3_json(self):
        'PerforationModel.to_json() / from_json()'
        model = PerforationModel('triangular_site', 0.4, 0.7, 0.25, 11, 0.2)
        self.assertEqual(PerforationModel.from_json(model.to_json()), model)
        self.assertEqual(model.with_period(0.5).period, 0.5)
        self.assertEqual(model.with_seed(3).seed, 3)


class TestGenerateDomain(TestGeometry):

    def test01_none(self):
        'generate_domain() kind none'
        mask = generate_domain(PerforationModel('none'), self.grid)
        self.assertTrue(mask.is_all_fluid)
        self.assertEqual(volume_fraction(mask), 1.0)
        path = os.path.join(self.tempdir, 'mask.pgm')
        mask.to_pgm(path)
        self.assertTrue(np.all(read_pgm(path) == 255))

    def test02_empty_occupancy(self):
        'generate_domain() occupancy 0 is all fluid'
        model = PerforationModel('square_site', occupancy_prob=0.0,
                                 period=0.25)
        mask = generate_domain(model, self.grid)
        self.assertTrue(mask.is_all_fluid)

    def test03_full_squares(self):
        'generate_domain() full square lattice'
        model = PerforationModel('square_site', 0.5, 1.0, 0.25)
        mask = generate_domain(model, self.grid)
        # 8 x 8 sites, 4 x 4 solid cells each
        self.assertEqual(int((~mask.fluid).sum()), 64 * 16)
        self.assertAlmostEqual(volume_fraction(mask), 0.75)
        inside = [inc for inc in mask.inclusions
                  if abs(inc.cx) < 1.0 and abs(inc.cy) < 1.0]
        self.assertEqual(len(inside), 64)
        self.assertTrue(mask.faces_consistent())
        self.assertEqual(fluid_components(mask.fluid)[1], 1)

    def test04_separation(self):
        'verify_separation() on every lattice'
        for kind in ('square_site', 'triangular_site', 'chessboard'):
            model = PerforationModel(kind, 0.5, 0.6, 0.25, seed=5,
                                     shape_jitter=0.1)
            mask = generate_domain(model, self.grid)
            report = verify_separation(model, mask.inclusions)
            self.assertTrue(report.passed, '%s: %r' % (kind, report))

    def test05_deterministic(self):
        'generate_domain() is a function of (model, grid)'
        model = PerforationModel('square_site', 0.5, 0.5, 0.125, seed=42)
        first = generate_domain(model, self.grid)
        second = generate_domain(model, self.grid)
        self.assertTrue(np.array_equal(first.fluid, second.fluid))
        other = generate_domain(model.with_seed(43), self.grid)
        self.assertFalse(np.array_equal(first.fluid, other.fluid))

    def test06_stationary(self):
        'site decisions do not depend on the grid window'
        model = PerforationModel('square_site', 0.5, 0.5, 0.25, seed=9)
        big = generate_domain(model, self.grid)
        small_grid = GridSpec.box(0.0, 1.0, 0.0, 1.0, 1.0 / 32)
        small = generate_domain(model, small_grid)
        self.assertTrue(np.array_equal(big.fluid[32:, 32:], small.fluid))

    def test07_too_coarse(self):
        'generate_domain() rejects periods below 4h'
        model = PerforationModel('square_site', period=1.0 / 16)
        self.assertRaises(GeometryError, generate_domain, model,
                          GridSpec.box(-1.0, 1.0, -1.0, 1.0, 1.0 / 32))

    def test08_periodic(self):
        'generate_domain() periodic cell'
        model = PerforationModel('square_site', 0.5, 1.0, 1.0)
        grid = GridSpec(16, 16, 1.0 / 16)
        mask = generate_domain(model, grid, periodic=True)
        self.assertEqual(mask.open_x.shape, (16, 16))
        self.assertFalse(mask.has_dirichlet)
        self.assertTrue(connected_across_periods(mask.fluid))
        self.assertTrue(mask.faces_consistent())

    def test09_dirichlet_layer(self):
        'DomainMask.dirichlet_faces()'
        mask = DomainMask.all_fluid(GridSpec(4, 4, 1.0))
        nx_faces, ny_faces = mask.dirichlet_faces()
        self.assertEqual(int(nx_faces.sum()), 8)
        self.assertEqual(int(ny_faces.sum()), 8)
        self.assertEqual(int(mask.outer_dirichlet.sum()), 12)

    def test10_region(self):
        'region_mask() discs and polygons'
        disc = region_mask(self.grid, {'kind': 'disc', 'center': [0, 0],
                                       'radius': 0.5})
        square = region_mask(self.grid, {'kind': 'polygon',
                                         'vertices': [[-0.5, -0.5],
                                                      [0.5, -0.5],
                                                      [0.5, 0.5],
                                                      [-0.5, 0.5]]})
        self.assertTrue(np.all(square[disc]))
        self.assertEqual(int(square.sum()), 32 * 32)
        self.assertAlmostEqual(disc.sum() * self.grid.h ** 2,
                               np.pi * 0.25, delta=0.02)

    def test11_periodic_components(self):
        'fluid_components() joins across the wrap'
        fluid = np.zeros((6, 6), dtype=bool)
        fluid[0, 2] = fluid[5, 2] = True
        self.assertEqual(fluid_components(fluid)[1], 2)
        self.assertEqual(fluid_components(fluid, periodic=True)[1], 1)

    def test12_descriptor(self):
        'DomainMask.descriptor()'
        model = PerforationModel('triangular_site', 0.5, 1.0, 0.25)
        mask = generate_domain(model, self.grid)
        data = mask.descriptor()
        self.assertEqual(data['model'], model.to_dict())
        self.assertIn('lattice_basis', data)
        self.assertEqual(data['repaired_cells'], 0)


def main():
    testcases = [TestGridSpec,
                 TestPerforationModel,
                 TestGenerateDomain]
    for tc in testcases:
        unittest.TextTestRunner(verbosity=2).\
            run(unittest.TestLoader().loadTestsFromTestCase(tc))


if __name__ == "__main__":
    main()
