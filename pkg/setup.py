import perchs

NAME = 'perchs'
VERSION = perchs.VERSION
DESCRIPTION = "Hele-Shaw flow in randomly perforated domains"
LONG_DESCRIPTION = """
Numerical laboratory for one-phase Hele-Shaw (quasistatic droplet) flow in
stationary randomly perforated planar domains.

The droplet is advanced through its obstacle problem formulation on a finite
volume grid whose perforation walls carry no flux. The package generates
perforated domains, solves the cell problems that define the effective
tensor, runs epsilon sweeps against the homogenized flow and probes Green's
functions, capacities, Harnack and Hoelder estimates.

Experiments run as jobs in a directory based queue shared by worker
processes and report their results as metrics CSV files."""
AUTHOR = perchs.AUTHOR
LICENSE = "ASL 2.0"
PLATFORMS = "Any"
CLASSIFIERS = [
    "Development Status :: 4 - Beta",
    "Intended Audience :: Science/Research",
    "License :: OSI Approved :: Apache Software License",
    "Operating System :: POSIX",
    "Programming Language :: Python :: 3",
    "Programming Language :: Python :: 3 :: Only",
    "Topic :: Scientific/Engineering :: Mathematics",
    "Topic :: Scientific/Engineering :: Physics",
]
INSTALL_REQUIRES = [
    'numpy>=1.22',
    'scipy>=1.12',
    'pydantic>=2',
]

from setuptools import setup, Command


class test(Command):
    user_options = []

    def initialize_options(self):
        pass

    def finalize_options(self):
        pass

    def run(self):
        from test import run_tests
        run_tests.main()

setup(name=NAME,
      version=VERSION,
      description=DESCRIPTION,
      long_description=LONG_DESCRIPTION,
      author=AUTHOR,
      license=LICENSE,
      platforms=PLATFORMS,
      classifiers=CLASSIFIERS,
      packages=['perchs'],
      python_requires='>=3.9',
      install_requires=INSTALL_REQUIRES,
      entry_points={'console_scripts': ['perchs = perchs.cli:main']},
      cmdclass={'test': test}, )
