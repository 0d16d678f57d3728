"""Perforated Hele-Shaw laboratory.

Numerical experiments for one-phase Hele-Shaw (quasistatic droplet) flow in
randomly perforated planar domains. The droplet is advanced through its
obstacle problem formulation: the time integral of the pressure solves, at
every time, a variational inequality whose load remembers how long each point
has been wet.

Besides the evolution itself the package provides:

* generators for stationary perforated domains (site percolation on square
  and triangular lattices, irregular chessboards), see
  :py:mod:`perchs.geometry`
* finite volume elliptic operators with zero flux perforation walls,
  Green's functions and Harnack / Hoelder probes, see :py:mod:`perchs.elliptic`
* a projected SOR obstacle solver, see :py:mod:`perchs.obstacle`
* the droplet evolution and its regularity probes, see
  :py:mod:`perchs.evolution`
* cell problems, effective tensors and epsilon sweeps, see
  :py:mod:`perchs.homogenization`
* condenser capacities and Green's function bounds, see
  :py:mod:`perchs.capacity`
* a directory based job queue and the experiment harness behind the
  ``perchs`` command, see :py:mod:`perchs.harness` and :py:mod:`perchs.cli`

Author
------

perchs developers

License and Copyright
---------------------

ASL 2.0
"""

AUTHOR = "perchs developers"
VERSION = "0.4"
DATE = "17 Oct 2026"
__author__ = AUTHOR
__version__ = VERSION
__date__ = DATE
