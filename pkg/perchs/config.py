"""Experiment configuration.

Description
-----------

    An experiment is described by :py:class:`ExperimentConfig`, validated
    with pydantic. Values come, in increasing precedence, from the model
    defaults, a JSON file, ``--set dotted.key=value`` overrides (values are
    parsed as JSON, falling back to plain strings) and the explicit command
    line flags.

    The resolved configuration is echoed to ``config-echo.json``; loading
    that file reproduces the run.

License and Copyright
---------------------

ASL 2.0
"""

import json
import logging
import math
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, \
    model_validator

from perchs.Exceptions import ConfigError
from perchs.elliptic import SolverConfig
from perchs.geometry import GridSpec, PerforationModel

LOG = logging.getLogger(__name__)

EXPERIMENT_KINDS = ('gen-domain', 'solve-linear', 'evolve', 'corrector',
                    'homogenize', 'converge-linear', 'converge-heleshaw',
                    'green', 'capacity', 'probe')

ExperimentKind = Literal['gen-domain', 'solve-linear', 'evolve', 'corrector',
                         'homogenize', 'converge-linear', 'converge-heleshaw',
                         'green', 'capacity', 'probe']


class _Strict(BaseModel):
    model_config = ConfigDict(extra='forbid')


class PerforationModelConfig(_Strict):
    kind: Literal['none', 'square_site', 'triangular_site',
                  'chessboard'] = 'square_site'
    inclusion_scale: float = Field(0.5, gt=0.0, lt=1.0)
    occupancy_prob: float = Field(1.0, ge=0.0, le=1.0)
    period: float = Field(0.125, gt=0.0)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    shape_jitter: float = Field(0.0, ge=0.0, lt=1.0)

    def build(self, period=None, seed=None):
        """PerforationModel, optionally at another period or seed."""
        return PerforationModel(
            self.kind, self.inclusion_scale, self.occupancy_prob,
            self.period if period is None else period,
            self.seed if seed is None else seed, self.shape_jitter)


class GridConfig(_Strict):
    xmin: float = -4.0
    xmax: float = 4.0
    ymin: float = -4.0
    ymax: float = 4.0
    h: float = Field(1.0 / 64, gt=0.0)

    @model_validator(mode='after')
    def _check_box(self):
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("empty box")
        for length in (self.xmax - self.xmin, self.ymax - self.ymin):
            cells = length / self.h
            if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
                raise ValueError("box sides must be whole multiples of h")
        return self

    def build(self):
        return GridSpec.box(self.xmin, self.xmax, self.ymin, self.ymax,
                            self.h)


class SolverSettings(_Strict):
    tol: float = Field(1e-10, gt=0.0)
    max_iter: int = Field(20000, ge=1)
    relaxation: Optional[float] = Field(None, gt=0.0, lt=2.0)
    method: Literal['cg', 'sor', 'direct'] = 'cg'
    inner_max: int = Field(50, ge=1)

    def build(self):
        return SolverConfig(self.tol, self.max_iter, self.relaxation,
                            self.method, self.inner_max)


class InitialSetConfig(_Strict):
    kind: Literal['disc', 'polygon'] = 'disc'
    center: Tuple[float, float] = (0.0, 0.0)
    radius: float = Field(1.0, gt=0.0)
    vertices: Optional[List[Tuple[float, float]]] = None

    @model_validator(mode='after')
    def _check_polygon(self):
        if self.kind == 'polygon' and (self.vertices is None or
                                       len(self.vertices) < 3):
            raise ValueError("a polygon needs at least three vertices")
        return self

    def descriptor(self):
        if self.kind == 'polygon':
            return {'kind': 'polygon',
                    'vertices': [list(v) for v in self.vertices]}
        return {'kind': 'disc', 'center': list(self.center),
                'radius': self.radius}


class ExperimentConfig(_Strict):
    kind: ExperimentKind = 'gen-domain'
    model: PerforationModelConfig = PerforationModelConfig()
    grid: GridConfig = GridConfig()
    eps_list: List[float] = []
    seeds: List[int] = [0]
    d0: InitialSetConfig = InitialSetConfig()
    T: float = Field(1.0, gt=0.0)
    dt: float = Field(1.0 / 64, gt=0.0)
    mode: Literal['explicit', 'fixed_point'] = 'explicit'
    solver: SolverSettings = SolverSettings()
    output_dir: str = 'perchs-out'
    snapshot_every: int = Field(0, ge=0)
    jobs: int = Field(1, ge=1)
    rhs: float = 1.0
    center: Optional[Tuple[float, float]] = None
    radii: List[float] = []
    levels: List[float] = []
    capacity_radius: float = Field(0.5, gt=0.0)
    cells_per_period: int = Field(16, ge=4)

    @model_validator(mode='after')
    def _check_experiment(self):
        if self.kind.startswith('converge-') and not self.eps_list:
            raise ValueError("eps_list must be nonempty for %s" % self.kind)
        if any(not eps > 0 for eps in self.eps_list):
            raise ValueError("eps_list entries must be positive")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ValueError("T must be a whole number of steps dt")
        if any(not r > 0 for r in self.radii):
            raise ValueError("radii must be positive")
        return self

    def epsilons(self):
        """The microstructure scales to run: eps_list or the model period."""
        return list(self.eps_list) or [self.model.period]

    def echo(self):
        """JSON text of the resolved configuration."""
        return json.dumps(self.model_dump(mode='json'), indent=2,
                          sort_keys=True) + '\n'


def _field_path(error):
    return '.'.join(str(part) for part in error['loc']) or '<root>'


def validate(data):
    """Build an ExperimentConfig from a dictionary.

    Raise:
        ConfigError - invalid configuration, naming the field
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as error:
        first = error.errors()[0]
        raise ConfigError("invalid configuration: %s: %s" %
                          (_field_path(first), first['msg']))


def parse_override(text):
    """Split ``dotted.key=value``; the value is JSON or a plain string."""
    if '=' not in text:
        raise ConfigError("bad override %r, expected key=value" % text)
    key, raw = text.split('=', 1)
    key = key.strip()
    if not key:
        raise ConfigError("bad override %r, empty key" % text)
    try:
        value = json.loads(raw)
    except ValueError:
        value = raw
    if isinstance(value, float) and not math.isfinite(value):
        raise ConfigError("bad override %r, non-finite value" % text)
    return key, value


def apply_override(data, key, value):
    parts = key.split('.')
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        elif not isinstance(child, dict):
            raise ConfigError("cannot set %s: %s is not a section" %
                              (key, part))
        node = child
    node[parts[-1]] = value


def load_config(path=None, overrides=(), **flags):
    """Resolve an ExperimentConfig.

    Arguments:
        path      - JSON file or None
        overrides - iterable of ``dotted.key=value`` strings
        flags     - top level values from explicit command line flags
                    (None values are ignored)

    Raise:
        ConfigError - unreadable file, bad override, invalid values
    """
    data = {}
    if path is not None:
        try:
            fileh = open(path)
        except OSError as error:
            raise ConfigError("cannot read config %s: %s" % (path, error))
        try:
            data = json.load(fileh)
        except ValueError as error:
            raise ConfigError("config %s is not valid JSON: %s" %
                              (path, error))
        finally:
            fileh.close()
        if not isinstance(data, dict):
            raise ConfigError("config %s must hold a JSON object" % path)
    for text in overrides:
        key, value = parse_override(text)
        apply_override(data, key, value)
    for key, value in flags.items():
        if value is not None:
            data[key] = value
    config = validate(data)
    LOG.debug("resolved configuration: %s", config.model_dump(mode='json'))
    return config
