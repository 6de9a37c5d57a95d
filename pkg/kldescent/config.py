"""
Experiment configuration: a single JSON document per experiment

    {
      "seed": 0,
      "problem": {"type": "decomposition", "m": 20, "n": 20, "r": 2, "s": 10,
                  "magnitude_gap": 10.0, "init_radius": 1e-3},
      "solver": "afb",
      "schedules": {"steps": [0.5, 0.5], "kind": "derived"},
      "stop": {"tol_step": 1e-10, "tol_slope": 1e-8, "max_iter": 500},
      "kl": {"C": 1.0, "theta": 0.5},
      "output": {"dir": "out", "name": "decomposition"}
    }

The OUTPUT_DIR environment variable replaces output.dir.
"""
import os
import os.path
import json
import logging
from dataclasses import dataclass, field
import numpy as np
from .base import BlockVector
from .kl_core import Desingularizer, KLRegion, ETA_INFINITY
from .afb_engine import (
    MetricSchedule, ErrorModel, StoppingRule, SCHEDULE_KINDS, DERIVED)
from .lm_newton import LmConfig, DEFAULT_EPSILON, ANALYTIC
from . import problems as lib
from .exceptions import KlDescentConfigError, KlDescentUsageError

logger = logging.getLogger('kldescent')

OUTPUT_DIR_ENV = 'OUTPUT_DIR'

AFB = 'afb'
AFBE = 'afbe'
LM = 'lm'
PROXIMAL_POINT = 'proximal_point'
AAPM = 'aapm'
SOLVERS = (AFB, AFBE, LM, PROXIMAL_POINT, AAPM)

# Solvers each problem type can be run with
SUPPORTED = {
    'decomposition': (AFB, AFBE, AAPM),
    'power': (AFB, PROXIMAL_POINT),
    'abs': (PROXIMAL_POINT,),
    'quadratic': (AFB, LM),
    'double_well': (AFB, LM),
    'counting': (PROXIMAL_POINT, AFBE)}


@dataclass
class ExperimentConfig(object):
    """
    Parsed experiment configuration, see the module docstring for the
    layout. Sections other than `problem` and `solver` are optional.
    """

    seed: int
    problem: dict
    solver: str
    schedules: dict = field(default_factory=dict)
    lm: dict = field(default_factory=dict)
    stop: dict = field(default_factory=dict)
    kl: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    path: str = None

    @classmethod
    def from_dict(cls, doc, path=None):
        if not isinstance(doc, dict):
            raise KlDescentConfigError(
                "Configuration must be a JSON object (got {})".format(
                    type(doc).__name__))
        missing = [k for k in ('seed', 'problem', 'solver') if k not in doc]
        if missing:
            raise KlDescentConfigError(
                "Configuration lacks the mandatory key(s) {}".format(
                    ', '.join(missing)))
        known = ('seed', 'problem', 'solver', 'schedules', 'lm', 'stop', 'kl',
                 'output')
        unknown = [k for k in doc if k not in known]
        if unknown:
            raise KlDescentConfigError(
                "Unrecognised configuration key(s) {}".format(
                    ', '.join(unknown)))
        config = cls(path=path, **doc)
        config.validate()
        return config

    @property
    def problem_type(self):
        return self.problem.get('type')

    @property
    def name(self):
        return self.output.get('name') or '{}_{}'.format(self.problem_type,
                                                        self.solver)

    @property
    def output_dir(self):
        return os.environ.get(OUTPUT_DIR_ENV) or self.output.get('dir', '.')

    @property
    def dump_iterates(self):
        return bool(self.output.get('dump_iterates', False))

    def validate(self):
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise KlDescentConfigError(
                "Seed must be an integer (got {!r})".format(self.seed))
        if not isinstance(self.problem, dict):
            raise KlDescentConfigError("'problem' must be a JSON object")
        if self.problem_type not in SUPPORTED:
            raise KlDescentConfigError(
                "Unrecognised problem type '{}' (expected one of {})".format(
                    self.problem_type, ', '.join(SUPPORTED)))
        if self.solver not in SOLVERS:
            raise KlDescentConfigError(
                "Unrecognised solver '{}' (expected one of {})".format(
                    self.solver, ', '.join(SOLVERS)))
        if self.solver not in SUPPORTED[self.problem_type]:
            raise KlDescentConfigError(
                "Solver '{}' is not supported for '{}' problems (supported: "
                "{})".format(self.solver, self.problem_type,
                             ', '.join(SUPPORTED[self.problem_type])))
        kind = self.schedules.get('kind', DERIVED)
        if kind not in SCHEDULE_KINDS:
            raise KlDescentConfigError(
                "Unrecognised schedule kind '{}'".format(kind))

    def build_problem(self):
        """
        Returns
        -------
        problem : BlockProblem
        x0 : list(numpy.ndarray)
            Initial blocks
        instance : DecompositionInstance | None
        """
        spec = dict(self.problem)
        kind = spec.pop('type')
        try:
            if kind == 'decomposition':
                return self._build_decomposition(spec)
            x0 = spec.pop('x0', None)
            if kind == 'power':
                mode = (lib.PROXIMAL if self.solver == PROXIMAL_POINT
                        else lib.GRADIENT)
                problem = lib.make_power_potential(
                    spec.get('q', 2.0), dim=spec.get('dim', 1),
                    radius=spec.get('radius', 1.0), mode=mode)
            elif kind == 'abs':
                problem, _ = lib.make_abs_prox_problem(self._step_scalar())
            elif kind == 'quadratic':
                C = spec.get('C')
                if C is not None:
                    C = (C['B'], C['c'])
                problem = lib.make_quadratic(spec['Q'], spec['b'], C=C)
            elif kind == 'double_well':
                problem = lib.make_double_well()
            else:
                problem = lib.make_counting_problem(spec.get('weight', 1.0))
        except KeyError as e:
            raise KlDescentConfigError(
                "Problem '{}' lacks the key {}".format(kind, e))
        if x0 is None:
            raise KlDescentConfigError(
                "Problem '{}' needs an initial point 'x0'".format(kind))
        x0 = np.asarray(x0, dtype=float).reshape(problem.shapes[0])
        return problem, [x0], None

    def _build_decomposition(self, spec):
        if 'instance' in spec:
            instance = lib.DecompositionInstance.load(spec['instance'])
        else:
            try:
                instance = lib.generate_decomposition(
                    spec['m'], spec['n'], spec['r'], spec['s'],
                    magnitude_gap=spec.get('magnitude_gap', 10.0),
                    seed=self.seed)
            except KeyError as e:
                raise KlDescentConfigError(
                    "Decomposition problem lacks the key {}".format(e))
        X0, Y0 = lib.initial_point(instance, radius=spec.get('init_radius'),
                                   seed=self.seed)
        return lib.make_decomposition_problem(instance), [X0, Y0], instance

    def build_schedule(self, problem):
        steps = self.schedules.get('steps', self.schedules.get('step'))
        if steps is None:
            raise KlDescentConfigError(
                "Solver '{}' needs step sizes in schedules.steps".format(
                    self.solver))
        if np.ndim(steps) == 0:
            steps = [steps] * problem.p
        return MetricSchedule.from_steps(steps, problem.shapes)

    def _step_scalar(self):
        steps = self.schedules.get('steps', self.schedules.get('step'))
        if steps is None:
            raise KlDescentConfigError("Proximal point runs need a step")
        return float(np.ravel(steps)[0])

    @property
    def schedule_kind(self):
        return self.schedules.get('kind', DERIVED)

    def build_error_model(self):
        if self.solver != AFBE:
            return None
        sched = self.schedules
        mu0 = float(sched.get('mu0', sched.get('mu', 0.0)))
        ratio = float(sched.get('mu_ratio', 1.0))
        return ErrorModel(
            sigma=sched.get('sigma', 0.0), rho=sched.get('rho', 1.0),
            mu=lambda k: mu0 * ratio ** k,
            seed=sched.get('error_seed', self.seed),
            rescale=sched.get('rescale', True))

    def build_stop(self):
        try:
            return StoppingRule(**self.stop)
        except TypeError as e:
            raise KlDescentConfigError(
                "Invalid stopping rule {}: {}".format(self.stop, e))

    def build_lm_config(self):
        lm = self.lm
        return LmConfig(
            epsilon=lm.get('epsilon', DEFAULT_EPSILON),
            lambdas=lm.get('lambdas', lm.get('lambda')),
            hessian_mode=lm.get('hessian_mode', ANALYTIC),
            h_fd=lm.get('h_fd'), pure_newton=lm.get('pure_newton', False))

    def desingularizer(self, problem=None):
        """The configured desingularizer, else the problem's own"""
        kl = self.kl
        if 'theta' in kl:
            return Desingularizer.power(kl.get('C', 1.0), kl['theta'],
                                        eta=kl.get('eta', ETA_INFINITY))
        if problem is not None:
            return problem.meta.get('desingularizer')
        return None

    def kl_region(self, problem):
        """The KL region around the configured (or known) minimizer, when a
        radius is configured"""
        if 'delta' not in self.kl:
            return None
        x_star = self.x_star(problem)
        if x_star is None:
            raise KlDescentConfigError(
                "kl.delta needs kl.x_star for this problem")
        return KLRegion(x_star, self.f_star(problem), self.kl['delta'],
                        eta=self.kl.get('eta', ETA_INFINITY))

    def x_star(self, problem=None):
        if 'x_star' in self.kl:
            return np.asarray(self.kl['x_star'], dtype=float).ravel()
        if problem is not None and 'x_star' in problem.meta:
            x_star = problem.meta['x_star']
            return (x_star.flat() if isinstance(x_star, BlockVector)
                    else np.ravel(x_star))
        return None

    def f_star(self, problem=None):
        if 'f_star' in self.kl:
            return float(self.kl['f_star'])
        if problem is not None and 'f_star' in problem.meta:
            return float(problem.meta['f_star'])
        return None


def load_config(path):
    """
    Reads and validates an experiment configuration

    Raises
    ------
    KlDescentConfigError
        The file is missing, is not valid JSON or describes an unsupported
        experiment
    """
    if not os.path.exists(path):
        raise KlDescentConfigError(
            "Configuration file '{}' does not exist".format(path))
    try:
        with open(path) as f:
            doc = json.load(f)
    except ValueError as e:
        raise KlDescentConfigError(
            "Could not parse configuration '{}': {}".format(path, e))
    try:
        return ExperimentConfig.from_dict(doc, path=path)
    except TypeError as e:
        raise KlDescentConfigError(
            "Invalid configuration '{}': {}".format(path, e))


def ensure_output_dir(path):
    if not os.path.exists(path):
        os.makedirs(path)
    elif not os.path.isdir(path):
        raise KlDescentUsageError(
            "Output path '{}' is not a directory".format(path))
    return path
