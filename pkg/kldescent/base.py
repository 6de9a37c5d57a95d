import argparse
import json
import math
import logging
import numpy as np
from scipy import stats
from .exceptions import KlDescentDomainError, KlDescentShapeError
from .version_ import __version__

logger = logging.getLogger('kldescent')

PASS = 'pass'
FAIL = 'fail'
INCONCLUSIVE = 'inconclusive'

# Fitted decay exponents of a positive sequence below this are taken as
# summable, above DIVERGENT_EXPONENT as non-summable
SUMMABLE_EXPONENT = -1.05
DIVERGENT_EXPONENT = -1.0

SUMMABLE = 'summable'
DIVERGENT = 'divergent'


class BlockVector(object):
    """
    A point of a product space H_1 x ... x H_p stored as p dense real blocks.
    Blocks may be of any shape (vectors for most problems, matrices for the
    sparse + low-rank decomposition); norms and inner products are the
    Euclidean (Frobenius) ones of the flattened blocks.

    Parameters
    ----------
    blocks : sequence of array-like
        The blocks. Scalars are promoted to 1-vectors and every block is
        copied so that BlockVectors never share storage with the caller.
    """

    def __init__(self, blocks):
        self._blocks = tuple(np.array(b, dtype=float, ndmin=1)
                             for b in blocks)

    @classmethod
    def from_flat(cls, flat, shapes):
        flat = np.asarray(flat, dtype=float).ravel()
        sizes = [int(np.prod(s)) for s in shapes]
        if sum(sizes) != flat.size:
            raise KlDescentShapeError(
                "Cannot split vector of length {} into blocks of shapes {}"
                .format(flat.size, shapes))
        blocks = []
        start = 0
        for shape, size in zip(shapes, sizes):
            blocks.append(flat[start:start + size].reshape(shape))
            start += size
        return cls(blocks)

    @property
    def blocks(self):
        return self._blocks

    @property
    def shapes(self):
        return [b.shape for b in self._blocks]

    @property
    def p(self):
        return len(self._blocks)

    def __len__(self):
        return len(self._blocks)

    def __getitem__(self, i):
        return self._blocks[i]

    def __iter__(self):
        return iter(self._blocks)

    def __sub__(self, other):
        self._check_compatible(other)
        return BlockVector(a - b for a, b in zip(self, other))

    def __add__(self, other):
        self._check_compatible(other)
        return BlockVector(a + b for a, b in zip(self, other))

    def __repr__(self):
        return "{}(shapes={})".format(self.__class__.__name__, self.shapes)

    def replace(self, i, block):
        blocks = list(self._blocks)
        block = np.array(block, dtype=float, ndmin=1)
        if block.shape != blocks[i].shape:
            raise KlDescentShapeError(
                "Block {} has shape {}, got {}".format(i, blocks[i].shape,
                                                       block.shape))
        blocks[i] = block
        return BlockVector(blocks)

    def flat(self):
        if not self._blocks:
            return np.zeros(0)
        return np.concatenate([b.ravel() for b in self._blocks])

    def norm(self):
        return math.sqrt(sum(float(np.sum(b * b)) for b in self._blocks))

    def permuted(self, order):
        return BlockVector(self._blocks[i] for i in order)

    def _check_compatible(self, other):
        if self.shapes != other.shapes:
            raise KlDescentShapeError(
                "Block shapes differ: {} vs {}".format(self.shapes,
                                                       other.shapes))


class CheckItem(object):
    """
    The outcome of one named condition of a check ('H1', 'HP2', ...)
    """

    def __init__(self, name, status, value=None, witness=None, note=None):
        if status not in (PASS, FAIL, INCONCLUSIVE):
            raise KlDescentDomainError(
                "Unrecognised check status '{}'".format(status))
        self.name = name
        self.status = status
        self.value = value
        self.witness = list(witness) if witness is not None else []
        self.note = note

    def __repr__(self):
        return "{}(name='{}', status='{}', value={})".format(
            self.__class__.__name__, self.name, self.status, self.value)

    def to_dict(self):
        dct = {'name': self.name, 'status': self.status,
               'value': self.value, 'witness': self.witness}
        if self.note:
            dct['note'] = self.note
        return dct


class CheckReport(object):
    """
    Collects check items together with the per-index violations found while
    evaluating them

    Parameters
    ----------
    name : str
        Name of the check, e.g. 'H1' or 'HP'
    items : list(CheckItem)
        The named conditions that make up the check
    violations : list(dict)
        One dictionary per violated index, holding at least the index 'k'
        and the 'residual' of the inequality
    details : dict
        Further diagnostic values that do not decide the outcome
    checked : int
        Number of indices the inequality was evaluated on
    """

    def __init__(self, name, items=(), violations=(), details=None,
                 checked=0):
        self.name = name
        self.items = list(items)
        self.violations = list(violations)
        self.details = dict(details) if details else {}
        self.checked = checked

    @property
    def passed(self):
        return not self.violations and all(i.status != FAIL
                                           for i in self.items)

    def item(self, name):
        for item in self.items:
            if item.name == name:
                return item
        raise KeyError(name)

    def status(self, name):
        return self.item(name).status

    def __repr__(self):
        return "{}(name='{}', passed={}, violations={})".format(
            self.__class__.__name__, self.name, self.passed,
            len(self.violations))

    def to_dict(self):
        return {'name': self.name,
                'passed': self.passed,
                'checked': self.checked,
                'items': [i.to_dict() for i in self.items],
                'violations': self.violations,
                'details': self.details}


def as_sequence(seq, name='sequence'):
    arr = np.asarray(seq, dtype=float).ravel()
    if arr.size == 0:
        raise KlDescentDomainError("Empty {} supplied".format(name))
    return arr


def decay_exponent(seq, tail_fraction=0.5):
    """
    Fits the exponent e of |s_k| ~ (k+1)^e over the tail of a sequence

    Parameters
    ----------
    seq : array-like
        The sequence
    tail_fraction : float
        Fraction of the sequence (taken from its end) used in the fit

    Returns
    -------
    exponent : float
        The fitted log-log slope. -inf when the tail is (almost) entirely
        zero, NaN when the tail is too short to fit.
    """
    seq = np.abs(as_sequence(seq))
    n = seq.size
    start = min(n - 1, int(n * (1.0 - tail_fraction)))
    ks = np.arange(start, n, dtype=float)
    tail = seq[start:]
    positive = tail > 0
    if np.count_nonzero(positive) < 3:
        if tail.size >= 3:
            return -np.inf
        return np.nan
    log_k = np.log(ks[positive] + 1.0)
    log_s = np.log(tail[positive])
    if np.all(log_s == log_s[0]):
        return 0.0
    return float(stats.linregress(log_k, log_s).slope)


def summability(seq, tail_fraction=0.5):
    """
    Heuristic decision of whether a nonnegative sequence lies in l1, based on
    its fitted decay exponent. A finite prefix cannot decide this so the
    result carries an inconclusive state.

    Returns
    -------
    verdict : str
        'summable', 'divergent' or 'inconclusive'
    exponent : float
        The fitted decay exponent
    partial_sum : float
        Sum of the supplied prefix
    """
    arr = as_sequence(seq)
    exponent = decay_exponent(arr, tail_fraction=tail_fraction)
    if np.isnan(exponent):
        verdict = INCONCLUSIVE
    elif exponent < SUMMABLE_EXPONENT:
        verdict = SUMMABLE
    elif exponent > DIVERGENT_EXPONENT:
        verdict = DIVERGENT
    else:
        verdict = INCONCLUSIVE
    return verdict, exponent, float(np.sum(np.abs(arr)))


def summability_item(name, seq, want, tail_fraction=0.5):
    """
    Wraps `summability` into a CheckItem that passes when the verdict matches
    `want` ('summable' or 'divergent')
    """
    verdict, exponent, partial = summability(seq, tail_fraction)
    if verdict == INCONCLUSIVE:
        status = INCONCLUSIVE
    else:
        status = PASS if verdict == want else FAIL
    return CheckItem(
        name, status, value=exponent,
        note=("heuristic: fitted decay exponent {:.4g} (threshold {}), "
              "partial sum {:.6g}, expected {}".format(
                  exponent, SUMMABLE_EXPONENT, partial, want)))


def jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        obj = float(obj)
        return obj if math.isfinite(obj) else None
    if hasattr(obj, 'to_dict'):
        return jsonable(obj.to_dict())
    return obj


def write_json(obj, path):
    with open(path, 'w') as f:
        json.dump(jsonable(obj), f, indent=2, sort_keys=True)
    logger.debug("Wrote '%s'", path)


def print_info_message(e):
    print('INFO: {}'.format(e))


def print_usage_error(e):
    print('ERROR! {}'.format(e))


def base_parser(description):
    parser = argparse.ArgumentParser(
        description=description,
        formatter_class=argparse.RawTextHelpFormatter)
    return parser


def add_default_args(parser):
    parser.add_argument('--version', '-V', action='version',
                        version='%(prog)s ' + __version__)
    parser.add_argument('--loglevel', type=int, default=logging.INFO,
                        help="The logging level to use")


def set_logger(level=logging.INFO):
    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter("%(levelname)s - %(message)s")
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    for handler in logger.handlers:
        handler.setLevel(level)
    logger.setLevel(level)
    return logger
