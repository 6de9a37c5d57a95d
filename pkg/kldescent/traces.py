"""
Iterate traces and their CSV representation.

Record j >= 1 describes the transition x^(j-1) -> x^j:

    step_norm   |x^j - x^(j-1)|
    slope_norm  norm of a subgradient witness at x^j
    a_k         a_(j-1), the sufficient-decrease constant of the transition
    b_k, eps_k  b_j, eps_j, the relative-error constants at x^j
    alpha_k, beta_k  spectral bounds of the metrics used by the transition

Record 0 only carries the initial value (and the gradient norm as slope when
the problem is smooth); its schedule fields are NaN.
"""
import os.path
import csv
import math
import logging
import numpy as np
from .base import BlockVector
from .exceptions import KlDescentUsageError, KlDescentDataError

logger = logging.getLogger('kldescent')

COLUMNS = ('k', 'f_val', 'step_norm', 'slope_norm', 'a_k', 'b_k', 'eps_k',
           'alpha_k', 'beta_k', 'region_flag')

# Appended after the fixed columns when the run carries an x/y pair
ERROR_COLUMNS = ('f_x', 'x_step_norm')

REQUIRED_COLUMNS = ('k', 'f_val')

CONVERGED = 'converged'
MAX_ITER = 'max_iter'
DIVERGED = 'diverged'
RUNNING = 'running'

ITERATES_SUFFIX = '.iterates.txt'

nan = float('nan')


class IterateRecord(object):

    def __init__(self, k, f_val, step_norm=nan, slope_norm=nan, a_k=nan,
                 b_k=nan, eps_k=nan, alpha_k=nan, beta_k=nan,
                 region_flag=None, x=None, y=None, f_x=nan,
                 x_step_norm=nan):
        self.k = int(k)
        self.f_val = float(f_val)
        self.step_norm = float(step_norm)
        self.slope_norm = float(slope_norm)
        self.a_k = float(a_k)
        self.b_k = float(b_k)
        self.eps_k = float(eps_k)
        self.alpha_k = float(alpha_k)
        self.beta_k = float(beta_k)
        self.region_flag = region_flag
        self.x = x
        self.y = y
        self.f_x = float(f_x)
        self.x_step_norm = float(x_step_norm)

    def __repr__(self):
        return "{}(k={}, f_val={}, step_norm={}, slope_norm={})".format(
            self.__class__.__name__, self.k, self.f_val, self.step_norm,
            self.slope_norm)


class HeRecord(object):
    """
    The error quantities of one block update of an inexact step: the
    explicit error r_i^k, the implicit error s_i^k carried by x_i^k, the norm
    of the stacked implicit errors S_i^k seen by the partial gradient, and
    the step of the error-free companion y_i^(k+1) - y_i^k under metric A.
    """

    def __init__(self, i, k, r, s, S_norm, dy, metric, mu_k):
        self.i = i
        self.k = k
        self.r = np.asarray(r, dtype=float)
        self.s = np.asarray(s, dtype=float)
        self.S_norm = float(S_norm)
        self.dy = np.asarray(dy, dtype=float)
        self.metric = metric
        self.mu_k = float(mu_k)

    def __repr__(self):
        return "{}(i={}, k={}, |r|={}, |S|={}, |dy|={})".format(
            self.__class__.__name__, self.i, self.k,
            np.linalg.norm(self.r), self.S_norm, np.linalg.norm(self.dy))


class IterateTrace(object):
    """
    Ordered ledger of iterate records with a terminal status and metadata

    Parameters
    ----------
    records : list(IterateRecord)
        The records, k strictly increasing
    status : str
        'converged', 'max_iter', 'diverged' or 'running'
    meta : dict
        Free-form metadata (problem name, schedule parameters, ...)
    """

    def __init__(self, records=(), status=RUNNING, meta=None):
        self.records = []
        self.status = status
        self.meta = dict(meta) if meta else {}
        self.he_log = []
        for record in records:
            self.append(record)

    @classmethod
    def from_columns(cls, f_val, status=RUNNING, **columns):
        """
        Builds a trace from per-record columns of equal length, missing ones
        filled with NaN
        """
        n = len(f_val)
        for name, col in columns.items():
            if name not in COLUMNS[2:] + ERROR_COLUMNS:
                raise KlDescentUsageError(
                    "Unrecognised trace column '{}'".format(name))
            if len(col) != n:
                raise KlDescentUsageError(
                    "Column '{}' has length {}, expected {}".format(
                        name, len(col), n))
        records = []
        for k in range(n):
            kwargs = {name: col[k] for name, col in columns.items()}
            if 'region_flag' in kwargs and kwargs['region_flag'] is not None:
                kwargs['region_flag'] = bool(kwargs['region_flag'])
            records.append(IterateRecord(k, f_val[k], **kwargs))
        return cls(records, status=status)

    def append(self, record):
        if self.records and record.k <= self.records[-1].k:
            raise KlDescentUsageError(
                "Trace indices must be strictly increasing ({} after {})"
                .format(record.k, self.records[-1].k))
        if not math.isfinite(record.f_val):
            raise KlDescentDataError(
                "Non-finite objective value at k={}".format(record.k))
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, k):
        return self.records[k]

    @property
    def final(self):
        return self.records[-1]

    @property
    def converged(self):
        return self.status == CONVERGED

    def column(self, name):
        if name == 'region_flag':
            return np.array([np.nan if r.region_flag is None
                             else float(r.region_flag)
                             for r in self.records])
        return np.array([getattr(r, name) for r in self.records],
                        dtype=float)

    @property
    def values(self):
        return self.column('f_val')

    @property
    def iterates(self):
        return [r.x for r in self.records]

    def __repr__(self):
        return "{}(records={}, status='{}')".format(
            self.__class__.__name__, len(self.records), self.status)


def write_trace_csv(trace, path, dump_iterates=False):
    """
    Writes a trace in the fixed column order, numbers with 17 significant
    digits. With `dump_iterates` the flattened block iterates go to a text
    matrix next to the trace (one row per record, k first).
    """
    extra = ERROR_COLUMNS if trace.meta.get('errors') else ()
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(COLUMNS + extra)
        for rec in trace:
            row = [str(rec.k)]
            row.extend(_fmt(getattr(rec, c)) for c in COLUMNS[1:-1])
            row.append('' if rec.region_flag is None
                       else str(int(bool(rec.region_flag))))
            row.extend(_fmt(getattr(rec, c)) for c in extra)
            writer.writerow(row)
    logger.info("Wrote trace with %s records to '%s'", len(trace), path)
    if dump_iterates:
        iterates_path = iterates_path_for(path)
        rows = np.array([np.concatenate([[rec.k], rec.x.flat()])
                         for rec in trace])
        header = 'shapes=' + ';'.join(
            'x'.join(str(d) for d in shape) for shape in trace[0].x.shapes)
        np.savetxt(iterates_path, rows, fmt='%.17g', delimiter=',',
                   header=header)
        logger.info("Wrote iterates to '%s'", iterates_path)


def read_trace_csv(path):
    """
    Reads a trace written by `write_trace_csv`. Missing optional columns are
    read as NaN; the names of the columns found are kept in
    `trace.meta['columns']`.
    """
    if not os.path.exists(path):
        raise KlDescentUsageError("Trace file '{}' does not exist"
                                  .format(path))
    with open(path, newline='') as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise KlDescentUsageError("Trace file '{}' is empty".format(path))
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        unknown = [c for c in header if c not in COLUMNS + ERROR_COLUMNS]
        if missing or unknown:
            raise KlDescentUsageError(
                "Trace '{}' does not match the schema (missing columns {}, "
                "unrecognised columns {})".format(path, missing, unknown))
        trace = IterateTrace(meta={'columns': header,
                                   'errors': 'f_x' in header})
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise KlDescentUsageError(
                    "Line {} of '{}' has {} fields, expected {}".format(
                        lineno, path, len(row), len(header)))
            fields = dict(zip(header, row))
            try:
                kwargs = {c: _parse(fields[c]) for c in header
                          if c not in ('k', 'f_val', 'region_flag')}
                flag = fields.get('region_flag', '')
                trace.append(IterateRecord(
                    int(fields['k']), float(fields['f_val']),
                    region_flag=bool(int(flag)) if flag else None,
                    **kwargs))
            except ValueError as e:
                raise KlDescentUsageError(
                    "Could not parse line {} of '{}': {}".format(
                        lineno, path, e))
    iterates_path = iterates_path_for(path)
    if os.path.exists(iterates_path):
        _attach_iterates(trace, iterates_path)
    return trace


def iterates_path_for(trace_path):
    return os.path.splitext(trace_path)[0] + ITERATES_SUFFIX


def has_column(trace, name):
    columns = trace.meta.get('columns')
    return columns is None or name in columns


def _attach_iterates(trace, path):
    with open(path) as f:
        header = f.readline().lstrip('# ').strip()
    if not header.startswith('shapes='):
        raise KlDescentUsageError(
            "Iterate file '{}' lacks its block shape header".format(path))
    shapes = [tuple(int(d) for d in s.split('x'))
              for s in header[len('shapes='):].split(';')]
    rows = np.atleast_2d(np.loadtxt(path, delimiter=','))
    by_k = {int(row[0]): row[1:] for row in rows}
    for rec in trace:
        if rec.k in by_k:
            rec.x = BlockVector.from_flat(by_k[rec.k], shapes)


def _fmt(value):
    return '{:.17g}'.format(value)


def _parse(field):
    return float(field) if field != '' else nan
