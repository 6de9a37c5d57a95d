import sys
import os.path
import json
import logging
import numpy as np
from .base import (
    base_parser, add_default_args, print_usage_error, print_info_message,
    set_logger, write_json, FAIL)
from .traces import read_trace_csv
from .descent_monitor import (
    check_H1, check_H2, check_H2prime, check_H3, trace_schedules,
    check_length_inequality)
from .config import load_config
from .exceptions import (
    KlDescentException, KlDescentUsageError, KlDescentDataError,
    KlDescentConfigError)

logger = logging.getLogger('kldescent')

# H3 items that do not rest on the summability heuristic
HARD_H3_ITEMS = ('H3(i)', 'H3(iii)')


def monitor(trace_path, h2prime=False, schedules=None, kl_config=None,
            out=None):
    """
    Checks the descent hypotheses on a trace file

    Parameters
    ----------
    trace_path : str
        Path of the trace CSV
    h2prime : bool
        Check the relative error at the previous point (H2') instead of H2
    schedules : str | None
        JSON file with per-record 'a_k', 'b_k' and 'eps_k' lists replacing
        the schedule columns of the trace
    kl_config : str | None
        Experiment configuration whose 'kl' section (theta, C, f_star and a
        region radius) enables the step-length inequality check
    out : str | None
        Path of the JSON report, '<trace>.monitor.json' when None

    Returns
    -------
    passed : bool
        Whether every hard check passed
    report : dict
        The check reports
    """
    trace = read_trace_csv(trace_path)
    if schedules is not None:
        _override_schedules(trace, schedules)
    reports = {'H1': check_H1(trace)}
    if h2prime:
        reports["H2'"] = check_H2prime(trace)
    else:
        reports['H2'] = check_H2(trace)
    a, b, eps = trace_schedules(trace)
    reports['H3'] = check_H3(a, b, eps)
    if kl_config is not None:
        config = load_config(kl_config)
        d = config.desingularizer()
        f_star = config.f_star()
        if d is None or f_star is None:
            raise KlDescentConfigError(
                "The length check needs kl.theta and kl.f_star in '{}'"
                .format(kl_config))
        reports['length'] = check_length_inequality(trace, d, f_star)
    hard = [reports['H1'], reports["H2'" if h2prime else 'H2']]
    if 'length' in reports:
        hard.append(reports['length'])
    passed = (all(r.passed for r in hard)
              and all(reports['H3'].status(n) != FAIL
                      for n in HARD_H3_ITEMS))
    doc = {'trace': trace_path, 'passed': passed, 'reports': reports}
    if out is None:
        out = os.path.splitext(trace_path)[0] + '.monitor.json'
    write_json(doc, out)
    for name, report in reports.items():
        logger.info("%s: %s", name, ', '.join(
            '{}={}'.format(i.name, i.status) for i in report.items))
    return passed, doc


def _override_schedules(trace, path):
    try:
        with open(path) as f:
            doc = json.load(f)
    except (IOError, ValueError) as e:
        raise KlDescentUsageError(
            "Could not read schedules from '{}': {}".format(path, e))
    for name in ('a_k', 'b_k', 'eps_k'):
        if name not in doc:
            continue
        values = np.asarray(doc[name], dtype=float)
        if values.size != len(trace):
            raise KlDescentDataError(
                "Schedule '{}' has {} entries for a trace of {} records"
                .format(name, values.size, len(trace)))
        for record, value in zip(trace, values):
            setattr(record, name, float(value))
        columns = trace.meta.get('columns')
        if columns is not None and name not in columns:
            columns.append(name)


description = """
Checks the descent hypotheses of an iterate trace:

    H1   sufficient decrease  f(x^(k+1)) + a_k |x^(k+1) - x^k|^2 <= f(x^k)
    H2   relative error       b_(k+1) |df(x^(k+1))| <= |x^(k+1) - x^k| + eps
    H2'  (with --h2prime)     b_(k+1) |df(x^k)| <= |x^(k+1) - x^k|
    H3   parameter conditions on a_k, b_k and eps_k

The schedules are read from the trace unless a JSON file with per-record
'a_k', 'b_k' and 'eps_k' lists is given with --schedules. The reports are
written as JSON next to the trace (or to --out). For example

    $ kld monitor --trace results/decomposition_afb.csv

Exit codes: 0 all hard checks pass, 1 a hard check failed, 2 the trace does
not match the schema or lacks the values a check needs.
"""


def parser():
    parser = base_parser(description)
    parser.add_argument('--trace', '-t', type=str, required=True,
                        help="The trace CSV to check")
    parser.add_argument('--h2prime', action='store_true', default=False,
                        help=("Check the relative error at the previous "
                              "point (H2') instead of H2"))
    parser.add_argument('--schedules', '-s', type=str, default=None,
                        help="JSON file overriding the schedule columns")
    parser.add_argument('--config', '-c', type=str, default=None,
                        help=("Experiment configuration whose 'kl' section "
                              "enables the step-length inequality check"))
    parser.add_argument('--out', '-o', type=str, default=None,
                        help="Path of the JSON report")
    add_default_args(parser)
    return parser


def cmd(argv=sys.argv[1:]):

    args = parser().parse_args(argv)

    set_logger(args.loglevel)

    try:
        passed, _ = monitor(args.trace, h2prime=args.h2prime,
                            schedules=args.schedules, kl_config=args.config,
                            out=args.out)
    except KlDescentUsageError as e:
        print_usage_error(e)
        return KlDescentUsageError.exit_code
    except KlDescentException as e:
        print_info_message(e)
        return e.exit_code
    if not passed:
        print_info_message("Trace '{}' violates the descent hypotheses"
                           .format(args.trace))
        return 1
    return 0
