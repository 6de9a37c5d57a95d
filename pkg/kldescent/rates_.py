import sys
import os.path
import math
import logging
import numpy as np
import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
from .base import (  # noqa: E402
    base_parser, add_default_args, print_usage_error, print_info_message,
    set_logger, write_json)
from .kl_core import Desingularizer, ETA_INFINITY  # noqa: E402
from .traces import read_trace_csv, has_column  # noqa: E402
from .descent_monitor import (  # noqa: E402
    predict_rates, fit_rates, trace_schedules, distance_gap_diagnostic,
    FINITE_TERMINATION, EXPONENTIAL, POLYNOMIAL, OK)
from .config import load_config  # noqa: E402
from .exceptions import (  # noqa: E402
    KlDescentException, KlDescentUsageError, KlDescentDomainError,
    KlDescentDataError)

logger = logging.getLogger('kldescent')

# Relative error between fitted and predicted exponents regarded as agreement
EXPONENT_AGREEMENT_TOL = 0.2
# Value gaps above -GAP_TOL (1 + |f*|) are clipped to 0
GAP_TOL = 1e-14


def rates(trace_path, desingularizer, f_star=0.0, x_star=None,
          h2prime=False, tail_fraction=0.8, plot_dir=None, out=None):
    """
    Predicts the convergence regime of a trace from its desingularizer and
    schedules, fits the observed value (and iterate) gaps and reports their
    agreement

    Parameters
    ----------
    trace_path : str
        Path of the trace CSV (with its iterate file for iterate fits)
    desingularizer : Desingularizer
        Desingularizer of the limit point
    f_star : float
        Limit value
    x_star : array-like | None
        Limit point, enables the iterate fit and the distance-gap diagnostic
    h2prime : bool
        Whether the trace satisfies H2' rather than H2
    tail_fraction : float
        Fraction of the trace fitted
    plot_dir : str | None
        Directory to write SVG plots to
    out : str | None
        Path of the JSON report, '<trace>.rates.json' when None

    Returns
    -------
    report : dict
        Prediction, fits and agreement
    """
    trace = read_trace_csv(trace_path)
    gaps = value_gaps(trace.values, f_star)
    report = {'trace': trace_path, 'f_star': f_star,
              'desingularizer': desingularizer}
    b = None
    if has_column(trace, 'b_k') and has_column(trace, 'a_k'):
        try:
            a, b_seq, eps = trace_schedules(trace)
        except KlDescentDataError as e:
            logger.warning("No rate prediction: %s", e)
            prediction = None
        else:
            prediction = predict_rates(desingularizer, a, b_seq,
                                       use_H2prime=h2prime, eps=eps)
            b = trace.column('b_k')
    else:
        prediction = None
    report['prediction'] = prediction
    fit = fit_rates(gaps, tail_fraction=tail_fraction)
    report['fit'] = fit
    if b is not None and not fit.finite_termination:
        report['fit_sum_b'] = fit_rates(gaps, b=b,
                                        tail_fraction=tail_fraction)
    iterate_fit = None
    if x_star is not None and trace[0].x is not None:
        x_star = np.asarray(x_star, dtype=float).ravel()
        dist = np.array([np.linalg.norm(r.x.flat() - x_star) for r in trace])
        iterate_fit = fit_rates(dist, tail_fraction=tail_fraction)
        report['iterate_fit'] = iterate_fit
        report['distance_gap'] = distance_gap_diagnostic(
            trace, desingularizer, x_star, f_star)
    report['agreement'] = agreement(prediction, fit, iterate_fit,
                                    report.get('fit_sum_b'))
    if plot_dir is not None:
        report['plots'] = plot_rates(trace, gaps, prediction, b, plot_dir)
    if out is None:
        out = os.path.splitext(trace_path)[0] + '.rates.json'
    write_json(report, out)
    logger.info("Rates of '%s': predicted %s, fitted %s", trace_path,
                prediction.regime if prediction is not None else None,
                fit.model)
    return report


def value_gaps(values, f_star):
    gaps = np.asarray(values, dtype=float) - f_star
    if np.any(gaps < -GAP_TOL * (1.0 + abs(f_star))):
        raise KlDescentDomainError(
            "Values fall below f* = {} (min gap {})".format(f_star,
                                                            gaps.min()))
    return np.maximum(gaps, 0.0)


def agreement(prediction, fit, iterate_fit=None, fit_sum_b=None):
    """
    Compares a prediction with the fits: observed against predicted finite
    termination, the observed exponential rate (in sum b when available)
    against the guaranteed rate c, or the relative error of the fitted
    polynomial exponents
    """
    if prediction is None or prediction.status != OK:
        return {'status': 'unavailable'}
    doc = {'regime': prediction.regime, 'status': OK}
    if prediction.regime == FINITE_TERMINATION:
        doc['observed'] = bool(fit.finite_termination)
        doc['agrees'] = doc['observed']
        return doc
    if fit.finite_termination:
        doc['observed'] = FINITE_TERMINATION
        doc['agrees'] = True
        return doc
    reference = fit_sum_b if fit_sum_b is not None else fit
    if prediction.regime == EXPONENTIAL:
        observed = -reference.exp_slope
        doc['observed_rate'] = observed
        doc['predicted_rate'] = prediction.c
        doc['agrees'] = bool(observed >= prediction.c * (
            1.0 - EXPONENT_AGREEMENT_TOL))
        return doc
    if prediction.regime == POLYNOMIAL:
        doc['values_relative_error'] = _relative(
            reference.poly_slope, prediction.exponent_values)
        doc['agrees'] = bool(doc['values_relative_error']
                             <= EXPONENT_AGREEMENT_TOL)
        if iterate_fit is not None and not iterate_fit.finite_termination:
            doc['iterates_relative_error'] = _relative(
                iterate_fit.poly_slope, prediction.exponent_iterates)
        return doc
    doc['agrees'] = None
    return doc


def plot_rates(trace, gaps, prediction, b, plot_dir):
    """
    Writes the log value gap against k, and against log sum b when the
    trace carries b, as SVG files

    Returns
    -------
    paths : list(str)
    """
    if not os.path.exists(plot_dir):
        os.makedirs(plot_dir)
    stem = 'rates'
    ks = np.array([r.k for r in trace], dtype=float)
    positive = gaps > 0
    paths = []
    fig, ax = plt.subplots()
    ax.semilogy(ks[positive], gaps[positive], '.', label='f(x^k) - f*')
    ax.set_xlabel('k')
    ax.set_ylabel('value gap')
    ax.legend()
    path = os.path.join(plot_dir, stem + '_values.svg')
    fig.savefig(path, format='svg')
    plt.close(fig)
    paths.append(path)
    if b is not None:
        sum_b = np.cumsum(np.where(np.isnan(b), 0.0, b))
        keep = positive & (sum_b > 0)
        fig, ax = plt.subplots()
        ax.loglog(sum_b[keep], gaps[keep], '.', label='f(x^k) - f*')
        if prediction is not None and prediction.status == OK:
            envelope = prediction.values_envelope(sum_b[keep])
            if envelope is not None and keep.any():
                scale = gaps[keep][0] / envelope[0] if envelope[0] else 1.0
                ax.loglog(sum_b[keep], scale * envelope, '-',
                          label='predicted ({})'.format(prediction.regime))
        ax.set_xlabel('sum of b_k')
        ax.set_ylabel('value gap')
        ax.legend()
        path = os.path.join(plot_dir, stem + '_sum_b.svg')
        fig.savefig(path, format='svg')
        plt.close(fig)
        paths.append(path)
    for path in paths:
        logger.info("Wrote plot '%s'", path)
    return paths


def _relative(observed, predicted):
    if observed is None or predicted is None or predicted == 0:
        return math.inf
    return abs(observed - predicted) / abs(predicted)


description = """
Predicts the convergence rate of a trace from a KL desingularizer and its
schedules, fits the observed value gaps f(x^k) - f* and reports whether they
agree.

    theta = 1            finite termination
    theta in [1/2, 1)    exponential, values ~ exp(-c sum b)
    theta in (0, 1/2)    polynomial, values ~ (sum b)^(-1/(1 - 2 theta))

With --h2prime the prediction rests on the primitive of -(phi')^2 and
theta in (1/2, 1] already gives finite termination. The desingularizer and
limit are given with --theta/--C/--f-star or taken from the 'kl' section of
an experiment configuration (--config); f* defaults to 0. For example

    $ kld rates --trace results/power4_afb.csv --theta 0.25 --C 0.25

Iterate fits need the limit point (kl.x_star) and a trace written with
--dump-iterates. Exit codes: 0 success, 2 usage error, 5 not enough tail
points to fit.
"""


def parser():
    parser = base_parser(description)
    parser.add_argument('--trace', '-t', type=str, required=True,
                        help="The trace CSV to analyse")
    parser.add_argument('--config', '-c', type=str, default=None,
                        help="Experiment configuration with a 'kl' section")
    parser.add_argument('--theta', type=float, default=None,
                        help="KL exponent of the power desingularizer")
    parser.add_argument('--C', type=float, default=1.0,
                        help="Constant of the power desingularizer")
    parser.add_argument('--f-star', type=float, default=None,
                        help="The limit value f*")
    parser.add_argument('--h2prime', action='store_true', default=False,
                        help="The trace satisfies H2' rather than H2")
    parser.add_argument('--tail-fraction', type=float, default=0.8,
                        help="Fraction of the trace used in the fits")
    parser.add_argument('--plots', type=str, default=None,
                        help="Directory to write SVG plots to")
    parser.add_argument('--out', '-o', type=str, default=None,
                        help="Path of the JSON report")
    add_default_args(parser)
    return parser


def cmd(argv=sys.argv[1:]):

    args = parser().parse_args(argv)

    set_logger(args.loglevel)

    try:
        config = load_config(args.config) if args.config else None
        if args.theta is not None:
            d = Desingularizer.power(args.C, args.theta, eta=ETA_INFINITY)
        elif config is not None and config.desingularizer() is not None:
            d = config.desingularizer()
        else:
            raise KlDescentUsageError(
                "A desingularizer is required (--theta or kl.theta)")
        f_star = args.f_star
        if f_star is None and config is not None:
            f_star = config.f_star()
        if f_star is None:
            logger.warning("No f* given, assuming f* = 0")
            f_star = 0.0
        x_star = config.x_star() if config is not None else None
        rates(args.trace, d, f_star=f_star, x_star=x_star,
              h2prime=args.h2prime, tail_fraction=args.tail_fraction,
              plot_dir=args.plots, out=args.out)
    except KlDescentUsageError as e:
        print_usage_error(e)
        return e.exit_code
    except KlDescentException as e:
        print_info_message(e)
        return e.exit_code
    return 0
