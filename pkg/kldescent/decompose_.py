import sys
import os.path
import logging
import numpy as np
from .base import (
    base_parser, add_default_args, print_usage_error, print_info_message,
    set_logger, write_json)
from .afb_engine import StoppingRule
from .problems import (
    DecompositionInstance, generate_decomposition, initial_point, run_aapm,
    recovery_report, capture_sweep)
from .traces import write_trace_csv
from .config import ensure_output_dir, OUTPUT_DIR_ENV
from .exceptions import (
    KlDescentException, KlDescentUsageError)

logger = logging.getLogger('kldescent')


def decompose(instance, out_dir, radius=None, lam=0.5, mu=0.5, stop=None,
              seed=0, radii=None, name='decomposition'):
    """
    Splits the observation of a decomposition instance into a low-rank and a
    sparse part by alternating averaged projections, writing X and Y as text
    matrices, the iterate trace and the recovery metrics

    Parameters
    ----------
    instance : DecompositionInstance
        The instance
    out_dir : str
        Output directory
    radius : float | None
        Relative perturbation of the planted parts to start from (from
        (0, 0) when None)
    lam, mu : float
        Averaging weights, in (0, 1]
    stop : StoppingRule | None
        Stopping rule
    seed : int
        Seed of the starting perturbation
    radii : list(float) | None
        Radii of a capture sweep run in addition
    name : str
        Stem of the output files

    Returns
    -------
    metrics : RecoveryMetrics
    """
    ensure_output_dir(out_dir)
    X0, Y0 = initial_point(instance, radius=radius, seed=seed)
    trace = run_aapm(instance, X0, Y0, lam=lam, mu=mu, stop=stop)
    X, Y = trace.final.x
    np.savetxt(os.path.join(out_dir, name + '_X.txt'), X, fmt='%.17g',
               delimiter=',')
    np.savetxt(os.path.join(out_dir, name + '_Y.txt'), Y, fmt='%.17g',
               delimiter=',')
    write_trace_csv(trace, os.path.join(out_dir, name + '.csv'))
    metrics = recovery_report(instance, X, Y)
    doc = {'instance': instance, 'status': trace.status,
           'iterations': len(trace) - 1, 'final_value': trace.final.f_val,
           'recovery': metrics}
    if radii:
        doc['capture'] = capture_sweep(instance, radii, lam=lam, mu=mu,
                                       stop=stop, seed=seed)
    write_json(doc, os.path.join(out_dir, name + '.recovery.json'))
    logger.info("Decomposition finished with status '%s' (%s)",
                trace.status, metrics)
    return metrics


description = """
Decomposes a matrix into low-rank and sparse parts, A = X + Y with
rank(X) <= r and at most s nonzero entries in Y, by alternating averaged
projections

    X' = proj_(rank <= r)(lam (A - Y) + (1 - lam) X)
    Y' = proj_(|.|_0 <= s)(mu (A - X') + (1 - mu) Y)

The matrix is read from an instance file (header 'm,n,r,s,seed,planted'
followed by the rows of A, and of the planted parts when present) or a planted
instance is generated. X and Y are written as text matrices together with
the trace and the recovery metrics. For example

    $ kld decompose --generate 20 20 2 10 --radius 1e-3 --out results

Capture of the planted parts from perturbations of increasing size is
swept with --radii.
"""


def parser():
    parser = base_parser(description)
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--instance', '-i', type=str, default=None,
                        help="Instance file to decompose")
    source.add_argument('--generate', '-g', type=int, nargs=4,
                        metavar=('M', 'N', 'R', 'S'), default=None,
                        help="Generate a planted m x n instance")
    parser.add_argument('--gap', type=float, default=10.0,
                        help=("Magnitude gap between the sparse and the "
                              "low-rank part of generated instances"))
    parser.add_argument('--seed', type=int, default=0,
                        help="Seed of the generator and perturbations")
    parser.add_argument('--radius', type=float, default=None,
                        help=("Relative perturbation of the planted parts to "
                              "start from"))
    parser.add_argument('--radii', type=float, nargs='+', default=None,
                        help="Radii of a capture sweep")
    parser.add_argument('--lam', type=float, default=0.5,
                        help="Averaging weight of the low-rank update")
    parser.add_argument('--mu', type=float, default=0.5,
                        help="Averaging weight of the sparse update")
    parser.add_argument('--max-iter', type=int, default=500,
                        help="Maximum number of iterations")
    parser.add_argument('--save-instance', type=str, default=None,
                        help="Write the (generated) instance to this file")
    parser.add_argument('--out', '-o', type=str, default='.',
                        help="The directory to write the outputs to")
    add_default_args(parser)
    return parser


def cmd(argv=sys.argv[1:]):

    args = parser().parse_args(argv)

    set_logger(args.loglevel)

    try:
        if args.instance is not None:
            instance = DecompositionInstance.load(args.instance)
        else:
            instance = generate_decomposition(*args.generate,
                                              magnitude_gap=args.gap,
                                              seed=args.seed)
        if args.save_instance:
            instance.save(args.save_instance)
        out_dir = os.environ.get(OUTPUT_DIR_ENV) or args.out
        decompose(instance, out_dir, radius=args.radius, lam=args.lam,
                  mu=args.mu, stop=StoppingRule(max_iter=args.max_iter),
                  seed=args.seed, radii=args.radii)
    except KlDescentUsageError as e:
        print_usage_error(e)
        return e.exit_code
    except KlDescentException as e:
        print_info_message(e)
        return e.exit_code
    return 0
