import sys
import os.path
import logging
from .base import (
    base_parser, add_default_args, print_usage_error, print_info_message,
    set_logger, write_json, FAIL)
from .config import load_config, ensure_output_dir, LM, OUTPUT_DIR_ENV
from .lm_newton import lm_schedule_check, run_lm
from .descent_monitor import criticality_certificate
from .traces import write_trace_csv
from .exceptions import (
    KlDescentException, KlDescentUsageError, KlDescentConfigError,
    KlDescentScheduleError)

logger = logging.getLogger('kldescent')


def lm(config, pure_newton=False, check_only=False, out_dir=None):
    """
    Runs the projected generalized Levenberg-Marquardt method of an
    experiment configuration

    Parameters
    ----------
    config : ExperimentConfig
        Configuration with solver 'lm' and an 'lm' section
    pure_newton : bool
        Run the pure Newton diagnostic (A_k = Hessian, lambda_k = 1)
    check_only : bool
        Only check the step-size schedule
    out_dir : str | None
        Output directory, the configured one when None

    Returns
    -------
    summary : dict
    """
    if config.solver != LM:
        raise KlDescentConfigError(
            "Configuration '{}' is for solver '{}', not 'lm'".format(
                config.path, config.solver))
    problem, x0, _ = config.build_problem()
    lm_config = config.build_lm_config()
    if pure_newton:
        lm_config.pure_newton = True
    if out_dir is not None and not os.environ.get(OUTPUT_DIR_ENV):
        config.output['dir'] = out_dir
    out_dir = ensure_output_dir(config.output_dir)
    summary = {'name': config.name}
    if not lm_config.pure_newton:
        report = lm_schedule_check(lm_config.lambdas, lm_config.epsilon,
                                   problem.L)
        summary['schedule'] = report
        if check_only:
            write_json(summary, os.path.join(out_dir,
                                             config.name + '.lm.json'))
            failed = [i for i in report.items if i.status == FAIL]
            if failed:
                raise KlDescentScheduleError(
                    "Step-size schedule refused: " + "; ".join(
                        "{} ({})".format(i.name, i.note) for i in failed))
            return summary
    trace = run_lm(problem, lm_config, x0[0], stop=config.build_stop(),
                   region=config.kl_region(problem))
    trace_path = os.path.join(out_dir, config.name + '.csv')
    write_trace_csv(trace, trace_path, dump_iterates=config.dump_iterates)
    summary.update({'status': trace.status, 'final_value': trace.final.f_val,
                    'final_point': trace.final.x.flat(),
                    'iterations': len(trace) - 1, 'trace': trace_path,
                    'certificate': criticality_certificate(trace),
                    'meta': trace.meta})
    write_json(summary, os.path.join(out_dir, config.name + '.lm.json'))
    return summary


description = """
Minimizes a smooth function over a closed set by projected Newton steps in
generalized Levenberg-Marquardt metrics

    x^(k+1) = proj_C^(A_k)(x^k - lambda_k A_k^-1 grad h(x^k))
    A_k = proj_PSD(H_k) + epsilon I

where H_k is the analytic Hessian, a finite-difference estimate or a
user-supplied generalized Hessian element. The step sizes must satisfy
lambda_k <= lambda_ < epsilon / L, be non-summable and have bounded ratios;
infeasible schedules are refused before iterating. For example

    $ kld lm --config quadratic_lm.json

With --pure-newton the method runs with A_k = H_k and lambda_k = 1, a
diagnostic outside the guaranteed schedule that reaches the minimizer of a
convex quadratic over an affine set in one step.

Exit codes: 0 success, 2 configuration error, 3 infeasible schedule,
4 divergence.
"""


def parser():
    parser = base_parser(description)
    parser.add_argument('--config', '-c', type=str, required=True,
                        help="Experiment configuration with solver 'lm'")
    parser.add_argument('--pure-newton', action='store_true', default=False,
                        help="Run the pure Newton diagnostic")
    parser.add_argument('--check-only', action='store_true', default=False,
                        help="Only check the step-size schedule")
    parser.add_argument('--out', '-o', type=str, default=None,
                        help="The directory to write the outputs to")
    add_default_args(parser)
    return parser


def cmd(argv=sys.argv[1:]):

    args = parser().parse_args(argv)

    set_logger(args.loglevel)

    try:
        lm(load_config(args.config), pure_newton=args.pure_newton,
           check_only=args.check_only, out_dir=args.out)
    except KlDescentUsageError as e:
        print_usage_error(e)
        return e.exit_code
    except KlDescentException as e:
        print_info_message(e)
        return e.exit_code
    return 0
