import sys
import os.path
import logging
from concurrent.futures import ProcessPoolExecutor
from .base import (
    base_parser, add_default_args, print_usage_error, print_info_message,
    set_logger, write_json)
from .config import (
    load_config, ensure_output_dir, LM, AAPM, AFBE, OUTPUT_DIR_ENV)
from .afb_engine import run, he_check, error_partial_sums
from .lm_newton import run_lm
from .problems import run_aapm, recovery_report
from .descent_monitor import criticality_certificate
from .traces import write_trace_csv
from .exceptions import (
    KlDescentException, KlDescentUsageError, KlDescentDivergenceError)

logger = logging.getLogger('kldescent')


def run_experiment(config, out_dir=None, dump_iterates=None, progress=False):
    """
    Runs the experiment described by a configuration, writing its trace to
    '<name>.csv' and a run summary to '<name>.summary.json' in the output
    directory

    Parameters
    ----------
    config : ExperimentConfig
        The experiment
    out_dir : str | None
        Output directory, the configured one when None (the OUTPUT_DIR
        environment variable takes precedence over both)
    dump_iterates : bool | None
        Write the iterates next to the trace (the configured choice when
        None)
    progress : bool
        Show a progress bar

    Returns
    -------
    summary : dict
        Terminal status, final value, iteration count, criticality
        certificate and (where applicable) error-condition and recovery
        reports
    """
    if out_dir is not None and not os.environ.get(OUTPUT_DIR_ENV):
        config.output['dir'] = out_dir
    out_dir = ensure_output_dir(config.output_dir)
    if dump_iterates is None:
        dump_iterates = config.dump_iterates
    trace_path = os.path.join(out_dir, config.name + '.csv')
    problem, x0, instance = config.build_problem()
    stop = config.build_stop()
    region = config.kl_region(problem)
    logger.info("Running '%s' with solver '%s' on %s", config.name,
                config.solver, problem)
    try:
        if config.solver == LM:
            trace = run_lm(problem, config.build_lm_config(), x0[0],
                           stop=stop, region=region, progress=progress)
        elif config.solver == AAPM:
            steps = config.schedules.get('steps', [0.5, 0.5])
            trace = run_aapm(instance, x0[0], x0[1], lam=steps[0],
                             mu=steps[1], stop=stop, region=region,
                             progress=progress)
        else:
            trace = run(problem, config.build_schedule(problem), x0,
                        error_model=config.build_error_model(), stop=stop,
                        seed=config.seed,
                        schedule_kind=config.schedule_kind, region=region,
                        progress=progress)
    except KlDescentDivergenceError as e:
        if e.trace is not None and len(e.trace):
            write_trace_csv(e.trace, trace_path)
            logger.info("Partial trace of the diverged run written to '%s'",
                        trace_path)
        raise
    write_trace_csv(trace, trace_path, dump_iterates=dump_iterates)
    summary = {'name': config.name, 'problem': problem.name,
               'solver': config.solver, 'seed': config.seed,
               'status': trace.status, 'final_value': trace.final.f_val,
               'iterations': len(trace) - 1, 'trace': trace_path,
               'certificate': criticality_certificate(trace),
               'beta_bounded': trace.meta.get('beta_max'),
               'meta': {k: v for k, v in trace.meta.items()
                        if k not in ('columns',)}}
    if config.solver == AFBE:
        summary['error_conditions'] = he_check(
            trace.he_log, config.schedules.get('sigma', 0.0),
            config.schedules.get('rho', 1.0))
        r_sums, s_sums = error_partial_sums(trace)
        summary['error_energy'] = {'r_squared_sum': r_sums[-1],
                                   's_squared_sum': s_sums[-1]}
        slack = trace.meta.get('he_slack', [])
        summary['error_slack_steps'] = sorted({v['k'] for v in slack})
        if slack:
            logger.warning("'%s' left error-condition slack at %s step(s)",
                           config.name, len(summary['error_slack_steps']))
    if instance is not None:
        X, Y = trace.final.x
        summary['recovery'] = recovery_report(instance, X, Y)
    write_json(summary, os.path.join(out_dir,
                                     config.name + '.summary.json'))
    logger.info("'%s' finished with status '%s' after %s iterations (f=%s)",
                config.name, trace.status, len(trace) - 1,
                trace.final.f_val)
    return summary


def run_config_file(path, out_dir=None, dump_iterates=None, progress=False):
    """
    Loads and runs a configuration file, returning the exit code and the
    error message (None on success) rather than raising, so that it can be
    mapped over worker processes
    """
    try:
        config = load_config(path)
        run_experiment(config, out_dir=out_dir, dump_iterates=dump_iterates,
                       progress=progress)
    except KlDescentException as e:
        return e.exit_code, '{}: {}'.format(path, e)
    return 0, None


description = """
Runs optimization experiments described by JSON configuration files.

Each configuration names a problem (decomposition, power, abs, quadratic,
double_well or counting), a solver (afb, afbe, lm, proximal_point or aapm),
its schedules and stopping rule. The metric, error and step-size schedules
are checked before any iteration and the run is refused when they are
infeasible. The iterate trace is written to '<name>.csv' with a run summary
in '<name>.summary.json'. For example

    $ kld run --config decomposition.json --out results

Several configurations can be run in parallel with '--jobs'. The OUTPUT_DIR
environment variable overrides the output directory.

Exit codes: 0 success, 2 configuration error, 3 infeasible schedule,
4 divergence.
"""


def parser():
    parser = base_parser(description)
    parser.add_argument('--config', '-c', type=str, nargs='+', required=True,
                        help="The configuration file(s) to run")
    parser.add_argument('--out', '-o', type=str, default=None,
                        help="The directory to write the outputs to")
    parser.add_argument('--jobs', '-j', type=int, default=1,
                        help="The number of configurations run in parallel")
    parser.add_argument('--dump-iterates', action='store_true',
                        default=None,
                        help=("Write the block iterates to a text matrix "
                              "next to the trace"))
    parser.add_argument('--progress', action='store_true', default=False,
                        help="Display a progress bar during each run")
    add_default_args(parser)
    return parser


def cmd(argv=sys.argv[1:]):

    args = parser().parse_args(argv)

    set_logger(args.loglevel)

    if args.jobs < 1:
        print_usage_error("--jobs must be positive (got {})".format(
            args.jobs))
        return KlDescentUsageError.exit_code
    kwargs = dict(out_dir=args.out, dump_iterates=args.dump_iterates,
                  progress=args.progress and args.jobs == 1)
    if args.jobs == 1 or len(args.config) == 1:
        results = [run_config_file(p, **kwargs) for p in args.config]
    else:
        with ProcessPoolExecutor(max_workers=args.jobs) as executor:
            futures = [executor.submit(run_config_file, p, **kwargs)
                       for p in args.config]
            results = [f.result() for f in futures]
    exit_code = 0
    for code, msg in results:
        if code == KlDescentUsageError.exit_code:
            print_usage_error(msg)
        elif code:
            print_info_message(msg)
        exit_code = max(exit_code, code)
    return exit_code
