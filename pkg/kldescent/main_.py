import sys
from .base import print_usage_error
from .version_ import __version__
from . import run_, monitor_, rates_, decompose_, lm_

COMMANDS = {
    'run': run_,
    'monitor': monitor_,
    'rates': rates_,
    'decompose': decompose_,
    'lm': lm_}

usage = """usage: kld <command> [options]

Runs and analyses inexact descent methods under the Kurdyka-Lojasiewicz
inequality (version {}). Commands:

    run         run experiments from JSON configurations
    monitor     check the descent hypotheses of a trace
    rates       predict and fit the convergence rates of a trace
    decompose   split a matrix into low-rank and sparse parts
    lm          projected generalized Levenberg-Marquardt runs

Run 'kld <command> --help' for the options of a command.
""".format(__version__)


def cmd(argv=sys.argv[1:]):
    if not argv or argv[0] in ('-h', '--help'):
        print(usage)
        return 0
    name, args = argv[0], argv[1:]
    if name not in COMMANDS:
        print_usage_error("Unrecognised command '{}' (expected one of {})"
                          .format(name, ', '.join(sorted(COMMANDS))))
        print(usage)
        return 2
    return COMMANDS[name].cmd(args)
