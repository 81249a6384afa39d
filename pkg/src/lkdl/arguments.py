import argparse

from . import __VERSION__
from .pipeline import SWEEP_AXES
from .sampling import SAMPLING_METHODS

# Default values for options
THREADS = None
SEEDS = 10
FRACTIONS = [0.05, 0.1, 0.2, 0.4]

args = argparse.Namespace()

def _add_common( parser ):
    add = parser.add_argument
    add("--config",
        metavar="JSON",
        required=True,
        help="Experiment configuration file")
    add("--seed",
        metavar="INT",
        type=int,
        help="Master seed, overrides the config")
    add("--kernel",
        metavar="KERNEL",
        help="Kernel description, overrides the config: linear, poly:<degree>[:<offset>] or gaussian:<sigma>")
    add("--out",
        metavar="DIR",
        help="Destination folder for artifacts and results, overrides the config")
    add("--threads",
        metavar="INT",
        type=int,
        default=THREADS,
        help="Number of processes for independent repeats ({0})".format(THREADS))
    add("--set",
        metavar="KEY=VALUE",
        dest="overrides",
        action="append",
        default=[],
        help="Override a config field, e.g. --set sampler.c_over_n=0.1")
    add("--debug",
        action="store_true",
        help="Log at DEBUG level")

def build_parser():
    desc = "Linearized kernel dictionary learning: Nystrom virtual samples and sparse-coding classifiers"
    parser = argparse.ArgumentParser( prog="lkdl", description=desc )

    class PrintVersionAction(argparse.Action):
        def __call__(self, parser, namespace, values, option_string=None):
            print("\tLKDL version: %s" % __VERSION__)
            raise SystemExit

    parser.add_argument("--version",
                        nargs=0,
                        action=PrintVersionAction)

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    _add_common(commands.add_parser('preprocess',
                                    help='Fit the Nystrom map and write the virtual train/test samples'))
    _add_common(commands.add_parser('train',
                                    help='Train the configured classifier and save it'))
    _add_common(commands.add_parser('classify',
                                    help='Classify the test set with a previously trained model'))
    _add_common(commands.add_parser('experiment',
                                    help='Run the full pipeline for every repeat'))
    _add_common(commands.add_parser('lcksvd',
                                    help='Run an LC-KSVD experiment and write the atom usage per class'))

    sweep = commands.add_parser('sweep', help='Repeat the experiment along one parameter axis')
    _add_common(sweep)
    sweep.add_argument("--axis",
                       required=True,
                       choices=SWEEP_AXES,
                       help="Parameter to sweep")
    sweep.add_argument("--values",
                       required=True,
                       nargs='+',
                       type=float,
                       metavar="FLOAT",
                       help="Values of the swept parameter")

    approx = commands.add_parser('approx-error', help='Benchmark the Nystrom approximation error')
    _add_common(approx)
    approx.add_argument("--samplers",
                        nargs='+',
                        choices=SAMPLING_METHODS,
                        default=list(SAMPLING_METHODS),
                        help="Landmark samplers to compare (all)")
    approx.add_argument("--fractions",
                        nargs='+',
                        type=float,
                        metavar="FLOAT",
                        default=FRACTIONS,
                        help="Values of c/N ({0})".format(FRACTIONS))
    approx.add_argument("--seeds",
                        type=int,
                        metavar="INT",
                        default=SEEDS,
                        help="Number of seeds per sampler and c/N ({0})".format(SEEDS))
    approx.add_argument("--rank",
                        type=int,
                        metavar="INT",
                        help="Nystrom rank k, c when omitted")
    return parser

def parse_args( argv=None ):
    """
    Parse the command line into the module-level args namespace
    """
    parsed = build_parser().parse_args( argv )
    args.__dict__.clear()
    args.__dict__.update( vars(parsed) )
    return args
