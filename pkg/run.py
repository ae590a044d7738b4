import argparse
import os
import sys

from gaussflow.config import COMMANDS, load_config
from gaussflow.errors import ParseError, ValidationError
from gaussflow.experiments import EXIT_CONFIG, run_experiment
from gaussflow.util import fix_seed, create_output_dir, Logger


def main(args):
    try:
        config = load_config(args.config, args.command)
    except ParseError as e:
        print(f'Could not parse {args.config}: {e}', file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as e:
        print(f'Invalid config {args.config}:', file=sys.stderr)
        for violation in e.violations:
            print(f'  - {violation}', file=sys.stderr)
        return EXIT_CONFIG
    except OSError as e:
        print(f'Could not read {args.config}: {e}', file=sys.stderr)
        return EXIT_CONFIG

    if args.seed is not None:
        if not -1 <= args.seed < 2 ** 64:
            print(f'--seed must be -1 or an unsigned 64 bit integer, got {args.seed}', file=sys.stderr)
            return EXIT_CONFIG
        config.seed = args.seed
    if args.out is not None:
        config.output_dir = args.out
    config.seed = fix_seed(config.seed)
    output_dir = create_output_dir(os.path.join(config.output_dir, config.command), config.to_dict())

    # reroute the stdout to logfile, remember to call close!
    tmp = sys.stdout
    sys.stdout = Logger(os.path.join(output_dir, 'logfile.txt'))
    try:
        report = run_experiment(config, output_dir)
        print(f'Results can be found in {output_dir}')
    finally:
        sys.stdout.close()
        sys.stdout = tmp
    return report.exit_code


def get_args_parser(add_help=True):

    parser = argparse.ArgumentParser(description="Numerical checks for mean curvature flow and its Gauss map", add_help=add_help)

    parser.add_argument("command", type=str, choices=COMMANDS, help="experiment to run")
    parser.add_argument("--config", required=True, type=str, help="path to the JSON experiment config")

    # output
    parser.add_argument("--out", default=None, type=str, help="directory for run folders, overrides output_dir of the config")

    # randomization and hardware
    parser.add_argument("--seed", type=int, default=None, help="Seed to use, overrides the config (if -1, uses and logs random seed)")

    return parser


if __name__ == "__main__":
    args = get_args_parser().parse_args()
    sys.exit(main(args))
