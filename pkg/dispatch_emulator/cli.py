# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.

import argparse
import logging
import sys

from dispatch_emulator import ingest, runner, synthetic
from dispatch_emulator.errors import DispatchEmulatorError, UsageError


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(UsageError.exit_code, f"{self.prog}: error: {message}\n")


def cli(fn):
    parser = fn(description="Food delivery dispatch emulator")
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
    )
    sub = parser.add_subparsers(dest="cmd", help="Command to execute", required=True)

    runner.cli_run(lambda *args, **kw: sub.add_parser("run", *args, **kw))
    runner.cli_sweep(lambda *args, **kw: sub.add_parser("sweep", *args, **kw))
    synthetic.cli(lambda *args, **kw: sub.add_parser("gen-synthetic", *args, **kw))
    runner.cli_validate(lambda *args, **kw: sub.add_parser("validate", *args, **kw))
    ingest.cli(lambda *args, **kw: sub.add_parser("geo-to-cell", *args, **kw))

    return parser


def main(argv=None):
    parser = cli(ArgumentParser)
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        status = args.func(args)
    except DispatchEmulatorError as error:
        print(f"error: {error}", file=sys.stderr)
        return error.exit_code
    return status or 0


if __name__ == "__main__":
    sys.exit(main())
