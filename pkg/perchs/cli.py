"""
perchs command line.

Usage::

    perchs [OPTIONS] KIND
    perchs summarize FILE...

Exit status: 0 on success, 2 for configuration errors, 3 for run time
failures (solver, geometry, probe, capacity, queue).
"""

import logging
import os
import sys

from optparse import OptionParser

import perchs
from perchs.Exceptions import ConfigError, PerchsError
from perchs.config import EXPERIMENT_KINDS, load_config
from perchs.harness import run, summarize

LOG = logging.getLogger('perchs')

EXIT_CONFIG = 2
EXIT_FAILURE = 3


def _append(option, opt_str, value, parser):
    getattr(parser.values, option.dest).append(value)


def _parser():
    parser = OptionParser(usage="%prog [OPTIONS] KIND\n"
                          "       %prog summarize FILE...",
                          version="%%prog %s" % perchs.VERSION)
    parser.add_option("-l", "--list", dest="list", action="store_true",
                      default=False, help="list experiment kinds")
    parser.add_option("-d", "--debug", dest="debug", action="store_true",
                      default=False, help="show debugging information")
    parser.add_option("-v", "--verbose", dest="verbose", action="store_true",
                      default=False, help="show progress information")
    parser.add_option("-c", "--config", dest="config", type="string",
                      default=None, help="JSON configuration file")
    parser.add_option("--set", dest="overrides", type="string",
                      action="callback", callback=_append, default=[],
                      metavar="KEY=VALUE",
                      help="override a configuration value (dotted key, "
                      "JSON value); may be repeated")
    parser.add_option("-o", "--out", dest="output_dir", type="string",
                      default=None, help="output directory")
    parser.add_option("--snapshot-every", dest="snapshot_every", type="int",
                      default=None, help="write a wet set snapshot every N "
                      "steps (0 disables)")
    parser.add_option("-j", "--jobs", dest="jobs", type="int",
                      default=None, help="number of worker processes "
                      "(default: $PERCHS_JOBS or 1)")
    return parser


def _setup_logging(debug, verbose):
    if not LOG.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter(
            "%(levelname)s:%(name)s: %(message)s"))
        LOG.addHandler(handler)
    if debug:
        LOG.setLevel(logging.DEBUG)
    elif verbose:
        LOG.setLevel(logging.INFO)
    else:
        LOG.setLevel(logging.WARNING)


def _die(code, fmt, *arguments):
    """Report a fatal error."""
    sys.stderr.write("perchs: " + fmt % arguments + "\n")
    sys.stderr.flush()
    return code


def _jobs_default():
    text = os.environ.get('PERCHS_JOBS')
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError("PERCHS_JOBS must be an integer, got %r" % text)


def main(argv=None):
    """Entry point of the ``perchs`` command; return the exit status."""
    parser = _parser()
    opts, args = parser.parse_args(argv)
    if opts.list:
        print("Kinds: %s" % ', '.join(EXPERIMENT_KINDS))
        return 0
    if not args:
        parser.print_help()
        return EXIT_CONFIG
    _setup_logging(opts.debug, opts.verbose)
    if args[0] == 'summarize':
        if len(args) < 2:
            return _die(EXIT_CONFIG, "summarize needs at least one file")
        try:
            summarize(args[1:])
        except (PerchsError, OSError) as error:
            return _die(EXIT_FAILURE, "%s", error)
        return 0
    if len(args) != 1:
        return _die(EXIT_CONFIG, "expected a single experiment kind, got %s",
                    ' '.join(args))
    if args[0] not in EXPERIMENT_KINDS:
        return _die(EXIT_CONFIG, "unsupported kind '%s', KIND should be one "
                    "of: %s", args[0], ', '.join(EXPERIMENT_KINDS))
    try:
        jobs = opts.jobs if opts.jobs is not None else _jobs_default()
        config = load_config(opts.config, opts.overrides, kind=args[0],
                             output_dir=opts.output_dir,
                             snapshot_every=opts.snapshot_every, jobs=jobs)
    except ConfigError as error:
        return _die(EXIT_CONFIG, "%s", error)
    try:
        path = run(config)
    except ConfigError as error:
        return _die(EXIT_CONFIG, "%s", error)
    except PerchsError as error:
        return _die(EXIT_FAILURE, "%s", error)
    LOG.info("metrics written to %s", path)
    return 0


if __name__ == '__main__':
    sys.exit(main())
