"""Command-line front end.

    run <scenario> [--config FILE] [--set key=value]... [--out DIR] [--seed N]
    decode --input stream.csv [--config FILE] [--out decoded.csv]
    validate --config FILE
    serve [--host HOST] [--port PORT]

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 1 any
other failure.
"""

import argparse
import logging
import sys

from photon_jumps import artifacts
from photon_jumps.config import Scenario, parse_override, read_config_file
from photon_jumps.detection_chain import AtomStream
from photon_jumps.errors import ConfigError, InputError, NumericalError, PhotonJumpsError
from photon_jumps.jump_decoder import decode

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser():
    parser = argparse.ArgumentParser(prog="photon-jumps", description="Photon-number quantum jump simulator")
    parser.add_argument("--verbose", "-v", action="store_true", help="log at DEBUG level")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run a named scenario and write its artifacts")
    run.add_argument("scenario", choices=[s.value for s in Scenario])
    run.add_argument("--config", help="key = value configuration file")
    run.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                     help="override one configuration key (repeatable)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="base seed")

    dec = commands.add_parser("decode", help="decode a recorded atom stream offline")
    dec.add_argument("--input", required=True, help="CSV with columns time_s,true_n,detected")
    dec.add_argument("--config", help="configuration file supplying the decoder settings")
    dec.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    dec.add_argument("--out", help="decoded CSV path (default: stdout)")

    val = commands.add_parser("validate", help="check a configuration file and print it resolved")
    val.add_argument("--config", required=True)
    val.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    serve = commands.add_parser("serve", help="start the HTTP run service")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    return parser


def _overrides(args, extra=None):
    pairs = dict(parse_override(text) for text in args.overrides)
    pairs.update(extra or {})
    return pairs


# --- Commands ---

def cmd_run(args):
    from photon_jumps.scenarios import ScenarioRunner

    extra = {"scenario": args.scenario}
    if args.out:
        extra["output_dir"] = args.out
    if args.seed is not None:
        extra["base_seed"] = args.seed
    config = read_config_file(args.config, _overrides(args, extra))
    result = ScenarioRunner(config).run()
    print(f"{result.scenario.value}: {len(result.artifacts)} artifacts in {result.output_dir}")
    return EXIT_OK


def cmd_decode(args):
    config = read_config_file(args.config, _overrides(args))
    try:
        with open(args.input, encoding="utf-8", newline="") as handle:
            stream = AtomStream.read_csv(handle)
    except OSError as e:
        raise InputError(f"cannot read atom stream {args.input}: {e}") from e
    trace = decode(stream, config.decoder)
    log.info(f"Decoded {len(stream)} atoms into {len(trace.jumps)} jumps")
    if args.out:
        artifacts.write_with(args.out, trace.write_csv)
        print(f"{len(trace.jumps)} decoded jumps written to {args.out}")
    else:
        trace.write_csv(sys.stdout)
    return EXIT_OK


def cmd_validate(args):
    config = read_config_file(args.config, _overrides(args))
    sys.stdout.write(config.to_text())
    return EXIT_OK


def cmd_serve(args):
    from app import create_app
    from app.config import FLASK_DEBUG, FLASK_HOST, FLASK_PORT

    host = args.host or FLASK_HOST
    port = args.port or FLASK_PORT
    app = create_app()
    log.info(f"Starting Flask server on http://{host}:{port}")
    app.run(host=host, port=port, debug=FLASK_DEBUG, threaded=True, use_reloader=False)
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "decode": cmd_decode,
    "validate": cmd_validate,
    "serve": cmd_serve,
}


def main(argv=None):
    """Parses `argv`, runs the command and returns its exit code."""
    args = build_parser().parse_args(argv)
    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        log.error(f"Configuration error: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as e:
        log.error(f"Numerical failure: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (PhotonJumpsError, OSError) as e:
        log.error(f"{type(e).__name__}: {e}")
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO,
                        format='%(asctime)s - %(levelname)s - [%(threadName)s] - %(message)s')
    sys.exit(main())
