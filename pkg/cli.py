"""
Command line for the comparison protocol simulator.

    python cli.py run --n 8 --seed 42 --secrets-a 10110010 --secrets-b 10110010
    python cli.py attack-eval --attack tp-zmeasure --trials 1000
    python cli.py histogram --scenario reflect-reflect --swapped
    python cli.py efficiency --n 1 --format text
    python cli.py detection-curve --p 0.5 --k 1 2 4 8
    python cli.py serve

Exit codes: 0 verdict or document written, 2 detection abort, 3 insufficient
key, 64 usage or configuration error.
"""

import argparse
import json
import logging
import sys
from typing import Any, Dict, List, Optional

from config import configure_logging, get_settings, load_config_file, parse_run_config
from exceptions import ConfigError
from models import CheckKind, TpStrategy
from schema import ScenarioRequest
from utils import pipelines
from utils.adversary import ATTACK_NAMES, TP_ATTACKS
from utils.analysis import SCENARIOS
from utils.writers import FORMATS, write

logger = logging.getLogger("cli")

EXIT_USAGE = 64


class UsageError(Exception):
    pass


class CliParser(argparse.ArgumentParser):
    """argparse exits with 2 on bad usage; 2 is taken by detection aborts here"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ============================================
# PARSER
# ============================================

def _common_flags() -> argparse.ArgumentParser:
    common = CliParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its fields")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR (default from SQPC_LOG_LEVEL)")
    common.add_argument("--format", choices=FORMATS, default="json", help="output format")
    common.add_argument("--output", default="-", help="output file ('-' for stdout)")
    return common


def _run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n", type=int, help="secret length")
    parser.add_argument("--seed", type=int, help="root seed (64-bit)")
    parser.add_argument("--secrets-a", "--secret-a", dest="secret_a", help="binary, 0x-hex or 'random'")
    parser.add_argument("--secrets-b", "--secret-b", dest="secret_b", help="binary, 0x-hex or 'random'")
    parser.add_argument("--attack", choices=ATTACK_NAMES + tuple(TP_ATTACKS), help="attack strategy")
    parser.add_argument("--attack-param", action="append", default=[], metavar="KEY=VALUE",
                        help="attack parameter; VALUE is parsed as JSON when possible (repeatable)")
    parser.add_argument("--insider", choices=("alice", "bob"), help="run the attack as a dishonest user")
    parser.add_argument("--tp", choices=[s.value for s in TpStrategy], help="third-party behaviour")
    parser.add_argument("--threshold", type=float, help="abort when the violation rate exceeds this")


def build_parser() -> CliParser:
    common = _common_flags()
    parser = CliParser(prog="swapcompare", description="Semi-quantum private comparison simulator")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    run = commands.add_parser("run", parents=[common], help="one protocol run")
    _run_flags(run)
    run.add_argument("--retries", type=int, help="attempts when a key comes up short")

    attack_eval = commands.add_parser("attack-eval", parents=[common], help="Monte Carlo attack evaluation")
    _run_flags(attack_eval)
    attack_eval.add_argument("--trials", type=int, help="independent runs")
    attack_eval.add_argument("--workers", type=int, help="worker processes")

    histogram = commands.add_parser("histogram", parents=[common], help="circuit scenario histogram")
    histogram.add_argument("--scenario", required=True, help=f"one of {', '.join(SCENARIOS)}")
    histogram.add_argument("--kind", default="phi-plus", help="Bell state for the bell scenario")
    histogram.add_argument("--swapped", action="store_true", help="re-paired group")
    histogram.add_argument("--shots", type=int, help="default from SQPC_DEFAULT_SHOTS")
    histogram.add_argument("--seed", type=int, default=0)
    histogram.add_argument("--workers", type=int, default=1)

    efficiency = commands.add_parser("efficiency", parents=[common], help="qubit-efficiency table")
    efficiency.add_argument("--n", type=int, help="also evaluate every row at this n")

    curve = commands.add_parser("detection-curve", parents=[common], help="detection probability against check count")
    curve.add_argument("--p", type=float, help="per-check detection probability")
    curve.add_argument("--k", nargs="+", default=["1", "2", "4", "8"], help="check counts (space or comma separated)")
    curve.add_argument("--check-class", choices=[k.value for k in CheckKind], default=CheckKind.STEP5_BELL.value,
                       help="check class whose rate is used with --attack")
    _run_flags(curve)
    curve.add_argument("--trials", type=int)
    curve.add_argument("--workers", type=int)

    serve = commands.add_parser("serve", help="start the HTTP API")
    serve.add_argument("--host")
    serve.add_argument("--port", type=int)
    serve.add_argument("--log-level")
    return parser


# ============================================
# RUN CONFIGURATION
# ============================================

_RUN_FIELDS = ("n", "seed", "secret_a", "secret_b", "attack", "insider", "tp", "threshold", "trials",
               "retries", "workers")


def _parse_param(item: str) -> tuple:
    if "=" not in item:
        raise UsageError(f"--attack-param expects KEY=VALUE, got {item!r}")
    key, value = item.split("=", 1)
    try:
        return key.strip(), json.loads(value)
    except json.JSONDecodeError:
        return key.strip(), value


def run_config_from_args(args: argparse.Namespace):
    """Config file first, then every flag that was given"""
    data: Dict[str, Any] = load_config_file(args.config) if args.config else {}
    for name in _RUN_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    params = dict(_parse_param(item) for item in getattr(args, "attack_param", []))
    if params:
        data["attack_params"] = {**data.get("attack_params", {}), **params}
    return parse_run_config(data, source="flags")


# ============================================
# COMMANDS
# ============================================

def cmd_run(args: argparse.Namespace) -> int:
    settings = get_settings()
    document = pipelines.run_document(run_config_from_args(args), settings.default_threshold)
    write(document, args.format, args.output)
    return pipelines.exit_code(document)


def cmd_attack_eval(args: argparse.Namespace) -> int:
    settings = get_settings()
    run = run_config_from_args(args)
    document = pipelines.attack_eval_document(run, settings.default_threshold, settings.default_trials,
                                              settings.workers)
    write(document, args.format, args.output)
    return 0


def cmd_histogram(args: argparse.Namespace) -> int:
    settings = get_settings()
    request = ScenarioRequest(scenario=args.scenario, kind=args.kind, swapped=args.swapped,
                              shots=args.shots, seed=args.seed)
    document = pipelines.histogram_document(request, settings.default_shots, workers=args.workers)
    write(document, args.format, args.output)
    return 0


def cmd_efficiency(args: argparse.Namespace) -> int:
    if args.n is not None and args.n < 1:
        raise UsageError("--n must be at least 1")
    write(pipelines.efficiency_document(args.n), args.format, args.output)
    return 0


def cmd_detection_curve(args: argparse.Namespace) -> int:
    settings = get_settings()
    ks = pipelines.parse_ks(args.k)
    if not ks or any(k < 1 for k in ks):
        raise UsageError("--k values must be positive integers")
    if args.p is not None:
        if not 0.0 <= args.p <= 1.0:
            raise UsageError("--p must lie in [0, 1]")
        document = pipelines.curve_document(args.p, ks)
    else:
        run = run_config_from_args(args)
        if run.attack == "none" and run.tp is TpStrategy.HONEST:
            raise UsageError("detection-curve needs --p or an attack")
        document = pipelines.attack_curve_document(run, args.check_class, ks, settings.default_threshold,
                                                   settings.default_trials, settings.workers)
    write(document, args.format, args.output)
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        "main:app",
        host=args.host or settings.host,
        port=args.port or settings.port,
        log_level=(args.log_level or settings.log_level).lower(),
    )
    return 0


COMMANDS = {
    "run": cmd_run,
    "attack-eval": cmd_attack_eval,
    "histogram": cmd_histogram,
    "efficiency": cmd_efficiency,
    "detection-curve": cmd_detection_curve,
    "serve": cmd_serve,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError, ValueError) as exc:
        print(f"swapcompare {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
