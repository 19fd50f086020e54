import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import ValidationError

from adversary import estimate_leakage_parallel
from codebook import load_channel_spec_file, validate_codebook
from config import SystemConfig, setup_logging
from exceptions import ParseError, QuantumCommError, UsageError, ValidationFailed
from export_manager import (
    ReportExporter,
    render_comparison,
    render_efficiency,
    render_leakage,
    render_session,
    render_validation,
)
from metrics import TSAI_NOTE, account, comparison_table
from models import BITS_PER_UNIT, CliConfig, EveKind, EveModel, OrderCost, OutputFormat, Protocol, SessionConfig
from protocols import run_session
from quantum_core import INPUT_TOL

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2

# Units per leakage trial when reordering is on, so permutation fixed points stay rare
REORDERED_LEAKAGE_UNITS = 64

HEX_DIGITS = set("0123456789abcdefABCDEF")


def parse_message(text: str, capacity: int) -> str:
    """Bit string, or hex (optional 0x prefix) widened to `capacity` bits.

    Strings made of 0 and 1 only are always read as bits.
    """
    if text and set(text) <= {"0", "1"}:
        return text
    digits = text[2:] if text.lower().startswith("0x") else text
    if not digits or set(digits) - HEX_DIGITS:
        raise UsageError(f"message '{text}' is neither a bit string nor hex")
    bits = "".join(f"{int(d, 16):04b}" for d in digits)
    if len(bits) > capacity and set(bits[:len(bits) - capacity]) == {"0"}:
        bits = bits[len(bits) - capacity:]
    return bits


DECOY_POLICY_NAMES = ("paper", "default")


def _decoys(text: str) -> Optional[int]:
    """One decoy per travel qubit for the named policy, else an explicit count"""
    if text in DECOY_POLICY_NAMES:
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected paper (alias default) or a count, got '{text}'") from None
    if value < 0:
        raise argparse.ArgumentTypeError("decoy count must be >= 0")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="qsdc-sim", description="GHZ-like-state DSQC / QSDC simulator")
    commands = parser.add_subparsers(dest="subcommand", required=True)

    protocols = ["dsqc1", "dsqc2", "qsdc", "qkd"]
    formats = [f.value for f in OutputFormat]

    def common(sub, protocol_required=True):
        sub.add_argument("--format", choices=formats, default=OutputFormat.TEXT.value)
        if protocol_required:
            sub.add_argument("--protocol", choices=protocols, required=True)

    def channel_flags(sub, eve_default):
        sub.add_argument("--seed", type=int, default=0)
        sub.add_argument("--threshold", type=float, default=0.0)
        sub.add_argument("--eve", choices=[k.value for k in EveKind], default=eve_default)
        sub.add_argument("--reorder", choices=["on", "off"], default=None)
        sub.add_argument("--decoys", type=_decoys, default=None)

    simulate = commands.add_parser("simulate", help="run one protocol session")
    common(simulate)
    simulate.add_argument("--n", type=int, required=True)
    simulate.add_argument("--message")
    simulate.add_argument("--transcript", action="store_true", help="print the session transcript")
    channel_flags(simulate, EveKind.NONE.value)

    leakage = commands.add_parser("leakage", help="leak-before-detection Monte Carlo")
    common(leakage)
    leakage.add_argument("--n", type=int, default=None, help="units per trial")
    leakage.add_argument("--trials", type=int, default=1000)
    channel_flags(leakage, EveKind.INTERCEPT_RESEND_FAKE.value)

    for name, needs_protocol in (("efficiency", True), ("compare", False)):
        sub = commands.add_parser(name, help=f"qubit-efficiency {name}")
        common(sub, needs_protocol)
        sub.add_argument("--n", type=int, default=1)
        sub.add_argument("--order-cost", choices=[c.value for c in OrderCost], default=OrderCost.PER_TRAVEL_QUBIT.value)

    validate = commands.add_parser("validate-channel", help="check a channel-spec file")
    common(validate, protocol_required=False)
    validate.add_argument("path")
    return parser


def parse_cli(argv: Optional[List[str]] = None) -> CliConfig:
    args = build_parser().parse_args(argv)
    fields = {"subcommand": args.subcommand, "output_format": args.format}
    if getattr(args, "protocol", None):
        fields["protocol"] = args.protocol.upper()
    for name in ("n", "message", "seed", "threshold", "eve", "trials", "decoys"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    if getattr(args, "reorder", None) is not None:
        fields["reorder"] = args.reorder == "on"
    if getattr(args, "order_cost", None):
        fields["order_cost"] = args.order_cost
    if getattr(args, "path", None):
        fields["channel_spec_path"] = args.path
    fields["transcript"] = getattr(args, "transcript", False)
    return CliConfig(**fields)


class SimulatorOrchestrator:
    """Runs one CLI subcommand and returns (exit status, stdout text)"""

    def __init__(self, config: SystemConfig):
        self.config = config
        self.exporter = ReportExporter(config)
        self.logger = logging.getLogger(__name__)

    def run(self, cli: CliConfig) -> Tuple[int, str]:
        handlers = {
            "simulate": self.cmd_simulate,
            "leakage": self.cmd_leakage,
            "efficiency": self.cmd_efficiency,
            "compare": self.cmd_compare,
            "validate-channel": self.cmd_validate_channel,
        }
        return handlers[cli.subcommand](cli)

    def cmd_simulate(self, cli: CliConfig) -> Tuple[int, str]:
        if cli.protocol != Protocol.QKD and cli.message is None:
            raise UsageError(f"simulate --protocol {cli.protocol.value.lower()} needs --message")

        message = None
        if cli.protocol != Protocol.QKD:
            message = parse_message(cli.message, BITS_PER_UNIT[cli.protocol] * cli.n)

        session = SessionConfig(
            protocol=cli.protocol, n=cli.n, message=message, seed=cli.seed,
            error_threshold=cli.threshold, reorder_enabled=cli.reorder, decoy_count=cli.decoys,
        )
        result = run_session(session, EveModel(kind=cli.eve))
        status = EXIT_ABORT if result.aborted else EXIT_OK
        return status, render_session(result, cli.output_format, cli.transcript)

    def cmd_leakage(self, cli: CliConfig) -> Tuple[int, str]:
        reorder = bool(cli.reorder)
        units = cli.n or (REORDERED_LEAKAGE_UNITS if reorder else 1)
        report = asyncio.run(estimate_leakage_parallel(
            cli.protocol, EveModel(kind=cli.eve), cli.trials, cli.seed,
            workers=self.config.MAX_CONCURRENT_WORKERS,
            batch_size=self.config.LEAKAGE_BATCH_SIZE,
            units_per_trial=units, reorder=reorder, decoys=cli.decoys, threshold=cli.threshold,
        ))
        self.exporter.export(f"leakage_{cli.protocol.value.lower()}", [report])
        return EXIT_OK, render_leakage(report, cli.output_format)

    def cmd_efficiency(self, cli: CliConfig) -> Tuple[int, str]:
        report = account(cli.protocol, cli.n or 1, cli.order_cost)
        self.exporter.export(f"efficiency_{cli.protocol.value.lower()}", [report])
        return EXIT_OK, render_efficiency(report, cli.output_format)

    def cmd_compare(self, cli: CliConfig) -> Tuple[int, str]:
        rows = comparison_table(cli.n or 1, cli.order_cost)
        self.exporter.export("comparison", rows, notes={"Tsai et al.": TSAI_NOTE})
        return EXIT_OK, render_comparison(rows, cli.output_format, TSAI_NOTE)

    def cmd_validate_channel(self, cli: CliConfig) -> Tuple[int, str]:
        path = self._resolve_spec_path(cli.channel_spec_path)
        try:
            cb = load_channel_spec_file(path)
        except ValidationFailed as e:
            if e.report is None:
                raise
            self.logger.warning(f"❌ {path}: {e}")
            return EXIT_USAGE, render_validation(e.report, cli.output_format)

        report = validate_codebook(cb, INPUT_TOL)
        self.logger.info(f"✅ {path}: valid channel '{cb.name}'")
        return (EXIT_OK if report.valid else EXIT_USAGE), render_validation(report, cli.output_format)

    def _resolve_spec_path(self, raw: Optional[str]) -> Path:
        if not raw:
            raise UsageError("validate-channel needs a spec path")
        path = Path(raw)
        bundled = Path(self.config.CHANNEL_SPEC_DIR) / raw
        if not path.exists() and not path.is_absolute() and bundled.exists():
            return bundled
        return path


def main(argv: Optional[List[str]] = None) -> int:
    config = SystemConfig()
    setup_logging(config)
    config.validate()
    logger = logging.getLogger(__name__)

    try:
        cli = parse_cli(argv)
        status, output = SimulatorOrchestrator(config).run(cli)
    except ParseError as e:
        sys.stderr.write(f"parse error: {e}\n")
        return EXIT_USAGE
    except (UsageError, ValidationError) as e:
        sys.stderr.write(f"usage error: {e}\n")
        return EXIT_USAGE
    except (QuantumCommError, ValueError) as e:
        logger.error(f"❌ {e}")
        sys.stderr.write(f"error: {e}\n")
        return EXIT_USAGE

    sys.stdout.write(output)
    return status


if __name__ == "__main__":
    sys.exit(main())
