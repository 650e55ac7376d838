import argparse
import logging
import sys
from typing import Any, Optional, Sequence

from dotenv import dotenv_values
from pydantic import ValidationError

from app.core.config import get_settings
from app.core.exceptions import ConfigurationException, QillumException, VerificationFailedException
from app.schemas.experiment import ExperimentConfig
from app.services.experiments import EXPERIMENT_DEFAULTS, run_experiment, write_result

logger = logging.getLogger("app")

DERIVATIVE_CHOICES = {"first-order": "first_order_commutator", "finite-diff": "finite_difference"}

# flag dest -> ExperimentConfig field
FLAG_FIELDS = {
    "nb_min": "nb_min",
    "nb_max": "nb_max",
    "steps": "steps",
    "n_b": "n_b",
    "eta": "eta",
    "energy": "energy",
    "signal_only": "signal_only",
    "n": "n",
    "state": "state",
    "cutoff_thermal": "cutoff_thermal",
    "cutoff_signal": "cutoff_signal",
    "derivative": "derivative",
    "jobs": "jobs",
    "seed": "seed",
    "out": "out",
    "json": "json_mirror",
    "combiner_phase": "combiner_phase",
    "combiner_phases": "combiner_phases",
    "coeff_objective": "coeff_objective",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qillum", description="Quantum illumination reflectivity sensing in truncated Fock space"
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name, help_text in (
        ("fig3b", "optimized N-photon vs TMSV vs coherent-pair channel QFI over n_b"),
        ("fig4", "receiver sensitivity, SNR and effective SNR over n_b"),
        ("verify", "run the verification checks"),
        ("optimize-state", "optimal N-photon coefficients over n_b"),
        ("qfi-point", "channel QFI of one family at one n_b"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="dotenv-style file of KEY=value run settings")
        p.add_argument("--nb-min", type=float, dest="nb_min")
        p.add_argument("--nb-max", type=float, dest="nb_max")
        p.add_argument("--steps", type=int)
        p.add_argument("--nb", type=float, dest="n_b", help="background level for qfi-point")
        p.add_argument("--eta", type=float)
        p.add_argument("--energy", type=float)
        p.add_argument("--signal-only", action=argparse.BooleanOptionalAction, default=None, dest="signal_only")
        p.add_argument("--n", type=int, help="photon number of the entangled state")
        p.add_argument("--state", choices=["nphoton", "tmsv", "coherent-pair"])
        p.add_argument("--cutoff-thermal", type=int, dest="cutoff_thermal")
        p.add_argument("--cutoff-signal", type=int, dest="cutoff_signal")
        p.add_argument("--derivative", choices=sorted(DERIVATIVE_CHOICES))
        p.add_argument("--coeff-objective", choices=["qfi_eq5", "receiver_snr"], dest="coeff_objective")
        p.add_argument("--combiner-phase", type=float, dest="combiner_phase")
        p.add_argument(
            "--combiner-phases", type=float, nargs="+", dest="combiner_phases", help="fig4 rows for each phase"
        )
        p.add_argument(
            "--combiner-sweep",
            action="store_const",
            const="sweep",
            dest="combiner_phases",
            help="fig4 rows for combiner phases 0 and pi/2",
        )
        p.add_argument("--jobs", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="CSV path (stdout when omitted)")
        p.add_argument("--json", action="store_true", default=None, help="also write <out>.json")
        p.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING or ERROR")
    return parser


def _normalize_key(key: str) -> str:
    key = key.strip().lower().replace("-", "_")
    return key[len("qillum_"):] if key.startswith("qillum_") else key


def load_config_file(path: str) -> dict[str, Any]:
    """Read a KEY=value file; keys are config field or flag names, case-insensitive"""
    values = dotenv_values(path)
    if not values:
        raise ConfigurationException(f"config file '{path}' is missing or empty")
    resolved: dict[str, Any] = {}
    for key, value in values.items():
        name = _normalize_key(key)
        field = FLAG_FIELDS.get(name, name)
        if field not in ExperimentConfig.model_fields or field == "experiment":
            raise ConfigurationException(f"unknown config key '{key}' in {path}")
        if value is None or value == "":
            continue
        resolved[field] = value
    return resolved


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Built-in defaults, then the per-experiment defaults, then the file, then flags"""
    values: dict[str, Any] = dict(EXPERIMENT_DEFAULTS.get(args.experiment, {}))
    values["jobs"] = get_settings().jobs
    if args.config:
        values.update(load_config_file(args.config))
    for dest, field in FLAG_FIELDS.items():
        value = getattr(args, dest, None)
        if value is not None:
            values[field] = value
    if "derivative" in values:
        values["derivative"] = DERIVATIVE_CHOICES.get(values["derivative"], values["derivative"])
    try:
        return ExperimentConfig(experiment=args.experiment, **values)
    except ValidationError as e:
        raise ConfigurationException(f"invalid configuration: {e}") from e


def configure_logging(level: Optional[str]) -> None:
    level = (level or get_settings().log_level).upper()
    if level not in ("DEBUG", "INFO", "WARNING", "ERROR"):
        raise ConfigurationException(f"unknown log level '{level}'")
    logging.basicConfig(
        level=getattr(logging, level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        configure_logging(args.log_level)
        config = resolve_config(args)
        result = run_experiment(config)
        write_result(result, config.out, config.json_mirror)
        if result.failed_checks:
            names = ", ".join(c.name for c in result.failed_checks)
            raise VerificationFailedException(f"failed checks: {names}")
    except QillumException as e:
        logger.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
