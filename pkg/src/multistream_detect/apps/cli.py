#!/usr/bin/env python3
"""
multistream-detect command line.

Subcommands:
  simulate      trial battery for a JSON configuration
  characterize  operating-characteristics row for an epidemic table setting
  detect        offline detection over a regional hospitalization CSV
  kl            information numbers on every grid point
  thresholds    threshold matrix, error bounds and delay bounds

Exit codes: 0 on a decision or a clean no-decision run, 2 on input errors,
3 on numerical errors.
"""

import argparse
import json
import logging
import sys
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from ..config import (
    LOG_LEVEL_ENV,
    LOG_LEVELS,
    DetectorConfig,
    build_setup,
    default_log_level,
    default_output_dir,
)
from ..errors import ConfigurationError, NumericalError
from ..montecarlo import (
    TableConfig,
    TrialPlan,
    estimate_add,
    estimate_bayes_pfa,
    estimate_pfa,
    estimate_pmi,
    kl_table_monte_carlo,
    operating_characteristics,
    records_frame,
    run_trials,
    write_characteristics,
)
from ..thresholds import bound_report, kl_table_closed_form, pfa_bound, pmi_bound
from .ingest import ingest_csv, load_capacity_map
from .report import REPORT_FORMATS, emit_report
from .surveillance import SurveillanceOptions, detect_offline

logger = logging.getLogger("multistream-detect")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERICAL = 3

__all__: List[str] = ["DetectionCLI", "build_parser", "main"]


def _validated(label: str, model_cls, **data: Any):
    try:
        return model_cls(**data)
    except ValidationError as e:
        problems = [f"{'.'.join(map(str, err['loc'])) or label}: {err['msg']}" for err in e.errors()]
        raise ConfigurationError(f"invalid {label}", problems) from e


def _read_json(path: Path, label: str) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"cannot read {label} {path}: {e}") from e


class DetectionCLI:
    """Command handlers; each writes its artifacts under ``output_dir``."""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir) if output_dir else default_output_dir()

    def _out(self, name: str) -> Path:
        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigurationError(f"cannot create output directory {self.output_dir}: {e}") from e
        return self.output_dir / name

    def _config(self, args: argparse.Namespace) -> DetectorConfig:
        config = DetectorConfig.load(args.config)
        return config.with_overrides(
            rho=getattr(args, "rho", None),
            auto_rho=getattr(args, "auto_rho", None) or None,
            window=getattr(args, "window", None),
            k_check=getattr(args, "k_check", None),
        )

    def cmd_simulate(self, args: argparse.Namespace) -> int:
        """Run a trial battery and print the operating characteristics."""
        setup = build_setup(self._config(args))
        no_change = args.nu is None and not args.random_change
        k_star = setup.hyperparams.k_star if no_change and setup.hyperparams else None
        plan = _validated(
            "trial plan",
            TrialPlan,
            trials=args.trials,
            horizon=args.horizon,
            nu=args.nu,
            stream=args.stream,
            theta=args.theta,
            seed=args.seed,
            parallel=args.parallel,
            workers=args.workers,
            random_change=args.random_change,
            k_star=k_star,
        )
        records = run_trials(plan, setup)
        path = self._out("trials.csv")
        records_frame(records).to_csv(path, index=False)

        summary: Dict[str, Any] = {"trials": plan.trials, "censored": sum(r.censored for r in records)}
        if plan.has_change:
            delay = estimate_add(records, nu=plan.nu, stream=plan.stream)
            summary["R_hat"] = delay.value
            summary["R_hat_se"] = delay.stderr
            if setup.hyperparams is not None and plan.nu is not None:
                for j in range(1, setup.n_streams + 1):
                    if j != plan.stream:
                        summary[f"P_check_{j}"] = estimate_pmi(records, setup.hyperparams, j, plan.nu).value
        else:
            for i in range(1, setup.n_streams + 1):
                summary[f"bayes_PFA_{i}"] = estimate_bayes_pfa(records, setup.prior.rho, i).value
                if setup.hyperparams is not None:
                    summary[f"P_hat_{i}"] = estimate_pfa(records, setup.hyperparams, i).value

        print("✅ Simulation finished")
        for key, value in summary.items():
            print(f"  • {key}: {value:.6g}" if isinstance(value, float) else f"  • {key}: {value}")
        print(f"  • records: {path}")
        return EXIT_OK

    def cmd_characterize(self, args: argparse.Namespace) -> int:
        """One epidemic table row."""
        table = _validated(
            "table setting",
            TableConfig,
            epsilon=args.epsilon,
            k_check=args.k_check,
            q=args.q,
            p_star_offset=args.p_star_offset,
            n_streams=args.n_streams,
            scale_base=args.scale_base,
            grid_multipliers=args.multipliers,
        )
        row = operating_characteristics(
            table,
            trials=args.trials,
            seed=args.seed,
            parallel=args.parallel,
            kl_steps=args.kl_steps,
        )
        path = write_characteristics([row], self._out(f"characteristics.{args.format}"), args.format)
        print("📊 Operating characteristics")
        for key, value in row.to_row().items():
            print(f"  • {key}: {value:.6g}")
        print(f"  • written to {path}")
        return EXIT_OK

    def cmd_detect(self, args: argparse.Namespace) -> int:
        """Offline detection over a hospitalization CSV."""
        options: Dict[str, Any] = {}
        if args.options is not None:
            loaded = _read_json(args.options, "options")
            if not isinstance(loaded, dict):
                raise ConfigurationError(f"options file {args.options} must hold a JSON object")
            options.update(loaded)
        if args.p_star is not None:
            options["p_star"] = _read_json(args.p_star, "p* map")
        flags = {
            "epsilon": args.epsilon,
            "k_check": args.k_check,
            "calibration_window": args.calibration_window,
            "window": args.window,
            "reference_date": args.reference_date,
            "multipliers": args.multipliers,
        }
        options.update({k: v for k, v in flags.items() if v is not None})
        opts = _validated("detection options", SurveillanceOptions, **options)

        series = ingest_csv(args.data, load_capacity_map(args.capacities))
        result = detect_offline(series, opts)
        written = emit_report(result, self.output_dir, args.formats)

        if result.outcome.stopped:
            print(f"🚨 Alarm on {result.detection_date} in {result.detected_region} (T={result.outcome.time})")
        else:
            print(f"✅ No alarm over {result.outcome.time} days")
        for fmt, path in written.items():
            print(f"  • {fmt}: {path}")
        return EXIT_OK

    def cmd_kl(self, args: argparse.Namespace) -> int:
        """Information numbers per stream and grid point."""
        setup = build_setup(self._config(args))
        if args.method == "closed-form":
            table = kl_table_closed_form(setup.models, setup.grids)
        else:
            table = kl_table_monte_carlo(
                setup.models,
                setup.grids,
                args.steps,
                seed=args.seed,
                burn_in=args.burn_in,
                initial_states=setup.initial_states,
            )
        frame = table.to_frame()
        path = self._out("kl.csv")
        frame.to_csv(path, index=False, float_format="%.17g")
        print(frame.to_string(index=False))
        print(f"  • written to {path}")
        return EXIT_OK

    def cmd_thresholds(self, args: argparse.Namespace) -> int:
        """Threshold matrix with its false-alarm and misidentification bounds."""
        setup = build_setup(self._config(args))
        thresholds = setup.thresholds
        with np.printoptions(precision=6, suppress=False):
            print(f"🎯 Thresholds ({thresholds.provenance}, rho={thresholds.rho:.6g})")
            print(thresholds.array)
            print("Weighted false-alarm bounds 1/(1 + A_ii):")
            print(pfa_bound(thresholds))
            print("Misidentification bounds 1/A_ji:")
            print(pmi_bound(thresholds))
        if setup.hyperparams is not None:
            hp = setup.hyperparams
            print(f"rho_beta={hp.rho_beta:.6g} m*={hp.m_star} k*={hp.k_star} rho_opt={hp.rho_opt:.6g}")

        record: Dict[str, Any] = {
            "provenance": thresholds.provenance,
            "rho": thresholds.rho,
            "thresholds": thresholds.entries,
            "hyperparams": setup.hyperparams.model_dump() if setup.hyperparams else None,
        }
        json_path = self._out("thresholds.json")
        json_path.write_text(json.dumps(record, indent=2), encoding="utf-8")

        if args.bounds:
            if setup.beta is None:
                raise ConfigurationError("delay bounds need a beta_matrix configuration")
            if args.method == "closed-form":
                kl = kl_table_closed_form(setup.models, setup.grids)
            else:
                kl = kl_table_monte_carlo(
                    setup.models, setup.grids, args.steps, seed=args.seed, burn_in=args.burn_in,
                    initial_states=setup.initial_states,
                )
            report = bound_report(setup.beta, thresholds, kl, setup.r)
            report.export_csv(self._out("bounds.csv"))
            print(report.to_frame().to_string(index=False))
        print(f"  • written to {json_path}")
        return EXIT_OK


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, required=True, help="JSON run configuration")
    parser.add_argument("--rho", type=float, help="Override the prior parameter")
    parser.add_argument("--auto-rho", action="store_true", help="Use the optimal prior parameter")
    parser.add_argument("--window", type=int, help="Retain only the trailing change points")
    parser.add_argument("--k-check", type=float, help="Override k_check")


def _add_kl_flags(parser: argparse.ArgumentParser, default: str) -> None:
    parser.add_argument("--method", choices=["closed-form", "mc"], default=default)
    parser.add_argument("--steps", type=int, default=100_000, help="Monte Carlo path length")
    parser.add_argument("--burn-in", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multistream-detect",
        description="Multistream change detection and identification",
    )
    parser.add_argument("--output-dir", type=Path, help="Directory for written artifacts")
    parser.add_argument(
        "--log-level",
        type=str.upper,
        choices=LOG_LEVELS,
        default=None,
        help="Logging level (default from environment)",
    )

    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    simulate = subparsers.add_parser("simulate", help="Run a trial battery")
    _add_config_flags(simulate)
    simulate.add_argument("--trials", type=int, default=1000)
    simulate.add_argument("--horizon", type=int, default=1000)
    simulate.add_argument("--nu", type=int, help="Change point (omit for no change)")
    simulate.add_argument("--stream", type=int, default=1, help="Affected stream (1-based)")
    simulate.add_argument("--theta", type=float, nargs="+", help="Post-change parameter")
    simulate.add_argument("--random-change", action="store_true", help="Draw nu from the prior")
    simulate.add_argument("--seed", type=int, default=0)
    simulate.add_argument("--parallel", action="store_true")
    simulate.add_argument("--workers", type=int)

    characterize = subparsers.add_parser("characterize", help="Epidemic operating characteristics")
    characterize.add_argument("--epsilon", type=float, default=0.3)
    characterize.add_argument("--k-check", type=float, default=2.0)
    characterize.add_argument("--q", type=float, default=1.2)
    characterize.add_argument("--p-star-offset", type=int, default=100)
    characterize.add_argument("--n-streams", type=int, default=5)
    characterize.add_argument("--scale-base", type=float, default=0.5e4)
    characterize.add_argument("--multipliers", type=float, nargs="+")
    characterize.add_argument("--trials", type=int, default=10_000)
    characterize.add_argument(
        "--kl-steps", type=int, help="Information path length (default: decay horizon per path)"
    )
    characterize.add_argument("--seed", type=int, default=0)
    characterize.add_argument("--parallel", action="store_true")
    characterize.add_argument("--format", choices=["csv", "json"], default="csv")

    detect = subparsers.add_parser("detect", help="Offline detection over a CSV")
    detect.add_argument("--data", type=Path, required=True, help="CSV date,region,hospitalized")
    detect.add_argument("--capacities", type=Path, required=True, help="JSON region -> capacity")
    detect.add_argument("--options", type=Path, help="JSON detection options")
    detect.add_argument("--p-star", type=Path, help="JSON region -> pre-change rate")
    detect.add_argument("--epsilon", type=float)
    detect.add_argument("--k-check", type=float)
    detect.add_argument("--multipliers", type=float, nargs="+")
    detect.add_argument("--calibration-window", type=int)
    detect.add_argument("--window", type=int)
    detect.add_argument("--reference-date", type=date.fromisoformat)
    detect.add_argument("--formats", nargs="+", choices=REPORT_FORMATS, default=list(REPORT_FORMATS))

    kl = subparsers.add_parser("kl", help="Information numbers on the grids")
    _add_config_flags(kl)
    _add_kl_flags(kl, default="mc")

    thresholds = subparsers.add_parser("thresholds", help="Print thresholds and bounds")
    _add_config_flags(thresholds)
    thresholds.add_argument("--bounds", action="store_true", help="Also write delay bounds")
    _add_kl_flags(thresholds, default="closed-form")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point for multistream-detect."""
    parser = build_parser()
    args = parser.parse_args(argv)

    level = args.log_level or default_log_level()
    if level not in LOG_LEVELS:
        parser.error(f"invalid log level {level!r} in ${LOG_LEVEL_ENV}")
    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    if args.command is None:
        parser.print_help()
        return EXIT_INPUT

    cli = DetectionCLI(args.output_dir)
    handlers = {
        "simulate": cli.cmd_simulate,
        "characterize": cli.cmd_characterize,
        "detect": cli.cmd_detect,
        "kl": cli.cmd_kl,
        "thresholds": cli.cmd_thresholds,
    }
    try:
        return handlers[args.command](args)
    except ConfigurationError as e:
        logger.error("❌ %s", e)
        return EXIT_INPUT
    except NumericalError as e:
        logger.error("❌ numerical failure: %s", e)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
