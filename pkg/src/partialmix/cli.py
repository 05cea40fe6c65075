"""Config-driven experiment runner.

Subcommands: ``run`` (single game, per-round CSV plus report JSON),
``batch`` (Monte-Carlo over seeds), ``sweep`` (batch per horizon plus a
scaling fit), ``validate`` (oracle equivalences, randomized inequality
sweeps, affine invariance). Exit codes: 0 success, 1 validation failure,
2 configuration error.

Outputs carry no timestamps and floats are rendered with 17 significant
digits, so identical configs and seeds reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig, load_config
from .environment import GameTranscript, resolve_competitor, run_game
from .evaluation import (
    BatchSummary,
    DegenerateFitError,
    ExperimentBundle,
    RegretReport,
    RunResult,
    fit_scaling,
    monte_carlo,
    realized_regret,
    summarize_runs,
)
from .validation import run_validation_suite


def _fmt(value) -> str:
    return format(float(value), ".17g")


def write_rounds_csv(
    path: Path, transcript: GameTranscript, competitor, run_index: int
) -> None:
    """Fixed-schema per-round transcript; expert indices are 1-based."""
    m = transcript.config.n_experts
    header = (
        ["run", "t", "epsilon", "eta", "psi", "V", "D", "i_t", "loss", "cum_loss",
         "competitor_arm", "competitor_loss", "regret"]
        + [f"q_{i}" for i in range(1, m + 1)]
    )
    lines = [",".join(header)]
    cum_loss = 0.0
    cum_regret = 0.0
    for record, arm in zip(transcript.records, competitor.experts):
        competitor_loss = float(transcript.losses[record.t - 1, arm])
        cum_loss += record.selected_loss
        cum_regret += record.selected_loss - competitor_loss
        row = [
            str(run_index),
            str(record.t),
            _fmt(record.epsilon_t),
            _fmt(record.eta_t) if record.eta_t is not None else "nan",
            _fmt(record.psi_t),
            _fmt(record.V),
            _fmt(record.D),
            str(record.selected + 1),
            _fmt(record.selected_loss),
            _fmt(cum_loss),
            str(int(arm) + 1),
            _fmt(competitor_loss),
            _fmt(cum_regret),
        ] + [_fmt(v) for v in record.q]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def _report_json(report: RegretReport, seed: int) -> dict:
    payload = {
        "seed": seed,
        "learner_loss": report.learner_loss,
        "competitor_loss": report.competitor_loss,
        "realized_regret": report.realized_regret,
        "normalized_regret": report.normalized_regret,
        "loss_range": list(report.loss_range),
        "complexity": report.complexity,
        "w_budget": report.w_budget,
        "budget_exceeded": report.budget_exceeded,
        "bound_theorem": report.bound.theorem,
        "bound_cleaner": report.bound.cleaner,
    }
    if report.diagnostics is not None:
        payload["diagnostics"] = {
            c.name: {"lhs": c.lhs, "rhs": c.rhs, "slack": c.slack, "passed": c.passed}
            for c in report.diagnostics.checks
        }
    return payload


def _summary_json(summary: BatchSummary, base_seed: int, horizon: int) -> dict:
    return {
        "base_seed": base_seed,
        "horizon": horizon,
        "n_seeds": summary.n_seeds,
        "mean_regret": summary.mean_regret,
        "std_error": summary.std_error,
        "std_error_defined": summary.std_error_defined,
        "confidence_interval": list(summary.confidence_interval),
        "mean_normalized_regret": summary.mean_normalized_regret,
        "normalized_std_error": summary.normalized_std_error,
        "normalized_confidence_interval": list(summary.normalized_confidence_interval),
        "bound_theorem": summary.bound.theorem,
        "bound_cleaner": summary.bound.cleaner,
    }


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _bundle(cfg: ExperimentConfig, horizon: int | None = None) -> ExperimentBundle:
    return ExperimentBundle(
        learner_config=cfg.learner,
        loss_process=cfg.loss_process,
        feedback_process=cfg.feedback_process,
        horizon=cfg.horizon if horizon is None else horizon,
        competitor=cfg.competitor,
    )


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out) if args.out else Path(cfg.out) if cfg.out else Path("out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    transcript = run_game(
        cfg.learner, cfg.loss_process, cfg.feedback_process, cfg.horizon, cfg.seed
    )
    competitor = resolve_competitor(cfg.competitor, transcript.losses, cfg.learner.kernel)
    report = realized_regret(transcript, competitor)
    write_rounds_csv(out / "rounds.csv", transcript, competitor, run_index=0)
    _write_json(out / "report.json", _report_json(report, cfg.seed))
    print(
        f"run: seed {cfg.seed}, regret {report.realized_regret:.6g}, "
        f"normalized {report.normalized_regret:.6g}, bound {report.bound.theorem:.6g}"
    )
    return 0


def _cmd_batch(cfg: ExperimentConfig, args) -> int:
    out = _out_dir(cfg, args)
    bundle = _bundle(cfg)
    if cfg.write_rounds:
        results: list[RunResult] = []
        for i in range(cfg.runs):
            seed = cfg.seed + i
            transcript = run_game(
                cfg.learner, cfg.loss_process, cfg.feedback_process, cfg.horizon, seed
            )
            competitor = resolve_competitor(
                cfg.competitor, transcript.losses, cfg.learner.kernel
            )
            report = realized_regret(transcript, competitor, with_diagnostics=False)
            write_rounds_csv(out / f"run_{i:04d}.csv", transcript, competitor, run_index=i)
            results.append(
                RunResult(
                    seed=seed,
                    regret=report.realized_regret,
                    normalized_regret=report.normalized_regret,
                    learner_loss=report.learner_loss,
                    competitor_loss=report.competitor_loss,
                    complexity=report.complexity,
                    n_switches=competitor.n_switches,
                )
            )
        summary = summarize_runs(bundle, results)
    else:
        summary, _ = monte_carlo(bundle, cfg.runs, base_seed=cfg.seed, n_workers=args.threads)
    _write_json(out / "batch.json", _summary_json(summary, cfg.seed, cfg.horizon))
    print(
        f"batch: {summary.n_seeds} seeds, mean regret {summary.mean_regret:.6g} "
        f"(se {summary.std_error:.3g}), bound {summary.bound.theorem:.6g}"
    )
    return 0


def _cmd_sweep(cfg: ExperimentConfig, args) -> int:
    if not cfg.sweep_horizons:
        raise ConfigError("sweep", "the sweep subcommand needs a sweep.horizons list")
    out = _out_dir(cfg, args)
    runs = cfg.sweep_runs or cfg.runs
    rows = []
    for horizon in cfg.sweep_horizons:
        summary, _ = monte_carlo(
            _bundle(cfg, horizon), runs, base_seed=cfg.seed, n_workers=args.threads
        )
        rows.append((horizon, summary))
        print(
            f"sweep: T {horizon}, mean regret {summary.mean_regret:.6g} "
            f"(se {summary.std_error:.3g})"
        )
    header = [
        "T", "mean_regret", "std_error", "ci_low", "ci_high",
        "mean_normalized_regret", "bound",
    ]
    lines = [",".join(header)]
    for horizon, summary in rows:
        lines.append(
            ",".join(
                [
                    str(horizon),
                    _fmt(summary.mean_regret),
                    _fmt(summary.std_error),
                    _fmt(summary.confidence_interval[0]),
                    _fmt(summary.confidence_interval[1]),
                    _fmt(summary.mean_normalized_regret),
                    _fmt(summary.bound.theorem),
                ]
            )
        )
    (out / "scaling.csv").write_text("\n".join(lines) + "\n")
    payload = {
        "base_seed": cfg.seed,
        "runs_per_horizon": runs,
        "horizons": [h for h, _ in rows],
        "mean_regrets": [s.mean_regret for _, s in rows],
        "bounds": [s.bound.theorem for _, s in rows],
    }
    try:
        slope = fit_scaling(
            np.array([h for h, _ in rows], dtype=float),
            np.array([s.mean_regret for _, s in rows]),
        )
        payload["slope"] = slope
        print(f"sweep: fitted log-log slope {slope:.4f}")
    except DegenerateFitError as exc:
        payload["slope"] = None
        payload["slope_error"] = str(exc)
        print(f"sweep: no slope fit ({exc})")
    _write_json(out / "sweep.json", payload)
    return 0


def _cmd_validate(cfg: ExperimentConfig | None, args) -> int:
    options = dict(cfg.validate_options) if cfg is not None else {}
    results = run_validation_suite(
        oracle_instances=int(options.get("oracle_instances", 25)),
        lemma_configs=int(options.get("lemma_configs", 20)),
        lemma_horizon=int(options.get("lemma_horizon", 500)),
        affine_horizon=int(options.get("affine_horizon", 500)),
        seed=int(options.get("seed", 1234)),
    )
    failed = 0
    for check in results:
        status = "PASS" if check.passed else "FAIL"
        print(f"{status} {check.name}: {check.detail}")
        failed += not check.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partialmix",
        description="Expert-mixture experiments under partial monitoring",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("run", True), ("batch", True), ("sweep", True), ("validate", False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="experiment config JSON")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="base seed (overrides config)")
        p.add_argument("--runs", type=int, help="seed count (overrides config)")
        p.add_argument("--threads", type=int, default=1, help="worker processes for batches")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else None
        if cfg is not None:
            if args.seed is not None:
                cfg.seed = args.seed
            if args.runs is not None:
                cfg.runs = args.runs
        if args.command == "validate":
            return _cmd_validate(cfg, args)
        assert cfg is not None
        if args.command == "run":
            return _cmd_run(cfg, args)
        if args.command == "batch":
            return _cmd_batch(cfg, args)
        return _cmd_sweep(cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
