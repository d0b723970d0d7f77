"""Command line entry point: run, diagnose, sweep-epsilon, export.

Exit codes: 0 success, 2 configuration error, 3 non-convergence at the
round limit, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config, write_resolved_config
from .diagnostics import boundary_check, c2st_ddm, coverage_test, kl_histogram
from .oracle import cached_reference
from .posterior import grid_posterior, rejection_sample, weighted_histogram
from .prior import TruncatedPrior
from .ratio import load_estimator, save_estimator
from .store import SampleStore
from .truncation import run_mnre, run_tmnre

log = logging.getLogger("tmnre")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NO_CONVERGENCE = 3
EXIT_RUNTIME = 4


class RunLock:
    """Exclusive ownership of a run directory via a lock file."""

    def __init__(self, run_dir: Path):
        self.path = Path(run_dir) / ".lock"

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise RuntimeError(f"run directory is locked by another process: {self.path}")
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _export_posteriors(run_dir: Path, result, cfg: RunConfig, x_o, prior, rng):
    post_dir = run_dir / "posteriors"
    post_dir.mkdir(exist_ok=True)
    trunc = TruncatedPrior(prior, result.final_region)
    for est in result.final_estimators:
        if est.net is None:
            continue
        label = est.index.label()
        sub = trunc.sample(100_000, rng)[:, list(est.index.dims)]
        hist = weighted_histogram(est, x_o, sub, bins=100)
        if hist.ndim == 1:
            _write_csv(post_dir / f"hist_{label}.csv", ["bin_lo", "bin_hi", "weight"], hist.to_rows())
        else:
            _write_csv(post_dir / f"hist_{label}.csv", ["bin_i", "bin_j", "weight"], hist.to_rows())
        samples = rejection_sample(
            est, x_o, prior, result.final_region, 10_000, rng,
            grid_size=min(cfg.tmnre.grid_size, 300 if len(est.index) == 2 else cfg.tmnre.grid_size),
        )
        _write_csv(
            post_dir / f"samples_{label}.csv",
            [f"theta_{d}" for d in est.index.dims],
            [tuple(row) for row in samples.samples],
        )
        meta = {
            "index": list(est.index.dims),
            "acceptance_rate": samples.acceptance_rate,
            "envelope": samples.envelope,
            "clipped": samples.clipped,
        }
        (post_dir / f"samples_{label}.json").write_text(json.dumps(meta, indent=1))


def cmd_run(cfg: RunConfig) -> int:
    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    with RunLock(run_dir):
        write_resolved_config(cfg, run_dir)
        sim = cfg.build_simulator()
        prior = cfg.build_prior(sim)
        x_o = cfg.resolve_x_o(sim)
        rng = np.random.default_rng(cfg.seed)
        store = SampleStore(sim.param_dim, sim.data_dim, run_dir / "store.bin")

        if cfg.algorithm == "mnre":
            result = run_mnre(sim, prior, cfg.tmnre, rng, store=store)
        else:
            result = run_tmnre(sim, prior, x_o, cfg.tmnre, rng, store=store)

        rounds_payload = {
            "status": result.status,
            "total_simulations": result.total_simulations,
            "final_region": result.final_region.to_json(),
            "rounds": [r.to_json() for r in result.rounds],
        }
        (run_dir / "rounds.json").write_text(json.dumps(rounds_payload, indent=1))

        est_root = run_dir / "estimators"
        for state in result.rounds:
            round_dir = est_root / f"round_{state.m}"
            round_dir.mkdir(parents=True, exist_ok=True)
            for est in state.estimators_1d:
                if est.net is not None:
                    save_estimator(est, round_dir / f"head_{est.index.label()}")
        final_dir = est_root / "round_final"
        final_dir.mkdir(parents=True, exist_ok=True)
        for est in result.final_estimators:
            if est.net is not None:
                save_estimator(est, final_dir / f"head_{est.index.label()}")

        _export_posteriors(run_dir, result, cfg, x_o, prior, rng)

        if not result.converged and cfg.algorithm == "tmnre":
            log.warning("run did not meet the stopping criterion (status=%s)", result.status)
            return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _load_run(run_dir: Path):
    cfg_data = json.loads((run_dir / "config.json").read_text())
    rounds = json.loads((run_dir / "rounds.json").read_text())
    final_dir = run_dir / "estimators" / "round_final"
    estimators = [load_estimator(p.with_suffix("")) for p in sorted(final_dir.glob("*.json"))]
    return cfg_data, rounds, estimators


def cmd_diagnose(run_dir, reference_seed: int = 1234, coverage_draws: int = 10_000,
                 coverage_grid: int = 300, reference_n: int = 10_000) -> int:
    run_dir = Path(run_dir)
    cfg_data, rounds, estimators = _load_run(run_dir)
    from .prior import FactorizablePrior, TruncationRegion
    from .simulators import make_simulator

    sim = make_simulator(cfg_data["simulator"], **cfg_data.get("simulator_params", {}))
    prior = (
        FactorizablePrior.from_spec(cfg_data["prior"])
        if cfg_data.get("prior")
        else sim.default_prior()
    )
    x_o = (
        sim.observation()
        if cfg_data["x_o"] == "noiseless"
        else np.asarray(cfg_data["x_o"], float)
    )
    region = TruncationRegion.from_json(rounds["final_region"])
    rng = np.random.default_rng(reference_seed)
    report_dir = run_dir / "diagnostics"
    report_dir.mkdir(exist_ok=True)
    report = {"coverage": {}, "boundary": {}, "c2st_ddm": None, "kl_1d": None}

    ests_1d = [e for e in estimators if len(e.index) == 1]
    curves = coverage_test(
        ests_1d, sim, prior, region, coverage_draws,
        np.arange(0.1, 0.95, 0.1), rng, grid_size=coverage_grid,
    )
    for curve in curves:
        report["coverage"][str(curve.dim)] = curve.to_rows()
        _write_csv(
            report_dir / f"coverage_dim{curve.dim}.csv",
            ["level", "empirical", "stderr"],
            curve.to_rows(),
        )

    for est in estimators:
        if est.net is None:
            continue
        grid = grid_posterior(est, x_o, prior, region, 300)
        passed, offending = boundary_check(grid)
        report["boundary"][est.index.label()] = {"passed": passed, "offending": offending}

    has_oracle = cfg_data["simulator"] in ("torus", "eggbox", "gaussian_diag")
    if has_oracle:
        ref = cached_reference(run_dir / "reference", sim, prior, x_o, reference_n, reference_seed)
        approx = {}
        kl = {}
        for est in estimators:
            if est.net is None:
                continue
            samples = rejection_sample(
                est, x_o, prior, region, reference_n, rng,
                grid_size=300 if len(est.index) == 2 else 1000,
            )
            approx[est.index] = samples.samples
            if len(est.index) == 1:
                d = est.index.dims[0]
                kl[str(d)] = kl_histogram(ref.samples[:, d], samples.samples[:, 0])
        mean1, per1, missing1 = c2st_ddm(ref.samples, approx, 1, rng)
        entry = {"mean_1d": mean1, "per_1d": {str(k): v for k, v in per1.items()}}
        if any(len(k.dims) == 2 for k in approx):
            mean2, per2, _ = c2st_ddm(ref.samples, approx, 2, rng)
            entry.update(mean_2d=mean2, per_2d={str(k): v for k, v in per2.items()})
        report["c2st_ddm"] = entry
        report["kl_1d"] = kl
    else:
        report["notice"] = "no oracle available; only coverage and boundary checks produced"

    (report_dir / "report.json").write_text(json.dumps(report, indent=1))
    return EXIT_OK


def cmd_sweep_epsilon(cfg: RunConfig, epsilons, repetitions: int = 1,
                      reference_n: int = 5000) -> int:
    if not epsilons:
        raise ConfigError(["sweep: epsilon list must not be empty"])
    import dataclasses

    run_dir = Path(cfg.out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    sim = cfg.build_simulator()
    prior = cfg.build_prior(sim)
    x_o = cfg.resolve_x_o(sim)
    ref = cached_reference(run_dir / "reference", sim, prior, x_o, reference_n, cfg.seed + 99)

    rows = []
    for eps in epsilons:
        for rep in range(repetitions):
            rng = np.random.default_rng(cfg.seed + 1000 * rep)
            sweep_cfg = dataclasses.replace(cfg.tmnre, epsilon=float(eps))
            try:
                result = run_tmnre(sim, prior, x_o, sweep_cfg, rng)
                approx = {}
                for est in result.final_estimators:
                    if est.net is None:
                        continue
                    samples = rejection_sample(
                        est, x_o, prior, result.final_region, reference_n, rng,
                        grid_size=300 if len(est.index) == 2 else 1000,
                    )
                    approx[est.index] = samples.samples
                mean1, _, _ = c2st_ddm(ref.samples, approx, 1, rng)
                mean2, _, _ = c2st_ddm(ref.samples, approx, 2, rng)
                score = float(np.nanmean([mean1, mean2]))
                rows.append(
                    (eps, rep, score, result.total_simulations, score / result.total_simulations)
                )
            except RuntimeError as exc:
                log.error("sweep epsilon=%g rep=%d failed: %s", eps, rep, exc)
                rows.append((eps, rep, float("nan"), 0, float("nan")))
    _write_csv(
        run_dir / "epsilon_sweep.csv",
        ["epsilon", "repetition", "c2st_ddm", "total_simulations", "c2st_ddm_per_simulation"],
        rows,
    )
    return EXIT_OK


def cmd_export(run_dir) -> int:
    """Re-emit posterior CSVs for a finished run from stored estimators."""
    run_dir = Path(run_dir)
    cfg_data, rounds, estimators = _load_run(run_dir)
    from .prior import FactorizablePrior, TruncationRegion
    from .simulators import make_simulator

    sim = make_simulator(cfg_data["simulator"], **cfg_data.get("simulator_params", {}))
    prior = (
        FactorizablePrior.from_spec(cfg_data["prior"])
        if cfg_data.get("prior")
        else sim.default_prior()
    )
    x_o = (
        sim.observation()
        if cfg_data["x_o"] == "noiseless"
        else np.asarray(cfg_data["x_o"], float)
    )
    region = TruncationRegion.from_json(rounds["final_region"])

    class _Result:
        final_region = region
        final_estimators = estimators

    cfg = RunConfig(out_dir=str(run_dir))
    rng = np.random.default_rng(cfg_data.get("seed", 0) + 7)
    _export_posteriors(run_dir, _Result, cfg, x_o, prior, rng)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tmnre",
        description="Truncated marginal likelihood-to-evidence ratio estimation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a full inference run")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--workers", type=int, default=None)
    run.add_argument("--out", type=Path, default=None, help="override the output directory")

    diag = sub.add_parser("diagnose", help="compute diagnostics for a finished run")
    diag.add_argument("run_dir", type=Path)
    diag.add_argument("--coverage-draws", type=int, default=10_000)
    diag.add_argument("--reference-n", type=int, default=10_000)
    diag.add_argument("--seed", type=int, default=1234)

    sweep = sub.add_parser("sweep-epsilon", help="run the truncation-threshold scan")
    sweep.add_argument("--config", required=True, type=Path)
    sweep.add_argument("--epsilons", required=True, type=float, nargs="+")
    sweep.add_argument("--repetitions", type=int, default=1)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out", type=Path, default=None)

    export = sub.add_parser("export", help="re-emit CSV artifacts from a finished run")
    export.add_argument("run_dir", type=Path)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("run", "sweep-epsilon"):
            cfg = load_config(args.config)
            if args.seed is not None:
                cfg.seed = args.seed
            if args.out is not None:
                cfg.out_dir = str(args.out)
            if getattr(args, "workers", None):
                cfg.workers = args.workers
            if args.command == "run":
                return cmd_run(cfg)
            return cmd_sweep_epsilon(cfg, args.epsilons, args.repetitions)
        if args.command == "diagnose":
            return cmd_diagnose(
                args.run_dir,
                reference_seed=args.seed,
                coverage_draws=args.coverage_draws,
                reference_n=args.reference_n,
            )
        if args.command == "export":
            return cmd_export(args.run_dir)
        return EXIT_RUNTIME
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        logging.getLogger("tmnre").exception("run failed: %s", exc)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
