"""Drop runner and command-line entry point.

Each drop is one channel realization pushed through grouping, the all-HD
baseline optimization and the PMR schedule. Results are written as plot-ready
CSV files.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from rscmd.grouping import GroupingResult, build_grouping
from rscmd.optimizer import OptimizerOptions
from rscmd.pmr import PmrTrace, run_pmr_schedule, write_trace_csv
from rscmd.scenario import Scenario, SystemConfig, generate_scenario

log = logging.getLogger(__name__)

FIG2_HEADER = ["iter", "event", "ee_mbit_per_j", "common_rate_mbps"]
FIG3_HEADER = ["sd_count", "ee_mbit_per_j", "common_share_pct"]
FIG4_HEADER = ["event", "p_avail_w", "ee_mbit_per_j"]
SUMMARY_HEADER = ["drop", "baseline_ee", "peak_ee", "peak_sd_count", "rel_gain_pct", "feasible"]
ENSEMBLE_HEADER = ["metric", "median", "q25", "q75", "n"]
DEBUG_HEADER = ["drop", "event", "outer", "inner", "lambda_bit_per_j", "objective", "ee_bit_per_j",
                "sum_common_rate_bps", "transmit_power_w", "max_residual_bps"]

U64 = 2**64


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    drops: int = 1
    output_dir: Path = Path("results")
    emit_debug: bool = False
    workers: int = 1
    options: OptimizerOptions = field(default_factory=OptimizerOptions)

    def __post_init__(self):
        if self.drops < 1:
            raise ValueError("drops must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def mode(self) -> str:
        return "single" if self.drops == 1 else "ensemble"

    def drop_seed(self, drop: int) -> int:
        """Drop ``d`` uses ``seed + d`` (mod 2^64); the generator hashes it, so streams are independent."""
        return (self.system.seed + drop) % U64


@dataclass(frozen=True, eq=False)
class DropResult:
    drop: int
    seed: int
    scenario: Scenario
    grouping: GroupingResult
    trace: PmrTrace

    @property
    def feasible(self) -> bool:
        return self.trace.feasible

    @property
    def ee_curve(self) -> np.ndarray:
        """EE (bit/J) after 0, 1, 2, ... PMR events."""
        return np.array([s.ee for s in self.trace.solutions])

    @property
    def peak_sd_count(self) -> int:
        return int(np.argmax(self.ee_curve))

    @property
    def rel_gain_pct(self) -> float:
        curve = self.ee_curve
        return 100.0 * (curve.max() - curve[0]) / curve[0]


def run_drop(system: SystemConfig, drop: int, seed: int, options: OptimizerOptions | None = None) -> DropResult:
    cfg = system.replace(seed=seed)
    scenario = generate_scenario(cfg)
    grouping = build_grouping(scenario.channel, cfg.decode_layers)
    trace = run_pmr_schedule(scenario, grouping, options)
    log.info("drop %d seed %d: %s after %d events", drop, seed, trace.stop_reason, len(trace.events))
    return DropResult(drop, seed, scenario, grouping, trace)


def _run_drop_args(args):
    return run_drop(*args)


def run_drops(config: ExperimentConfig) -> list[DropResult]:
    """Run every drop, in parallel when ``workers > 1``; results come back in drop order."""
    jobs = [(config.system, d, config.drop_seed(d), config.options) for d in range(config.drops)]
    if config.workers == 1 or config.drops == 1:
        return [_run_drop_args(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(_run_drop_args, jobs))


# --------------------------------------------------------------------------- rows


def _f(x: float) -> str:
    return repr(float(x))


def fig2_rows(trace: PmrTrace) -> list[list]:
    """One row per recorded SCA iterate, numbered cumulatively across the baseline and every event."""
    rows, n = [], 0
    for event, sol in enumerate(trace.solutions):
        for rec in sol.history:
            rows.append([n, event, _f(rec.ee / 1e6), _f(rec.sum_common_rate / 1e6)])
            n += 1
    return rows


def fig3_rows(trace: PmrTrace) -> list[list]:
    return [[n, _f(s.ee / 1e6), _f(s.rates.common_share)] for n, s in enumerate(trace.solutions)]


def fig4_rows(trace: PmrTrace) -> list[list]:
    return [[n, _f(p), _f(s.ee / 1e6)] for n, (s, p) in enumerate(zip(trace.solutions, trace.p_avail))]


def summary_row(res: DropResult) -> list:
    if not res.feasible:
        nan = _f(math.nan)
        return [res.drop, nan, nan, "", nan, "false"]
    curve = res.ee_curve
    return [res.drop, _f(curve[0] / 1e6), _f(curve.max() / 1e6), res.peak_sd_count, _f(res.rel_gain_pct), "true"]


def debug_rows(res: DropResult) -> list[list]:
    rows = []
    for event, sol in enumerate(res.trace.solutions):
        for r in sol.history:
            rows.append([res.drop, event, r.outer, r.inner, _f(r.lam), _f(r.objective), _f(r.ee),
                         _f(r.sum_common_rate), _f(r.transmit_power), _f(r.max_residual)])
    return rows


def _quantiles(values) -> tuple[float, float, float]:
    v = np.asarray(values, float)
    return float(np.median(v)), float(np.percentile(v, 25)), float(np.percentile(v, 75))


def _aggregate(keyed: dict, value_names: list[str]) -> list[list]:
    """Median and quartiles per key; ``keyed[key]`` is a list of value tuples, one per drop."""
    rows = []
    for key in sorted(keyed):
        vals = np.array(keyed[key], float)
        row = list(key) if isinstance(key, tuple) else [key]
        stats = []
        for c in range(len(value_names)):
            med, q25, q75 = _quantiles(vals[:, c])
            row.append(_f(med))
            stats += [_f(q25), _f(q75)]
        rows.append(row + stats + [len(vals)])
    return rows


def ensemble_rows(results: list[DropResult]) -> dict[str, tuple[list[str], list[list]]]:
    """Ensemble versions of fig2/3/4: median over feasible drops plus IQR and drop-count columns."""
    ok = [r for r in results if r.feasible]
    f2: dict = {}
    f3: dict = {}
    f4: dict = {}
    for r in ok:
        for event, sol in enumerate(r.trace.solutions):
            for step, rec in enumerate(sol.history):
                f2.setdefault((event, step), []).append((rec.ee / 1e6, rec.sum_common_rate / 1e6))
            f3.setdefault(event, []).append((sol.ee / 1e6, sol.rates.common_share))
            f4.setdefault(event, []).append((r.trace.p_avail[event], sol.ee / 1e6))
    fig2 = [[n] + row[:1] + row[2:] for n, row in enumerate(_aggregate(f2, ["ee", "cr"]))]
    return {
        "fig2.csv": (FIG2_HEADER + ["ee_q25", "ee_q75", "common_rate_q25", "common_rate_q75", "n_drops"], fig2),
        "fig3.csv": (FIG3_HEADER + ["ee_q25", "ee_q75", "common_share_q25", "common_share_q75", "n_drops"],
                     _aggregate(f3, ["ee", "share"])),
        "fig4.csv": (FIG4_HEADER + ["p_avail_q25", "p_avail_q75", "ee_q25", "ee_q75", "n_drops"],
                     _aggregate(f4, ["p", "ee"])),
    }


def ensemble_stats(results: list[DropResult]) -> list[list]:
    ok = [r for r in results if r.feasible]
    rows = []
    if ok:
        metrics = {
            "baseline_ee_mbit_per_j": [r.ee_curve[0] / 1e6 for r in ok],
            "peak_ee_mbit_per_j": [r.ee_curve.max() / 1e6 for r in ok],
            "peak_sd_count": [r.peak_sd_count for r in ok],
            "rel_gain_pct": [r.rel_gain_pct for r in ok],
        }
        for name, vals in metrics.items():
            med, q25, q75 = _quantiles(vals)
            rows.append([name, _f(med), _f(q25), _f(q75), len(vals)])
    rows.append(["feasible_drops", len(ok), "", "", len(results)])
    return rows


# --------------------------------------------------------------------------- output


def _write(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _write_drop_files(directory: Path, res: DropResult, debug: bool) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    _write(directory / "fig2.csv", FIG2_HEADER, fig2_rows(res.trace))
    _write(directory / "fig3.csv", FIG3_HEADER, fig3_rows(res.trace))
    _write(directory / "fig4.csv", FIG4_HEADER, fig4_rows(res.trace))
    write_trace_csv(res.trace, directory / "trace.csv")
    res.grouping.to_csv(directory / "grouping.csv")
    res.scenario.to_csv(directory / "scenario.csv")
    if debug:
        _write(directory / "debug_iterations.csv", DEBUG_HEADER, debug_rows(res))


def write_outputs(config: ExperimentConfig, results: list[DropResult]) -> list[Path]:
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write(out / "summary.csv", SUMMARY_HEADER, [summary_row(r) for r in results])
    if config.mode == "single":
        _write_drop_files(out, results[0], config.emit_debug)
    else:
        for name, (header, rows) in ensemble_rows(results).items():
            _write(out / name, header, rows)
        _write(out / "ensemble.csv", ENSEMBLE_HEADER, ensemble_stats(results))
        for r in results:
            _write_drop_files(out / "drops" / f"drop_{r.drop:04d}", r, config.emit_debug)
    return sorted(out.rglob("*.csv"))


def run_experiment(config: ExperimentConfig) -> list[DropResult]:
    """Run all drops and write the CSV artifacts. Infeasible drops are recorded, not fatal."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = run_drops(config)
    write_outputs(config, results)
    return results


# --------------------------------------------------------------------------- CLI


def _seed(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < U64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rscmd", description="RS-CMD energy-efficiency experiment with scheduled PMR.")
    p.add_argument("--config", type=Path, help="JSON file with system parameters (defaults otherwise)")
    p.add_argument("--seed", type=_seed, help="override the configured RNG seed")
    p.add_argument("--drops", type=int, default=1, help="number of channel realizations (default 1)")
    p.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    p.add_argument("--debug", action="store_true", help="write per-iteration logs and enable debug logging")
    p.add_argument("--workers", type=int, default=1, help="parallel drop workers (default 1)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.debug else logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        system = SystemConfig.from_json(args.config) if args.config else SystemConfig()
        if args.seed is not None:
            system = system.replace(seed=args.seed)
        config = ExperimentConfig(system, args.drops, args.out, args.debug, args.workers)
    except (OSError, ValueError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        results = run_experiment(config)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return 1
    ok = [r for r in results if r.feasible]
    print(f"{len(ok)}/{len(results)} feasible drops written to {config.output_dir}")
    if ok:
        med, q25, q75 = _quantiles([r.rel_gain_pct for r in ok])
        print(f"relative peak EE gain: median {med:.3f}% (IQR {q25:.3f}% .. {q75:.3f}%)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
