"""
Benchmark engine: synthetic grids of (n, d, rho, d_z) cells, several seeded
runs per cell, records written in (cell, run) order.
"""

import itertools
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from dine.core.exceptions import ConfigurationError
from dine.schemas import (BenchmarkConfig, CellSummary, CITestConfig, MetricsSummary, RunRecord,
                          ScenarioConfig)
from dine.services.citest import ci_test
from dine.services.estimator import estimate_cmi, estimate_mi
from dine.services.metrics import compute_metrics, summarize_estimates
from dine.services.scenario import draw_dependent_rho, generate

logger = logging.getLogger(__name__)

RECORD_COLUMNS = [name for name in RunRecord.model_fields if name != "wall_time"]
TIMING_COLUMNS = ["cell", "run", "seed", "wall_time"]


@dataclass
class Cell:
    index: int
    n: int
    d: int
    d_z: int
    rho: Optional[float] = None  # None for cit cells, where rho follows the label


@dataclass
class BenchmarkResult:
    records: List[RunRecord]
    metrics: List[MetricsSummary] = field(default_factory=list)
    summaries: List[CellSummary] = field(default_factory=list)


def run_seed(master_seed: int, cell: int, run: int) -> int:
    """Seed of one run, derived from the master seed and its grid position only"""
    sequence = np.random.SeedSequence(master_seed, spawn_key=(cell, run))
    return int(sequence.generate_state(1)[0])


class BenchmarkEngine:
    """Runs a BenchmarkConfig grid on a worker pool"""

    def __init__(self, config: BenchmarkConfig):
        self.config = config
        self.cells = self._build_cells()
        logger.info(f"Benchmark '{config.task}': {len(self.cells)} cells, "
                    f"{self.runs_per_cell} runs per cell, {config.workers} workers")

    @property
    def runs_per_cell(self) -> int:
        # cit cells hold `runs` independent runs followed by `runs` dependent ones
        return 2 * self.config.runs if self.config.task == "cit" else self.config.runs

    def _build_cells(self) -> List[Cell]:
        cfg = self.config
        if cfg.task == "cit":
            grid = [(n, d, d_z, None) for n, d, d_z in itertools.product(cfg.n, cfg.d, cfg.d_z)]
        else:
            grid = [(n, d, d_z, rho) for n, d, rho, d_z in itertools.product(cfg.n, cfg.d, cfg.rho, cfg.d_z)]
        return [Cell(i, *values) for i, values in enumerate(grid)]

    def _scenario(self, cell: Cell, run: int, seed: int) -> Tuple[ScenarioConfig, Optional[str]]:
        label = None
        rho = cell.rho
        if self.config.task == "cit":
            label = "independent" if run < self.config.runs else "dependent"
            rho = 0.0 if label == "independent" else draw_dependent_rho(np.random.default_rng([seed, 1]))
        scenario = ScenarioConfig(n=cell.n, d=cell.d, d_z=cell.d_z, rho=rho,
                                  z_family=self.config.z_family, f_choice=self.config.f_choice,
                                  g_choice=self.config.g_choice, seed=seed)
        return scenario, label

    def run_one(self, cell: Cell, run: int) -> RunRecord:
        cfg = self.config
        seed = run_seed(cfg.seed, cell.index, run)
        scenario_cfg, label = self._scenario(cell, run, seed)
        started = time.perf_counter()
        scenario = generate(scenario_cfg)
        data = scenario.dataset
        estimator_cfg = cfg.estimator.with_seed(seed)

        p = None
        if cfg.task == "mi":
            estimate = estimate_mi(data.x, data.y, estimator_cfg).value
        elif cfg.task == "cmi":
            estimate = estimate_cmi(data, estimator_cfg).value
        else:
            result = ci_test(data, CITestConfig(n_permutations=cfg.n_permutations, alpha=cfg.alpha,
                                                seed=seed, estimator=estimator_cfg))
            estimate, p = result.statistic, result.p_value

        resolved = scenario.config
        return RunRecord(
            task=cfg.task, cell=cell.index, run=run, n=cell.n, d=cell.d, d_z=cell.d_z,
            rho=scenario_cfg.rho, z_family=resolved.z_family, f_choice=resolved.f_choice,
            g_choice=resolved.g_choice, estimate=estimate, p_value=p, label=label,
            ground_truth=scenario.ground_truth_cmi, seed=seed,
            wall_time=time.perf_counter() - started,
        )

    def run(self) -> BenchmarkResult:
        jobs = [(cell, run) for cell in self.cells for run in range(self.runs_per_cell)]
        done: Dict[Tuple[int, int], RunRecord] = {}
        if self.config.workers > 1:
            with ThreadPoolExecutor(max_workers=self.config.workers) as executor:
                futures = {executor.submit(self.run_one, cell, run): (cell.index, run) for cell, run in jobs}
                for future in as_completed(futures):
                    done[futures[future]] = future.result()
                    self._progress(len(done), len(jobs))
        else:
            for cell, run in jobs:
                done[(cell.index, run)] = self.run_one(cell, run)
                self._progress(len(done), len(jobs))

        records = [done[key] for key in sorted(done)]
        result = BenchmarkResult(records=records)
        if self.config.task == "cit":
            for cell in self.cells:
                result.metrics.append(
                    compute_metrics([r for r in records if r.cell == cell.index], self.config.alpha))
        else:
            result.summaries = summarize_estimates(records)
        return result

    def _progress(self, completed: int, total: int) -> None:
        if completed % self.runs_per_cell == 0 or completed == total:
            logger.info(f"Benchmark progress: {completed}/{total} runs")


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.name + suffix)


def _check_writable(path: Path) -> None:
    if not path.parent.is_dir():
        raise ConfigurationError(f"Output directory does not exist: {path.parent}")


def write_records(records: List[RunRecord], path) -> Path:
    """Records CSV (fixed columns, seed-reproducible) plus a separate timings CSV"""
    path = Path(path)
    _check_writable(path)
    rows = [r.model_dump() for r in records]
    frame = pd.DataFrame(rows, columns=list(RunRecord.model_fields))
    frame[RECORD_COLUMNS].to_csv(path, index=False, float_format="%.17g", encoding="utf-8")
    frame[TIMING_COLUMNS].to_csv(_sidecar(path, ".timings.csv"), index=False, encoding="utf-8")
    return path


def read_records(path) -> List[RunRecord]:
    frame = pd.read_csv(path, encoding="utf-8", float_precision="round_trip")
    frame = frame.astype(object).where(frame.notna(), None)
    return [RunRecord(**row) for row in frame.to_dict(orient="records")]


def write_result(result: BenchmarkResult, path) -> Dict[str, str]:
    """Write records and, depending on the task, metrics or per-cell summaries"""
    path = write_records(result.records, path)
    written = {"records": str(path), "timings": str(_sidecar(path, ".timings.csv"))}
    if result.metrics:
        metrics_path = _sidecar(path, ".metrics.csv")
        frame = pd.DataFrame([m.model_dump(exclude={"counts", "warnings"}) for m in result.metrics])
        frame["n_independent"] = [m.counts["independent"] for m in result.metrics]
        frame["n_dependent"] = [m.counts["dependent"] for m in result.metrics]
        frame.to_csv(metrics_path, index=False, float_format="%.17g", encoding="utf-8")
        written["metrics"] = str(metrics_path)
    if result.summaries:
        summary_path = _sidecar(path, ".summary.csv")
        pd.DataFrame([s.model_dump() for s in result.summaries]).to_csv(
            summary_path, index=False, float_format="%.17g", encoding="utf-8")
        written["summary"] = str(summary_path)
    return written


def run_benchmark(config: BenchmarkConfig, output=None) -> BenchmarkResult:
    if output is not None:
        _check_writable(Path(output))
    result = BenchmarkEngine(config).run()
    if output is not None:
        write_result(result, output)
    return result
