"""Tests for the benchmark engine and record files."""

import pytest
from pydantic import ValidationError

from dine.core.exceptions import ConfigurationError
from dine.schemas import BenchmarkConfig, EstimatorConfig, TrainConfig
from dine.services.benchmark import (RECORD_COLUMNS, BenchmarkEngine, read_records, run_benchmark, run_seed,
                                     write_records)


def tiny(task, **kwargs):
    kwargs.setdefault("estimator", EstimatorConfig(train=TrainConfig(epochs=2)))
    return BenchmarkConfig(task=task, **kwargs)


class TestGrid:

    def test_mi_grid(self):
        engine = BenchmarkEngine(tiny("mi", n=[100], d=[1, 2], rho=[-0.5, 0.0, 0.5], d_z=[3]))
        assert len(engine.cells) == 6
        assert all(cell.d_z == 0 for cell in engine.cells)
        assert engine.runs_per_cell == 10

    def test_cit_cells_hold_both_labels(self):
        engine = BenchmarkEngine(tiny("cit", n=[100, 200], d=[1], d_z=[1, 5], runs=4))
        assert len(engine.cells) == 4
        assert engine.runs_per_cell == 8

    def test_conditional_tasks_need_z(self):
        with pytest.raises(ValidationError):
            tiny("cmi", d_z=[0])

    def test_empty_axis(self):
        with pytest.raises(ValidationError):
            tiny("mi", rho=[])

    def test_rho_outside_interval(self):
        with pytest.raises(ValidationError):
            tiny("mi", rho=[0.5, 1.0])

    def test_run_seeds(self):
        assert run_seed(0, 1, 2) == run_seed(0, 1, 2)
        assert len({run_seed(0, cell, run) for cell in range(5) for run in range(5)}) == 25
        assert run_seed(1, 0, 0) != run_seed(0, 0, 0)


class TestRun:

    def test_mi_records_in_grid_order(self):
        result = run_benchmark(tiny("mi", n=[150], d=[1], rho=[-0.9, 0.0, 0.9], runs=2))
        assert len(result.records) == 6
        assert [(r.cell, r.run) for r in result.records] == [(c, r) for c in range(3) for r in range(2)]
        assert [r.rho for r in result.records[::2]] == [-0.9, 0.0, 0.9]
        assert len(result.summaries) == 3
        assert result.metrics == []

    def test_cit_records_and_metrics(self):
        result = run_benchmark(tiny("cit", n=[150], d=[1], d_z=[1], runs=2, n_permutations=5))
        labels = [r.label for r in result.records]
        assert labels == ["independent", "independent", "dependent", "dependent"]
        assert all(r.rho == 0.0 for r in result.records[:2])
        assert all(0.1 <= abs(r.rho) <= 0.99 for r in result.records[2:])
        assert all(r.p_value is not None for r in result.records)
        assert len(result.metrics) == 1
        assert result.metrics[0].counts == {"independent": 2, "dependent": 2}

    def test_workers_do_not_change_records(self):
        cfg = tiny("cmi", n=[120], d=[1], rho=[0.5], d_z=[1], runs=3)
        serial = run_benchmark(cfg).records
        threaded = run_benchmark(cfg.model_copy(update={"workers": 3})).records
        strip = [r.model_dump(exclude={"wall_time"}) for r in serial]
        assert strip == [r.model_dump(exclude={"wall_time"}) for r in threaded]

    def test_records_reproducible_from_their_seed(self):
        result = run_benchmark(tiny("cmi", n=[120], d=[1], rho=[0.3], d_z=[1], runs=2))
        engine = BenchmarkEngine(tiny("cmi", n=[120], d=[1], rho=[0.3], d_z=[1], runs=2))
        again = engine.run_one(engine.cells[0], 1)
        assert again.seed == result.records[1].seed
        assert again.estimate == result.records[1].estimate


class TestFiles:

    def test_byte_identical_outputs(self, tmp_path):
        cfg = tiny("mi", n=[100], d=[1], rho=[0.0, 0.6], runs=2)
        run_benchmark(cfg, tmp_path / "a.csv")
        run_benchmark(cfg, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
        assert (tmp_path / "a.csv.timings.csv").exists()
        assert (tmp_path / "a.csv.summary.csv").exists()

    def test_round_trip(self, tmp_path):
        result = run_benchmark(tiny("cit", n=[100], d=[1], d_z=[1], runs=1, n_permutations=3))
        path = write_records(result.records, tmp_path / "records.csv")
        header = path.read_text().splitlines()[0].split(",")
        assert header == RECORD_COLUMNS
        parsed = read_records(path)
        assert [r.model_dump(exclude={"wall_time"}) for r in parsed] == \
            [r.model_dump(exclude={"wall_time"}) for r in result.records]

    def test_floats_read_back_bit_exact(self, tmp_path):
        result = run_benchmark(tiny("mi", n=[100], d=[1], rho=[0.0], runs=1))
        record = result.records[0].model_copy(update={"estimate": 0.003585822053050469,
                                                      "ground_truth": 0.1 + 0.2})
        parsed, = read_records(write_records([record], tmp_path / "exact.csv"))
        assert parsed.estimate == 0.003585822053050469
        assert parsed.ground_truth == 0.1 + 0.2

    def test_metrics_file_for_cit(self, tmp_path):
        run_benchmark(tiny("cit", n=[100], d=[1], d_z=[1], runs=1, n_permutations=3), tmp_path / "cit.csv")
        assert (tmp_path / "cit.csv.metrics.csv").exists()

    def test_missing_output_directory(self, tmp_path):
        with pytest.raises(ConfigurationError):
            run_benchmark(tiny("mi", runs=1), tmp_path / "missing" / "out.csv")
