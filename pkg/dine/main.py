"""
Command-line entry point: estimate, citest, benchmark, generate.

JSON results go to standard output, logs to standard error.
Exit codes: 0 success, 2 usage or data error, 3 numerical failure.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from dine.core import config
from dine.core.exceptions import DineError, NumericalError, TrainingError
from dine.ml.data_preprocessing import read_dataset
from dine.ml.flow import save_snapshot
from dine.schemas import (BIJECTIONS, Z_FAMILIES, BenchmarkConfig, CITestConfig, EstimatorConfig,
                          ScenarioConfig, TrainConfig)
from dine.services.benchmark import run_benchmark
from dine.services.citest import ci_test
from dine.services.estimator import estimate_from_fit, fit_surrogates
from dine.services.scenario import generate, validate_scenario_config, write_scenario

logger = logging.getLogger("dine")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3


def _columns(value: Optional[str]) -> Optional[List[str]]:
    """None keeps the default columns; an empty string selects none"""
    if value is None:
        return None
    return [c.strip() for c in value.split(",") if c.strip()]


def _add_data_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="CSV with a header row")
    parser.add_argument("--x-cols", help="Comma-separated X columns (default x0, x1, ...)")
    parser.add_argument("--y-cols", help="Comma-separated Y columns (default y0, y1, ...)")
    parser.add_argument("--z-cols", help="Comma-separated Z columns (default z0, z1, ...)")


def _add_flow_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-components", type=int, default=16)
    parser.add_argument("--hidden-dim", type=int, default=4)
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--lr", type=float, default=0.01)
    parser.add_argument("--seed", type=int, default=0)


def _add_test_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--permutations", type=int, default=100, help="Number of permutations B")
    parser.add_argument("--alpha", type=float, default=0.05)


def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--z-family", choices=Z_FAMILIES + ("random",), default="random")
    parser.add_argument("--f", dest="f_choice", choices=BIJECTIONS + ("random",), default="random")
    parser.add_argument("--g", dest="g_choice", choices=BIJECTIONS + ("random",), default="random")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dine", description="Gaussian-surrogate CMI estimation and CI testing")
    verbs = parser.add_subparsers(dest="command", required=True)

    estimate = verbs.add_parser("estimate", help="Estimate I(X;Y|Z), or I(X;Y) without Z columns")
    _add_data_args(estimate)
    _add_flow_args(estimate)
    estimate.add_argument("--snapshot", nargs="?", const=config.DINE_SNAPSHOT_DIR or ".",
                          help="Directory for flow snapshots (default $DINE_SNAPSHOT_DIR)")

    citest = verbs.add_parser("citest", help="Permutation test of X independent of Y given Z")
    _add_data_args(citest)
    _add_flow_args(citest)
    _add_test_args(citest)
    citest.add_argument("--workers", type=int, default=config.DINE_WORKERS)

    benchmark = verbs.add_parser("benchmark", help="Run a synthetic benchmark grid")
    benchmark.add_argument("--task", choices=("mi", "cmi", "cit"), required=True)
    benchmark.add_argument("--n", type=int, nargs="+", default=[1000])
    benchmark.add_argument("--d", type=int, nargs="+", default=[1])
    benchmark.add_argument("--rho", type=float, nargs="+", default=[0.0])
    benchmark.add_argument("--d-z", type=int, nargs="+", default=[1])
    benchmark.add_argument("--runs", type=int, default=10)
    benchmark.add_argument("--workers", type=int, default=config.DINE_WORKERS)
    benchmark.add_argument("--output", required=True)
    _add_flow_args(benchmark)
    _add_test_args(benchmark)
    _add_scenario_args(benchmark)

    gen = verbs.add_parser("generate", help="Write a synthetic scenario CSV and its .meta sidecar")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--d", type=int, default=1)
    gen.add_argument("--d-z", type=int, default=0)
    gen.add_argument("--rho", type=float, required=True)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--output", required=True)
    _add_scenario_args(gen)
    return parser


def _estimator_config(args) -> EstimatorConfig:
    train = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, learning_rate=args.lr, seed=args.seed)
    return EstimatorConfig(n_components=args.n_components, hidden_dim=args.hidden_dim, train=train)


def _load(args):
    return read_dataset(args.input, _columns(args.x_cols), _columns(args.y_cols), _columns(args.z_cols))


def cmd_estimate(args) -> dict:
    data = _load(args)
    fitted = fit_surrogates(data, _estimator_config(args))
    result = estimate_from_fit(data, fitted, args.seed)
    output = {
        "estimate": result.value,
        "n": result.n,
        "dims": list(result.dims),
        "diagnostics": result.surrogate_diagnostics.model_dump(),
        "final_loss": result.loss_trace[-1] if result.loss_trace else None,
        "seed": result.seed,
    }
    if args.snapshot:
        directory = Path(args.snapshot)
        directory.mkdir(parents=True, exist_ok=True)
        output["snapshots"] = [str(save_snapshot(flow, directory / f"flow_{flow.name}.json"))
                               for flow in (fitted.flow_x, fitted.flow_y)]
    return output


def cmd_citest(args) -> dict:
    data = _load(args)
    cfg = CITestConfig(n_permutations=args.permutations, alpha=args.alpha, seed=args.seed,
                       workers=args.workers, estimator=_estimator_config(args))
    result = ci_test(data, cfg)
    return {"statistic": result.statistic, "p_value": result.p_value, "decision": result.decision,
            "alpha": result.alpha, "permutations": len(result.permuted_stats), "seed": result.seed}


def cmd_benchmark(args) -> dict:
    cfg = BenchmarkConfig(task=args.task, n=args.n, d=args.d, rho=args.rho, d_z=args.d_z, runs=args.runs,
                          seed=args.seed, workers=args.workers, n_permutations=args.permutations,
                          alpha=args.alpha, z_family=args.z_family, f_choice=args.f_choice,
                          g_choice=args.g_choice, estimator=_estimator_config(args))
    result = run_benchmark(cfg, args.output)
    output = {"task": cfg.task, "records": len(result.records), "output": args.output}
    if result.metrics:
        output["metrics"] = [m.model_dump() for m in result.metrics]
    if result.summaries:
        output["summary"] = [s.model_dump() for s in result.summaries]
    return output


def cmd_generate(args) -> dict:
    cfg = ScenarioConfig(n=args.n, d=args.d, d_z=args.d_z, rho=args.rho, z_family=args.z_family,
                         f_choice=args.f_choice, g_choice=args.g_choice, seed=args.seed)
    for warning in validate_scenario_config(cfg)["warnings"]:
        logger.warning(warning)
    scenario = generate(cfg)
    path = write_scenario(scenario, args.output)
    return {"output": str(path), "ground_truth_cmi": scenario.ground_truth_cmi,
            "config": scenario.config.model_dump(), "clip_events": scenario.clip_events}


COMMANDS = {
    "estimate": cmd_estimate,
    "citest": cmd_citest,
    "benchmark": cmd_benchmark,
    "generate": cmd_generate,
}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=config.DINE_LOG_LEVEL.upper(), stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        output = COMMANDS[args.command](args)
    except (TrainingError, NumericalError) as exc:
        logger.error(f"Numerical failure: {exc}")
        return EXIT_NUMERICAL
    except (DineError, ValidationError, OSError) as exc:
        logger.error(str(exc))
        return EXIT_USAGE
    sys.stdout.write(json.dumps(output, sort_keys=True) + "\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
