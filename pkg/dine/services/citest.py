"""
Permutation-based conditional independence test on DINE surrogates
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Iterable, List, Optional

import numpy as np

from dine.core.exceptions import ContractError
from dine.ml.data_preprocessing import Dataset
from dine.ml.flow import SurrogateSample
from dine.schemas import CITestConfig, CITestResult
from dine.services.estimator import estimate_from_fit, fit_surrogates, surrogate_mi

logger = logging.getLogger(__name__)


def bootstrap_rng(seed: int, index: int) -> np.random.Generator:
    """Generator of bootstrap ``index``, derived from the master seed alone"""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _values(sample) -> np.ndarray:
    values = sample.values if isinstance(sample, SurrogateSample) else np.asarray(sample, dtype=float)
    return values[:, None] if values.ndim == 1 else values


def permutation_null(surrogates_x, surrogates_y, n_permutations: int, seed: int,
                     workers: int = 1, permutations: Optional[Iterable[np.ndarray]] = None) -> List[float]:
    """
    Statistics of (x', permuted y') for each bootstrap. The flows are not
    refitted; only the covariance and closed-form steps are repeated.
    ``permutations`` overrides the seeded shuffles.
    """
    x_prime, y_prime = _values(surrogates_x), _values(surrogates_y)
    n = len(x_prime)
    if len(y_prime) != n:
        raise ContractError(f"Surrogates are not aligned: {n} vs {len(y_prime)} rows")
    if n_permutations < 1:
        raise ContractError("At least one permutation is required")
    fixed = None if permutations is None else [np.asarray(p) for p in permutations]
    if fixed is not None and len(fixed) != n_permutations:
        raise ContractError(f"Expected {n_permutations} permutations, got {len(fixed)}")

    def statistic(index: int) -> float:
        order = fixed[index] if fixed is not None else bootstrap_rng(seed, index).permutation(n)
        return surrogate_mi(x_prime, y_prime[order])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            return list(executor.map(statistic, range(n_permutations)))
    return [statistic(i) for i in range(n_permutations)]


def p_value(statistic: float, permuted: List[float]) -> float:
    """(1/B) * #{i : I <= I_i}"""
    permuted = np.asarray(permuted, dtype=float)
    return float(np.count_nonzero(statistic <= permuted)) / len(permuted)


def decide(p: float, alpha: float) -> str:
    return "dependent" if p <= alpha else "independent"


def ci_test(data: Dataset, cfg: Optional[CITestConfig] = None) -> CITestResult:
    cfg = cfg or CITestConfig()
    if data.dims[2] < 1:
        raise ContractError("ci_test needs at least one conditioning column")
    estimator_cfg = cfg.estimator.with_seed(cfg.seed)
    fitted = fit_surrogates(data, estimator_cfg)
    estimate = estimate_from_fit(data, fitted, cfg.seed)
    permuted = permutation_null(fitted.x_prime, fitted.y_prime, cfg.n_permutations, cfg.seed,
                                workers=cfg.workers)
    p = p_value(estimate.value, permuted)
    decision = decide(p, cfg.alpha)
    logger.info(f"CI test: statistic={estimate.value:.5f}, p={p:.3f}, decision={decision}")
    return CITestResult(statistic=estimate.value, p_value=p, permuted_stats=permuted,
                        decision=decision, alpha=cfg.alpha, seed=cfg.seed)
