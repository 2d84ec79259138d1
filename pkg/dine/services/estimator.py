"""
DINE-Gaussian estimation of (conditional) mutual information.

Two conditional flows map X|Z and Y|Z to Gaussian surrogates X', Y'; the
estimate is the closed-form Gaussian MI of the surrogates' uncentered
sample covariances.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
from scipy.linalg import lapack

from dine.core.exceptions import ContractError, DataError, DineError, NumericalError
from dine.ml.data_preprocessing import DataPreprocessor, Dataset
from dine.ml.flow import ConditionalFlow, SurrogateSample, fit
from dine.schemas import EstimateResult, EstimatorConfig, SurrogateDiagnostics

logger = logging.getLogger(__name__)

JITTER_SCALE = 1e-10
PIVOT_FLOOR = 1e-12
SYMMETRY_TOL = 1e-12
BLOCK_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1] or entries.shape[0] == 0:
            raise ContractError(f"Covariance must be a non-empty square matrix, got {entries.shape}")
        if not np.allclose(entries, entries.T, rtol=0.0, atol=SYMMETRY_TOL):
            raise ContractError("Covariance matrix is not symmetric")
        object.__setattr__(self, "entries", entries)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass
class SurrogateFit:
    """Fitted flows and surrogates behind one estimate"""
    flow_x: ConditionalFlow
    flow_y: ConditionalFlow
    x_prime: SurrogateSample
    y_prime: SurrogateSample
    loss_trace: List[float]


def sample_covariance(samples) -> CovarianceMatrix:
    """Uncentered covariance (1/(n-1)) sum_i v_i v_i^T"""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    n = samples.shape[0]
    if n < 2:
        raise DataError(f"sample_covariance needs at least 2 rows, got {n}")
    cov = samples.T @ samples / (n - 1)
    return CovarianceMatrix(0.5 * (cov + cov.T))


def log_det(m: CovarianceMatrix) -> float:
    """ln det via the Cholesky factor: 2 * sum(ln diag(L))"""
    factor, info = lapack.dpotrf(m.entries, lower=1, clean=1)
    if info > 0:
        raise NumericalError(
            f"Matrix is not positive definite (pivot {info - 1} failed)", pivot=info - 1)
    if info < 0:
        raise NumericalError(f"Cholesky factorization rejected argument {-info}")
    diagonal = np.diag(factor)
    if np.any(diagonal * diagonal <= PIVOT_FLOOR):
        pivot = int(np.flatnonzero(diagonal * diagonal <= PIVOT_FLOOR)[0])
        raise NumericalError(f"Pivot {pivot} is below {PIVOT_FLOOR}", pivot=pivot)
    return float(2.0 * np.sum(np.log(diagonal)))


def stable_log_det(m: CovarianceMatrix) -> float:
    """log_det with a single diagonal-jitter retry"""
    try:
        return log_det(m)
    except NumericalError as exc:
        jitter = JITTER_SCALE * np.trace(m.entries) / m.dim
        logger.warning(f"Cholesky failed ({exc}); retrying with jitter {jitter:.3g}")
        return log_det(CovarianceMatrix(m.entries + jitter * np.eye(m.dim)))


def gaussian_mi(cov_x: CovarianceMatrix, cov_y: CovarianceMatrix, cov_xy: CovarianceMatrix) -> float:
    """1/2 (ln det Sx + ln det Sy - ln det Sxy)"""
    dx, dy = cov_x.dim, cov_y.dim
    if cov_xy.dim != dx + dy:
        raise ContractError(f"Joint covariance has dim {cov_xy.dim}, expected {dx + dy}")
    if not (np.allclose(cov_xy.entries[:dx, :dx], cov_x.entries, rtol=0.0, atol=BLOCK_TOL)
            and np.allclose(cov_xy.entries[dx:, dx:], cov_y.entries, rtol=0.0, atol=BLOCK_TOL)):
        raise ContractError("Diagonal blocks of the joint covariance do not match the marginals")
    return 0.5 * (stable_log_det(cov_x) + stable_log_det(cov_y) - stable_log_det(cov_xy))


def surrogate_mi(x_prime: np.ndarray, y_prime: np.ndarray) -> float:
    """Covariance and closed-form MI steps on a pair of surrogate matrices"""
    cov_xy = sample_covariance(np.concatenate([x_prime, y_prime], axis=1))
    return gaussian_mi(sample_covariance(x_prime), sample_covariance(y_prime), cov_xy)


def _stage(name: str, func, *args):
    try:
        return func(*args)
    except DineError as exc:
        exc.args = (f"{name}: {exc}",) + exc.args[1:]
        raise


def fit_surrogates(data: Dataset, cfg: Optional[EstimatorConfig] = None) -> SurrogateFit:
    """Standardize, fit both flows by maximum likelihood, map to surrogates"""
    cfg = cfg or EstimatorConfig()
    d_x, d_y, d_z = data.dims
    seed = cfg.train.seed
    standardized = DataPreprocessor().fit_transform(data)
    flow_x = ConditionalFlow(cfg.flow_config(d_x, d_z), name="x", seed=seed)
    flow_y = ConditionalFlow(cfg.flow_config(d_y, d_z), name="y", seed=seed + 1)

    logger.info(f"Fitting flows: n={data.n}, dims={data.dims}, seed={seed}")
    trained = _stage("fit", fit, flow_x, flow_y, standardized.x, standardized.y, standardized.z)
    x_prime = _stage("surrogate", flow_x.to_gaussian, standardized.x, standardized.z)
    y_prime = _stage("surrogate", flow_y.to_gaussian, standardized.y, standardized.z)
    return SurrogateFit(flow_x, flow_y, x_prime, y_prime, trained.loss_trace)


def _diagnostics(fitted: SurrogateFit) -> SurrogateDiagnostics:
    total = fitted.x_prime.values.size + fitted.y_prime.values.size
    clamped = (fitted.x_prime.clamped_fraction * fitted.x_prime.values.size
               + fitted.y_prime.clamped_fraction * fitted.y_prime.values.size) / total
    return SurrogateDiagnostics(
        x_mean=fitted.x_prime.column_means(), x_var=fitted.x_prime.column_variances(),
        y_mean=fitted.y_prime.column_means(), y_var=fitted.y_prime.column_variances(),
        clamp_fraction=clamped,
    )


def estimate_from_fit(data: Dataset, fitted: SurrogateFit, seed: int) -> EstimateResult:
    value = _stage("covariance", surrogate_mi, fitted.x_prime.values, fitted.y_prime.values)
    logger.info(f"Estimate {value:.5f} nats (n={data.n}, dims={data.dims})")
    return EstimateResult(value=value, n=data.n, dims=data.dims, loss_trace=fitted.loss_trace,
                          surrogate_diagnostics=_diagnostics(fitted), seed=seed)


def estimate_cmi(data: Dataset, cfg: Optional[EstimatorConfig] = None) -> EstimateResult:
    """I(X; Y | Z) in nats"""
    cfg = cfg or EstimatorConfig()
    if data.dims[2] < 1:
        raise DataError("estimate_cmi needs at least one conditioning column; use estimate_mi")
    return estimate_from_fit(data, fit_surrogates(data, cfg), cfg.train.seed)


def estimate_mi(x, y, cfg: Optional[EstimatorConfig] = None) -> EstimateResult:
    """I(X; Y) in nats; the flows see no conditioning variable"""
    cfg = cfg or EstimatorConfig()
    data = Dataset(x, y)
    return estimate_from_fit(data, fit_surrogates(data, cfg), cfg.train.seed)
