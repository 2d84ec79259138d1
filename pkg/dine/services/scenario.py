import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict

import numpy as np
from scipy import special, stats

from dine.core.exceptions import DomainError, GenerationError, OracleError
from dine.ml.data_preprocessing import Dataset, write_dataset
from dine.schemas import BIJECTIONS, Z_FAMILIES, ScenarioConfig

logger = logging.getLogger(__name__)

LINEAR_SLOPE = 2.0
POSITIVE_SHIFT = 5.0
SHIFT_CLIP = 4.9
Z_VARIANCE = 0.01
Z_UNIFORM_HALF_WIDTH = 0.01

BIJECTION_FUNCTIONS = {
    "linear": lambda v: LINEAR_SLOPE * v,
    "cube": lambda v: v ** 3,
    "negexp": lambda v: np.exp(-v),
    "reciprocal": lambda v: 1.0 / v,
    "log": np.log,
    "sigmoid": special.expit,
}
NEEDS_POSITIVE = ("reciprocal", "log")


@dataclass
class GeneratedScenario:
    dataset: Dataset
    ground_truth_cmi: float
    config: ScenarioConfig
    a: np.ndarray
    b: np.ndarray
    x_prime: np.ndarray
    y_prime: np.ndarray
    clip_events: int = 0


def ground_truth_cmi(rho: float, d: int) -> float:
    """-(d/2) ln(1 - rho^2)"""
    if not -1.0 < rho < 1.0:
        raise DomainError(f"Correlation must lie strictly inside (-1, 1), got {rho}")
    if d < 1:
        raise DomainError(f"Dimension must be positive, got {d}")
    return float(-0.5 * d * np.log1p(-rho * rho))


def draw_dependent_rho(rng: np.random.Generator) -> float:
    """Uniform on [-0.99, -0.1] U [0.1, 0.99]"""
    magnitude = rng.uniform(0.1, 0.99)
    return float(magnitude if rng.random() < 0.5 else -magnitude)


def validate_scenario_config(cfg: ScenarioConfig) -> Dict[str, Any]:
    """Soft checks on a scenario, in addition to the schema constraints"""
    warnings = []
    suggestions = []
    if abs(cfg.rho) > 0.95:
        warnings.append(f"|rho| = {abs(cfg.rho)} gives a large ground truth "
                        f"({ground_truth_cmi(cfg.rho, cfg.d):.3f} nats)")
    if cfg.n < 50 * (cfg.d + cfg.d_z):
        warnings.append(f"n = {cfg.n} is small for {cfg.d + cfg.d_z} total dimensions")
        suggestions.append("Consider n >= 50 per dimension")
    if cfg.d_z == 0 and cfg.z_family != "random":
        warnings.append("z_family is ignored when d_z = 0")
    return {"valid": True, "warnings": warnings, "suggestions": suggestions}


def apply_bijection(name: str, v: np.ndarray):
    """Scale/translate standardized input for ``name`` and apply it"""
    clipped = 0
    if name in NEEDS_POSITIVE:
        outside = np.abs(v) > SHIFT_CLIP
        clipped = int(np.count_nonzero(outside))
        v = np.clip(v, -SHIFT_CLIP, SHIFT_CLIP) + POSITIVE_SHIFT
        if np.any(v <= 0):
            raise GenerationError(f"{name} received a non-positive input after shifting")
    out = BIJECTION_FUNCTIONS[name](v)
    if not np.all(np.isfinite(out)):
        raise GenerationError(f"{name} produced non-finite values")
    return out, clipped


def _draw_z(rng: np.random.Generator, family: str, n: int, d_z: int) -> np.ndarray:
    if family == "uniform":
        return rng.uniform(-Z_UNIFORM_HALF_WIDTH, Z_UNIFORM_HALF_WIDTH, size=(n, d_z))
    if family == "normal":
        return rng.normal(0.0, np.sqrt(Z_VARIANCE), size=(n, d_z))
    # variance 2 b^2 = 0.01
    return rng.laplace(0.0, np.sqrt(Z_VARIANCE / 2.0), size=(n, d_z))


def _standardize(v: np.ndarray) -> np.ndarray:
    scale = v.std(axis=0)
    if np.any(scale == 0):
        raise GenerationError("Pre-activation column has zero variance")
    return (v - v.mean(axis=0)) / scale


def generate(cfg: ScenarioConfig) -> GeneratedScenario:
    """X = f(AZ + X'), Y = g(BZ + Y') with (X', Y') jointly Gaussian"""
    rng = np.random.default_rng(cfg.seed)
    resolved = cfg.model_copy(update={
        "z_family": str(rng.choice(Z_FAMILIES)) if cfg.z_family == "random" else cfg.z_family,
        "f_choice": str(rng.choice(BIJECTIONS)) if cfg.f_choice == "random" else cfg.f_choice,
        "g_choice": str(rng.choice(BIJECTIONS)) if cfg.g_choice == "random" else cfg.g_choice,
    })
    n, d, d_z = cfg.n, cfg.d, cfg.d_z

    eye = np.eye(d)
    cov = np.block([[eye, cfg.rho * eye], [cfg.rho * eye, eye]])
    latent = rng.standard_normal((n, 2 * d)) @ np.linalg.cholesky(cov).T
    x_prime, y_prime = latent[:, :d], latent[:, d:]

    z = _draw_z(rng, resolved.z_family, n, d_z)
    a = rng.standard_normal((d, d_z))
    b = rng.standard_normal((d, d_z))

    x, clipped_x = apply_bijection(resolved.f_choice, _standardize(z @ a.T + x_prime))
    y, clipped_y = apply_bijection(resolved.g_choice, _standardize(z @ b.T + y_prime))
    clip_events = clipped_x + clipped_y
    if clip_events:
        logger.warning(f"Clipped {clip_events} pre-activation values to +/-{SHIFT_CLIP}")

    return GeneratedScenario(
        dataset=Dataset(x, y, z),
        ground_truth_cmi=ground_truth_cmi(cfg.rho, d),
        config=resolved,
        a=a,
        b=b,
        x_prime=x_prime,
        y_prime=y_prime,
        clip_events=clip_events,
    )


def write_scenario(scenario: GeneratedScenario, path) -> Path:
    """Dataset CSV plus a ``.meta`` sidecar of key=value lines"""
    path = write_dataset(scenario.dataset, path)
    meta = dict(scenario.config.model_dump())
    meta["ground_truth_cmi"] = repr(float(scenario.ground_truth_cmi))
    meta["clip_events"] = scenario.clip_events
    sidecar = path.with_name(path.name + ".meta")
    sidecar.write_text("".join(f"{key}={value}\n" for key, value in meta.items()), encoding="utf-8")
    return path


def read_metadata(path) -> Dict[str, str]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return dict(line.split("=", 1) for line in lines if "=" in line)


def oracle_mi_gaussian_2d(samples_x, samples_y, bins: int = 32) -> float:
    """
    Histogram plug-in MI on an equal-mass bins x bins grid, with the
    Miller-Madow bias correction. Test-only cross-check for 1-D pairs.
    """
    x = np.asarray(samples_x, dtype=float).ravel()
    y = np.asarray(samples_y, dtype=float).ravel()
    n = x.size
    if y.size != n:
        raise OracleError("Oracle inputs must have the same length")
    if n < 100:
        raise OracleError(f"Oracle needs at least 100 samples, got {n}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise OracleError("Oracle input column is constant")

    def equal_mass_bins(values):
        ranks = stats.rankdata(values, method="average")
        return np.minimum(((ranks - 1) * bins / n).astype(int), bins - 1)

    joint = np.bincount(equal_mass_bins(x) * bins + equal_mass_bins(y), minlength=bins * bins)
    p_xy = joint.reshape(bins, bins) / n
    p_x, p_y = p_xy.sum(axis=1), p_xy.sum(axis=0)
    mask = p_xy > 0
    plug_in = float(np.sum(p_xy[mask] * np.log(p_xy[mask] / np.outer(p_x, p_y)[mask])))
    occupied = np.count_nonzero(mask) - np.count_nonzero(p_x) - np.count_nonzero(p_y) + 1
    return plug_in - occupied / (2.0 * n)
