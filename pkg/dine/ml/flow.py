"""
Conditional autoregressive flow with Gaussian-mixture-CDF transformers.

Dimension i of x is mapped to u_i = sum_j w_ij Phi((x_i - mu_ij) / sigma_ij),
where the mixture parameters are produced by networks reading (x_<i, z).
The base distribution is uniform on (0, 1)^d, so the log-density of x is the
log-determinant of the (triangular) Jacobian, i.e. the sum of the mixture
log-densities. Applying Phi^-1 to u gives standard-Gaussian surrogates.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from dine.core.exceptions import ConfigurationError, DataError, NumericalError, TrainingError
from dine.ml import autodiff as ad
from dine.ml.nn import MLP, ParameterVector, glorot_uniform
from dine.ml.optim import Adam
from dine.ml.special import LOG_SQRT_2PI, std_normal_icdf
from dine.schemas import FlowConfig

logger = logging.getLogger(__name__)

U_CLAMP = 1e-7
LOG_VAR_BOUNDS = (-7.0, 7.0)
MEAN_INIT_SPREAD = 2.0
SNAPSHOT_FORMAT = "dine-flow-snapshot"
SNAPSHOT_VERSION = 1


@dataclass
class SurrogateSample:
    """Rows x' = Phi^-1(clamp(u)); designed standard-Gaussian marginals"""
    values: np.ndarray
    clamped_fraction: float = 0.0

    def column_means(self) -> List[float]:
        return self.values.mean(axis=0).tolist()

    def column_variances(self) -> List[float]:
        return self.values.var(axis=0, ddof=1).tolist() if len(self.values) > 1 else []


@dataclass
class FitResult:
    loss_trace: List[float] = field(default_factory=list)
    steps: int = 0


class ConditionalFlow:
    """One autoregressive layer; parameters live in a single ParameterVector"""

    def __init__(self, config: FlowConfig, name: str = "x", seed: Optional[int] = None):
        self.config = config
        self.name = name
        d_h, k = config.hidden_dim, config.n_components
        self.conditioners: List[Optional[MLP]] = []
        self.weight_heads: List[MLP] = []
        self.mean_heads: List[MLP] = []
        self.log_var_heads: List[MLP] = []
        for i in range(config.data_dim):
            width = i + config.cond_dim
            self.conditioners.append(MLP(f"{name}.c{i}", width, d_h, d_h) if width else None)
            self.weight_heads.append(MLP(f"{name}.w{i}", d_h, d_h, k, "softmax"))
            self.mean_heads.append(MLP(f"{name}.mu{i}", d_h, d_h, k))
            self.log_var_heads.append(MLP(f"{name}.lv{i}", d_h, d_h, k))
        self.params = ParameterVector.zeros(self.layout())
        self.initialize(np.random.default_rng(config.train.seed if seed is None else seed))

    @property
    def dim(self) -> int:
        return self.config.data_dim

    def _context_name(self, i: int) -> str:
        return f"{self.name}.c{i}.h"

    def layout(self):
        layout = []
        for i in range(self.dim):
            conditioner = self.conditioners[i]
            if conditioner is None:
                layout.append((self._context_name(i), (1, self.config.hidden_dim)))
            else:
                layout.extend(conditioner.layout())
            for head in (self.weight_heads[i], self.mean_heads[i], self.log_var_heads[i]):
                layout.extend(head.layout())
        return tuple(layout)

    def initialize(self, rng: np.random.Generator) -> None:
        k = self.config.n_components
        for i in range(self.dim):
            conditioner = self.conditioners[i]
            if conditioner is None:
                self.params.view(self._context_name(i))[...] = glorot_uniform(
                    rng, 1, self.config.hidden_dim)
            else:
                conditioner.initialize(self.params, rng)
            for head in (self.weight_heads[i], self.mean_heads[i], self.log_var_heads[i]):
                head.initialize(self.params, rng)
            # component means start spread over the standardized support
            spread = np.linspace(-MEAN_INIT_SPREAD, MEAN_INIT_SPREAD, k) if k > 1 else np.zeros(1)
            self.params.view(f"{self.mean_heads[i].name}.b2")[...] = spread

    # -- differentiable core ---------------------------------------------

    def _check_batch(self, x, z) -> Tuple[np.ndarray, np.ndarray, bool]:
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise ConfigurationError(f"flow {self.name}: expected {self.dim} columns, got {x.shape}")
        if self.config.cond_dim == 0:
            z = np.zeros((x.shape[0], 0))
        else:
            z = np.asarray(z, dtype=float)
            z = z[None, :] if z.ndim == 1 else z
            if z.shape != (x.shape[0], self.config.cond_dim):
                raise ConfigurationError(
                    f"flow {self.name}: expected conditioning of shape "
                    f"{(x.shape[0], self.config.cond_dim)}, got {z.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
            raise DataError(f"flow {self.name}: non-finite input")
        return x, z, single

    def mixture(self, weights, x: np.ndarray, z: np.ndarray, i: int):
        """(log w, mu, ln sigma^2) of dimension i, each of shape (batch or 1, k)"""
        conditioner = self.conditioners[i]
        if conditioner is None:
            h = weights[self._context_name(i)]
        else:
            h = conditioner(weights, ad.Tensor(np.concatenate([x[:, :i], z], axis=1)))
        log_w = ad.log_softmax(self.weight_heads[i].logits(weights, h))
        mu = self.mean_heads[i](weights, h)
        log_var = ad.clip(self.log_var_heads[i](weights, h), *LOG_VAR_BOUNDS)
        return log_w, mu, log_var

    def forward(self, weights, x: np.ndarray, z: np.ndarray, with_u: bool = True):
        """Returns (u of shape (batch, d) or None, log|det J| of shape (batch,))"""
        us, log_det = [], None
        for i in range(self.dim):
            log_w, mu, log_var = self.mixture(weights, x, z, i)
            t = (ad.Tensor(x[:, i:i + 1]) - mu) * ad.exp(log_var * -0.5)
            log_pdf = ad.logsumexp(log_w + (t * t) * -0.5 - LOG_SQRT_2PI - log_var * 0.5, axis=1)
            log_det = log_pdf if log_det is None else log_det + log_pdf
            if with_u:
                us.append((ad.exp(log_w) * ad.ndtr(t)).sum(axis=1).reshape(-1, 1))
        u = ad.concat(us, axis=1) if with_u else None
        return u, log_det

    def log_likelihood(self, weights, x: np.ndarray, z: np.ndarray) -> ad.Tensor:
        """Mean log-density over a batch, on the tape"""
        _, log_det = self.forward(weights, x, z, with_u=False)
        return log_det.mean()

    # -- numpy evaluation ------------------------------------------------

    def transform(self, x, z=None) -> Tuple[np.ndarray, np.ndarray]:
        """Map x to u in (0,1)^d; also returns log|det J| per row"""
        x, z, single = self._check_batch(x, z)
        u, log_det = self.forward(self.params.bind(requires_grad=False), x, z)
        if single:
            return u.data[0], float(log_det.data[0])
        return u.data, log_det.data

    def log_density(self, x, z=None):
        """ln p(x|z); the uniform base contributes 0"""
        x, z, single = self._check_batch(x, z)
        _, log_det = self.forward(self.params.bind(requires_grad=False), x, z, with_u=False)
        return float(log_det.data[0]) if single else log_det.data

    def to_gaussian(self, x, z=None) -> SurrogateSample:
        u, _ = self.transform(np.atleast_2d(x), z)
        clamped = np.clip(u, U_CLAMP, 1.0 - U_CLAMP)
        hits = float(np.mean((u <= U_CLAMP) | (u >= 1.0 - U_CLAMP))) if u.size else 0.0
        return SurrogateSample(std_normal_icdf(clamped), hits)

    def invert_transform(self, u, z=None, max_iter: int = 200) -> np.ndarray:
        """Solve transform(x, z).u = u coordinate by coordinate"""
        u = np.asarray(u, dtype=float)
        if u.shape != (self.dim,) or np.any(u <= 0.0) or np.any(u >= 1.0):
            raise ConfigurationError(f"flow {self.name}: u must be a vector in (0,1)^{self.dim}")
        _, z, _ = self._check_batch(np.zeros(self.dim), z)
        weights = self.params.bind(requires_grad=False)
        x = np.zeros((1, self.dim))
        for i in range(self.dim):
            log_w, mu, log_var = (t.data.ravel() for t in self.mixture(weights, x, z, i))
            w, sd = np.exp(log_w), np.exp(0.5 * log_var)

            def residual(value, w=w, mu=mu, sd=sd, target=u[i]):
                return float(np.dot(w, special.ndtr((value - mu) / sd))) - target

            low, high = float(np.min(mu - 10 * sd)), float(np.max(mu + 10 * sd))
            for _ in range(64):
                if residual(low) < 0 < residual(high):
                    break
                low, high = low - (high - low), high + (high - low)
            else:
                raise NumericalError(f"flow {self.name}: could not bracket u[{i}]={u[i]}")
            try:
                x[0, i] = optimize.bisect(residual, low, high, xtol=1e-13, maxiter=max_iter)
            except RuntimeError as exc:
                raise NumericalError(f"flow {self.name}: bisection failed on coordinate {i}: {exc}")
        return x[0]


# -- training -----------------------------------------------------------------

def train_flows(pairs: Sequence[Tuple[ConditionalFlow, np.ndarray]], z: np.ndarray,
                train=None) -> FitResult:
    """
    Maximize the summed mean log-likelihood of every (flow, data) pair with a
    single Adam optimizer over the union of their parameters.
    """
    flows = [flow for flow, _ in pairs]
    train = flows[0].config.train if train is None else train
    names = [flow.name for flow in flows]
    if len(set(names)) != len(names):
        raise ConfigurationError(f"Flows trained jointly need distinct names, got {names}")
    n = len(z)
    checked = [flow._check_batch(data, z)[:2] for flow, data in pairs]
    joint = ParameterVector.concat([flow.params for flow in flows])
    optimizer = Adam(joint, learning_rate=train.learning_rate)
    rng = np.random.default_rng(train.seed)
    result = FitResult()

    def objective(weights, rows=None):
        total = None
        for flow, (x, zz) in zip(flows, checked):
            if rows is not None:
                x, zz = x[rows], zz[rows]
            ll = flow.log_likelihood(weights, x, zz)
            total = ll if total is None else total + ll
        return -total

    logger.info(f"Training {len(flows)} flow(s) on {n} rows for {train.epochs} epochs")
    for epoch in range(train.epochs):
        order = rng.permutation(n)
        for start in range(0, n, train.batch_size):
            rows = order[start:start + train.batch_size]
            try:
                _, grads = ad.gradient(lambda w: objective(w, rows), optimizer.params)
                optimizer.step(grads)
            except TrainingError as exc:
                raise TrainingError(f"epoch {epoch}: {exc}", value=exc.value, epoch=epoch) from exc
            result.steps += 1
        loss = float(objective(optimizer.params.bind(requires_grad=False)).data)
        if not np.isfinite(loss):
            raise TrainingError(f"epoch {epoch}: non-finite loss {loss}", value=loss, epoch=epoch)
        result.loss_trace.append(loss)
        logger.debug(f"epoch {epoch}: mean negative log-likelihood {loss:.5f}")

    for flow in flows:
        flow.params.assign(optimizer.params.select(f"{flow.name}."))
    if result.loss_trace:
        logger.info(f"Training finished, final loss {result.loss_trace[-1]:.5f}")
    return result


def fit(flow_x: ConditionalFlow, flow_y: ConditionalFlow, x: np.ndarray, y: np.ndarray,
        z: np.ndarray) -> FitResult:
    """Joint maximum-likelihood fit of the X and Y flows"""
    return train_flows([(flow_x, x), (flow_y, y)], z, flow_x.config.train)


def fit_flow(flow: ConditionalFlow, x: np.ndarray, z: Optional[np.ndarray] = None) -> FitResult:
    x = np.asarray(x, dtype=float)
    z = np.zeros((len(x), 0)) if z is None else np.asarray(z, dtype=float)
    return train_flows([(flow, x)], z, flow.config.train)


# -- snapshots ----------------------------------------------------------------

def save_snapshot(flow: ConditionalFlow, path) -> Path:
    path = Path(path)
    payload = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "name": flow.name,
        "config": flow.config.model_dump(),
        "tensors": [
            {"name": name, "shape": list(shape), "values": flow.params.view(name).ravel().tolist()}
            for name, shape in flow.params.layout
        ],
    }
    path.write_text(json.dumps(payload))
    return path


def load_snapshot(path) -> ConditionalFlow:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != SNAPSHOT_FORMAT or payload.get("version") != SNAPSHOT_VERSION:
        raise ConfigurationError(
            f"Unsupported snapshot {payload.get('format')!r} version {payload.get('version')!r}")
    flow = ConditionalFlow(FlowConfig(**payload["config"]), name=payload["name"])
    for tensor in payload["tensors"]:
        target = flow.params.view(tensor["name"])
        if list(target.shape) != tensor["shape"]:
            raise ConfigurationError(f"Snapshot tensor {tensor['name']} has the wrong shape")
        target[...] = np.asarray(tensor["values"], dtype=float).reshape(target.shape)
    return flow
