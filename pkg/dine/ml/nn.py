"""
Parameter storage and one-hidden-layer networks
"""

from dataclasses import dataclass, field
from collections.abc import Mapping
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from dine.core.exceptions import ConfigurationError
from dine.ml import autodiff as ad

Layout = Tuple[Tuple[str, Tuple[int, ...]], ...]

OUTPUT_HEADS = ("linear", "softmax")


@dataclass(eq=False)
class ParameterVector:
    """Flat vector of real scalars with a named-tensor layout"""
    values: np.ndarray
    layout: Layout
    _slots: Dict[str, Tuple[int, int, Tuple[int, ...]]] = field(init=False, repr=False)

    def __post_init__(self):
        self.layout = tuple((str(name), tuple(int(n) for n in shape)) for name, shape in self.layout)
        self.values = np.array(self.values, dtype=float).ravel()
        self._slots = {}
        offset = 0
        for name, shape in self.layout:
            if name in self._slots:
                raise ConfigurationError(f"Duplicate tensor name in layout: {name}")
            size = int(np.prod(shape, dtype=int))
            self._slots[name] = (offset, offset + size, shape)
            offset += size
        if offset != self.values.size:
            raise ConfigurationError(
                f"Layout describes {offset} scalars but {self.values.size} were given")

    @classmethod
    def zeros(cls, layout: Iterable[Tuple[str, Sequence[int]]]) -> "ParameterVector":
        layout = tuple((name, tuple(shape)) for name, shape in layout)
        size = sum(int(np.prod(shape, dtype=int)) for _, shape in layout)
        return cls(np.zeros(size), layout)

    @classmethod
    def concat(cls, vectors: Sequence["ParameterVector"]) -> "ParameterVector":
        layout = tuple(item for v in vectors for item in v.layout)
        values = np.concatenate([v.values for v in vectors]) if vectors else np.zeros(0)
        return cls(values, layout)

    @property
    def size(self) -> int:
        return self.values.size

    def names(self) -> List[str]:
        return [name for name, _ in self.layout]

    def view(self, name: str) -> np.ndarray:
        """Writable array view of the named tensor"""
        start, stop, shape = self._slot(name)
        return self.values[start:stop].reshape(shape)

    def _slot(self, name: str):
        try:
            return self._slots[name]
        except KeyError:
            raise ConfigurationError(f"Unknown parameter tensor: {name}") from None

    def like(self, values: np.ndarray) -> "ParameterVector":
        return ParameterVector(values, self.layout)

    def copy(self) -> "ParameterVector":
        return self.like(self.values.copy())

    def select(self, prefix: str) -> "ParameterVector":
        """Sub-vector made of the tensors whose name starts with ``prefix``"""
        layout = tuple(item for item in self.layout if item[0].startswith(prefix))
        values = [self.values[self._slots[name][0]:self._slots[name][1]] for name, _ in layout]
        return ParameterVector(np.concatenate(values) if values else np.zeros(0), layout)

    def assign(self, other: "ParameterVector") -> None:
        """Copy every tensor of ``other`` into the tensor of the same name"""
        for name, shape in other.layout:
            target = self.view(name)
            if target.shape != shape:
                raise ConfigurationError(f"Shape mismatch for {name}: {target.shape} vs {shape}")
            target[...] = other.view(name)

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))

    def bind(self, requires_grad: bool = True) -> "BoundParameters":
        return BoundParameters(self, requires_grad)


class BoundParameters(Mapping):
    """Named tensors sliced out of one leaf of the differentiable graph"""

    def __init__(self, params: ParameterVector, requires_grad: bool = True):
        self.params = params
        self.flat = ad.Tensor(params.values.copy(), requires_grad=requires_grad)
        self._cache: Dict[str, ad.Tensor] = {}

    def __getitem__(self, name: str) -> ad.Tensor:
        if name not in self._cache:
            start, stop, shape = self.params._slot(name)
            self._cache[name] = self.flat[start:stop].reshape(shape)
        return self._cache[name]

    def __iter__(self):
        return iter(self.params.names())

    def __len__(self):
        return len(self.params.layout)


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


@dataclass(frozen=True)
class MLP:
    """Feed-forward network with exactly one rectified hidden layer"""
    name: str
    input_dim: int
    hidden_dim: int
    output_dim: int
    output_head: str = "linear"

    def __post_init__(self):
        for attr in ("input_dim", "hidden_dim", "output_dim"):
            if getattr(self, attr) < 1:
                raise ConfigurationError(f"{self.name}: {attr} must be positive")
        if self.output_head not in OUTPUT_HEADS:
            raise ConfigurationError(f"{self.name}: unknown output head {self.output_head!r}")

    def layout(self) -> Layout:
        return (
            (f"{self.name}.W1", (self.input_dim, self.hidden_dim)),
            (f"{self.name}.b1", (self.hidden_dim,)),
            (f"{self.name}.W2", (self.hidden_dim, self.output_dim)),
            (f"{self.name}.b2", (self.output_dim,)),
        )

    def initialize(self, params: ParameterVector, rng: np.random.Generator) -> None:
        """Glorot-uniform weights, zero biases"""
        params.view(f"{self.name}.W1")[...] = glorot_uniform(rng, self.input_dim, self.hidden_dim)
        params.view(f"{self.name}.b1")[...] = 0.0
        params.view(f"{self.name}.W2")[...] = glorot_uniform(rng, self.hidden_dim, self.output_dim)
        params.view(f"{self.name}.b2")[...] = 0.0

    def logits(self, weights: Mapping[str, ad.Tensor], inputs: ad.Tensor) -> ad.Tensor:
        hidden = ad.relu(inputs @ weights[f"{self.name}.W1"] + weights[f"{self.name}.b1"])
        return hidden @ weights[f"{self.name}.W2"] + weights[f"{self.name}.b2"]

    def __call__(self, weights: Mapping[str, ad.Tensor], inputs: ad.Tensor) -> ad.Tensor:
        """Forward pass on a batch ``inputs`` of shape (batch, input_dim)"""
        out = self.logits(weights, inputs)
        return ad.softmax(out) if self.output_head == "softmax" else out


def mlp_forward(net: MLP, params: ParameterVector, inputs) -> np.ndarray:
    """Evaluate ``net`` on a single input vector"""
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 1 or inputs.size != net.input_dim:
        raise ConfigurationError(
            f"{net.name}: expected input of length {net.input_dim}, got shape {inputs.shape}")
    out = net(params.bind(requires_grad=False), ad.Tensor(inputs[None, :]))
    return out.data[0]
