import logging
import zlib
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, MutableMapping, Optional, Tuple

import numpy as np
from scipy.special import expit

from src.utils.errors import ConfigurationError, ContractViolation

ACTIVATIONS = ('softplus', 'relu', 'sigmoid', 'none')
PRECISIONS = {'float32': np.float32, 'float64': np.float64}

_dtype = np.float32


def set_precision(name: str) -> None:
    """Select the global numeric mode (float64 for checks, float32 for training)"""
    global _dtype
    if name not in PRECISIONS:
        raise ConfigurationError(f"Unknown precision '{name}', expected one of {list(PRECISIONS)}")
    _dtype = PRECISIONS[name]


def get_dtype():
    return _dtype


def softplus(x: np.ndarray, beta: float = 100.0) -> np.ndarray:
    return np.logaddexp(0, beta * x) / beta


def activate(pre: np.ndarray, activation: str, beta: float = 100.0) -> np.ndarray:
    if activation == 'softplus':
        return softplus(pre, beta)
    if activation == 'relu':
        return np.maximum(pre, 0)
    if activation == 'sigmoid':
        return expit(pre)
    return pre


def activation_grad(pre: np.ndarray, out: np.ndarray, activation: str, beta: float = 100.0) -> np.ndarray:
    """Derivative of the activation evaluated at the cached pre-activation"""
    if activation == 'softplus':
        return expit(beta * pre)
    if activation == 'relu':
        return (pre > 0).astype(pre.dtype)
    if activation == 'sigmoid':
        return out * (1 - out)
    return np.ones_like(pre)


class GradBuffer(dict):
    """Gradient accumulator that allocates a zero array on first touch of a name"""

    def __init__(self, store: 'ParameterStore'):
        super().__init__()
        self._store = store

    def __missing__(self, name: str) -> np.ndarray:
        buf = np.zeros_like(self._store.params[name])
        self[name] = buf
        return buf


class ParameterStore:
    """Named trainable arrays with gradient accumulators and Adam moments"""

    def __init__(self):
        self.logger = logging.getLogger('parameter_store')
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step = 0
        self.frozen: set = set()
        self.nonfinite_skips = 0

    def add(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.params:
            raise ConfigurationError(f"Parameter '{name}' registered twice")
        arr = np.ascontiguousarray(value, dtype=get_dtype())
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        return arr

    def names(self) -> List[str]:
        return list(self.params)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad.fill(0)

    def grad_buffer(self) -> GradBuffer:
        return GradBuffer(self)

    def merge_grads(self, buffers: Iterable[Mapping[str, np.ndarray]]) -> None:
        """Add worker buffers into the shared accumulators, in the order given"""
        for buf in buffers:
            for name in self.params:
                if name in buf:
                    self.grads[name] += buf[name]

    def freeze(self, prefix: str) -> List[str]:
        names = [n for n in self.params if n.startswith(prefix)]
        self.frozen.update(names)
        return names

    def assign(self, name: str, value: np.ndarray) -> None:
        """Overwrite a parameter in place, keeping its dtype and shape"""
        target = self.params[name]
        value = np.asarray(value)
        if value.shape != target.shape:
            raise ConfigurationError(
                f"Shape mismatch for '{name}': expected {target.shape}, got {value.shape}")
        target[...] = value


@dataclass
class LayerCache:
    x: np.ndarray
    pre: np.ndarray
    out: np.ndarray


class DenseLayer:
    def __init__(self,
                 store: ParameterStore,
                 name: str,
                 in_dim: int,
                 out_dim: int,
                 activation: str = 'none',
                 beta: float = 100.0,
                 rng: Optional[np.random.Generator] = None,
                 weight_std: Optional[float] = None):
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"Unknown activation '{activation}'")
        self.store = store
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.activation = activation
        self.beta = beta

        rng = rng if rng is not None else np.random.default_rng(0)
        if weight_std is None:
            weight_std = np.sqrt(2.0 / in_dim) if activation == 'relu' else np.sqrt(1.0 / in_dim)
        self.weight_name = f"{name}.weight"
        self.bias_name = f"{name}.bias"
        store.add(self.weight_name, rng.normal(0.0, weight_std, (out_dim, in_dim)))
        store.add(self.bias_name, np.zeros(out_dim))

    @property
    def weight(self) -> np.ndarray:
        return self.store.params[self.weight_name]

    @property
    def bias(self) -> np.ndarray:
        return self.store.params[self.bias_name]

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, LayerCache]:
        """Rows of x map to activation(W x + b)"""
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ConfigurationError(
                f"{self.name}: expected input of width {self.in_dim}, got shape {x.shape}")
        pre = x @ self.weight.T + self.bias
        out = activate(pre, self.activation, self.beta)
        return out, LayerCache(x, pre, out)

    def backward(self,
                 cache: Optional[LayerCache],
                 upstream: np.ndarray,
                 grads: Optional[MutableMapping[str, np.ndarray]] = None) -> np.ndarray:
        if cache is None:
            raise ContractViolation(f"{self.name}: backward called without a forward cache")
        grads = self.store.grads if grads is None else grads
        d_pre = upstream * activation_grad(cache.pre, cache.out, self.activation, self.beta)
        grads[self.weight_name] += d_pre.T @ cache.x
        grads[self.bias_name] += d_pre.sum(axis=0)
        return d_pre @ self.weight


class MLP:
    """Stack of dense layers sharing one parameter store"""

    def __init__(self,
                 store: ParameterStore,
                 name: str,
                 widths: List[int],
                 hidden_activation: str,
                 output_activation: str = 'none',
                 beta: float = 100.0,
                 rng: Optional[np.random.Generator] = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.layers: List[DenseLayer] = []
        for i, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            last = i == len(widths) - 2
            self.layers.append(DenseLayer(
                store, f"{name}.layer{i}", fan_in, fan_out,
                activation=output_activation if last else hidden_activation,
                beta=beta, rng=rng))

    def forward(self, x: np.ndarray) -> Tuple[np.ndarray, List[LayerCache]]:
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def backward(self, caches: Optional[List[LayerCache]], upstream: np.ndarray, grads=None) -> np.ndarray:
        if caches is None:
            raise ContractViolation("MLP backward called without a forward cache")
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            upstream = layer.backward(cache, upstream, grads)
        return upstream


def component_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator per named component, so optional parts never shift other streams"""
    return np.random.default_rng([seed, zlib.crc32(name.encode('utf-8'))])
