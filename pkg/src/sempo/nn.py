"""Layer-level building blocks composed from tensor primitives."""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterable, Iterator

import numpy as np

from . import tensor as T
from .tensor import Parameter, Tensor


def rms_norm(x, gain, eps: float = 1e-6) -> Tensor:
    """x / sqrt(mean(x^2) + eps) * gain over the last axis."""
    ms = T.mean(T.square(x), axis=-1, keepdims=True)
    return T.mul(T.div(x, T.sqrt(T.add(ms, eps))), gain)


def swiglu_ffn(x, w1, w3, w2) -> Tensor:
    """(silu(x w1) * (x w3)) w2."""
    if x.shape[-1] != w1.shape[0] or w1.shape != w3.shape or w2.shape[0] != w1.shape[1]:
        raise T.ShapeError(
            f"swiglu shapes disagree: x{x.shape} w1{w1.shape} w3{w3.shape} w2{w2.shape}"
        )
    gate = T.silu(T.matmul(x, w1))
    return T.matmul(T.mul(gate, T.matmul(x, w3)), w2)


class ModelParams:
    """Ordered, uniquely named collection of :class:`Parameter` objects."""

    def __init__(self):
        self._params: OrderedDict[str, Parameter] = OrderedDict()

    def add(self, name: str, data, trainable: bool = True) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(name, data, trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def trainable(self) -> list[Parameter]:
        return [p for p in self._params.values() if p.trainable]

    def with_prefix(self, prefix: str) -> list[Parameter]:
        return [p for n, p in self._params.items() if n.startswith(prefix)]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.zero_grad()

    def set_trainable(self, predicate) -> None:
        for name, p in self._params.items():
            p.set_trainable(bool(predicate(name)))

    def state(self) -> OrderedDict[str, np.ndarray]:
        return OrderedDict((n, p.data.copy()) for n, p in self._params.items())

    def load_state(self, state, strict: bool = True) -> None:
        for name, p in self._params.items():
            if name not in state:
                if strict:
                    raise KeyError(f"missing tensor {name!r}")
                continue
            arr = np.asarray(state[name])
            if arr.shape != p.shape:
                raise T.ShapeError(f"{name}: stored shape {arr.shape} != model shape {p.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def cast(self, dtype) -> None:
        for p in self._params.values():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)

    def count(self, names: Iterable[str] | None = None) -> int:
        keys = self._params if names is None else names
        return int(sum(self._params[n].data.size for n in keys))


def init_uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    return rng.normal(0.0, std, size=shape)
