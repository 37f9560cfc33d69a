"""Patchify masked views and project them to model-width tokens."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .nn import ModelParams, init_normal, init_uniform
from .tensor import Tensor


class PatchConfigError(ValueError):
    pass


def n_patches(length: int, l_p: int) -> int:
    return length // l_p


def patchify(x_mask, l_p: int) -> Tensor:
    """[..., L] -> [..., P, L_p]; a tail shorter than one patch is dropped."""
    x_mask = T._wrap(x_mask)
    length = x_mask.shape[-1]
    if length < l_p:
        raise PatchConfigError(f"series length {length} shorter than patch length {l_p}")
    p = length // l_p
    if p * l_p != length:
        x_mask = x_mask[..., : p * l_p]
    return T.reshape(x_mask, x_mask.shape[:-1] + (p, l_p))


def init_embedding(params: ModelParams, rng: np.random.Generator, l_p: int, d_p: int, p: int) -> None:
    params.add("embed.w", init_uniform(rng, l_p, (l_p, d_p)))
    params.add("embed.b", init_uniform(rng, l_p, (d_p,)))
    params.add("embed.pe", init_normal(rng, (p, d_p)))


def project_embed(patches, w, b, pe, rate: float, rng: np.random.Generator | None, train: bool) -> Tensor:
    """dropout(patches @ w + b + pe)."""
    if patches.shape[-1] != w.shape[0] or patches.shape[-2] != pe.shape[0] or w.shape[1] != pe.shape[1]:
        raise T.ShapeError(f"embedding shapes disagree: patches{patches.shape} w{w.shape} pe{pe.shape}")
    tokens = T.add(T.linear(patches, w, b), pe)
    return T.dropout(tokens, rate, rng, train)
