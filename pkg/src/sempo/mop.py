"""Mixture of prompts: expert pool, token router, soft merge and the
reparameterisation into per-layer key/value prompts."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .nn import ModelParams, init_normal, init_uniform
from .tensor import Tensor


@dataclass
class MixedPrompts:
    """Prompt tensor laid out as ``[S, 2, *token_grid, D_p]``; slot 0 keys, slot 1 values."""

    data: Tensor
    scores: Tensor  # [*token_grid, I] gating scores

    @property
    def depth(self) -> int:
        return self.data.shape[0]

    def keys(self, layer: int) -> Tensor:
        return self.data[layer, 0]

    def values(self, layer: int) -> Tensor:
        return self.data[layer, 1]


def init_mop(params: ModelParams, rng: np.random.Generator, i: int, d_p: int, d_h: int, s: int) -> None:
    params.add("mop.pool", init_normal(rng, (i, d_p)))
    params.add("mop.router.w", init_uniform(rng, d_p, (d_p, i)))
    params.add("mop.router.b", init_uniform(rng, d_p, (i,)))
    params.add("mop.reparam.w_a", init_uniform(rng, d_p, (d_p, d_h)))
    params.add("mop.reparam.b_a", init_uniform(rng, d_p, (d_h,)))
    params.add("mop.reparam.w_b", init_uniform(rng, d_h, (d_h, s * 2 * d_p)))
    params.add("mop.reparam.b_b", init_uniform(rng, d_h, (s * 2 * d_p,)))


def route(tokens, w_r, b_r) -> Tensor:
    """Gating scores softmax(tokens @ w_r + b_r) over the I experts."""
    return T.softmax(T.linear(tokens, w_r, b_r), axis=-1)


def merge(scores, pool) -> Tensor:
    """Convex combination of expert rows."""
    return T.matmul(scores, pool)


def reparameterize(v, w_a, b_a, w_b, b_b, s: int) -> Tensor:
    """silu MLP then reshape to [..., S, 2, D_p]."""
    d_p = v.shape[-1]
    out = T.linear(T.silu(T.linear(v, w_a, b_a)), w_b, b_b)
    return T.reshape(out, v.shape[:-1] + (s, 2, d_p))


def build_prompts(tokens, params: ModelParams, s: int) -> MixedPrompts:
    """Route every token, merge experts and emit its S-layer key/value prompt."""
    pool = params["mop.pool"]
    if tokens.shape[-1] != pool.shape[1]:
        raise T.ShapeError(f"token width {tokens.shape[-1]} != expert width {pool.shape[1]}")
    scores = route(tokens, params["mop.router.w"], params["mop.router.b"])
    merged = merge(scores, pool)
    per_token = reparameterize(
        merged,
        params["mop.reparam.w_a"],
        params["mop.reparam.b_a"],
        params["mop.reparam.w_b"],
        params["mop.reparam.b_b"],
        s,
    )
    nd = per_token.ndim
    # [..., S, 2, D] -> [S, 2, ..., D]
    axes = (nd - 3, nd - 2) + tuple(range(nd - 3)) + (nd - 1,)
    return MixedPrompts(T.transpose(per_token, axes), scores)
