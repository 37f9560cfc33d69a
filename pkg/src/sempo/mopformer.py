"""Prompt-augmented attention, the pre-norm block, encoder/decoder stacks
and the linear output heads."""

from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .mop import MixedPrompts
from .nn import ModelParams, init_uniform, rms_norm, swiglu_ffn
from .tensor import Tensor


def init_block(params: ModelParams, rng: np.random.Generator, prefix: str, d_p: int, d_ff: int) -> None:
    for name in ("wq", "wk", "wv", "wo"):
        params.add(f"{prefix}.attn.{name}", init_uniform(rng, d_p, (d_p, d_p)))
    params.add(f"{prefix}.attn.bo", init_uniform(rng, d_p, (d_p,)))
    params.add(f"{prefix}.norm1", np.ones(d_p))
    params.add(f"{prefix}.norm2", np.ones(d_p))
    params.add(f"{prefix}.ffn.w1", init_uniform(rng, d_p, (d_p, d_ff)))
    params.add(f"{prefix}.ffn.w3", init_uniform(rng, d_p, (d_p, d_ff)))
    params.add(f"{prefix}.ffn.w2", init_uniform(rng, d_ff, (d_ff, d_p)))


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, t, d = x.shape
    x = T.reshape(x, tuple(lead) + (t, heads, d // heads))
    nd = x.ndim
    return T.swapaxes(x, nd - 3, nd - 2)  # [..., h, t, dh]


def _merge_heads(x: Tensor) -> Tensor:
    nd = x.ndim
    x = T.swapaxes(x, nd - 3, nd - 2)  # [..., t, h, dh]
    *lead, t, h, dh = x.shape
    return T.reshape(x, tuple(lead) + (t, h * dh))


def attention_weights(q: Tensor, k: Tensor) -> Tensor:
    scale = 1.0 / math.sqrt(q.shape[-1])
    return T.softmax(T.mul(T.matmul(q, T.swapaxes(k, -1, -2)), scale), axis=-1)


def prompt_attention(x, ek, ev, params: ModelParams, prefix: str, heads: int,
                     return_weights: bool = False):
    """Multi-head attention with queries from ``x`` and keys/values [prompt || x].

    Prompts enter after the key/value projections (prefix-tuning style); with
    ``ek``/``ev`` absent this is plain bidirectional self-attention.
    """
    q = T.matmul(x, params[f"{prefix}.attn.wq"])
    k = T.matmul(x, params[f"{prefix}.attn.wk"])
    v = T.matmul(x, params[f"{prefix}.attn.wv"])
    if ek is not None:
        if ek.shape != x.shape or ev.shape != x.shape:
            raise T.ShapeError(f"prompt shapes {ek.shape}/{ev.shape} do not match tokens {x.shape}")
        k = T.concat([ek, k], axis=-2)
        v = T.concat([ev, v], axis=-2)
    w = attention_weights(_split_heads(q, heads), _split_heads(k, heads))
    out = _merge_heads(T.matmul(w, _split_heads(v, heads)))
    out = T.linear(out, params[f"{prefix}.attn.wo"], params[f"{prefix}.attn.bo"])
    return (out, w) if return_weights else out


def block_forward(x, ek, ev, params: ModelParams, prefix: str, heads: int) -> Tensor:
    u = T.add(prompt_attention(rms_norm(x, params[f"{prefix}.norm1"]), ek, ev, params, prefix, heads), x)
    u_bar = rms_norm(u, params[f"{prefix}.norm2"])
    ffn = swiglu_ffn(u_bar, params[f"{prefix}.ffn.w1"], params[f"{prefix}.ffn.w3"], params[f"{prefix}.ffn.w2"])
    return T.add(ffn, u)


def run_stack(x, prompts: MixedPrompts | None, params: ModelParams, stack: str, depth: int, heads: int) -> Tensor:
    """Apply ``depth`` blocks; layer s reads prompt slice s when prompts are given."""
    if prompts is not None and prompts.depth != depth:
        raise T.ShapeError(f"prompt depth {prompts.depth} != stack depth {depth}")
    for s in range(depth):
        ek = prompts.keys(s) if prompts is not None else None
        ev = prompts.values(s) if prompts is not None else None
        x = block_forward(x, ek, ev, params, f"{stack}.block{s}", heads)
    return x


def encode(tokens, prompts, params: ModelParams, depth: int, heads: int) -> Tensor:
    return run_stack(tokens, prompts, params, "encoder", depth, heads)


def decode(tokens, prompts, params: ModelParams, depth: int, heads: int) -> Tensor:
    return run_stack(tokens, prompts, params, "decoder", depth, heads)


def aggregate(enc_out, axis: int = -3) -> Tensor:
    """Mean over the masked-view axis."""
    return T.mean(enc_out, axis=axis)


def init_heads(params: ModelParams, rng: np.random.Generator, p: int, d_p: int, length: int,
               horizons) -> None:
    fan_in = p * d_p
    params.add("head.rec.w", init_uniform(rng, fan_in, (fan_in, length)))
    params.add("head.rec.b", init_uniform(rng, fan_in, (length,)))
    for h in horizons:
        params.add(f"head.pred.h{h}.w", init_uniform(rng, fan_in, (fan_in, h)))
        params.add(f"head.pred.h{h}.b", init_uniform(rng, fan_in, (h,)))


def _flatten_tokens(dec_out: Tensor) -> Tensor:
    *lead, p, d = dec_out.shape
    return T.reshape(dec_out, tuple(lead) + (p * d,))


def reconstruct(dec_out, params: ModelParams, stats) -> Tensor:
    """Patch-major flatten, linear head, then undo instance normalisation."""
    y = T.linear(_flatten_tokens(dec_out), params["head.rec.w"], params["head.rec.b"])
    return stats.denormalize(y)


def predict(dec_out, params: ModelParams, horizon: int, stats) -> Tensor:
    name = f"head.pred.h{horizon}.w"
    if name not in params:
        raise KeyError(f"no prediction head for horizon {horizon}")
    y = T.linear(_flatten_tokens(dec_out), params[name], params[f"head.pred.h{horizon}.b"])
    return stats.denormalize(y)
