"""The assembled forecaster: EASD -> patch tokens -> (MoP) encoder ->
view average -> (MoP) decoder -> reconstruction / prediction heads."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .config import Config
from .easd import NormStats, easd_forward, init_theta_q
from .embedding import init_embedding, patchify, project_embed
from .mop import MixedPrompts, build_prompts, init_mop
from .mopformer import aggregate, decode, encode, init_block, init_heads, predict, reconstruct
from .nn import ModelParams
from .tensor import Tensor

BACKBONE_PREFIXES = ("easd.", "embed.", "encoder.", "decoder.")
MOP_PREFIX = "mop."
REC_HEAD_PREFIX = "head.rec."
PRED_HEAD_PREFIX = "head.pred."


@dataclass
class ForwardOutput:
    recon: Tensor | None
    preds: dict[int, Tensor]
    stats: NormStats
    enc_scores: Tensor | None = None
    dec_scores: Tensor | None = None
    extras: dict = field(default_factory=dict)


class SEMPO:
    """Parameters plus the forward pass.  Stage ``"pretrain"`` skips prompts."""

    def __init__(self, config: Config, seed: int | None = None):
        self.config = config.validate()
        self.seed = config.train.seed if seed is None else seed
        self.stage = "init"
        self.params = ModelParams()
        self._init_params(np.random.default_rng(self.seed))

    def _init_params(self, rng: np.random.Generator) -> None:
        c = self.config
        m = c.model
        self.params.add("easd.theta_q", np.array([init_theta_q(c.easd.q_init)]))
        init_embedding(self.params, rng, m.l_p, m.d_p, c.n_patches)
        for stack in ("encoder", "decoder"):
            for s in range(m.s):
                init_block(self.params, rng, f"{stack}.block{s}", m.d_p, m.d_ff)
        init_mop(self.params, rng, c.mop.i, m.d_p, c.d_h, m.s)
        init_heads(self.params, rng, c.n_patches, m.d_p, c.l, c.horizons)

    # ------------------------------------------------------------------ groups

    def group(self, name: str) -> str:
        """Component label used for freezing and parameter accounting."""
        if name.startswith(MOP_PREFIX):
            return "mop"
        if name.startswith(REC_HEAD_PREFIX):
            return "reconstruction_head"
        if name.startswith(PRED_HEAD_PREFIX):
            return "prediction_heads"
        if name.startswith("encoder."):
            return "encoder"
        if name.startswith("decoder."):
            return "decoder"
        if name.startswith("embed."):
            return "embedding"
        return "easd"

    # ------------------------------------------------------------------ forward

    def embed(self, x: np.ndarray, rng, train: bool):
        c = self.config
        views, stats = easd_forward(x, self.params["easd.theta_q"], c, rng, train)
        patches = patchify(views, c.model.l_p)
        tokens = project_embed(
            patches,
            self.params["embed.w"],
            self.params["embed.b"],
            self.params["embed.pe"],
            c.model.dropout,
            rng,
            train,
        )
        return tokens, stats

    def forward(self, x: np.ndarray, rng: np.random.Generator | None = None, train: bool = False,
                use_prompts: bool | None = None, reconstruct_series: bool = True,
                horizons=None) -> ForwardOutput:
        """Run windows ``x`` of shape ``[B, L]`` (or ``[L]``) through the model."""
        c = self.config
        m = c.model
        if use_prompts is None:
            use_prompts = self.stage not in ("init", "pretrain")
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        tokens, stats = self.embed(x, rng, train)

        enc_prompts: MixedPrompts | None = build_prompts(tokens, self.params, m.s) if use_prompts else None
        enc_out = encode(tokens, enc_prompts, self.params, m.s, m.heads)
        pooled = aggregate(enc_out)
        dec_prompts = build_prompts(pooled, self.params, m.s) if use_prompts else None
        dec_out = decode(pooled, dec_prompts, self.params, m.s, m.heads)

        recon = reconstruct(dec_out, self.params, stats) if reconstruct_series else None
        preds = {}
        if use_prompts:
            for h in (c.horizons if horizons is None else horizons):
                preds[h] = predict(dec_out, self.params, h, stats)
        return ForwardOutput(
            recon=recon,
            preds=preds,
            stats=stats,
            enc_scores=enc_prompts.scores if enc_prompts is not None else None,
            dec_scores=dec_prompts.scores if dec_prompts is not None else None,
        )

    # ------------------------------------------------------------------ accounting

    def count_parameters(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for p in self.params:
            g = self.group(p.name)
            counts[g] = counts.get(g, 0) + p.data.size
        counts["total"] = sum(counts.values())
        return counts


def count_parameters(model: SEMPO) -> dict[str, int]:
    return model.count_parameters()
