"""Feature enhancement: word highlighting and cross-modal scene composition.

Word highlighting runs self-attention over the query, pools a global sentence
vector, and scores every word by cosine against it.  Scene composition builds
scaled dot-product similarity maps between (visual, caption) features and the
enhanced query, mixes the modalities through concat+projection+pointwise-conv
fusion, and finishes with a cross-attention exchange between the two streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

import numpy as np

from . import engine
from .engine import Tensor


@dataclass
class Affine:
    """Learnable map x @ weight + bias; doubles as a kernel-size-1 conv."""

    weight: Tensor
    bias: Tensor

    def __call__(self, x: Tensor) -> Tensor:
        return engine.affine(x, self.weight, self.bias)

    @classmethod
    def identity(cls, d_in: int, d_out: int) -> "Affine":
        return cls(engine.leaf(engine.identity_init(d_in, d_out)),
                   engine.leaf(np.zeros(d_out)))

    @classmethod
    def random(cls, rng: np.random.Generator, d_in: int, d_out: int) -> "Affine":
        return cls(engine.leaf(engine.uniform_init(rng, d_in, d_out)),
                   engine.leaf(np.zeros(d_out)))

    def as_lists(self) -> dict:
        return {"weight": self.weight.data.tolist(), "bias": self.bias.data.tolist()}


@dataclass
class FemParams:
    """All learnable maps of the enhancement module.

    attn_*: query self-attention projections; proj_*: similarity-map
    projections; proj_hat_*: 4d->d fusion projections; conv_*: 2d->d
    pointwise conv kernels; xattn_*: cross-attention projections shared by
    both exchange directions.
    """

    attn_q: Affine
    attn_k: Affine
    attn_v: Affine
    proj_v: Affine
    proj_c: Affine
    proj_q: Affine
    proj_hat_v: Affine
    proj_hat_c: Affine
    conv_v: Affine
    conv_c: Affine
    xattn_q: Affine
    xattn_k: Affine
    xattn_v: Affine

    _SHAPES = {
        "attn_q": (1, 1), "attn_k": (1, 1), "attn_v": (1, 1),
        "proj_v": (1, 1), "proj_c": (1, 1), "proj_q": (1, 1),
        "proj_hat_v": (4, 1), "proj_hat_c": (4, 1),
        "conv_v": (2, 1), "conv_c": (2, 1),
        "xattn_q": (1, 1), "xattn_k": (1, 1), "xattn_v": (1, 1),
    }

    @classmethod
    def identity(cls, d: int) -> "FemParams":
        return cls(**{f.name: Affine.identity(cls._SHAPES[f.name][0] * d, d)
                      for f in fields(cls)})

    @classmethod
    def random(cls, d: int, rng: np.random.Generator) -> "FemParams":
        # field order fixes the draw order, so a seed pins every weight
        return cls(**{f.name: Affine.random(rng, cls._SHAPES[f.name][0] * d, d)
                      for f in fields(cls)})

    def leaves(self) -> dict[str, Tensor]:
        out = {}
        for f in fields(self):
            aff = getattr(self, f.name)
            out[f"{f.name}.weight"] = aff.weight
            out[f"{f.name}.bias"] = aff.bias
        return out

    def with_leaves(self, mapping: dict[str, Tensor]) -> "FemParams":
        updates = {}
        for f in fields(self):
            aff = getattr(self, f.name)
            updates[f.name] = Affine(mapping.get(f"{f.name}.weight", aff.weight),
                                     mapping.get(f"{f.name}.bias", aff.bias))
        return replace(self, **updates)

    def as_lists(self) -> dict:
        return {f.name: getattr(self, f.name).as_lists() for f in fields(self)}


@dataclass
class WordHighlight:
    """Per-word saliency scores plus their descending rank order.

    ``scores`` keeps the raw cosines as a differentiable tensor; ``order``
    ranks valid words by descending score (ties broken by lower index) with
    invalid words pushed to the end.
    """

    scores: Tensor
    order: list[int]
    valid: np.ndarray

    def ranked_valid(self) -> list[int]:
        return [k for k in self.order if self.valid[k]]


@dataclass
class SceneSims:
    a_vq: Tensor
    a_cq: Tensor
    a_vq_row: Tensor
    a_cq_row: Tensor
    a_vq_col: Tensor
    a_cq_col: Tensor


@dataclass
class FemOutput:
    f_eq: Tensor
    highlight: WordHighlight
    f_eq_sent: Tensor
    f_ev: Tensor
    f_ec: Tensor
    a_vq_row: Tensor
    a_cq_row: Tensor
    a_vq_col: Tensor
    a_cq_col: Tensor
    query_valid: np.ndarray


def _attention(q: Tensor, k: Tensor, v: Tensor, key_valid=None) -> Tensor:
    d = q.shape[1]
    scores = engine.smul(engine.matmul(q, engine.transpose(k)), 1.0 / math.sqrt(d))
    attn = engine.softmax(scores, axis=1, valid=key_valid)
    return engine.matmul(attn, v)


def rank_descending(scores: np.ndarray, valid: np.ndarray) -> list[int]:
    keyed = np.where(valid > 0, scores, -np.inf)
    return sorted(range(len(keyed)), key=lambda k: (-keyed[k], k))


def word_highlight(f_q: Tensor, query_valid: np.ndarray,
                   params: FemParams) -> tuple[Tensor, WordHighlight]:
    """Self-attend the query, then score each word against the pooled sentence."""
    if query_valid.sum() < 1:
        raise engine.ContractError("word_highlight: no valid words")
    f_eq = _attention(params.attn_q(f_q), params.attn_k(f_q), params.attn_v(f_q),
                      key_valid=query_valid)
    g_eq = engine.gap(f_eq, valid=query_valid)
    scores = engine.cosine_sim(f_eq, g_eq)
    order = rank_descending(scores.data, query_valid)
    return f_eq, WordHighlight(scores=scores, order=order, valid=query_valid)


def scene_similarities(f_v: Tensor, f_c: Tensor, f_eq: Tensor,
                       query_valid: np.ndarray, params: FemParams) -> SceneSims:
    """Projected scaled dot-product maps plus their row/column softmaxes."""
    d = f_eq.shape[1]
    pv, pc, pq = params.proj_v(f_v), params.proj_c(f_c), params.proj_q(f_eq)
    a_vq = engine.smul(engine.matmul(pv, engine.transpose(pq)), 1.0 / math.sqrt(d))
    a_cq = engine.smul(engine.matmul(pc, engine.transpose(pq)), 1.0 / math.sqrt(d))
    return SceneSims(
        a_vq=a_vq, a_cq=a_cq,
        a_vq_row=engine.softmax(a_vq, axis=1, valid=query_valid),
        a_cq_row=engine.softmax(a_cq, axis=1, valid=query_valid),
        a_vq_col=engine.softmax(a_vq, axis=0),
        a_cq_col=engine.softmax(a_cq, axis=0),
    )


def sentence_pool(f_eq: Tensor, highlight: WordHighlight,
                  query_valid: np.ndarray) -> Tensor:
    """Sentence vector: saliency-softmax weighted sum of the word features."""
    w = engine.softmax(highlight.scores, axis=0, valid=query_valid)
    return engine.flatten_row(engine.matmul(engine.row_matrix(w), f_eq))


def scene_compose(f_v: Tensor, f_c: Tensor, f_eq: Tensor, f_eq_sent: Tensor,
                  sims: SceneSims, params: FemParams) -> tuple[Tensor, Tensor]:
    """Four-way feature mixing followed by pointwise-conv fusion with the sentence."""
    l_v = f_v.shape[0]
    f_v2q = engine.matmul(sims.a_vq_row, f_eq)
    f_c2q = engine.matmul(sims.a_cq_row, f_eq)
    f_q2v = engine.matmul(engine.matmul(sims.a_vq_row, engine.transpose(sims.a_vq_col)), f_v)
    f_q2c = engine.matmul(engine.matmul(sims.a_cq_row, engine.transpose(sims.a_cq_col)), f_c)
    fhat_v = params.proj_hat_v(engine.concat_last(
        [f_v, f_v2q, engine.mul(f_v, f_v2q), engine.mul(f_v, f_q2v)]))
    fhat_c = params.proj_hat_c(engine.concat_last(
        [f_c, f_c2q, engine.mul(f_c, f_c2q), engine.mul(f_c, f_q2c)]))
    sent = engine.broadcast_row(f_eq_sent, l_v)
    f_qv = engine.relu(engine.pointwise_conv1d(
        engine.concat_last([fhat_v, sent]), params.conv_v.weight, params.conv_v.bias))
    f_qc = engine.relu(engine.pointwise_conv1d(
        engine.concat_last([fhat_c, sent]), params.conv_c.weight, params.conv_c.bias))
    return f_qv, f_qc


def cross_enhance(f_qv: Tensor, f_qc: Tensor,
                  params: FemParams) -> tuple[Tensor, Tensor]:
    """Exchange the two streams through shared-projection cross-attention."""
    f_ev = _attention(params.xattn_q(f_qv), params.xattn_k(f_qc), params.xattn_v(f_qc))
    f_ec = _attention(params.xattn_q(f_qc), params.xattn_k(f_qv), params.xattn_v(f_qv))
    return f_ev, f_ec


def fem_forward(f_q: Tensor, query_valid: np.ndarray, f_v: Tensor,
                f_c_pooled: Tensor, params: FemParams) -> FemOutput:
    """Full enhancement pass; equals composing the four steps in order."""
    f_eq, highlight = word_highlight(f_q, query_valid, params)
    sims = scene_similarities(f_v, f_c_pooled, f_eq, query_valid, params)
    f_eq_sent = sentence_pool(f_eq, highlight, query_valid)
    f_qv, f_qc = scene_compose(f_v, f_c_pooled, f_eq, f_eq_sent, sims, params)
    f_ev, f_ec = cross_enhance(f_qv, f_qc, params)
    return FemOutput(
        f_eq=f_eq, highlight=highlight, f_eq_sent=f_eq_sent,
        f_ev=f_ev, f_ec=f_ec,
        a_vq_row=sims.a_vq_row, a_cq_row=sims.a_cq_row,
        a_vq_col=sims.a_vq_col, a_cq_col=sims.a_cq_col,
        query_valid=query_valid,
    )
