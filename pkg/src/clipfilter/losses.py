"""Modal alignment losses: query-video, query-clip, and caption-clip terms.

All three operate on cosine similarities (logits bounded to [-1, 1], so no
temperature is needed) and are differentiable tensors end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import engine
from .engine import Tensor

BCE_CLAMP = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lambda_qv: float = 0.3
    lambda_qc: float = 0.5
    lambda_cc: float = 1.5

    def __post_init__(self):
        for name in ("lambda_qv", "lambda_qc", "lambda_cc"):
            v = getattr(self, name)
            if not (v >= 0):
                raise engine.ContractError(f"{name} must be a nonnegative real")


@dataclass
class LossReport:
    l_qv: float
    l_qc: float
    l_cc: float
    l_ma: float
    l_qc_per_sample: list[float]

    def as_dict(self) -> dict:
        return {"l_qv": self.l_qv, "l_qc": self.l_qc, "l_cc": self.l_cc,
                "l_ma": self.l_ma}


def loss_query_video(batch_globals: list[tuple[Tensor, Tensor]]) -> Tensor:
    """Contrastive loss over pooled (video, query) pairs.

    For each query, the matched video's cosine competes against every video
    in the batch: -(1/B) sum_j log softmax_i(sim[i,j]) at the diagonal.
    """
    b = len(batch_globals)
    if b < 1:
        raise engine.ContractError("loss_query_video: batch must be non-empty")
    g_v = engine.stack_rows([gv for gv, _ in batch_globals])
    g_q = engine.stack_rows([gq for _, gq in batch_globals])
    sims = engine.cosine_matrix(g_v, g_q)
    diag = engine.take_diag(sims)
    log_z = engine.log(engine.sum_axis(engine.exp(sims), axis=0))
    return engine.smul(engine.sum_all(engine.sub(diag, log_z)), -1.0 / b)


def loss_query_clip(s_qv: Tensor, relevance_mask, query_valid) -> Tensor:
    """Per-clip BCE against the relevance mask.

    Each clip's probability is the mean over valid words of sigmoid(s_qv),
    clamped away from {0, 1} before the logs.
    """
    probs = engine.sigmoid(s_qv)
    g = engine.mean_axis(probs, axis=1, valid=query_valid)
    g = engine.clamp(g, BCE_CLAMP, 1.0 - BCE_CLAMP)
    m = engine.constant([float(v) for v in relevance_mask])
    one_minus_m = engine.sadd(engine.neg(m), 1.0)
    one_minus_g = engine.sadd(engine.neg(g), 1.0)
    terms = engine.add(engine.mul(m, engine.log(g)),
                       engine.mul(one_minus_m, engine.log(one_minus_g)))
    return engine.smul(engine.sum_all(terms), -1.0)


def loss_caption_clip(batch_pairs: list[tuple[Tensor, Tensor]]) -> Tensor:
    """Contrastive loss over position-paired (visual clip, pooled caption) rows.

    The positive set for video k is its own clip/caption diagonal; negatives
    pair caption row j of video k with clip row j of every other video.  When
    clip counts differ across the batch, cross terms use the shared prefix.
    """
    b = len(batch_pairs)
    if b < 1:
        raise engine.ContractError("loss_caption_clip: batch must be non-empty")
    total = None
    for k, (_, f_c_k) in enumerate(batch_pairs):
        l_k = f_c_k.shape[0]
        den = None
        for i, (f_v_i, _) in enumerate(batch_pairs):
            m = min(f_v_i.shape[0], l_k)
            sims = engine.cosine_rows(
                f_v_i if m == f_v_i.shape[0] else engine.take_rows(f_v_i, m),
                f_c_k if m == l_k else engine.take_rows(f_c_k, m))
            part = engine.sum_all(engine.exp(sims))
            if i == k:
                num = part
            den = part if den is None else engine.add(den, part)
        term = engine.sub(engine.log(den), engine.log(num))
        total = term if total is None else engine.add(total, term)
    return engine.smul(total, 1.0 / b)


def loss_total(l_qv: Tensor, l_qc: Tensor, l_cc: Tensor,
               weights: LossWeights) -> Tensor:
    return engine.add(
        engine.add(engine.smul(l_qv, weights.lambda_qv),
                   engine.smul(l_qc, weights.lambda_qc)),
        engine.smul(l_cc, weights.lambda_cc))
