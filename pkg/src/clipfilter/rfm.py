"""Ranking-based filtering: similarity fusion and top-N iterative clip filtering.

Clip/word relevance is measured by cosine between enhanced features, the two
similarity maps are blended by a per-entry gate, and the enhanced visual
features are then rescaled once per top-ranked word by (1 + that word's
similarity column), starting from the enhanced features themselves.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import Tensor
from .fem import FemOutput, WordHighlight


@dataclass
class FusionGate:
    """Per-entry blend weight for the two similarity maps.

    ``learned`` mode feeds each (s_qv, s_qc) pair through a 2->1 affine map
    and a sigmoid; ``average`` mode fixes the weight at 0.5.
    """

    mode: str
    w_qv: Tensor | None = None
    w_qc: Tensor | None = None
    bias: Tensor | None = None

    @classmethod
    def average(cls) -> "FusionGate":
        return cls(mode="average")

    @classmethod
    def learned_zero(cls) -> "FusionGate":
        # zero weights make the learned gate coincide with averaging
        return cls(mode="learned", w_qv=engine.leaf([0.0]),
                   w_qc=engine.leaf([0.0]), bias=engine.leaf([0.0]))

    @classmethod
    def learned_random(cls, rng: np.random.Generator) -> "FusionGate":
        bound = 1.0 / np.sqrt(2.0)
        return cls(mode="learned",
                   w_qv=engine.leaf([rng.uniform(-bound, bound)]),
                   w_qc=engine.leaf([rng.uniform(-bound, bound)]),
                   bias=engine.leaf([0.0]))

    def leaves(self) -> dict[str, Tensor]:
        if self.mode != "learned":
            return {}
        return {"gate.w_qv": self.w_qv, "gate.w_qc": self.w_qc, "gate.bias": self.bias}

    def with_leaves(self, mapping: dict[str, Tensor]) -> "FusionGate":
        if self.mode != "learned":
            return self
        return FusionGate(mode="learned",
                          w_qv=mapping.get("gate.w_qv", self.w_qv),
                          w_qc=mapping.get("gate.w_qc", self.w_qc),
                          bias=mapping.get("gate.bias", self.bias))

    def as_lists(self) -> dict:
        if self.mode != "learned":
            return {"mode": "average"}
        return {"mode": "learned", "w_qv": self.w_qv.item(),
                "w_qc": self.w_qc.item(), "bias": self.bias.item()}


@dataclass
class RfmOutput:
    s_qv: Tensor
    s_qc: Tensor
    s_qvc: Tensor
    selected_words: list[int]
    f_fv: Tensor
    trace: list[Tensor]


def relevance_similarities(f_ev: Tensor, f_ec: Tensor, f_eq: Tensor,
                           query_valid: np.ndarray) -> tuple[Tensor, Tensor]:
    """Cosine relevance of every clip against every word; invalid words zeroed."""
    l_v = f_ev.shape[0]
    col_mask = engine.constant(np.tile(query_valid.astype(np.float64), (l_v, 1)))
    s_qv = engine.mul(engine.cosine_matrix(f_ev, f_eq), col_mask)
    s_qc = engine.mul(engine.cosine_matrix(f_ec, f_eq), col_mask)
    return s_qv, s_qc


def fuse(s_qv: Tensor, s_qc: Tensor, gate: FusionGate) -> Tensor:
    """Per-entry convex combination W*s_qv + (1-W)*s_qc."""
    if s_qv.shape != s_qc.shape:
        raise engine.ShapeError("fuse: similarity maps must share a shape")
    if gate.mode == "average":
        return engine.smul(engine.add(s_qv, s_qc), 0.5)
    if gate.mode != "learned":
        raise engine.ContractError(f"fuse: unknown gate mode {gate.mode!r}")
    z = engine.shift(engine.add(engine.scale(s_qv, gate.w_qv),
                                engine.scale(s_qc, gate.w_qc)), gate.bias)
    w = engine.sigmoid(z)
    one_minus_w = engine.sadd(engine.neg(w), 1.0)
    return engine.add(engine.mul(w, s_qv), engine.mul(one_minus_w, s_qc))


def iterative_filter(f_ev: Tensor, s_qvc: Tensor, highlight: WordHighlight,
                     n: int) -> tuple[Tensor, list[Tensor], list[int]]:
    """Rescale clips once per top-ranked word: x_j = x_{j-1} * (1 + column).

    Returns the filtered features x_n, the trace [x_0..x_n], and the selected
    word indices.  n=0 returns the input unchanged.
    """
    ranked = highlight.ranked_valid()
    if not 0 <= n <= len(ranked):
        raise engine.ContractError(
            f"iterative_filter: n={n} outside 0..{len(ranked)} valid words")
    d = f_ev.shape[1]
    x = f_ev
    trace = [x]
    selected: list[int] = []
    for j in range(n):
        idx = ranked[j]
        column = engine.gather_column(s_qvc, idx)
        factor = engine.broadcast_col(engine.sadd(column, 1.0), d)
        x = engine.mul(x, factor)
        trace.append(x)
        selected.append(idx)
    return x, trace, selected


def rfm_forward(fem_out: FemOutput, gate: FusionGate, n: int) -> RfmOutput:
    s_qv, s_qc = relevance_similarities(fem_out.f_ev, fem_out.f_ec,
                                        fem_out.f_eq, fem_out.query_valid)
    s_qvc = fuse(s_qv, s_qc, gate)
    f_fv, trace, selected = iterative_filter(fem_out.f_ev, s_qvc,
                                             fem_out.highlight, n)
    return RfmOutput(s_qv=s_qv, s_qc=s_qc, s_qvc=s_qvc,
                     selected_words=selected, f_fv=f_fv, trace=trace)
