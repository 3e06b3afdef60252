"""Orchestration: full forward passes over fixtures, toy training, and sweeps.

The forward path per sample is caption pooling -> feature enhancement ->
ranking-based filtering; batch-level alignment losses follow.  Training runs
plain full-batch gradient descent on every differentiable leaf (model
parameters and, by default, the input feature matrices as well, since two of
the three losses read the raw features directly).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import engine, fem, fixtures, losses, rfm
from .engine import Tape, Tensor
from .fem import FemOutput, FemParams
from .fixtures import Batch, Sample
from .losses import LossReport, LossWeights
from .rfm import FusionGate, RfmOutput


class NumericalError(RuntimeError):
    """Loss or gradients stopped being finite."""


@dataclass
class RunConfig:
    fixture: str | None = None
    seed: int = 0
    iters: int = 5
    fusion: str = "learned"
    weights: LossWeights = field(default_factory=LossWeights)
    init: str = "random"
    steps: int = 0
    lr: float = 0.2
    out: str | None = None
    figures: bool = True
    train_inputs: bool = True

    def __post_init__(self):
        if self.iters < 0:
            raise engine.ContractError("iters must be >= 0")
        if self.steps < 0:
            raise engine.ContractError("steps must be >= 0")
        if self.lr < 0:
            raise engine.ContractError("lr must be >= 0")
        if self.fusion not in ("learned", "average"):
            raise engine.ContractError(f"unknown fusion mode {self.fusion!r}")
        if self.init not in ("identity", "random"):
            raise engine.ContractError(f"unknown init mode {self.init!r}")

    def echo(self) -> dict:
        return {
            "fixture": self.fixture,
            "seed": self.seed,
            "iters": self.iters,
            "fusion": self.fusion,
            "init": self.init,
            "weights": {"lambda_qv": self.weights.lambda_qv,
                        "lambda_qc": self.weights.lambda_qc,
                        "lambda_cc": self.weights.lambda_cc},
            "steps": self.steps,
            "lr": self.lr,
        }


@dataclass
class ModelParams:
    fem: FemParams
    gate: FusionGate

    @classmethod
    def create(cls, d: int, init: str, fusion: str, seed: int) -> "ModelParams":
        if init == "identity":
            fem_params = FemParams.identity(d)
            gate = FusionGate.learned_zero() if fusion == "learned" else FusionGate.average()
        else:
            rng = np.random.default_rng(seed)
            fem_params = FemParams.random(d, rng)
            gate = FusionGate.learned_random(rng) if fusion == "learned" else FusionGate.average()
        return cls(fem=fem_params, gate=gate)

    def leaves(self) -> dict[str, Tensor]:
        return {**self.fem.leaves(), **self.gate.leaves()}

    def with_leaves(self, mapping: dict[str, Tensor]) -> "ModelParams":
        return ModelParams(fem=self.fem.with_leaves(mapping),
                           gate=self.gate.with_leaves(mapping))


@dataclass
class SampleFeatures:
    """Feature tensors for one sample; leaves when training inputs."""

    query: Tensor
    visual: Tensor
    captions: Tensor

    @classmethod
    def from_sample(cls, sample: Sample, trainable: bool = False) -> "SampleFeatures":
        make = engine.leaf if trainable else engine.constant
        return cls(query=make(sample.query), visual=make(sample.visual),
                   captions=make(sample.captions))


@dataclass
class SampleForward:
    sample: Sample
    f_c_pooled: Tensor
    fem_out: FemOutput
    rfm_out: RfmOutput
    saliency: Tensor
    n_used: int


def saliency_head(f_fv: Tensor, f_eq_sent: Tensor) -> Tensor:
    """Readability stand-in for the out-of-scope prediction head."""
    return engine.cosine_sim(f_fv, f_eq_sent)


def forward_sample(sample: Sample, feats: SampleFeatures, params: ModelParams,
                   n: int, warnings: list[str] | None = None) -> SampleForward:
    f_c_pooled = fixtures.pool_captions_tensors(
        feats.captions, sample.caption_valid, feats.query, sample.query_valid)
    fem_out = fem.fem_forward(feats.query, sample.query_valid, feats.visual,
                              f_c_pooled, params.fem)
    n_used = n
    if n > sample.valid_word_count:
        n_used = sample.valid_word_count
        if warnings is not None:
            warnings.append(
                f"sample {sample.id}: iters clamped from {n} to {n_used} "
                f"(valid word count)")
    rfm_out = rfm.rfm_forward(fem_out, params.gate, n_used)
    sal = saliency_head(rfm_out.f_fv, fem_out.f_eq_sent)
    return SampleForward(sample=sample, f_c_pooled=f_c_pooled, fem_out=fem_out,
                         rfm_out=rfm_out, saliency=sal, n_used=n_used)


def batch_losses(forwards: list[SampleForward], feats: list[SampleFeatures],
                 weights: LossWeights) -> tuple[Tensor, LossReport]:
    """Alignment losses for one batch; returns the total as a tensor plus floats."""
    globals_qv = []
    caption_pairs = []
    qc_terms = []
    for fwd, ft in zip(forwards, feats):
        g_v = engine.gap(ft.visual)
        g_q = engine.gap(ft.query, valid=fwd.sample.query_valid)
        globals_qv.append((g_v, g_q))
        caption_pairs.append((ft.visual, fwd.f_c_pooled))
        qc_terms.append(losses.loss_query_clip(
            fwd.rfm_out.s_qv, fwd.sample.relevance_mask, fwd.sample.query_valid))

    l_qv = losses.loss_query_video(globals_qv)
    l_cc = losses.loss_caption_clip(caption_pairs)
    l_qc = qc_terms[0]
    for t in qc_terms[1:]:
        l_qc = engine.add(l_qc, t)
    l_qc = engine.smul(l_qc, 1.0 / len(qc_terms))
    l_ma = losses.loss_total(l_qv, l_qc, l_cc, weights)
    report = LossReport(
        l_qv=l_qv.item(), l_qc=l_qc.item(), l_cc=l_cc.item(), l_ma=l_ma.item(),
        l_qc_per_sample=[t.item() for t in qc_terms])
    return l_ma, report


# ---------------------------------------------------------------------------
# run

@dataclass
class RunResult:
    report: dict
    forwards: list[SampleForward]
    loss_report: LossReport
    wall_time: float


def _sample_report(fwd: SampleForward) -> dict:
    scores = fwd.fem_out.highlight.scores.data
    top = fwd.fem_out.highlight.ranked_valid()[:fwd.n_used]
    return {
        "id": fwd.sample.id,
        "top_words": [{"index": int(k), "score": float(scores[k])} for k in top],
        "saliency": [float(v) for v in fwd.saliency.data],
        "trace_norms": [float(np.abs(x.data).sum()) for x in fwd.rfm_out.trace],
    }


def run_batch(batch: Batch, config: RunConfig,
              params: ModelParams | None = None) -> RunResult:
    start = time.perf_counter()
    if params is None:
        params = ModelParams.create(batch.d, config.init, config.fusion, config.seed)
    warnings: list[str] = []
    feats = [SampleFeatures.from_sample(s) for s in batch.samples]
    forwards = [forward_sample(s, f, params, config.iters, warnings)
                for s, f in zip(batch.samples, feats)]
    l_ma, loss_report = batch_losses(forwards, feats, config.weights)
    if not np.isfinite(l_ma.item()):
        raise NumericalError("alignment loss is not finite")
    report = {
        "config_echo": config.echo(),
        "samples": [_sample_report(f) for f in forwards],
        "losses": loss_report.as_dict(),
        "warnings": warnings,
    }
    return RunResult(report=report, forwards=forwards, loss_report=loss_report,
                     wall_time=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainResult:
    loss_series: list[LossReport]
    matched_top_counts: list[int]
    final_run: RunResult
    params: ModelParams


def matched_top_count(feats: list[SampleFeatures], samples: list[Sample]) -> int:
    """How many matched (video, query) pairs top their contrast set.

    For query j the contrast set ranges over videos i, mirroring the
    query-video loss denominator.
    """
    g_v = engine.stack_rows([engine.gap(f.visual) for f in feats])
    g_q = engine.stack_rows([engine.gap(f.query, valid=s.query_valid)
                             for f, s in zip(feats, samples)])
    sims = engine.cosine_matrix(g_v, g_q).data
    return int(sum(sims[j, j] >= sims[:, j].max() for j in range(len(feats))))


def train(batch: Batch, config: RunConfig) -> TrainResult:
    """Full-batch gradient descent on the alignment loss.

    Descends on every differentiable leaf: model parameters plus (unless
    ``train_inputs`` is off) the per-sample feature matrices.
    """
    params = ModelParams.create(batch.d, config.init, config.fusion, config.seed)
    feats = [SampleFeatures.from_sample(s, trainable=config.train_inputs)
             for s in batch.samples]
    loss_series: list[LossReport] = []
    matched_counts: list[int] = []

    for step in range(config.steps):
        with Tape() as tape:
            forwards = [forward_sample(s, f, params, config.iters)
                        for s, f in zip(batch.samples, feats)]
            l_ma, report = batch_losses(forwards, feats, config.weights)
        if not np.isfinite(l_ma.item()):
            raise NumericalError(f"training diverged at step {step}: loss not finite")
        loss_series.append(report)
        matched_counts.append(matched_top_count(feats, batch.samples))
        tape.backward(l_ma)

        def stepped(t: Tensor) -> Tensor:
            if t.grad is None:
                return t
            if not np.all(np.isfinite(t.grad)):
                raise NumericalError(f"training diverged at step {step}: gradient not finite")
            return engine.leaf(t.data - config.lr * t.grad)

        params = params.with_leaves({k: stepped(v) for k, v in params.leaves().items()})
        if config.train_inputs:
            feats = [SampleFeatures(query=stepped(f.query), visual=stepped(f.visual),
                                    captions=stepped(f.captions)) for f in feats]

    final_run = _run_with_features(batch, config, params, feats)
    loss_series.append(final_run.loss_report)
    matched_counts.append(matched_top_count(feats, batch.samples))
    return TrainResult(loss_series=loss_series, matched_top_counts=matched_counts,
                       final_run=final_run, params=params)


def _run_with_features(batch: Batch, config: RunConfig, params: ModelParams,
                       feats: list[SampleFeatures]) -> RunResult:
    start = time.perf_counter()
    warnings: list[str] = []
    forwards = [forward_sample(s, f, params, config.iters, warnings)
                for s, f in zip(batch.samples, feats)]
    l_ma, loss_report = batch_losses(forwards, feats, config.weights)
    if not np.isfinite(l_ma.item()):
        raise NumericalError("alignment loss is not finite")
    report = {
        "config_echo": config.echo(),
        "samples": [_sample_report(f) for f in forwards],
        "losses": loss_report.as_dict(),
        "warnings": warnings,
    }
    return RunResult(report=report, forwards=forwards, loss_report=loss_report,
                     wall_time=time.perf_counter() - start)


# ---------------------------------------------------------------------------
# iteration sweep

@dataclass
class SweepResult:
    rows: list[dict]
    runs: dict[int, RunResult]


def sweep_iters(batch: Batch, config: RunConfig, n_values: list[int]) -> SweepResult:
    """One forward run per filter depth on the same fixture and parameters."""
    rows = []
    runs = {}
    for n in n_values:
        result = run_batch(batch, replace(config, iters=n))
        runs[n] = result
        final_norms = [s["trace_norms"][-1] for s in result.report["samples"]]
        rows.append({
            "iters": n,
            "l_qv": result.loss_report.l_qv,
            "l_qc": result.loss_report.l_qc,
            "l_cc": result.loss_report.l_cc,
            "l_ma": result.loss_report.l_ma,
            "mean_final_trace_l1": float(np.mean(final_norms)),
        })
    return SweepResult(rows=rows, runs=runs)
