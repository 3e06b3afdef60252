"""Feature fixtures: the stored batches that stand in for encoder outputs.

A fixture file is a JSON document:

    {"d": int, "samples": [{"id", "query", "query_valid", "visual",
                            "captions", "caption_valid", "relevance_mask"}]}

Field order is free; unknown fields are rejected.  ``load_fixture`` validates
every sample invariant and reports failures by sample id and field.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import engine
from .engine import Tensor

SAMPLE_FIELDS = {"id", "query", "query_valid", "visual", "captions",
                 "caption_valid", "relevance_mask"}


class FixtureError(ValueError):
    """Fixture file failed to parse or violates a sample invariant."""


@dataclass
class Sample:
    """One (query, video, captions) item with masks.

    query is (L_q, d), visual (L_v, d), captions (L_v, L_c, d); the valid
    masks and relevance_mask are 0/1 vectors of matching extents.
    """

    id: str
    query: np.ndarray
    query_valid: np.ndarray
    visual: np.ndarray
    captions: np.ndarray
    caption_valid: np.ndarray
    relevance_mask: np.ndarray

    @property
    def l_q(self) -> int:
        return self.query.shape[0]

    @property
    def l_v(self) -> int:
        return self.visual.shape[0]

    @property
    def l_c(self) -> int:
        return self.captions.shape[1]

    @property
    def d(self) -> int:
        return self.query.shape[1]

    @property
    def valid_word_count(self) -> int:
        return int(self.query_valid.sum())


@dataclass
class Batch:
    d: int
    samples: list[Sample]

    def __len__(self) -> int:
        return len(self.samples)


# ---------------------------------------------------------------------------
# validation

def _as_float_array(value, field: str, sid: str, ndim: int) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise FixtureError(f"sample {sid}: field {field} is not numeric ({e})") from None
    if arr.ndim != ndim:
        raise FixtureError(
            f"sample {sid}: field {field} must be {ndim}-dimensional, got {arr.ndim}")
    if arr.size == 0:
        raise FixtureError(f"sample {sid}: field {field} must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise FixtureError(f"sample {sid}: field {field} contains non-finite values")
    return arr


def _as_mask(value, field: str, sid: str, ndim: int) -> np.ndarray:
    arr = _as_float_array(value, field, sid, ndim)
    if not np.all((arr == 0) | (arr == 1)):
        bad = np.argwhere((arr != 0) & (arr != 1))[0]
        idx = "[" + "][".join(str(i) for i in bad) + "]"
        raise FixtureError(f"sample {sid}: field {field}{idx} must be 0 or 1")
    return arr.astype(np.int64)


def _validate_sample(raw: dict, d: int) -> Sample:
    sid = str(raw.get("id", "<missing id>"))
    unknown = set(raw) - SAMPLE_FIELDS
    if unknown:
        raise FixtureError(f"sample {sid}: unknown fields {sorted(unknown)}")
    missing = SAMPLE_FIELDS - set(raw)
    if missing:
        raise FixtureError(f"sample {sid}: missing fields {sorted(missing)}")

    query = _as_float_array(raw["query"], "query", sid, 2)
    visual = _as_float_array(raw["visual"], "visual", sid, 2)
    captions = _as_float_array(raw["captions"], "captions", sid, 3)
    query_valid = _as_mask(raw["query_valid"], "query_valid", sid, 1)
    caption_valid = _as_mask(raw["caption_valid"], "caption_valid", sid, 2)
    relevance = _as_mask(raw["relevance_mask"], "relevance_mask", sid, 1)

    l_q, l_v = query.shape[0], visual.shape[0]
    if query.shape[1] != d:
        raise FixtureError(f"sample {sid}: query feature dim {query.shape[1]} != d={d}")
    if visual.shape[1] != d:
        raise FixtureError(f"sample {sid}: visual feature dim {visual.shape[1]} != d={d}")
    if captions.shape[0] != l_v or captions.shape[2] != d:
        raise FixtureError(
            f"sample {sid}: captions shape {captions.shape} inconsistent with "
            f"L_v={l_v}, d={d}")
    if query_valid.shape[0] != l_q:
        raise FixtureError(f"sample {sid}: query_valid length != L_q")
    if caption_valid.shape != captions.shape[:2]:
        raise FixtureError(f"sample {sid}: caption_valid shape != (L_v, L_c)")
    if relevance.shape[0] != l_v:
        raise FixtureError(f"sample {sid}: relevance_mask length != L_v")
    if query_valid.sum() < 1:
        raise FixtureError(f"sample {sid}: query_valid needs at least one valid word")
    if np.any(caption_valid.sum(axis=1) < 1):
        clip = int(np.argwhere(caption_valid.sum(axis=1) < 1)[0][0])
        raise FixtureError(
            f"sample {sid}: caption_valid[{clip}] has no valid caption token")

    return Sample(id=sid, query=query, query_valid=query_valid, visual=visual,
                  captions=captions, caption_valid=caption_valid,
                  relevance_mask=relevance)


def batch_from_dict(doc: dict) -> Batch:
    if not isinstance(doc, dict):
        raise FixtureError("fixture root must be an object")
    unknown = set(doc) - {"d", "samples"}
    if unknown:
        raise FixtureError(f"fixture: unknown top-level fields {sorted(unknown)}")
    if "d" not in doc or "samples" not in doc:
        raise FixtureError("fixture: top-level fields 'd' and 'samples' are required")
    d = doc["d"]
    if not isinstance(d, int) or d < 1:
        raise FixtureError(f"fixture: d must be a positive integer, got {d!r}")
    raw_samples = doc["samples"]
    if not isinstance(raw_samples, list) or not raw_samples:
        raise FixtureError("fixture: samples must be a non-empty list")
    return Batch(d=d, samples=[_validate_sample(s, d) for s in raw_samples])


def load_fixture(path: str | Path) -> Batch:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise FixtureError(f"cannot read fixture {path}: {e}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FixtureError(f"fixture {path} is not valid JSON: {e}") from None
    return batch_from_dict(doc)


def batch_to_dict(batch: Batch) -> dict:
    return {
        "d": batch.d,
        "samples": [
            {
                "id": s.id,
                "query": s.query.tolist(),
                "query_valid": s.query_valid.tolist(),
                "visual": s.visual.tolist(),
                "captions": s.captions.tolist(),
                "caption_valid": s.caption_valid.tolist(),
                "relevance_mask": s.relevance_mask.tolist(),
            }
            for s in batch.samples
        ],
    }


def save_fixture(batch: Batch, path: str | Path) -> None:
    Path(path).write_text(json.dumps(batch_to_dict(batch), indent=1) + "\n")


# ---------------------------------------------------------------------------
# synthesis

def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def synthesize(seed: int, b: int, l_q: int, l_v: int, l_c: int, d: int,
               alignment: float) -> Batch:
    """Deterministic synthetic batch of unit-norm, strictly positive features.

    Raw vectors mimic post-ReLU pooled encoder outputs: sparse nonnegative
    draws with a small floor, normalized to unit length, so every pairwise
    similarity is strictly positive.  Each sample draws a query centroid;
    query words are noisy copies of it.  Clips with relevance_mask=1 (and
    their captions) mix the centroid with fresh noise at weight ``alignment``;
    alignment=0 gives independent features, alignment=1 copies the centroid
    exactly.
    """
    if min(b, l_q, l_v, l_c, d) < 1:
        raise FixtureError("synthesize: all extents must be >= 1")
    if not 0.0 <= alignment <= 1.0:
        raise FixtureError("synthesize: alignment must lie in [0, 1]")
    rng = np.random.default_rng(seed)

    def draw(*shape):
        u = rng.uniform(0.0, 1.0, size=shape)
        sparse = rng.uniform(size=shape) < 0.5
        return np.where(sparse, u, 0.1 * u) + 0.02

    def mix(noise_rows):
        # rows along the first axis of the final two dims blend with the centroid
        if alignment == 1.0:
            return np.broadcast_to(centroid, noise_rows.shape).copy()
        return _unit_rows(alignment * centroid + (1.0 - alignment) * noise_rows)

    samples = []
    for s in range(b):
        centroid = _unit_rows(draw(d)[None, :])[0]
        query = _unit_rows(centroid[None, :] + 0.25 * draw(l_q, d))
        n_rel = max(1, l_v // 2) if l_v > 1 else 1
        rel_idx = rng.choice(l_v, size=n_rel, replace=False)
        relevance = np.zeros(l_v, dtype=np.int64)
        relevance[rel_idx] = 1
        visual = _unit_rows(draw(l_v, d))
        captions = _unit_rows(draw(l_v, l_c, d))
        for i in range(l_v):
            if relevance[i]:
                visual[i] = mix(visual[i])
                captions[i] = mix(captions[i])
        samples.append(Sample(
            id=f"s{s:03d}",
            query=query,
            query_valid=np.ones(l_q, dtype=np.int64),
            visual=visual,
            captions=captions,
            caption_valid=np.ones((l_v, l_c), dtype=np.int64),
            relevance_mask=relevance,
        ))
    return Batch(d=d, samples=samples)


# ---------------------------------------------------------------------------
# caption pooling

def _clip_caption_weights(captions: Tensor, caption_valid: np.ndarray,
                          query: Tensor, query_valid: np.ndarray,
                          i: int) -> tuple[Tensor, Tensor]:
    """Caption tokens of clip i and their query-driven attention weights."""
    toks = engine.index_first(captions, i)
    sim = engine.matmul(toks, engine.transpose(query))
    mean_sim = engine.mean_axis(sim, axis=1, valid=query_valid)
    weights = engine.softmax(mean_sim, axis=0, valid=caption_valid[i])
    return toks, weights


def caption_weights(sample: Sample) -> np.ndarray:
    """The (L_v, L_c) pooling weight matrix for one sample."""
    captions = engine.constant(sample.captions)
    query = engine.constant(sample.query)
    rows = [_clip_caption_weights(captions, sample.caption_valid, query,
                                  sample.query_valid, i)[1].data
            for i in range(sample.l_v)]
    return np.stack(rows)


def pool_captions_tensors(captions: Tensor, caption_valid: np.ndarray,
                          query: Tensor, query_valid: np.ndarray) -> Tensor:
    """Pool per-clip caption tokens into clip-level caption features.

    For each clip: raw dot-product similarity of every caption token against
    every query word, averaged over valid words, softmaxed over valid caption
    tokens, then used as weights for a sum over the tokens.  Differentiable in
    both the caption tokens and the query.
    """
    l_v = captions.shape[0]
    rows = []
    for i in range(l_v):
        toks, weights = _clip_caption_weights(captions, caption_valid, query,
                                              query_valid, i)
        pooled = engine.matmul(engine.row_matrix(weights), toks)
        rows.append(engine.flatten_row(pooled))
    return engine.stack_rows(rows)


def pool_captions(sample: Sample) -> Tensor:
    """Sample-level convenience wrapper around ``pool_captions_tensors``."""
    return pool_captions_tensors(
        engine.constant(sample.captions), sample.caption_valid,
        engine.constant(sample.query), sample.query_valid)
