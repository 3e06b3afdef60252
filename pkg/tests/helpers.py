"""Shared test utilities: finite differences, random instances, conversions."""

from __future__ import annotations

import numpy as np

from clipfilter import engine, fem, fixtures, pipeline, rfm
from clipfilter.engine import Tape
from clipfilter.fixtures import Batch, Sample


def value_at(build, arrays) -> float:
    """Evaluate build(*tensors) forward-only and return the scalar value."""
    return build(*[engine.constant(a) for a in arrays]).item()


def central_diff(build, arrays, h: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of a scalar function of several arrays."""
    grads = []
    for i, a in enumerate(arrays):
        g = np.zeros_like(a, dtype=np.float64)
        flat = g.reshape(-1)
        base = a.astype(np.float64).copy()
        for j in range(base.size):
            plus = [x.copy() if k == i else x for k, x in enumerate(arrays)]
            minus = [x.copy() if k == i else x for k, x in enumerate(arrays)]
            plus[i].reshape(-1)[j] = base.reshape(-1)[j] + h
            minus[i].reshape(-1)[j] = base.reshape(-1)[j] - h
            flat[j] = (value_at(build, plus) - value_at(build, minus)) / (2 * h)
        grads.append(g)
    return grads


def check_gradients(build, arrays, h: float = 1e-6, rtol: float = 1e-5,
                    atol: float = 1e-8) -> None:
    """Backward gradients must match central differences for every array."""
    leaves = [engine.leaf(a) for a in arrays]
    with Tape() as tape:
        out = build(*leaves)
    tape.backward(out)
    fd = central_diff(build, [np.asarray(a, dtype=np.float64) for a in arrays], h)
    for k, (l, f) in enumerate(zip(leaves, fd)):
        g = np.zeros_like(f) if l.grad is None else l.grad
        np.testing.assert_allclose(
            g, f, rtol=rtol, atol=atol,
            err_msg=f"gradient mismatch on input {k}")


def reduce_op(op, *const_args, **kwargs):
    """Wrap an op into a scalar function via a fixed random linear functional."""
    state = {}

    def build(*tensors):
        out = op(*tensors, *const_args, **kwargs)
        if "probe" not in state:
            probe_rng = np.random.default_rng(99)
            state["probe"] = probe_rng.normal(size=out.shape)
        return engine.sum_all(engine.mul(out, engine.constant(state["probe"])))

    return build


def rand_away_from_zero(rng, *shape, low=0.1, high=1.5):
    mag = rng.uniform(low, high, size=shape)
    sign = np.where(rng.uniform(size=shape) < 0.5, -1.0, 1.0)
    return mag * sign


def random_sample(rng, l_q, l_v, l_c, d, pad=False) -> Sample:
    query_valid = np.ones(l_q, dtype=np.int64)
    caption_valid = np.ones((l_v, l_c), dtype=np.int64)
    if pad and l_q > 1:
        query_valid[rng.integers(1, l_q)] = 0
    if pad and l_c > 1:
        caption_valid[rng.integers(0, l_v), rng.integers(1, l_c)] = 0
    relevance = rng.integers(0, 2, size=l_v)
    if relevance.sum() == 0:
        relevance[0] = 1
    return Sample(
        id=f"r{rng.integers(0, 10**6):06d}",
        query=rng.normal(size=(l_q, d)),
        query_valid=query_valid,
        visual=rng.normal(size=(l_v, d)),
        captions=rng.normal(size=(l_v, l_c, d)),
        caption_valid=caption_valid,
        relevance_mask=relevance.astype(np.int64),
    )


def random_batch(rng, b, l_q, l_v, l_c, d, pad=False) -> Batch:
    return Batch(d=d, samples=[random_sample(rng, l_q, l_v, l_c, d, pad)
                               for _ in range(b)])


def random_fem_params(rng, d) -> fem.FemParams:
    return fem.FemParams.random(d, rng)


def gate_for(mode: str, rng=None) -> rfm.FusionGate:
    if mode == "average":
        return rfm.FusionGate.average()
    if rng is None:
        return rfm.FusionGate.learned_zero()
    return rfm.FusionGate.learned_random(rng)


def model_loss(batch: Batch, params: pipeline.ModelParams,
               weights, iters: int = 0):
    """Build the full alignment loss tensor for a batch (trainable features)."""
    feats = [pipeline.SampleFeatures.from_sample(s, trainable=True)
             for s in batch.samples]
    forwards = [pipeline.forward_sample(s, f, params, iters)
                for s, f in zip(batch.samples, feats)]
    l_ma, _ = pipeline.batch_losses(forwards, feats, weights)
    return l_ma, feats
