"""Brute-force reference implementations used only by tests and golden files.

Everything here is written as literal nested loops over plain Python lists,
with no numpy and no imports from the tensor engine, so the two computation
routes stay independent.  Values are lists (vectors), lists of lists
(matrices), or lists of lists of lists.  Parameters arrive as plain dicts:
``{"weight": [[...]], "bias": [...]}`` for affine maps, and
``{"mode": ..., "w_qv": f, "w_qc": f, "bias": f}`` for the fusion gate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

EPS_NORM = 1e-12


# ---------------------------------------------------------------------------
# result wrapper

@dataclass
class OracleResult:
    value: object

    def max_abs_diff(self, candidate) -> float:
        return _max_abs_diff(self.value, candidate)


def _max_abs_diff(a, b) -> float:
    if isinstance(a, (int, float)):
        return abs(float(a) - float(b))
    if len(a) != len(b):
        raise ValueError(f"length mismatch {len(a)} vs {len(b)}")
    return max(_max_abs_diff(x, y) for x, y in zip(a, b))


# ---------------------------------------------------------------------------
# primitive helpers

def o_matmul(a, b):
    m, k, n = len(a), len(b), len(b[0])
    out = [[0.0] * n for _ in range(m)]
    for i in range(m):
        for j in range(n):
            s = 0.0
            for t in range(k):
                s += a[i][t] * b[t][j]
            out[i][j] = s
    return out


def o_transpose(a):
    return [[a[i][j] for i in range(len(a))] for j in range(len(a[0]))]


def o_hadamard(a, b):
    return [[a[i][j] * b[i][j] for j in range(len(a[0]))] for i in range(len(a))]


def o_concat_rows(mats):
    return [[v for mat in mats for v in mat[i]] for i in range(len(mats[0]))]


def o_affine(x, p):
    w, b = p["weight"], p["bias"]
    out = o_matmul(x, w)
    return [[out[i][j] + b[j] for j in range(len(b))] for i in range(len(x))]


def o_softmax_vec(xs, valid=None):
    if valid is None:
        valid = [1] * len(xs)
    live = [x for x, v in zip(xs, valid) if v]
    m = max(live)
    es = [math.exp(x - m) if v else 0.0 for x, v in zip(xs, valid)]
    z = sum(es)
    return [e / z for e in es]


def o_softmax_rows(mat, valid=None):
    return [o_softmax_vec(row, valid) for row in mat]


def o_softmax_cols(mat):
    cols = o_transpose(mat)
    return o_transpose([o_softmax_vec(c) for c in cols])


def o_norm(x):
    return math.sqrt(sum(v * v for v in x))


def o_cosine_vec(x, y):
    c = sum(a * b for a, b in zip(x, y)) / (max(o_norm(x), EPS_NORM) * max(o_norm(y), EPS_NORM))
    return min(max(c, -1.0), 1.0)


def o_cosine_matrix(x, y):
    return [[o_cosine_vec(xi, yj) for yj in y] for xi in x]


def o_cosine_sim(x, y):
    return [o_cosine_vec(xi, y) for xi in x]


def o_mean_rows(mat, valid=None):
    if valid is None:
        valid = [1] * len(mat)
    count = sum(valid)
    d = len(mat[0])
    out = [0.0] * d
    for row, v in zip(mat, valid):
        if v:
            for j in range(d):
                out[j] += row[j]
    return [s / count for s in out]


def o_attention(q, k, v, key_valid=None):
    """softmax(q k^T / sqrt(d)) v with optional key masking."""
    d = len(q[0])
    scores = o_matmul(q, o_transpose(k))
    scaled = [[s / math.sqrt(d) for s in row] for row in scores]
    attn = o_softmax_rows(scaled, key_valid)
    return o_matmul(attn, v)


def o_projected_attention(q_in, k_in, v_in, pq, pk, pv, key_valid=None):
    return o_attention(o_affine(q_in, pq), o_affine(k_in, pk), o_affine(v_in, pv), key_valid)


# ---------------------------------------------------------------------------
# caption pooling (weighted summation over caption tokens)

def pool_captions(captions, caption_valid, query, query_valid):
    """Per clip: dot-product similarity of each caption token against every
    query word, averaged over valid words, softmaxed over valid caption
    tokens, then a weighted sum of the tokens."""
    l_v = len(captions)
    d = len(query[0])
    out = []
    for i in range(l_v):
        toks = captions[i]
        tok_valid = caption_valid[i]
        means = []
        for t in range(len(toks)):
            s, cnt = 0.0, 0
            for k in range(len(query)):
                if query_valid[k]:
                    dot = sum(toks[t][c] * query[k][c] for c in range(d))
                    s += dot
                    cnt += 1
            means.append(s / cnt)
        weights = o_softmax_vec(means, tok_valid)
        row = [0.0] * d
        for t in range(len(toks)):
            for c in range(d):
                row[c] += weights[t] * toks[t][c]
        out.append(row)
    return out


# ---------------------------------------------------------------------------
# feature enhancement

def _rank_descending(scores, valid):
    keyed = [(-(s if valid[k] else -math.inf), k) for k, s in enumerate(scores)]
    return [k for _, k in sorted(keyed)]


def word_highlight(f_q, query_valid, params):
    f_eq = o_projected_attention(f_q, f_q, f_q,
                                 params["attn_q"], params["attn_k"], params["attn_v"],
                                 key_valid=query_valid)
    g_eq = o_mean_rows(f_eq, query_valid)
    scores = o_cosine_sim(f_eq, g_eq)
    order = _rank_descending(scores, query_valid)
    return {"f_eq": f_eq, "scores": scores, "order": order}


def scene_similarities(f_v, f_c, f_eq, query_valid, params):
    d = len(f_eq[0])
    pv = o_affine(f_v, params["proj_v"])
    pc = o_affine(f_c, params["proj_c"])
    pq = o_affine(f_eq, params["proj_q"])
    a_vq = [[s / math.sqrt(d) for s in row] for row in o_matmul(pv, o_transpose(pq))]
    a_cq = [[s / math.sqrt(d) for s in row] for row in o_matmul(pc, o_transpose(pq))]
    return {
        "a_vq": a_vq,
        "a_cq": a_cq,
        "a_vq_row": o_softmax_rows(a_vq, query_valid),
        "a_cq_row": o_softmax_rows(a_cq, query_valid),
        "a_vq_col": o_softmax_cols(a_vq),
        "a_cq_col": o_softmax_cols(a_cq),
    }


def sentence_pool(f_eq, scores, query_valid):
    w = o_softmax_vec(scores, query_valid)
    d = len(f_eq[0])
    out = [0.0] * d
    for k in range(len(f_eq)):
        for c in range(d):
            out[c] += w[k] * f_eq[k][c]
    return out


def scene_compose(f_v, f_c, f_eq, f_eq_sent, sims, params):
    l_v = len(f_v)
    f_v2q = o_matmul(sims["a_vq_row"], f_eq)
    f_c2q = o_matmul(sims["a_cq_row"], f_eq)
    f_q2v = o_matmul(o_matmul(sims["a_vq_row"], o_transpose(sims["a_vq_col"])), f_v)
    f_q2c = o_matmul(o_matmul(sims["a_cq_row"], o_transpose(sims["a_cq_col"])), f_c)
    fhat_v = o_affine(o_concat_rows([f_v, f_v2q, o_hadamard(f_v, f_v2q), o_hadamard(f_v, f_q2v)]),
                      params["proj_hat_v"])
    fhat_c = o_affine(o_concat_rows([f_c, f_c2q, o_hadamard(f_c, f_c2q), o_hadamard(f_c, f_q2c)]),
                      params["proj_hat_c"])
    sent = [f_eq_sent[:] for _ in range(l_v)]
    f_qv = [[max(v, 0.0) for v in row]
            for row in o_affine(o_concat_rows([fhat_v, sent]), params["conv_v"])]
    f_qc = [[max(v, 0.0) for v in row]
            for row in o_affine(o_concat_rows([fhat_c, sent]), params["conv_c"])]
    return {"f_qv": f_qv, "f_qc": f_qc}


def cross_enhance(f_qv, f_qc, params):
    f_ev = o_projected_attention(f_qv, f_qc, f_qc,
                                 params["xattn_q"], params["xattn_k"], params["xattn_v"])
    f_ec = o_projected_attention(f_qc, f_qv, f_qv,
                                 params["xattn_q"], params["xattn_k"], params["xattn_v"])
    return {"f_ev": f_ev, "f_ec": f_ec}


def fem_forward(f_q, query_valid, f_v, f_c, params):
    wh = word_highlight(f_q, query_valid, params)
    sims = scene_similarities(f_v, f_c, wh["f_eq"], query_valid, params)
    sent = sentence_pool(wh["f_eq"], wh["scores"], query_valid)
    comp = scene_compose(f_v, f_c, wh["f_eq"], sent, sims, params)
    enh = cross_enhance(comp["f_qv"], comp["f_qc"], params)
    return {
        "f_eq": wh["f_eq"], "scores": wh["scores"], "order": wh["order"],
        "f_eq_sent": sent,
        "f_ev": enh["f_ev"], "f_ec": enh["f_ec"],
        "a_vq_row": sims["a_vq_row"], "a_cq_row": sims["a_cq_row"],
        "a_vq_col": sims["a_vq_col"], "a_cq_col": sims["a_cq_col"],
    }


# ---------------------------------------------------------------------------
# ranking-based filtering

def relevance_similarities(f_ev, f_ec, f_eq, query_valid):
    s_qv = o_cosine_matrix(f_ev, f_eq)
    s_qc = o_cosine_matrix(f_ec, f_eq)
    for row in s_qv:
        for k, v in enumerate(query_valid):
            if not v:
                row[k] = 0.0
    for row in s_qc:
        for k, v in enumerate(query_valid):
            if not v:
                row[k] = 0.0
    return {"s_qv": s_qv, "s_qc": s_qc}


def fuse(s_qv, s_qc, gate):
    out = []
    for i in range(len(s_qv)):
        row = []
        for j in range(len(s_qv[0])):
            if gate["mode"] == "average":
                w = 0.5
            else:
                z = gate["w_qv"] * s_qv[i][j] + gate["w_qc"] * s_qc[i][j] + gate["bias"]
                w = 1.0 / (1.0 + math.exp(-z))
            row.append(w * s_qv[i][j] + (1.0 - w) * s_qc[i][j])
        out.append(row)
    return out


def iterative_filter(f_ev, s_qvc, order, valid, n):
    """Closed form: each entry of the output is the input entry times the
    product of (1 + selected-column similarity) over the n top-ranked valid
    words.  The trace holds the prefix products."""
    selected = [k for k in order if valid[k]][:n]
    if len(selected) < n:
        raise ValueError(f"n={n} exceeds the {len(selected)} valid words")
    l_v, d = len(f_ev), len(f_ev[0])
    trace = [[row[:] for row in f_ev]]
    for step in range(1, n + 1):
        snap = []
        for i in range(l_v):
            factor = 1.0
            for j in selected[:step]:
                factor *= 1.0 + s_qvc[i][j]
            snap.append([f_ev[i][c] * factor for c in range(d)])
        trace.append(snap)
    return {"f_fv": trace[-1], "trace": trace, "selected_words": selected}


def rfm_forward(f_ev, f_ec, f_eq, query_valid, order, gate, n):
    sims = relevance_similarities(f_ev, f_ec, f_eq, query_valid)
    s_qvc = fuse(sims["s_qv"], sims["s_qc"], gate)
    filt = iterative_filter(f_ev, s_qvc, order, query_valid, n)
    return {"s_qv": sims["s_qv"], "s_qc": sims["s_qc"], "s_qvc": s_qvc, **filt}


# ---------------------------------------------------------------------------
# alignment losses

def loss_query_video(g_v, g_q):
    b = len(g_v)
    total = 0.0
    for j in range(b):
        num = math.exp(o_cosine_vec(g_v[j], g_q[j]))
        den = sum(math.exp(o_cosine_vec(g_v[i], g_q[j])) for i in range(b))
        total += math.log(num / den)
    return -total / b


def loss_query_clip(s_qv, relevance_mask, query_valid):
    count = sum(query_valid)
    total = 0.0
    for i in range(len(s_qv)):
        s = 0.0
        for k in range(len(s_qv[0])):
            if query_valid[k]:
                s += 1.0 / (1.0 + math.exp(-s_qv[i][k]))
        g = s / count
        g = min(max(g, 1e-12), 1.0 - 1e-12)
        m = relevance_mask[i]
        total += m * math.log(g) + (1.0 - m) * math.log(1.0 - g)
    return -total


def loss_caption_clip(f_v, f_c):
    b = len(f_v)
    total = 0.0
    for k in range(b):
        l_k = len(f_c[k])
        num = sum(math.exp(o_cosine_vec(f_v[k][j], f_c[k][j])) for j in range(l_k))
        den = 0.0
        for i in range(b):
            m = min(len(f_v[i]), l_k)
            den += sum(math.exp(o_cosine_vec(f_v[i][j], f_c[k][j])) for j in range(m))
        total += math.log(num / den)
    return -total / b


def loss_total(l_qv, l_qc, l_cc, lambda_qv, lambda_qc, lambda_cc):
    return lambda_qv * l_qv + lambda_qc * l_qc + lambda_cc * l_cc


def saliency_head(f_fv, f_eq_sent):
    return o_cosine_sim(f_fv, f_eq_sent)


# ---------------------------------------------------------------------------
# registry

ORACLES = {
    "matmul": o_matmul,
    "hadamard": o_hadamard,
    "concat": o_concat_rows,
    "softmax": o_softmax_vec,
    "cosine_sim": o_cosine_sim,
    "pool_captions": pool_captions,
    "word_highlight": word_highlight,
    "scene_similarities": scene_similarities,
    "scene_compose": scene_compose,
    "sentence_pool": sentence_pool,
    "cross_enhance": cross_enhance,
    "fem_forward": fem_forward,
    "relevance_similarities": relevance_similarities,
    "fuse": fuse,
    "iterative_filter": iterative_filter,
    "rfm_forward": rfm_forward,
    "loss_query_video": loss_query_video,
    "loss_query_clip": loss_query_clip,
    "loss_caption_clip": loss_caption_clip,
    "loss_total": loss_total,
    "saliency_head": saliency_head,
}


def oracle_for(op_name: str, inputs: dict) -> OracleResult:
    """Evaluate the registered reference for ``op_name`` on ``inputs``."""
    if op_name not in ORACLES:
        raise KeyError(f"no oracle registered for {op_name!r}")
    return OracleResult(ORACLES[op_name](**inputs))
