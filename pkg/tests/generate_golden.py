"""Regenerate the golden fixture and report from the brute-force oracle path.

Run manually from the repository root when the report schema changes:

    python tests/generate_golden.py

The report values are computed entirely with the oracle module (plain-loop
reference route); only the byte formatting is shared with the library.  The
`run` subcommand must then reproduce the file byte for byte.
"""

from __future__ import annotations

import json
from pathlib import Path

from clipfilter import oracle
from clipfilter.report import report_to_bytes

DATA_DIR = Path(__file__).parent / "data"

FIXTURE = {
    "d": 2,
    "samples": [{
        "id": "g0",
        "query": [[1.0, 0.0]],
        "query_valid": [1],
        "visual": [[0.0, 1.0]],
        "captions": [[[1.0, 0.0]]],
        "caption_valid": [[1]],
        "relevance_mask": [1],
    }],
}

CONFIG_ECHO = {
    "fixture": "golden_fixture.json",
    "seed": 0,
    "iters": 1,
    "fusion": "average",
    "init": "identity",
    "weights": {"lambda_qv": 0.3, "lambda_qc": 0.5, "lambda_cc": 1.5},
    "steps": 0,
    "lr": 0.2,
}


def identity_params(d: int) -> dict:
    def eye_blocks(d_in):
        return {"weight": [[1.0 if i % d == j else 0.0 for j in range(d)]
                           for i in range(d_in)],
                "bias": [0.0] * d}

    names_1x = ["attn_q", "attn_k", "attn_v", "proj_v", "proj_c", "proj_q",
                "xattn_q", "xattn_k", "xattn_v"]
    params = {name: eye_blocks(d) for name in names_1x}
    params["proj_hat_v"] = eye_blocks(4 * d)
    params["proj_hat_c"] = eye_blocks(4 * d)
    params["conv_v"] = eye_blocks(2 * d)
    params["conv_c"] = eye_blocks(2 * d)
    return params


def mean_rows(mat):
    n = len(mat)
    return [sum(row[j] for row in mat) / n for j in range(len(mat[0]))]


def l1(mat):
    return sum(abs(v) for row in mat for v in row)


def main() -> None:
    sample = FIXTURE["samples"][0]
    d = FIXTURE["d"]
    params = identity_params(d)
    n_iters = CONFIG_ECHO["iters"]

    f_c = oracle.pool_captions(sample["captions"], sample["caption_valid"],
                               sample["query"], sample["query_valid"])
    femo = oracle.fem_forward(sample["query"], sample["query_valid"],
                              sample["visual"], f_c, params)
    n_used = min(n_iters, sum(sample["query_valid"]))
    rfmo = oracle.rfm_forward(femo["f_ev"], femo["f_ec"], femo["f_eq"],
                              sample["query_valid"], femo["order"],
                              {"mode": "average"}, n_used)
    saliency = oracle.saliency_head(rfmo["f_fv"], femo["f_eq_sent"])

    l_qv = oracle.loss_query_video([mean_rows(sample["visual"])],
                                   [mean_rows(sample["query"])])
    l_qc = oracle.loss_query_clip(rfmo["s_qv"], sample["relevance_mask"],
                                  sample["query_valid"])
    l_cc = oracle.loss_caption_clip([sample["visual"]], [f_c])
    w = CONFIG_ECHO["weights"]
    l_ma = oracle.loss_total(l_qv, l_qc, l_cc,
                             w["lambda_qv"], w["lambda_qc"], w["lambda_cc"])

    report = {
        "config_echo": CONFIG_ECHO,
        "samples": [{
            "id": sample["id"],
            "top_words": [{"index": k, "score": femo["scores"][k]}
                          for k in femo["order"][:n_used]],
            "saliency": saliency,
            "trace_norms": [l1(x) for x in rfmo["trace"]],
        }],
        "losses": {"l_qv": l_qv, "l_qc": l_qc, "l_cc": l_cc, "l_ma": l_ma},
        "warnings": [],
    }

    DATA_DIR.mkdir(exist_ok=True)
    (DATA_DIR / "golden_fixture.json").write_text(json.dumps(FIXTURE, indent=1) + "\n")
    (DATA_DIR / "golden_report.json").write_bytes(report_to_bytes(report))
    print(f"wrote {DATA_DIR / 'golden_fixture.json'}")
    print(f"wrote {DATA_DIR / 'golden_report.json'}")


if __name__ == "__main__":
    main()
