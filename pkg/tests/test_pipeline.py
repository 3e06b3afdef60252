"""Pipeline orchestration and CLI: determinism, golden report, exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from clipfilter import cli, engine, oracle, pipeline, report as reporting
from clipfilter.engine import constant
from clipfilter.fixtures import load_fixture, save_fixture, synthesize
from clipfilter.losses import LossWeights
from clipfilter.pipeline import (ModelParams, NumericalError, RunConfig,
                                 run_batch, saliency_head, sweep_iters, train)

DATA = Path(__file__).parent / "data"


def _config(**kw):
    defaults = dict(fixture="fx.json", seed=0, iters=2, fusion="learned",
                    init="random", figures=False)
    defaults.update(kw)
    return RunConfig(**defaults)


class TestSaliencyHead:
    def test_equal_row_scores_one(self):
        sal = saliency_head(constant([[3.0, 4.0]]), constant([3.0, 4.0]))
        assert sal.data[0] == 1.0

    def test_orthogonal_scores_zero(self):
        sal = saliency_head(constant([[1.0, 0.0]]), constant([0.0, 1.0]))
        assert sal.data[0] == 0.0

    def test_random_vs_oracle(self):
        rng = np.random.default_rng(80)
        f_fv = rng.normal(size=(4, 3))
        sent = rng.normal(size=3)
        got = saliency_head(constant(f_fv), constant(sent)).data
        want = oracle.saliency_head(f_fv.tolist(), sent.tolist())
        assert oracle.OracleResult(want).max_abs_diff(got.tolist()) <= 1e-12


class TestRunBatch:
    def test_deterministic_reports(self):
        batch = synthesize(seed=2, b=3, l_q=3, l_v=4, l_c=2, d=5, alignment=0.6)
        cfg = _config()
        a = reporting.report_to_bytes(run_batch(batch, cfg).report)
        b = reporting.report_to_bytes(run_batch(batch, cfg).report)
        assert a == b

    def test_clamp_warning_recorded(self):
        batch = synthesize(seed=3, b=1, l_q=2, l_v=3, l_c=1, d=4, alignment=0.5)
        result = run_batch(batch, _config(iters=5))
        assert any("clamped from 5 to 2" in w for w in result.report["warnings"])
        assert len(result.report["samples"][0]["trace_norms"]) == 3

    def test_report_schema_keys(self):
        batch = synthesize(seed=4, b=2, l_q=3, l_v=3, l_c=2, d=4, alignment=0.5)
        rep = run_batch(batch, _config()).report
        assert set(rep) == {"config_echo", "samples", "losses", "warnings"}
        assert set(rep["losses"]) == {"l_qv", "l_qc", "l_cc", "l_ma"}
        for s in rep["samples"]:
            assert set(s) == {"id", "top_words", "saliency", "trace_norms"}

    def test_report_round_trips_through_parser(self):
        batch = synthesize(seed=5, b=2, l_q=2, l_v=3, l_c=2, d=4, alignment=0.5)
        rep = run_batch(batch, _config()).report
        data = reporting.report_to_bytes(rep)
        assert reporting.parse_report(data) == reporting.round_floats(rep)

    def test_n_zero_identity_saliency(self):
        batch = synthesize(seed=6, b=2, l_q=3, l_v=4, l_c=2, d=4, alignment=0.7)
        cfg = _config(iters=0, init="identity")
        result = run_batch(batch, cfg)
        params = ModelParams.create(batch.d, "identity", "learned", 0)
        for fwd, sample in zip(result.forwards, batch.samples):
            feats = pipeline.SampleFeatures.from_sample(sample)
            ref = pipeline.forward_sample(sample, feats, params, 0)
            direct = saliency_head(ref.fem_out.f_ev, ref.fem_out.f_eq_sent)
            np.testing.assert_array_equal(fwd.saliency.data, direct.data)


class TestTrain:
    def test_zero_lr_constant_series(self):
        batch = synthesize(seed=7, b=2, l_q=2, l_v=2, l_c=1, d=3, alignment=0.5)
        res = train(batch, _config(steps=3, lr=0.0))
        vals = [r.l_ma for r in res.loss_series]
        assert all(v == vals[0] for v in vals)

    def test_zero_weights_leave_params_unchanged(self):
        batch = synthesize(seed=8, b=2, l_q=2, l_v=2, l_c=1, d=3, alignment=0.5)
        cfg = _config(steps=2, lr=0.1, weights=LossWeights(0.0, 0.0, 0.0))
        before = ModelParams.create(batch.d, cfg.init, cfg.fusion, cfg.seed)
        res = train(batch, cfg)
        for name, tensor in res.params.leaves().items():
            np.testing.assert_array_equal(tensor.data, before.leaves()[name].data)

    def test_loss_decreases(self):
        batch = synthesize(seed=9, b=3, l_q=3, l_v=4, l_c=2, d=5, alignment=0.8)
        res = train(batch, _config(steps=40, lr=0.2, init="identity"))
        assert res.loss_series[-1].l_ma < res.loss_series[0].l_ma

    def test_frozen_inputs_only_move_params(self):
        batch = synthesize(seed=10, b=2, l_q=2, l_v=3, l_c=1, d=3, alignment=0.5)
        cfg = _config(steps=3, lr=0.1, train_inputs=False, init="identity")
        res = train(batch, cfg)
        # query-video loss reads raw features only, so it cannot move
        assert abs(res.loss_series[-1].l_qv - res.loss_series[0].l_qv) <= 1e-12
        before = ModelParams.create(batch.d, cfg.init, cfg.fusion, cfg.seed)
        moved = any(not np.array_equal(t.data, before.leaves()[n].data)
                    for n, t in res.params.leaves().items())
        assert moved


class TestSweep:
    def test_single_zero_matches_run(self):
        batch = synthesize(seed=11, b=2, l_q=3, l_v=3, l_c=2, d=4, alignment=0.6)
        cfg = _config(iters=3)
        sweep = sweep_iters(batch, cfg, [0])
        direct = run_batch(batch, _config(iters=0))
        assert sweep.rows[0]["l_ma"] == direct.loss_report.l_ma
        assert reporting.report_to_bytes(sweep.runs[0].report) == \
            reporting.report_to_bytes(direct.report)

    def test_table_grid(self):
        batch = synthesize(seed=12, b=2, l_q=8, l_v=3, l_c=2, d=4, alignment=0.6)
        sweep = sweep_iters(batch, _config(), [0, 1, 3, 5, 7])
        assert [r["iters"] for r in sweep.rows] == [0, 1, 3, 5, 7]

    def test_trace_norms_monotone_on_positive_fixture(self):
        batch = synthesize(seed=13, b=2, l_q=8, l_v=4, l_c=2, d=6, alignment=0.7)
        sweep = sweep_iters(batch, _config(init="identity", fusion="average"),
                            [1, 3, 5])
        for run in sweep.runs.values():
            for s in run.report["samples"]:
                norms = s["trace_norms"]
                assert all(b > a for a, b in zip(norms, norms[1:]))


class TestCli:
    def _write_fixture(self, tmp_path, **kw):
        args = dict(seed=1, b=2, l_q=3, l_v=3, l_c=2, d=4, alignment=0.6)
        args.update(kw)
        path = tmp_path / "fx.json"
        save_fixture(synthesize(**args), path)
        return path

    def test_run_writes_report_and_exit_zero(self, tmp_path, capsys):
        fx = self._write_fixture(tmp_path)
        out = tmp_path / "report.json"
        rc = cli.main(["run", "--fixture", str(fx), "--out", str(out), "--no-figures"])
        assert rc == 0
        rep = reporting.load_report(out)
        assert rep["config_echo"]["fixture"] == str(fx)

    def test_run_determinism_bytes(self, tmp_path):
        fx = self._write_fixture(tmp_path)
        outs = []
        for name in ("a.json", "b.json"):
            out = tmp_path / name
            assert cli.main(["run", "--fixture", str(fx), "--out", str(out),
                             "--no-figures", "--seed", "3"]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_golden_report_byte_for_byte(self, tmp_path, monkeypatch):
        monkeypatch.chdir(DATA)
        out = tmp_path / "r.json"
        rc = cli.main(["run", "--fixture", "golden_fixture.json", "--seed", "0",
                       "--iters", "1", "--fusion", "average", "--init", "identity",
                       "--out", str(out), "--no-figures"])
        assert rc == 0
        assert out.read_bytes() == (DATA / "golden_report.json").read_bytes()

    def test_corrupt_fixture_exit_2_names_field(self, tmp_path, capsys):
        doc = json.loads((DATA / "golden_fixture.json").read_text())
        doc["samples"][0]["relevance_mask"] = [2]
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps(doc))
        rc = cli.main(["validate", "--fixture", str(bad)])
        assert rc == 2
        assert "relevance_mask" in capsys.readouterr().err

    def test_usage_error_exit_1(self, capsys):
        assert cli.main(["run"]) == 1
        assert cli.main(["frobnicate"]) == 1

    def test_validate_ok(self, tmp_path, capsys):
        fx = self._write_fixture(tmp_path)
        assert cli.main(["validate", "--fixture", str(fx)]) == 0
        assert "fixture ok" in capsys.readouterr().out

    def test_synthesize_roundtrip(self, tmp_path):
        out = tmp_path / "syn.json"
        rc = cli.main(["synthesize", "--seed", "5", "--batch", "2", "--words", "3",
                       "--clips", "4", "--caption-len", "2", "--dim", "5",
                       "--alignment", "0.8", "--out", str(out)])
        assert rc == 0
        batch = load_fixture(out)
        assert len(batch) == 2 and batch.d == 5

    def test_sweep_writes_csv(self, tmp_path):
        fx = self._write_fixture(tmp_path, l_q=8)
        out = tmp_path / "sweep.csv"
        rc = cli.main(["sweep-iters", "--fixture", str(fx), "--n-values", "0,1,3",
                       "--out", str(out), "--no-figures"])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0].startswith("iters,")
        assert len(lines) == 4

    def test_sweep_bad_n_values_exit_1(self, tmp_path, capsys):
        fx = self._write_fixture(tmp_path)
        assert cli.main(["sweep-iters", "--fixture", str(fx),
                         "--n-values", "1,x"]) == 1

    def test_train_writes_series_and_report(self, tmp_path):
        fx = self._write_fixture(tmp_path)
        out = tmp_path / "train.json"
        rc = cli.main(["train", "--fixture", str(fx), "--steps", "3", "--lr", "0.1",
                       "--out", str(out), "--no-figures", "--init", "identity"])
        assert rc == 0
        assert out.exists()
        series = (tmp_path / "train_loss.csv").read_text().strip().splitlines()
        assert series[0] == "step,l_qv,l_qc,l_cc,l_ma"
        assert len(series) == 5  # header + steps + final

    def test_numerical_failure_exit_3(self, tmp_path, monkeypatch):
        fx = self._write_fixture(tmp_path)

        def boom(*a, **kw):
            raise NumericalError("synthetic divergence")

        monkeypatch.setattr(pipeline, "train", boom)
        monkeypatch.setattr(cli.pipeline, "train", boom)
        rc = cli.main(["train", "--fixture", str(fx), "--steps", "1"])
        assert rc == 3

    def test_figures_rendered(self, tmp_path):
        fx = self._write_fixture(tmp_path)
        out = tmp_path / "rep.json"
        rc = cli.main(["run", "--fixture", str(fx), "--out", str(out)])
        assert rc == 0
        assert (tmp_path / "rep_saliency.png").exists()
        assert (tmp_path / "rep_trace.png").exists()
