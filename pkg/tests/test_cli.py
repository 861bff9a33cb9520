import json
import subprocess
import sys

import pandas as pd
import pytest

from demandml.cli import expand_models, format_cell, main, merge_reports
from demandml.config import file_digest
from demandml.domain import FILES

RF = {"schema_version": 1, "rf": {"n_trees": 8, "mtry": [10], "min_leaf": [5]}, "lasso": {"n_folds": 3}}


def _run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert _run("simulate", "--seed", 7, "--n-subjects", 15, "--out", d) == 0
    return d


@pytest.fixture(scope="module")
def config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "cfg.json"
    p.write_text(json.dumps(RF))
    return p


def _digests(d):
    return {p.name: file_digest(p) for p in sorted(d.iterdir()) if p.is_file() and p.name != "manifest.json"}


def test_simulate_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert _run("simulate", "--seed", 7, "--out", a) == 0
    assert _run("simulate", "--seed", 7, "--out", b) == 0
    assert _digests(a) == _digests(b)
    assert set(FILES) | {"truth.csv"} == set(_digests(a))
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    ma.pop("wall_clock_seconds"), mb.pop("wall_clock_seconds")
    assert {k: v for k, v in ma.items() if k != "artifacts"} == {k: v for k, v in mb.items() if k != "artifacts"}
    assert sorted(ma["artifacts"].values()) == sorted(mb["artifacts"].values())


def test_manifest_lists_artifacts(data_dir):
    m = json.loads((data_dir / "manifest.json").read_text())
    assert m["command"] == "simulate" and m["seed"] == 7
    for path, digest in m["artifacts"].items():
        assert file_digest(path) == digest
    assert set(m["versions"]) >= {"demandml", "numpy", "pandas", "python", "kernels"}


def test_missing_data_flag_exits_2(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "demandml", "evaluate", "--models", "bdm", "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 2
    assert "usage:" in proc.stderr and "--data" in proc.stderr


def test_bare_kind_without_features_exits_2(data_dir, tmp_path):
    assert _run("evaluate", "--data", data_dir, "--out", tmp_path, "--models", "rf", "--repeats", 1) == 2


def test_unknown_config_key_exits_1(data_dir, tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"schema_version": 1, "rf": {"n_tree": 5}}))
    assert _run("evaluate", "--config", cfg, "--data", data_dir, "--out", tmp_path, "--models", "bdm") == 1
    assert "n_tree" in capsys.readouterr().err


def test_bad_schema_version(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"schema_version": 2}))
    assert _run("simulate", "--config", cfg, "--out", tmp_path) == 1


def test_invalid_cohort_exits_1(data_dir, tmp_path):
    bad = tmp_path / "bad"
    bad.mkdir()
    for f in FILES:
        (bad / f).write_text((data_dir / f).read_text())
    (bad / "wtp.csv").write_text((data_dir / "wtp.csv").read_text().replace("\n0,0,", "\n0,0,13", 1))
    assert _run("evaluate", "--data", bad, "--out", tmp_path / "o", "--models", "bdm") == 1


def test_expand_models():
    names = [s.name for s in expand_models("bdm,rf,logit(WOA)", "W,WO")]
    assert names == ["bdm", "rf(W)", "rf(WO)", "logit(WOA)"]
    assert [s.name for s in expand_models("rf(W),rf(W)", None)] == ["rf(W)"]


def test_format_cell():
    assert format_cell(0.08904, 0.00121) == "0.0890 (0.0012)"
    assert format_cell(float("nan"), 0.1) == "NA"


def _report(rows):
    return pd.DataFrame(rows, columns=["model", "space", "protocol", "size", "metric", "mean", "stderr", "n_repeats"])


def test_merge_single_is_identity_reformat():
    df = _report([["rf", "WO", "within_between", 3960, "mse", 0.08904, 0.0012, 50],
                  ["bdm", "", "within_between", 3960, "mse", 0.1301, 0.0020, 50]])
    t = merge_reports([df])
    assert t.to_dict("records") == [
        {"model": "rf(WO)", "within_between": "0.0890 (0.0012)"},
        {"model": "bdm", "within_between": "0.1301 (0.0020)"},
    ]


def test_merge_three_protocols():
    frames = [
        _report([["rf", "W", p, 3960, "mse", 0.1 + k / 100, 0.001, 50]]) for k, p in
        enumerate(["within_between", "between_subject", "between_item"])
    ]
    t = merge_reports(frames)
    assert list(t.columns) == ["model", "within_between", "between_subject", "between_item"]
    assert len(t) == 1 and t.iloc[0]["between_item"] == "0.1200 (0.0010)"


def test_merge_conflict():
    a = _report([["rf", "W", "within_between", 3960, "mse", 0.1, 0.001, 50]])
    b = _report([["rf", "W", "within_between", 3960, "mse", 0.2, 0.001, 50]])
    with pytest.raises(ValueError, match="conflicting"):
        merge_reports([a, b])
    assert len(merge_reports([a, a])) == 1


def test_merge_takes_largest_size():
    df = _report([["rf", "W", "within_between", 600, "mse", 0.2, 0.01, 5],
                  ["rf", "W", "within_between", 3960, "mse", 0.1, 0.01, 5]])
    assert merge_reports([df]).iloc[0]["within_between"] == "0.1000 (0.0100)"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_pipeline(data_dir, config, tmp_path):
    ev_dir = tmp_path / "eval"
    assert _run("evaluate", "--config", config, "--data", data_dir, "--out", ev_dir,
                "--models", "bdm,probbuy,logit_surplus,logit,lasso,rf", "--features", "C,W",
                "--repeats", 2, "--holdout", 90) == 0
    rep = pd.read_csv(ev_dir / "report.csv", keep_default_na=False)
    names = {f"{m}({s})" if s else m for m, s in zip(rep["model"], rep["space"])}
    assert names == {"bdm", "probbuy", "logit_surplus", "logit(C)", "logit(W)", "lasso(C)", "lasso(W)",
                     "rf(C)", "rf(W)"}
    assert set(rep["metric"]) == {"mse", "deviance", "auc"}
    assert (ev_dir / "plotdata" / "surplus_bins.csv").exists()

    bs_dir = tmp_path / "bs"
    assert _run("evaluate", "--config", config, "--data", data_dir, "--out", bs_dir, "--models", "bdm,rf(W)",
                "--protocol", "between_subject", "--repeats", 2, "--metrics", "mse") == 0

    sw_dir = tmp_path / "sweep"
    assert _run("sweep", "--config", config, "--data", data_dir, "--out", sw_dir, "--models", "bdm,rf(C)",
                "--sizes", "300:1100:400", "--repeats", 2, "--holdout", 90) == 0
    curve = pd.read_csv(sw_dir / "plotdata" / "sweep.csv")
    assert sorted(set(curve["size"])) == [300, 700, 1100]

    fit_dir = tmp_path / "fit"
    assert _run("fit", "--config", config, "--data", data_dir, "--out", fit_dir, "--model", "rf", "--features", "WO") == 0
    model_file = fit_dir / "model_rf_WO.json"
    assert model_file.exists()

    pr_dir = tmp_path / "price"
    assert _run("price", "--config", config, "--data", data_dir, "--out", pr_dir,
                "--pricing-model", model_file, "--truth-model", "rf(W)") == 0
    summary = json.loads((pr_dir / "summary.json").read_text())
    assert summary["n_pairs"] == 15 * 20 and summary["pricing_model"] == "rf(WO)"
    manifest = json.loads((pr_dir / "manifest.json").read_text())
    assert str(model_file) in manifest["inputs"]

    dg_dir = tmp_path / "diag"
    assert _run("diagnose", "--data", data_dir, "--out", dg_dir) == 0
    assert set(json.loads((dg_dir / "diagnostics.json").read_text())) == {"wtp_trend", "buy_trend"}

    rp_dir = tmp_path / "report"
    assert _run("report", ev_dir / "report.csv", bs_dir / "report.csv", "--out", rp_dir, "--metrics", "mse,auc") == 0
    table = pd.read_csv(rp_dir / "summary_mse.csv", keep_default_na=False)
    assert list(table.columns) == ["model", "within_between", "between_subject"]
    assert (rp_dir / "summary_auc.csv").exists()


def test_featurize(data_dir, tmp_path):
    assert _run("featurize", "--data", data_dir, "--out", tmp_path, "--features", "C,W",
                "--drop-item-fixed-effects") == 0
    df = pd.read_csv(tmp_path / "features_C.csv")
    assert len(df) == 15 * 80
    assert df.shape[1] == 4 + 3 + 2 * 14


def test_evaluate_reproducible(data_dir, config, tmp_path):
    for d, threads in (("a", 1), ("b", 2)):
        assert _run("evaluate", "--config", config, "--data", data_dir, "--out", tmp_path / d,
                    "--models", "bdm,rf(C)", "--repeats", 2, "--holdout", 90, "--threads", threads) == 0
    assert (tmp_path / "a" / "report.csv").read_bytes() == (tmp_path / "b" / "report.csv").read_bytes()
