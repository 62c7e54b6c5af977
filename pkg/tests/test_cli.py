import json
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from ..cli import main
from ..data import synthetic_dos_flows

CONFIGS = Path(__file__).parent.parent / "configs"

CONFIG = """\
schema_version = 1

[run]
master_seed = 7
workers = 1

[[datasets]]
name = "flows_a"
path = "flows_a.csv"
descriptor = "GENERIC"
label_column = "label"

[[datasets]]
name = "flows_b"
path = "flows_b.csv"
descriptor = "GENERIC"
label_column = "label"

[[classifiers]]
kind = "cart"

[[classifiers]]
kind = "random_forest"
params = { n_estimators = 5 }

[validation]
kind = "holdout"
rounds = 2
repeats = 1

[timing]
enabled = false
"""

# ranks 5,2,4,1,7,6,3 twice, then 3,2,4,1,5,7,6, then a row with a tie
HAND_MATRIX = """\
dataset,RF,CART,MLP,AB,XGB,GBM,ETC
d1,0.95,0.92,0.94,0.91,0.97,0.96,0.93
d2,0.95,0.92,0.94,0.91,0.97,0.96,0.93
d3,0.93,0.92,0.94,0.91,0.95,0.97,0.96
d4,0.965,0.93,0.91,0.92,0.95,0.94,0.965
"""


@pytest.fixture
def config_path(tmp_path: Path) -> Path:
    synthetic_dos_flows(seed=0).to_csv(tmp_path / "flows_a.csv", index=False)
    synthetic_dos_flows(seed=1).to_csv(tmp_path / "flows_b.csv", index=False)
    path = tmp_path / "bench.toml"
    path.write_text(CONFIG)
    return path


def _metrics(out: Path) -> pd.DataFrame:
    return pd.read_csv(out / "metrics.csv").drop(columns=["mbt_s", "resp_s"])


def test_staged_run_matches_single_run(tmp_path, config_path):
    whole, staged = tmp_path / "whole", tmp_path / "staged"
    assert main(["run", "--config", str(config_path), "--out", str(whole)]) == 0
    for stage in ("ingest", "train", "evaluate", "stats", "report"):
        args = [stage, "--config", str(config_path), "--out", str(staged), "--workers", "2"]
        assert main(args) == 0

    pd.testing.assert_frame_equal(_metrics(whole), _metrics(staged))
    for name in ("results_accuracy.csv", "results_auc.csv"):
        assert (whole / name).read_text() == (staged / name).read_text()
    assert (staged / "stats" / "tests.json").exists()
    assert (staged / "selection.csv").exists()
    summary = json.loads((staged / "summary.json").read_text())
    assert len(summary["cells"]) == 4


def test_run_does_not_depend_on_worker_count(tmp_path, config_path):
    outputs = {}
    for workers in (1, 4):
        out = tmp_path / f"workers{workers}"
        args = ["run", "--config", str(config_path), "--out", str(out)]
        assert main([*args, "--workers", str(workers)]) == 0
        outputs[workers] = out

    pd.testing.assert_frame_equal(_metrics(outputs[1]), _metrics(outputs[4]))
    for name in ("results_accuracy.csv", "results_fpr.csv", "results_auc.csv"):
        assert (outputs[1] / name).read_text() == (outputs[4] / name).read_text()
    for bundle in sorted((outputs[1] / "predictions").glob("*.npz")):
        first = np.load(bundle)
        second = np.load(outputs[4] / "predictions" / bundle.name)
        assert sorted(first.files) == sorted(second.files)
        for key in first.files:
            if key not in ("mbt", "resp"):
                assert np.array_equal(first[key], second[key])


def test_train_single_cell(tmp_path, config_path):
    out = tmp_path / "out"
    assert main(["ingest", "--config", str(config_path), "--out", str(out)]) == 0
    args = ["train", "--config", str(config_path), "--out", str(out), "--only", "flows_a:CART"]
    assert main(args) == 0
    bundles = sorted(p.name for p in (out / "predictions").glob("*.npz"))
    assert bundles == ["flows_a__CART__r000.npz"]


def test_unknown_cell_is_a_config_error(tmp_path, config_path):
    out = tmp_path / "out"
    args = ["train", "--config", str(config_path), "--out", str(out), "--only", "flows_c:CART"]
    assert main(["ingest", "--config", str(config_path), "--out", str(out)]) == 0
    assert main(args) == 2


def test_stats_from_results_matrix(tmp_path):
    path = tmp_path / "results_accuracy.csv"
    path.write_text(HAND_MATRIX)
    assert main(["stats", "--results", str(path), "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "stats" / "tests.json").read_text())
    friedman = report["metrics"][0]["friedman"]
    assert friedman["f_statistic"] == pytest.approx(6.7745, abs=5e-5)
    assert friedman["p_value"] == pytest.approx(0.0007, abs=5e-4)
    assert report["metrics"][0]["mean_ranks"]["RF"] == pytest.approx(4.875)


def test_stats_from_published_mean_ranks(tmp_path):
    args = [
        "stats",
        "--mean-ranks",
        str(CONFIGS / "mean_ranks_holdout.csv"),
        "--datasets",
        "4",
        "--out",
        str(tmp_path),
    ]
    assert main(args) == 0
    table = pd.read_csv(tmp_path / "stats" / "tests.csv")
    friedman = table[table["test"] == "friedman"].set_index("metric")
    assert friedman.loc["accuracy", "statistic"] == pytest.approx(6.7745, abs=1e-4)
    assert friedman.loc["auc", "statistic"] == pytest.approx(4.7020, abs=1e-4)
    assert (table["test"] == "nemenyi").any()


def test_mean_ranks_need_dataset_count(tmp_path):
    args = ["stats", "--mean-ranks", str(CONFIGS / "mean_ranks_holdout.csv"), "--out", str(tmp_path)]
    assert main(args) == 2


def test_stage_without_config(tmp_path):
    assert main(["train", "--out", str(tmp_path)]) == 2


def test_report_on_empty_output(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 3


def test_bad_config_file(tmp_path):
    path = tmp_path / "bench.toml"
    path.write_text("schema_version = 2\n")
    assert main(["run", "--config", str(path)]) == 2


def test_single_dataset_run_has_no_statistics(tmp_path):
    synthetic_dos_flows(200, seed=3).to_csv(tmp_path / "flows.csv", index=False)
    path = tmp_path / "one.toml"
    path.write_text(
        "schema_version = 1\n\n"
        '[[datasets]]\nname = "flows"\npath = "flows.csv"\n'
        'descriptor = "GENERIC"\nlabel_column = "label"\n\n'
        '[[classifiers]]\nkind = "cart"\n\n'
        "[validation]\nrounds = 1\nrepeats = 1\n\n"
        "[timing]\nenabled = false\n"
    )
    out = tmp_path / "out"
    assert main(["run", "--config", str(path), "--out", str(out)]) == 0
    assert len(pd.read_csv(out / "metrics.csv")) == 1
    assert not list(out.glob("results_*.csv"))
    assert not (out / "stats").exists()
