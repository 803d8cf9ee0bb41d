import csv
import io
import json

import numpy as np
import pytest

from pome import cli
from pome.cli import METRICS_COLUMNS, main, read_metrics
from pome.targets import DUMP_COLUMNS

SMALL = ["--env", "chain20", "--total-steps", "1024", "--k", "64", "--workers", "4"]


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["train", "--mode", "pome", "--seed", "1", "--out-dir", str(out), *SMALL]) == 0
    return out


def test_train_writes_artifacts(trained):
    assert {p.name for p in trained.iterdir()} >= {"metrics.csv", "manifest.json", "final.ckpt"}
    header = (trained / "metrics.csv").read_text().splitlines()[0]
    assert header.split(",") == list(METRICS_COLUMNS)
    rows = read_metrics(trained / "metrics.csv")
    assert len(rows) == 1024 // (64 * 4)
    assert [int(r["iteration"]) for r in rows] == [0, 1, 2, 3]
    assert all(r["wall_seconds"] == "" for r in rows)


def test_manifest_contents(trained):
    m = json.loads((trained / "manifest.json").read_text())
    assert m["status"] == "ok" and m["error"] is None
    assert m["mode_label"] == "pome" and m["env"] == "chain20"
    assert m["config"]["seed"] == 1 and m["config"]["k"] == 64
    assert m["iterations"] == 4 and m["total_steps"] == 1024


def test_timing_flag_fills_wall_seconds(tmp_path):
    assert main(["train", "--timing", "on", "--out-dir", str(tmp_path), *SMALL]) == 0
    assert all(float(r["wall_seconds"]) >= 0 for r in read_metrics(tmp_path / "metrics.csv"))


def test_alpha_with_ppo_is_rejected(tmp_path, capsys):
    assert main(["train", "--mode", "ppo", "--alpha0", "0.3", "--out-dir", str(tmp_path), *SMALL]) == 2
    assert "alpha0" in capsys.readouterr().err
    assert not (tmp_path / "metrics.csv").exists()


def test_invalid_field_is_config_error(tmp_path, capsys):
    assert main(["train", "--gamma", "1.5", "--out-dir", str(tmp_path), *SMALL]) == 2
    assert "gamma" in capsys.readouterr().err


def test_unknown_config_key_is_rejected(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"gama": 0.9}))
    assert main(["dump-config", "--config", str(path)]) == 2
    assert "gama" in capsys.readouterr().err


def test_config_precedence(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"gamma": 0.9, "k": 32, "env": "detgrid5"}))
    assert main(["dump-config", "--config", str(path), "--k", "16"]) == 0
    resolved = json.loads(capsys.readouterr().out)
    assert resolved["k"] == 16  # flag beats file
    assert resolved["gamma"] == 0.9 and resolved["env"] == "detgrid5"  # file beats default
    assert resolved["lam"] == 0.95  # default


def test_nondecay_mode_means_constant_alpha(capsys):
    assert main(["dump-config", "--mode", "pome_nondecay"]) == 0
    resolved = json.loads(capsys.readouterr().out)
    assert (resolved["mode"], resolved["alpha_schedule"]) == ("pome", "constant")


def test_eval_reports_summary(trained, capsys):
    assert main(["eval", "--checkpoint", str(trained / "final.ckpt"), "--episodes", "3"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["episodes"] == 3 and summary["policy"] == "greedy" and summary["env"] == "chain20"
    assert np.isfinite([summary["mean"], summary["median"], summary["std"]]).all()


def test_eval_zero_episodes_is_usage_error(trained):
    with pytest.raises(SystemExit) as exc:
        main(["eval", "--checkpoint", str(trained / "final.ckpt"), "--episodes", "0"])
    assert exc.value.code == 2


def test_eval_dimension_mismatch(trained, capsys):
    assert main(["eval", "--checkpoint", str(trained / "final.ckpt"), "--env", "detgrid5"]) == 2
    assert "obs_dim" in capsys.readouterr().err


def test_eval_bad_checkpoint(tmp_path, capsys):
    bad = tmp_path / "x.ckpt"
    bad.write_bytes(b"nope")
    assert main(["eval", "--checkpoint", str(bad)]) == 2
    assert "magic" in capsys.readouterr().err


def test_dump_targets_csv(trained, tmp_path):
    out = tmp_path / "t.csv"
    assert main(["dump-targets", "--checkpoint", str(trained / "final.ckpt"), "--steps", "20", "--out", str(out)]) == 0
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert tuple(rows[0]) == DUMP_COLUMNS
    assert len(rows) == 21
    assert [int(r[0]) for r in rows[1:]] == list(range(20))


def test_dump_targets_to_stdout(trained, capsys):
    assert main(["dump-targets", "--checkpoint", str(trained / "final.ckpt"), "--steps", "5"]) == 0
    assert capsys.readouterr().out.splitlines()[0] == ",".join(DUMP_COLUMNS)


def test_compare_aggregates_finals(tmp_path, capsys):
    out = tmp_path / "cmp"
    assert main(["compare", "--modes", "ppo,pome", "--seeds", "0,1", "--out-dir", str(out), *SMALL]) == 0
    printed = capsys.readouterr().out
    rows = {r["mode"]: r for r in csv.DictReader(open(out / "compare.csv"))}
    for mode in ("ppo", "pome"):
        finals = [float(read_metrics(out / mode / f"seed{s}" / "metrics.csv")[-1]["mean_return"]) for s in (0, 1)]
        assert float(rows[mode]["mean_final"]) == pytest.approx(np.mean(finals), abs=1e-15)
        assert float(rows[mode]["best_final"]) == max(finals)
        assert rows[mode]["runs"] == "2"
    assert sum(int(r["best"]) for r in rows.values()) == 1
    assert "*" in printed


def test_compare_single_cell(tmp_path):
    out = tmp_path / "one"
    assert main(["compare", "--modes", "ppo", "--seeds", "5", "--out-dir", str(out), *SMALL]) == 0
    rows = list(csv.DictReader(open(out / "compare.csv")))
    assert len(rows) == 1 and rows[0]["best"] == "1"


def test_compare_records_failed_cell(tmp_path, monkeypatch, capsys):
    real = cli.run_training

    def flaky(cfg, out_dir, label=None, log=print):
        if cfg.seed == 1:
            raise RuntimeError("boom")
        return real(cfg, out_dir, label, log)

    monkeypatch.setattr(cli, "run_training", flaky)
    out = tmp_path / "cmp"
    assert main(["compare", "--modes", "ppo", "--seeds", "0,1", "--out-dir", str(out), *SMALL]) == 4
    assert "FAILED ppo seed=1: boom" in capsys.readouterr().out
    rows = list(csv.DictReader(open(out / "compare.csv")))
    assert rows[0]["runs"] == "1"


def test_compare_unknown_mode_is_usage_error(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["compare", "--modes", "ppo,sac", "--out-dir", str(tmp_path)])
    assert exc.value.code == 2
