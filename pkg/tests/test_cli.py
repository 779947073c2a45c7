import csv
import json

import numpy as np
import pytest

from tvdnpl import cli
from tvdnpl.verify import BoundReport


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def poisson_csv(tmp_path):
    out = tmp_path / "sim"
    assert run("simulate", "eps-poisson", "--eps", 0.0, "--n", 300, "--seed", 3, "--out", out) == 0
    return out / "data.csv"


def read_posterior(path):
    with open(path) as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def test_simulate_writes_data_and_config(poisson_csv):
    cfg = json.loads((poisson_csv.parent / "run_config.json").read_text())
    assert cfg["command"] == "simulate" and cfg["seed"] == 3 and cfg["eps"] == [0.0]
    assert poisson_csv.read_text().splitlines()[0] == "y"


def test_fit_kld_recovers_rate_and_is_byte_identical(poisson_csv, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("fit", poisson_csv, "--loss", "kld", "--B", 100, "--out", a) == 0
    assert run("fit", poisson_csv, "--loss", "kld", "--B", 100, "--out", b) == 0
    assert (a / "posterior.csv").read_bytes() == (b / "posterior.csv").read_bytes()
    header, rows = read_posterior(a / "posterior.csv")
    assert header == ["intercept", "objective", "converged"]
    lam = np.exp(rows[:, 0])
    assert abs(lam.mean() - 3.0) < 3 * lam.std()


def test_fit_rerun_from_config(poisson_csv, tmp_path):
    a = tmp_path / "a"
    assert run("fit", poisson_csv, "--B", 10, "--seed", 4, "--out", a) == 0
    b = tmp_path / "b"
    assert run("fit", "--config", a / "run_config.json", "--out", b) == 0
    assert (a / "posterior.csv").read_bytes() == (b / "posterior.csv").read_bytes()


def test_fit_probit_shape(tmp_path):
    sim = tmp_path / "sim"
    assert run("simulate", "probit-synthetic", "--n", 120, "--out", sim) == 0
    out = tmp_path / "fit"
    assert run("fit", sim / "data.csv", "--model", "probit", "--covariate-kind", "continuous",
               "--B", 6, "--out", out) == 0
    header, rows = read_posterior(out / "posterior.csv")
    assert rows.shape == (6, 2 + 1 + 2)
    assert header[-2:] == ["objective", "converged"]


def test_exit_codes(tmp_path, poisson_csv, monkeypatch):
    bad_json = tmp_path / "c.json"
    bad_json.write_text("{not json")
    assert run("fit", "--config", bad_json) == cli.EXIT_CONFIG
    unknown = tmp_path / "u.json"
    unknown.write_text(json.dumps({"bogus": 1}))
    assert run("verify", "--config", unknown) == cli.EXIT_CONFIG
    other = tmp_path / "o.json"
    other.write_text(json.dumps({"command": "simulate"}))
    assert run("fit", poisson_csv, "--config", other) == cli.EXIT_CONFIG
    assert run("fit", poisson_csv, "--model", "binomial", "--out", tmp_path / "x") == cli.EXIT_CONFIG
    assert run("fit", poisson_csv, "--B", 0) == cli.EXIT_CONFIG

    bad_csv = tmp_path / "bad.csv"
    bad_csv.write_text("y\n1\n-2\n")
    assert run("fit", bad_csv, "--out", tmp_path / "y") == cli.EXIT_DATA
    assert run("fit", tmp_path / "missing.csv", "--out", tmp_path / "y") == cli.EXIT_DATA

    from tvdnpl.npl import PosteriorError

    def boom(*a, **k):
        raise PosteriorError("all draws failed")
    monkeypatch.setattr(cli, "posterior_bootstrap", boom)
    assert run("fit", poisson_csv, "--out", tmp_path / "z") == cli.EXIT_NUMERICAL

    monkeypatch.setattr(cli, "run_claims",
                        lambda *a, **k: [BoundReport("robustness", 1, 1.0, 0.5, False)])
    assert run("verify", "--out", tmp_path / "v") == cli.EXIT_VERIFY


def test_unwritable_output(poisson_csv, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("fit", poisson_csv, "--B", 2, "--out", blocker / "sub") == cli.EXIT_CONFIG


def test_verify_robustness(tmp_path, capsys):
    assert run("verify", "--claim", "robustness", "--out", tmp_path / "v") == 0
    lines = (tmp_path / "v" / "reports.jsonl").read_text().splitlines()
    assert len(lines) == 16
    assert "PASS" in capsys.readouterr().out


def test_reproduce_small(tmp_path):
    out = tmp_path / "r"
    assert run("reproduce", "eps-poisson", "--k", 0, 10, "--repeats", 2, "--B", 8, "--out", out) == 0
    header = (out / "summary.tsv").read_text().splitlines()[0].split("\t")
    assert header[:3] == ["scenario", "setting", "loss"]
    assert {p.name for p in out.iterdir()} == {"run_config.json", "summary.tsv",
                                              "report_0.jsonl", "report_10.jsonl"}
    again = tmp_path / "r2"
    assert run("reproduce", "--config", out / "run_config.json", "--out", again) == 0
    for name in ("summary.tsv", "report_0.jsonl", "report_10.jsonl"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_full_scale_flag_resolves():
    args = cli.build_parser().parse_args(["reproduce", "eps-poisson", "--paper-scale"])
    cfg = cli.resolve(args)
    assert (cfg.repeats, cfg.B) == (100, 1000)
