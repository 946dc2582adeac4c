import csv
import json

import pytest

from zampling import cli, experiments
from zampling.errors import ConfigError

BLOBS = ["--set", "dataset=blobs", "--set", "arch=12-6-3", "--set", "blobs_per_class=20"]

TINY = {
    "compress-sweep": ["--set", "d=[1,2]", "--set", "compression=[1,4]", "--set", "max_epochs=2",
                       "--set", "eval_samples=3"],
    "federated": ["--set", "d=2", "--set", "compression=[1,4]", "--set", "rounds=2",
                  "--set", "clients=3", "--set", "eval_samples=3"],
    "sensitivity": ["--set", "d=2", "--set", "max_epochs=2", "--set", "trials=2",
                    "--set", "tau=[0.1,0.5]", "--set", "sampled_k=2"],
    "zhou-compare": ["--set", "d=[1,4]", "--set", "max_epochs=2", "--set", "best_of=4"],
    "integrality-gap": ["--set", "d=2", "--set", "max_epochs=2", "--set", "seeds=2",
                        "--set", "eval_samples=4", "--set", "modes=[continuous,sampled]"],
    "analyze": ["--set", "arch=12-6-3", "--set", "d=2", "--set", "trials=3",
                "--set", "cherrypick_rows=50", "--set", "zonotope_draws=500"],
    "train-local": ["--set", "d=2", "--set", "max_epochs=2", "--set", "eval_samples=3",
                    "--set", "history_samples=2"],
}


def run_cli(tmp_path, name, *extra, blobs=True):
    out = tmp_path / name
    args = [name, "--out", str(out), *(BLOBS if blobs and name != "analyze" else []),
            *TINY.get(name, []), *extra]
    return cli.main(args), out


def read_csv(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.mark.parametrize("name", experiments.COMMANDS)
def test_every_command_is_byte_reproducible(tmp_path, name):
    code_a, a = run_cli(tmp_path / "a", name)
    code_b, b = run_cli(tmp_path / "b", name)
    assert code_a == code_b == 0
    files = sorted(p.name for p in a.iterdir())
    assert files and files == sorted(p.name for p in b.iterdir())
    for f in files:
        ta, tb = (a / f).read_text(), (b / f).read_text()
        assert experiments.strip_timestamp(ta) == experiments.strip_timestamp(tb)


def test_provenance_header(tmp_path):
    _, out = run_cli(tmp_path, "train-local")
    head = json.loads((out / "train_local.jsonl").read_text().splitlines()[0])["provenance"]
    assert head["command"] == "train-local"
    assert head["seed"] == 0 and head["version"]
    assert head["config"]["d"] == 2 and "timestamp" in head
    _, out = run_cli(tmp_path, "analyze")
    text = (out / "analyze.csv").read_text()
    assert text.startswith("# command: analyze\n")
    assert "# timestamp: " in text and "# config: {" in text


def test_seed_changes_output(tmp_path):
    _, a = run_cli(tmp_path / "a", "train-local", "--seed", "1")
    _, b = run_cli(tmp_path / "b", "train-local", "--seed", "2")
    strip = experiments.strip_timestamp
    assert strip((a / "train_local.jsonl").read_text()) != strip((b / "train_local.jsonl").read_text())


def test_federated_zero_rounds_is_header_only(tmp_path):
    code, out = run_cli(tmp_path, "federated", "--set", "rounds=0")
    assert code == 0
    lines = (out / "federated.jsonl").read_text().splitlines()
    assert len(lines) == 1 and "provenance" in json.loads(lines[0])


def test_federated_summary_reports_savings_and_bits(tmp_path):
    _, out = run_cli(tmp_path, "federated")
    rows = read_csv(out / "federated_summary.csv")
    for r in rows:
        n, rounds, K = int(r["n"]), int(r["rounds"]), int(r["clients"])
        assert int(r["bits_uplink"]) == rounds * K * n
        assert int(r["bits_downlink"]) == 32 * rounds * K * n
    records = [json.loads(l) for l in (out / "federated.jsonl").read_text().splitlines()[1:]]
    assert [(r["compression"], r["round"]) for r in records] == [(1, 0), (1, 1), (4, 0), (4, 1)]


def test_sensitivity_shape_and_empty_tau(tmp_path):
    _, out = run_cli(tmp_path / "a", "sensitivity")
    rows = read_csv(out / "sensitivity.csv")
    assert [(r["mode"], r["tau"]) for r in rows] == [
        ("sampled", "0.1"), ("sampled", "0.5"), ("continuous", "0.1"), ("continuous", "0.5")]
    code, out = run_cli(tmp_path / "b", "sensitivity", "--set", "tau=[]")
    rows = read_csv(out / "sensitivity.csv")
    assert code == 0 and len(rows) == 1 and rows[0]["note"]


def test_single_seed_leaves_std_empty(tmp_path):
    _, out = run_cli(tmp_path, "zhou-compare", "--set", "seeds=1")
    rows = read_csv(out / "zhou_compare_summary.csv")
    assert len(rows) == 2
    assert all(r["best_std"] == "" and r["best_mean"] != "" for r in rows)
    _, out = run_cli(tmp_path / "b", "compress-sweep", "--set", "seeds=1")
    assert all(r["sampled_std"] == "" for r in read_csv(out / "compress_sweep_summary.csv"))


def test_sweep_rows_per_cell(tmp_path):
    _, out = run_cli(tmp_path, "compress-sweep")
    rows = read_csv(out / "compress_sweep.csv")
    assert len(rows) == 2 * 2 * 2
    assert {(r["d"], r["compression"]) for r in rows} == {("1", "1"), ("1", "4"), ("2", "1"),
                                                          ("2", "4")}


def test_integrality_single_point_grid(tmp_path):
    _, out = run_cli(tmp_path, "integrality-gap", "--set", "betas=[[0.5,0.5]]",
                     "--set", "modes=[continuous]", "--set", "seeds=1")
    rows = read_csv(out / "integrality_gap.csv")
    assert len(rows) == 1 and rows[0]["alpha"] == "0.5"


def test_jobs_do_not_change_results(tmp_path):
    _, a = run_cli(tmp_path / "a", "compress-sweep", "--jobs", "1")
    _, b = run_cli(tmp_path / "b", "compress-sweep", "--jobs", "3")
    assert read_csv(a / "compress_sweep.csv") == read_csv(b / "compress_sweep.csv")


@pytest.mark.parametrize("args", [
    ["--set", "compression=[100000]"],
    ["--set", "no_such_key=1"],
    ["--set", "broken"],
    ["--set", "d=[50]"],
])
def test_config_errors_exit_one(tmp_path, args, capsys):
    code, _ = run_cli(tmp_path, "compress-sweep", *args)
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_usage_error_exits_one(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["train-local", "--bogus"])
    assert exc.value.code == 1


def test_missing_data_exits_two(tmp_path, monkeypatch):
    monkeypatch.delenv("ZAMPLE_DATA_DIR", raising=False)
    code = cli.main(["train-local", "--out", str(tmp_path), "--data-dir", str(tmp_path / "x")])
    assert code == 2


def test_numeric_failure_exits_three(tmp_path, monkeypatch):
    from zampling.errors import NumericError

    def boom(*a, **k):
        raise NumericError("non-finite loss")
    monkeypatch.setattr(experiments, "train_local", boom)
    code, _ = run_cli(tmp_path, "train-local")
    assert code == 3


def test_config_file_json_and_yaml(tmp_path):
    (tmp_path / "c.yaml").write_text("d: 3\ntrain-local:\n  max_epochs: 4\nanalyze:\n  d: 9\n")
    (tmp_path / "c.json").write_text(json.dumps({"d": 3, "train-local": {"max_epochs": 4}}))
    for name in ("c.yaml", "c.json"):
        doc = experiments.load_config_file(tmp_path / name)
        cfg = experiments.resolve_config("train-local", doc, {"seed": 5})
        assert (cfg["d"], cfg["max_epochs"], cfg["seed"]) == (3, 4, 5)
    (tmp_path / "bad.yaml").write_text("d: [1, 2\n")
    with pytest.raises(ConfigError):
        experiments.load_config_file(tmp_path / "bad.yaml")


def test_flags_override_config_file(tmp_path):
    (tmp_path / "c.yaml").write_text("seed: 4\nmax_epochs: 1\n")
    code, out = run_cli(tmp_path, "train-local", "--config", str(tmp_path / "c.yaml"),
                        "--seed", "6")
    head = json.loads((out / "train_local.jsonl").read_text().splitlines()[0])["provenance"]
    assert code == 0 and head["seed"] == 6 and head["config"]["max_epochs"] == 2


def test_paper_scale_restores_full_grid():
    desk = experiments.resolve_config("compress-sweep")
    full = experiments.resolve_config("compress-sweep", paper_scale=True)
    assert (desk["seeds"], desk["max_epochs"]) == (2, 30)
    assert full["seeds"] == 5 and full["max_epochs"] == 100
    assert full["d"] == [1, 5, 10, 50, 100] and full["compression"][-1] == 1024
    assert experiments.resolve_config("federated", paper_scale=True)["rounds"] == 100
