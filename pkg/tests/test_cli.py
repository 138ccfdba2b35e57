import json

import pytest

from isingscreen.cli import build_config, main, parser
from isingscreen.fm import fm_train
from isingscreen.planted import generate_dataset, planted_qubo
from isingscreen.problem import QuboModel, exact_spectrum, qubo_to_ising, read_dataset
from isingscreen.workflow import ConfigError, RunConfig, ScreeningReport, bench, screen

FAST = {"kind": "lbfgs", "seed": 3, "restarts": 3, "hops": 20, "init_range": 3.14159}


@pytest.fixture(scope="module")
def small(tmp_path_factory):
    """An 8-variable planted QUBO on disk plus its flattened oracle spectrum."""
    root = tmp_path_factory.mktemp("small")
    q = planted_qubo(seed=2, n=8, target="11001110")
    path = root / "q.json"
    q.save(path)
    flat = exact_spectrum(qubo_to_ising(q), 6).flat()
    return path, flat


def write_config(path, **fields):
    path.write_text(json.dumps(fields), encoding="utf-8")
    return path


def test_gen_data_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert main(["gen-data", "--seed", "4", "--noise", "0.5", "--out",
                     str(tmp_path / f"{name}.csv")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.model.json").read_bytes() == (tmp_path / "b.model.json").read_bytes()
    data = read_dataset(tmp_path / "a.csv")
    assert len(data) == 4**6


def test_gen_data_oracle_ground_state(tmp_path, capsys):
    main(["gen-data", "--out", str(tmp_path / "d.csv")])
    capsys.readouterr()
    assert main(["oracle", "--qubo", str(tmp_path / "d.model.json"), "--k", "2"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["levels"][0]["bitstring"] == "110011001110"
    assert doc["levels"][0]["groups"] == ["Me", "CN", "Me", "CN", "Me", "H"]
    assert [lv["rank"] for lv in doc["levels"]] == [0, 1, 2]


def test_noiseless_dataset_recovered():
    data = generate_dataset(planted_qubo(seed=4), 0.0)
    _, report = fm_train(data)
    assert report.r_train >= 0.999


def test_train_writes_model_and_qubo(tmp_path):
    main(["gen-data", "--sites", "4", "--out", str(tmp_path / "d.csv")])
    rc = main(["train", "--data", str(tmp_path / "d.csv"), "--out", str(tmp_path / "fm.json"),
               "--qubo-out", str(tmp_path / "q.json"), "--train-size", "128",
               "--report", str(tmp_path / "r.json"), "--epochs", "50"])
    assert rc == 0
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["n_train"] == 128 and report["n_test"] == 256 - 128
    assert QuboModel.load(tmp_path / "q.json").sense == "maximize"


def test_screen_without_table_matches_oracle(small):
    path, flat = small
    cfg = RunConfig(qubo=str(path), optimizer=FAST, k=3)
    report, _, _ = screen(cfg)
    assert report.status == "complete"
    assert [r.rank for r in report.levels] == [0, 1, 2, 3]
    assert all(r.passed for r in report.levels)
    assert [r.bitstring for r in report.levels] == [b for _, b in flat[:4]]
    for r in report.levels:
        assert r.energy == pytest.approx(r.oracle_energy, abs=1e-7)


def test_screen_stops_at_passing_level(small, tmp_path):
    path, flat = small
    table = tmp_path / "osc.csv"
    rows = ["bits,osc"] + [f"{b},{0.9 if rank == 4 else 0.1}" for rank, (_, b) in enumerate(flat)]
    table.write_text("\n".join(rows) + "\n")
    cfg = RunConfig(qubo=str(path), optimizer=FAST, k=5, secondary=str(table), threshold=0.5)
    report, _, _ = screen(cfg)
    assert report.status == "passed"
    assert [r.rank for r in report.levels] == [0, 1, 2, 3, 4]
    assert [r.passed for r in report.levels] == [False] * 4 + [True]
    assert report.levels[-1].secondary == 0.9


def test_screen_exhaustion(small, tmp_path):
    path, _ = small
    table = tmp_path / "osc.csv"
    table.write_text("bits,osc\n00000000,1.0\n")
    cfg = RunConfig(qubo=str(path), optimizer=FAST, k=2, secondary=str(table), threshold=0.5)
    report, _, _ = screen(cfg)
    assert report.status == "exhausted"
    assert len(report.levels) == 3 and not any(r.passed for r in report.levels)


def test_screen_deterministic_and_roundtrip(small, tmp_path):
    path, _ = small
    cfg = write_config(tmp_path / "cfg.json", qubo=str(path), optimizer=FAST, k=1)
    docs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.json"
        assert main(["screen", "--config", str(cfg), "--out", str(out),
                     "--trace-dir", str(tmp_path / name)]) == 0
        doc = json.loads(out.read_text())
        doc["metadata"].pop("timings")
        docs.append(doc)
    assert docs[0] == docs[1]
    assert (tmp_path / "a" / "trace.csv").read_bytes() == (tmp_path / "b" / "trace.csv").read_bytes()
    header = (tmp_path / "a" / "levels.csv").read_text().splitlines()[0]
    assert header == "rank,bitstring,energy,score,oracle_energy,oracle_score,probability"
    raw = json.loads((tmp_path / "a.json").read_text())
    assert ScreeningReport.from_json(json.loads(json.dumps(raw))).to_json() == raw


def test_flags_override_config(tmp_path, small):
    path, _ = small
    cfg = write_config(tmp_path / "cfg.json", qubo=str(path), k=3,
                       optimizer={"kind": "simplex", "restarts": 4})
    args = parser().parse_args(["screen", "--config", str(cfg), "--k", "1", "--restarts", "2",
                                "--shots", "1000"])
    rc = build_config(args)
    assert rc.k == 1
    assert rc.optimizer == {"kind": "simplex", "restarts": 2}
    assert rc.backend == {"kind": "sampled", "shots": 1000}
    assert rc.qubo == str(path)


@pytest.mark.parametrize("argv", [
    ["oracle", "--qubo", "/nonexistent/q.json"],
    ["screen", "--k", "2"],
    ["gen-data", "--noise", "-1", "--out", "x.csv"],
    ["bench", "--sizes", "8,x"],
])
def test_validation_exit_code(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert main(argv) == 2


def test_bad_config_fields(tmp_path, small):
    path, _ = small
    bad = write_config(tmp_path / "bad.json", qubo=str(path), colour="red")
    assert main(["screen", "--config", str(bad)]) == 2
    neg = write_config(tmp_path / "neg.json", qubo=str(path), k=-1)
    assert main(["screen", "--config", str(neg)]) == 2
    with pytest.raises(ConfigError):
        RunConfig(qubo=str(path), secondary=str(path)).validate()


def test_numerical_failure_exit_code(tmp_path):
    q = {"n": 2, "w0": 0.0, "linear": [1.0, float("nan")], "quadratic": [], "sense": "minimize"}
    (tmp_path / "q.json").write_text(json.dumps(q))
    assert main(["solve", "--qubo", str(tmp_path / "q.json"), "--max-iter", "20"]) == 3


def test_solve_and_deflate_commands(small, tmp_path):
    path, flat = small
    common = ["--qubo", str(path), "--optimizer", "lbfgs", "--hops", "10", "--restarts", "2",
              "--init-range", "3.14159"]
    assert main(["solve", *common, "--out", str(tmp_path / "s.json")]) == 0
    assert json.loads((tmp_path / "s.json").read_text())["top_bitstring"] == flat[0][1]
    assert main(["deflate", *common, "--k", "2", "--out", str(tmp_path / "d.json"),
                 "--trace-dir", str(tmp_path / "tr")]) == 0
    doc = json.loads((tmp_path / "d.json").read_text())
    assert [lv["bitstring"] for lv in doc["levels"]] == [b for _, b in flat[:3]]
    assert (tmp_path / "tr" / "trace.csv").exists()


def test_bench_report():
    out = bench(sizes=(6, 8), repeat=2, evals=20)
    assert [r["n"] for r in out["results"]] == [6, 8]
    for r in out["results"]:
        assert r["gates_per_s"] > 0 and r["evals_per_s"] > 0
        assert r["vqe_s"] > 0 and r["deflation_s"] > 0
    assert out["results"][0]["eval_s"] < out["results"][1]["eval_s"] * 1.5
