import json

import pytest

from aicon.cli import main


@pytest.fixture(autouse=True)
def out_env(tmp_path, monkeypatch):
    monkeypatch.setenv("AICON_OUT_DIR", str(tmp_path / "out"))
    return tmp_path / "out"


@pytest.fixture
def corpus(tmp_path):
    d = tmp_path / "corpus"
    assert main(["bw", "generate", "--count", "4", "--blocks", "4", "7", "--towers", "1", "3",
                 "--seed", "2", "--out", str(d)]) == 0
    return d


def test_usage_errors_exit_2(capsys):
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["bw", "bench", "somewhere"]) == 2  # --seed is mandatory
    assert main(["drawer", "bench", "--conditions", "nominal"]) == 2
    assert main(["drawer", "run", "no-such-scenario.toml"]) == 2
    assert main(["drawer", "run", "nominal", "--set", "bogus_key=1"]) == 2
    assert main(["drawer", "run", "nominal", "--set", "no equals"]) == 2


def test_help_exits_0(capsys):
    assert main(["--help"]) == 0
    assert "gradcheck" in capsys.readouterr().out


def test_generate_writes_corpus_and_manifest(corpus):
    files = sorted(corpus.glob("*.bw"))
    assert len(files) == 4
    manifest = json.loads((corpus / "corpus.manifest.json").read_text())
    assert manifest["seeds"] == [2]
    assert len(manifest["outputs"]) == 4


def test_solve_reports_and_traces(corpus, tmp_path, capsys):
    inst = sorted(corpus.glob("*.bw"))[0]
    trace = tmp_path / "solve.csv"
    assert main(["bw", "solve", str(inst), "--trace", str(trace)]) == 0
    assert "solved" in capsys.readouterr().out
    assert trace.exists() and (tmp_path / "solve.csv.manifest.json").exists()


def test_bench_is_reproducible_and_reportable(corpus, tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    args = ["bw", "bench", str(corpus), "--variants", "interconnected", "--seed", "0", "--workers", "1"]
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()
    manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
    for key in ("command", "config_hash", "seeds", "engine_version", "started", "finished", "outputs"):
        assert key in manifest
    assert manifest["config"]["corpus_digest"]
    capsys.readouterr()
    ja, jb = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["report", str(a), "--json", str(ja)]) == 0
    text = capsys.readouterr().out
    assert "interconnected" in text and "100.0%" in text
    assert main(["report", str(b), "--json", str(jb)]) == 0
    ra, rb = json.loads(ja.read_text()), json.loads(jb.read_text())
    assert list(ra["blocksworld"].values()) == list(rb["blocksworld"].values())


def test_default_output_goes_to_env_dir(corpus, out_env):
    assert main(["bw", "bench", str(corpus), "--variants", "interconnected", "--seed", "1", "--workers", "1"]) == 0
    assert (out_env / "bw_results.csv").exists()


def test_report_rejects_unknown_schema(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["report", str(bad)]) == 2
    assert "bad.csv" in capsys.readouterr().err


def test_drawer_run_with_override_recorded(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    assert main(["drawer", "run", "nominal", "--seed", "1", "--trace", str(trace), "--set", "noise_scale=1.5"]) == 0
    assert "success" in capsys.readouterr().out
    manifest = json.loads((tmp_path / "t.csv.manifest.json").read_text())
    assert manifest["overrides"] == ["noise_scale=1.5"]
    assert manifest["config"]["noise_scale"] == 1.5


def test_drawer_run_failure_exits_1(capsys):
    assert main(["drawer", "run", "nominal", "--set", "tick_cap=5"]) == 1


def test_drawer_bench_from_conditions_file(tmp_path, capsys):
    conds = tmp_path / "c.toml"
    conds.write_text('[[condition]]\npreset = "nominal"\n[[condition]]\npreset = "nominal"\nname = "again"\n')
    out = tmp_path / "d.csv"
    assert main(["drawer", "bench", "--conditions", str(conds), "--modes", "full", "--trials", "1",
                 "--seed", "3", "--workers", "2", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 3 and lines[1].startswith("nominal,full,0,3,1")
    assert main(["report", str(out)]) == 0
    assert "again" in capsys.readouterr().out


def test_drawer_bench_unknown_mode_exit_2():
    assert main(["drawer", "bench", "--conditions", "nominal", "--modes", "warp", "--seed", "0"]) == 2


def test_sample_field(tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert main(["drawer", "sample-field", "nominal", "--tick", "3", "--n", "3", "2", "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 7
    assert main(["drawer", "sample-field", "nominal", "--tick", "0"]) == 2


def test_gradcheck_passes(capsys):
    assert main(["gradcheck", "--seed", "7", "--points", "20"]) == 0
    assert "all pass" in capsys.readouterr().out
