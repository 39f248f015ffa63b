import json
import subprocess
import sys

import pytest

from phaseflip.cli import EXIT_NUMERIC, EXIT_USAGE, SWEEP_HEADER, UsageError, main, parse_number_list
from phaseflip.ensemble import ENTROPY_CSV_HEADER


@pytest.fixture(autouse=True)
def single_worker(monkeypatch, tmp_path):
    monkeypatch.setenv("PHASEFLIP_WORKERS", "1")
    monkeypatch.chdir(tmp_path)


def test_number_lists():
    assert parse_number_list("1,2,4,...,4096", int) == [2**i for i in range(13)]
    assert parse_number_list("1:4096", int) == [2**i for i in range(13)]
    assert parse_number_list("8,16,32", float) == [8.0, 16.0, 32.0]
    assert parse_number_list("64,128,...,512", int) == [64, 128, 192, 256, 320, 384, 448, 512]
    for bad in ["", "1,...", "4,2,...,8", "3:1"]:
        with pytest.raises(UsageError):
            parse_number_list(bad, int)
    with pytest.raises(UsageError):
        parse_number_list("1.5,2", int)


def test_entropy_scan_default_grid(tmp_path):
    out = tmp_path / "s.csv"
    assert main(["entropy-scan", "--mean-n", "200", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(ENTROPY_CSV_HEADER)
    assert [int(x.split(",")[1]) for x in lines[1:]] == [2**i for i in range(13)]
    man = json.loads((tmp_path / "s.csv.manifest.json").read_text())
    assert man["command"] == "entropy-scan" and man["outputs"] == [str(out)]
    assert "wall_clock_seconds" in man and "version" in man


def test_output_dir_env(tmp_path, monkeypatch):
    monkeypatch.setenv("PHASEFLIP_OUTPUT_DIR", str(tmp_path / "o"))
    assert main(["entropy-scan", "--mean-n", "4", "--m", "1,2"]) == 0
    assert (tmp_path / "o" / "entropy_scan.csv").exists()


def test_smax_scan(tmp_path, capsys):
    out = tmp_path / "smax.csv"
    assert main(["smax-scan", "--mean-n", "8,16", "-o", str(out)]) == 0
    assert out.read_text().startswith("mean_n,ln_mean_n,S_max_nats")
    assert "slope" in capsys.readouterr().out


def test_smax_cap_is_numeric_failure(tmp_path):
    assert main(["smax-scan", "--mean-n", "200", "--m-cap", "4", "-o", str(tmp_path / "x.csv")]) == EXIT_NUMERIC


def test_simulate_outputs(tmp_path):
    d = tmp_path / "sim"
    rc = main(["simulate", "--k", "32", "--m", "16", "--mean-n", "10", "--runs", "3", "--seed", "4",
               "--adversary", "full-mitm", "-o", str(d)])
    assert rc == 0
    summary = json.loads((d / "summary.json").read_text())
    assert set(summary) == {"runs", "completed", "aborted_2c", "aborted_3a", "key_match_rate",
                            "mean_key_length", "holevo_bound_bits", "mitm_overall_pass"}
    assert summary["runs"] == 3
    files = sorted(p.name for p in (d / "transcripts").iterdir())
    assert files == ["run-00000.txt", "run-00001.txt", "run-00002.txt"]
    assert json.loads((d / "manifest.json").read_text())["seed"] == 4


def test_simulate_no_transcripts(tmp_path):
    d = tmp_path / "sim"
    assert main(["simulate", "--k", "8", "--m", "4", "--mean-n", "1", "--runs", "2", "--no-transcripts", "-o", str(d)]) == 0
    assert not (d / "transcripts").exists()


def test_attack_sweep(tmp_path):
    out = tmp_path / "sw.csv"
    rc = main(["attack-sweep", "--adversary", "none,beam-split", "--t", "0.5", "--k", "32", "--m", "16",
               "--mean-n", "100", "--runs", "4", "-o", str(out)])
    assert rc == 0
    lines = out.read_text().splitlines()
    assert lines[0] == SWEEP_HEADER
    assert len(lines) == 3
    assert lines[2].startswith("beam-split,100.0,16,0.5,32,4,4,")


@pytest.mark.parametrize(
    "argv",
    [
        ["simulate", "--k", "6", "--m", "4", "--mean-n", "1", "--runs", "1"],
        ["simulate", "--k", "8", "--m", "4", "--mean-n", "1", "--adversary", "eve"],
        ["entropy-scan", "--mean-n", "1", "--m", "4,2"],
        ["entropy-scan", "--mean-n", "-1"],
        ["attack-sweep", "--adversary", "mallory"],
        ["bogus"],
    ],
)
def test_usage_errors_exit_1(argv):
    with pytest.raises(SystemExit) as e:
        code = main(argv)
        raise SystemExit(code)
    assert e.value.code == EXIT_USAGE


def test_io_failure(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["entropy-scan", "--mean-n", "1", "--m", "1", "-o", str(blocker / "a.csv")]) == 3


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "phaseflip", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "phaseflip" in r.stdout
