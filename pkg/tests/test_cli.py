import csv
import io
import json
import subprocess
import sys

import pytest

from cpakit.cli import main
from cpakit.trace_model import HEADER_SIZE, load_traces, save_traces

KEY = "000102030405060708090a0b0c0d0e0f"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    prefix = tmp_path_factory.mktemp("data") / "set"
    assert main(["simulate", "--key", KEY, "--n", "600", "--m", "64", "--seed", "1", "--out-prefix", str(prefix)]) == 0
    return prefix


@pytest.fixture(scope="module")
def noiseless(tmp_path_factory):
    prefix = tmp_path_factory.mktemp("clean") / "set"
    assert main(["simulate", "--key", KEY, "--n", "100", "--m", "32", "--sigma", "0", "--out-prefix", str(prefix)]) == 0
    return prefix


def _key_lines(out):
    return [line for line in out.splitlines() if "key:" in line]


def test_simulate_file_size(tmp_path, capsys):
    prefix = tmp_path / "s"
    code, _, _ = run(capsys, "simulate", "--key", KEY, "--n", "10", "--m", "16", "--out-prefix", str(prefix))
    assert code == 0
    assert (tmp_path / "s.traces").stat().st_size == HEADER_SIZE + 10 * 16 * 8
    assert len((tmp_path / "s.ct").read_text().splitlines()) == 10


def test_simulate_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        run(capsys, "simulate", "--key", KEY, "--n", "10", "--m", "16", "--seed", "4", "--out-prefix", str(tmp_path / name))
    for ext in ("traces", "ct"):
        assert (tmp_path / f"a.{ext}").read_bytes() == (tmp_path / f"b.{ext}").read_bytes()


def test_simulate_rejects_short_key(tmp_path, capsys):
    code, out, err = run(capsys, "simulate", "--key", KEY[:31], "--out-prefix", str(tmp_path / "x"))
    assert code != 0
    assert "32 hex" in err and out == ""


def test_attack_prints_master_key(dataset, capsys):
    code, out, _ = run(capsys, "attack", "--traces", f"{dataset}.traces", "--ciphertexts", f"{dataset}.ct")
    assert code == 0
    assert f"master key:  {KEY}" in out
    assert len(out.splitlines()) == 1 + 16 + 2


def test_attack_workers_identical_key_lines(dataset, capsys):
    args = ["attack", "--traces", f"{dataset}.traces", "--ciphertexts", f"{dataset}.ct"]
    _, one, _ = run(capsys, *args, "--workers", "1")
    _, eight, _ = run(capsys, *args, "--workers", "8", "--chunk", "7")
    assert _key_lines(one) == _key_lines(eight)
    assert one == eight


def test_attack_count_mismatch(dataset, tmp_path, capsys):
    short = tmp_path / "short.ct"
    short.write_text("".join(open(f"{dataset}.ct").readlines()[:599]))
    code, out, err = run(capsys, "attack", "--traces", f"{dataset}.traces", "--ciphertexts", str(short))
    assert code != 0
    assert "600" in err and "599" in err


def test_attack_missing_file(tmp_path, capsys):
    code, _, err = run(capsys, "attack", "--traces", str(tmp_path / "no"), "--ciphertexts", str(tmp_path / "no.ct"))
    assert code != 0 and err


def test_attack_json(dataset, capsys):
    code, out, _ = run(capsys, "attack", "--traces", f"{dataset}.traces", "--ciphertexts", f"{dataset}.ct", "--json")
    assert code == 0
    doc = json.loads(out)
    assert doc["master_key"] == KEY
    assert len(doc["bytes"]) == 16


def test_attack_csv_format(tmp_path, capsys):
    prefix = tmp_path / "s"
    run(capsys, "simulate", "--key", KEY, "--n", "600", "--m", "32", "--seed", "2", "--out-prefix", str(prefix))
    save_traces(load_traces(f"{prefix}.traces"), tmp_path / "s.csv", "csv")
    code, out, _ = run(capsys, "attack", "--traces", str(tmp_path / "s.csv"), "--format", "csv", "--ciphertexts", f"{prefix}.ct")
    assert code == 0 and KEY in out


def test_inspect(dataset, capsys):
    code, out, _ = run(capsys, "inspect", f"{dataset}.traces")
    assert code == 0
    assert out.splitlines() == ["n: 600", "m: 64", "precision: double", "layout: trace-major"]


def test_export_curves(noiseless, tmp_path, capsys):
    dest = tmp_path / "curves.csv"
    code, _, _ = run(capsys, "export-curves", "--traces", f"{noiseless}.traces", "--ciphertexts", f"{noiseless}.ct", "--out", str(dest))
    assert code == 0
    rows = list(csv.DictReader(dest.open()))
    assert len(rows) == 16 * 32
    for b in range(16):
        curve = [r for r in rows if int(r["byte_position"]) == b]
        assert len(curve) == 32
        peak = max(curve, key=lambda r: abs(float(r["rho"])))
        assert abs(float(peak["rho"]) - 1.0) <= 1e-9
        assert int(peak["sample"]) == 2 * b


def test_attack_export_curves_flag(noiseless, tmp_path, capsys):
    dest = tmp_path / "c.csv"
    code, out, _ = run(
        capsys, "attack", "--traces", f"{noiseless}.traces", "--ciphertexts", f"{noiseless}.ct", "--export-curves", str(dest)
    )
    assert code == 0 and KEY in out
    assert len(dest.read_text().splitlines()) == 1 + 16 * 32


def test_bench_csv(capsys):
    code, out, err = run(capsys, "bench", "--synth-n", "40", "--synth-m", "32", "--workers", "1,2", "--reps", "1")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["n", "m", "workers", "precision", "phase1_s", "phase2_s", "phase3_s", "phase4_s", "total_s", "throughput"]
    assert len(rows) == 3
    for row in rows[1:]:
        for name, value in zip(rows[0], row):
            if name != "precision":
                assert float(value) == float(value) and abs(float(value)) != float("inf")
    assert "workers" in err


def test_bench_out_file(tmp_path, capsys):
    dest = tmp_path / "b.csv"
    code, out, _ = run(capsys, "bench", "--synth-n", "20", "--synth-m", "16", "--reps", "1", "--out", str(dest))
    assert code == 0 and out == ""
    assert dest.read_text().startswith("n,m,workers")


@pytest.mark.parametrize(
    "argv",
    [
        ["attack", "--traces", "x"],
        ["attack", "--traces", "x", "--ciphertexts", "y", "--bogus"],
        ["simulate", "--out-prefix", "p"],
        ["bench", "--workers", "0"],
        ["frobnicate"],
        [],
    ],
)
def test_bad_invocations_exit_nonzero(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code != 0
    assert "usage" in capsys.readouterr().err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "cpakit", "simulate", "--key", KEY, "--n", "4", "--m", "16", "--out-prefix", str(tmp_path / "m")],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    proc = subprocess.run([sys.executable, "-m", "cpakit", "inspect", str(tmp_path / "m.traces")], capture_output=True, text=True)
    assert "n: 4" in proc.stdout
