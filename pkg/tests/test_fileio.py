"""Tensor container format, report/CSV writers, and the sweep-spec parser."""

import csv
import json
import struct

import numpy as np
import pytest

from oracles import build_corrupt_corpus
from trpca.fileio import (
    ERROR_CODES,
    SweepSpecError,
    TensorFileError,
    parse_sweep_spec,
    read_tensor,
    write_report,
    write_sweep_csv,
    write_tensor,
    write_trace_csv,
)
from trpca.rpca import SolverConfig, solve
from trpca.synth import SweepCell, gen_truth


# ---------------------------------------------------------------------------
# container round-trips


def test_round_trip_is_byte_identical(tmp_path):
    rng = np.random.default_rng(0)
    for i in range(20):
        dims = tuple(rng.integers(1, 6, size=rng.integers(1, 5)))
        t = rng.standard_normal(dims)
        p1, p2 = tmp_path / f"a{i}.trpc", tmp_path / f"b{i}.trpc"
        write_tensor(p1, t)
        back = read_tensor(p1)
        assert np.array_equal(back, t) and back.dtype == np.float64
        write_tensor(p2, back)
        assert p1.read_bytes() == p2.read_bytes()


def test_header_layout(tmp_path):
    t = np.arange(8.0).reshape(2, 2, 2)
    path = tmp_path / "t.trpc"
    write_tensor(path, t)
    blob = path.read_bytes()
    assert len(blob) == 4 + 4 + 3 * 8 + 8 * 8  # magic+meta, dims, payload
    assert blob[:4] == b"TRPC"
    assert blob[4] == 1 and blob[5] == 3 and blob[6:8] == b"\x00\x00"
    assert struct.unpack("<3Q", blob[8:32]) == (2, 2, 2)
    assert np.frombuffer(blob[32:], dtype="<f8").tolist() == list(range(8))


def test_hand_built_file_reads_back(tmp_path):
    payload = struct.pack("<6d", *range(6))
    blob = b"TRPC" + bytes((1, 2, 0, 0)) + struct.pack("<2Q", 2, 3) + payload
    path = tmp_path / "hand.trpc"
    path.write_bytes(blob)
    t = read_tensor(path)
    assert np.array_equal(t, np.arange(6.0).reshape(2, 3))


def test_corrupt_files_raise_specific_codes(tmp_path):
    for path, code in build_corrupt_corpus(tmp_path):
        with pytest.raises(TensorFileError) as exc:
            read_tensor(path)
        assert exc.value.code == code, path.name
        assert code in ERROR_CODES


def test_write_is_atomic(tmp_path):
    t = np.ones((3, 3))
    target = tmp_path / "out.trpc"
    write_tensor(target, t)
    leftovers = [p for p in tmp_path.iterdir() if p.name.startswith(".trpca-")]
    assert leftovers == []
    with pytest.raises(OSError):
        write_tensor(tmp_path / "no_such_dir" / "out.trpc", t)
    assert np.array_equal(read_tensor(target), t)  # original untouched
    with pytest.raises(ValueError):
        write_tensor(target, np.array([[1.0, np.nan]]))
    assert np.array_equal(read_tensor(target), t)


# ---------------------------------------------------------------------------
# report and CSV writers


def test_report_schema_line_and_sorted_keys(tmp_path):
    path = tmp_path / "report.jsonl"
    write_report(path, [{"b": 1, "a": np.float64(2.5)}, {"record": "final"}])
    lines = path.read_text().splitlines()
    assert json.loads(lines[0]) == {"record": "schema", "schema_version": 1}
    assert lines[1] == '{"a": 2.5, "b": 1}'
    assert json.loads(lines[2]) == {"record": "final"}


def test_trace_csv_columns(tmp_path):
    truth = gen_truth((8, 8, 8), 2, kappa=2.0, alpha=0.125, seed=1)
    cfg = SolverConfig(rank=(2, 2, 2), max_iters=5, stop_tol=0.0)
    with_ref = solve(truth.y, cfg, reference=truth).trace
    path = tmp_path / "trace.csv"
    write_trace_csv(path, with_ref)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iteration", "zeta", "rel_fro_error", "inf_error", "loss", "seconds"]
    assert len(rows) == 1 + len(with_ref)
    assert rows[1][0] == "0"
    assert float(rows[1][2]) == with_ref.rows[0].rel_fro_error

    without_ref = solve(truth.y, cfg).trace
    write_trace_csv(path, without_ref)
    rows = list(csv.reader(path.open()))
    assert all(r[2] == "" and r[3] == "" for r in rows[1:])


def test_sweep_csv_columns(tmp_path):
    cells = [
        SweepCell(n=10, rank=2, alpha=0.1, kappa=5.0, median_rel_error=1e-8,
                  median_iterations=42.0, seconds=0.5, failures=0),
        SweepCell(n=10, rank=2, alpha=0.9, kappa=5.0, median_rel_error=float("nan"),
                  median_iterations=float("nan"), seconds=0.1, failures=3),
        SweepCell(n=10, rank=2, alpha=0.5, kappa=5.0, median_rel_error=0.0,
                  median_iterations=7.0, seconds=0.1, failures=0),
    ]
    path = tmp_path / "sweep.csv"
    write_sweep_csv(path, cells)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["n", "rank", "alpha", "kappa", "median_log10_rel_error",
                       "median_iterations", "seconds", "failures"]
    assert float(rows[1][4]) == pytest.approx(-8.0)
    assert rows[2][4] == "" and rows[2][5] == "" and rows[2][7] == "3"
    assert float(rows[3][4]) == pytest.approx(-300.0)  # zero floors at 1e-300


# ---------------------------------------------------------------------------
# sweep spec parsing


def test_parse_full_spec(tmp_path):
    path = tmp_path / "spec.txt"
    path.write_text(
        "# grid over problem sizes\n"
        "n = 10, 20\n"
        "r = 1, 2\n"
        "alpha = 0.0, 0.1   # corruption levels\n"
        "kappa = 1.0\n"
        "trials = 2\n"
        "iters = 50\n"
        "eta = 0.2\n"
        "rho = auto\n"
        "stop_tol = 1e-10\n"
        "seed = 11\n"
    )
    spec = parse_sweep_spec(path)
    assert spec.n_grid == (10, 20)
    assert spec.rank_grid == (1, 2)
    assert spec.alpha_grid == (0.0, 0.1)
    assert spec.kappa_grid == (1.0,)
    assert spec.trials == 2 and spec.max_iters == 50
    assert spec.eta == 0.2 and spec.rho is None
    assert spec.stop_tol == 1e-10 and spec.seed == 11


def test_parse_defaults(tmp_path):
    path = tmp_path / "spec.txt"
    path.write_text("n = 10\nr = 2\nalpha = 0.1\nkappa = 5.0\n")
    spec = parse_sweep_spec(path)
    assert spec.trials == 3 and spec.max_iters == 200
    assert spec.eta == 0.25 and spec.rho is None
    assert spec.stop_tol == 1e-12 and spec.seed == 0


@pytest.mark.parametrize(
    "text,line",
    [
        ("n = 10\nbogus line\nr = 2\nalpha = 0.1\nkappa = 1.0\n", 2),
        ("n = 10\nn = 20\nr = 2\nalpha = 0.1\nkappa = 1.0\n", 2),
        ("n = 10\nr = 2\nalpha = 0.1\nkappa = 1.0\ncolor = red\n", 5),
        ("n = 10\nr = two\nalpha = 0.1\nkappa = 1.0\n", 2),
        ("n = 10\nr = 2\nalpha = 0.1\nkappa = 1.0\ntrials = 1.5\n", 5),
        ("n = 10\nr = 2\n", 0),
    ],
)
def test_parse_errors_carry_line_numbers(tmp_path, text, line):
    path = tmp_path / "spec.txt"
    path.write_text(text)
    with pytest.raises(SweepSpecError) as exc:
        parse_sweep_spec(path)
    assert exc.value.line == line
    assert isinstance(exc.value, ValueError)
