import numpy as np
import pytest

from lyaphi import io as lio
from lyaphi.cli import main, observed_orders, parse_batch, UsageError
from lyaphi.problems import gen_heat2d
from lyaphi.theta import builtin_table, format_table


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


# --- gen -------------------------------------------------------------------

def test_gen_small_heat(tmp_path, capsys):
    code, out, _ = run(capsys, "gen", "heat2d", "-n", 2, "-o", tmp_path)
    assert code == 0 and "nnz=12" in out
    A = lio.mm_read(tmp_path / "A.mtx")
    assert A.nnz == 12 and A.shape == (4, 4)
    assert lio.mm_read(tmp_path / "B.mtx").shape == (4, 5)
    assert lio.mm_read(tmp_path / "L0.mtx").shape == (4, 2)


def test_gen_large_heat_deterministic(tmp_path, capsys):
    for d in ("a", "b"):
        code, out, _ = run(capsys, "gen", "heat2d", "-n", 100, "--alpha", 2e-4,
                           "-o", tmp_path / d)
        assert code == 0 and "nnz=49600" in out
    for name in ("A.mtx", "B.mtx", "L0.mtx"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_gen_advdiff_files_and_header(tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "advdiff", "-n", 5, "-o", tmp_path)
    assert code == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["A.mtx", "B.mtx", "C.mtx", "L0.mtx"]
    second = (tmp_path / "A.mtx").read_text().splitlines()[1]
    assert second.startswith("% lyaphi ") and " config " in second


def test_gen_matrix_only_and_bad_n(tmp_path, capsys):
    assert run(capsys, "gen", "heat2d", "-n", 3, "--matrix-only", "-o", tmp_path)[0] == 0
    assert [p.name for p in tmp_path.iterdir()] == ["A.mtx"]
    code, _, err = run(capsys, "gen", "heat2d", "-n", 1, "-o", tmp_path)
    assert code == 2 and "error" in err


# --- phi -------------------------------------------------------------------

def test_phi_l0_zero_operator_returns_input(tmp_path, capsys):
    lio.mm_write(tmp_path / "A.mtx", np.zeros((6, 6)))
    L = np.random.default_rng(0).standard_normal((6, 2))
    lio.mm_write(tmp_path / "L.mtx", L)
    code, out, _ = run(capsys, "phi", "--A", tmp_path / "A.mtx", "--L", tmp_path / "L.mtx",
                       "-l", 0, "-o", tmp_path / "out", "--check-oracle")
    assert code == 0 and "rank=2" in out
    Lo = lio.mm_read(tmp_path / "out_L.mtx")
    Do = lio.mm_read(tmp_path / "out_D.mtx")
    np.testing.assert_allclose(Lo @ Do @ Lo.T, L @ L.T, rtol=1e-13, atol=1e-13)


def oracle_error(out):
    line = [w for w in out.split() if w.startswith("oracle_rel_error=")][0]
    return float(line.split("=")[1])


def test_phi_check_oracle_symmetric_n100(tmp_path, capsys):
    lio.mm_write(tmp_path / "A.mtx", gen_heat2d(10, 0.01))
    lio.mm_write(tmp_path / "L.mtx", np.random.default_rng(1).standard_normal((100, 2)))
    code, out, _ = run(capsys, "phi", "--A", tmp_path / "A.mtx", "--L", tmp_path / "L.mtx",
                       "-l", 1, "--check-oracle")
    assert code == 0
    assert oracle_error(out) <= 1e-9


def test_phi_check_oracle_kron_small(tmp_path, capsys):
    code, _, _ = run(capsys, "gen", "advdiff", "-n", 4, "-o", tmp_path)
    assert code == 0
    code, out, _ = run(capsys, "phi", "--A", tmp_path / "A.mtx", "--L", tmp_path / "L0.mtx",
                       "-l", 2, "--tol-compress", 1e-14, "--check-oracle")
    assert code == 0 and oracle_error(out) <= 1e-9


def test_phi_oracle_unavailable(tmp_path, capsys):
    run(capsys, "gen", "advdiff", "-n", 7, "-o", tmp_path)
    code, _, err = run(capsys, "phi", "--A", tmp_path / "A.mtx", "--L", tmp_path / "L0.mtx",
                       "--check-oracle")
    assert code == 2 and "oracle unavailable" in err


def test_phi_bad_inputs(tmp_path, capsys):
    lio.mm_write(tmp_path / "A.mtx", np.eye(3))
    lio.mm_write(tmp_path / "L.mtx", np.ones((4, 1)))
    code, _, _ = run(capsys, "phi", "--A", tmp_path / "A.mtx", "--L", tmp_path / "L.mtx")
    assert code == 2
    code, _, _ = run(capsys, "phi", "--A", tmp_path / "missing.mtx", "--L", tmp_path / "L.mtx")
    assert code == 2
    (tmp_path / "bad.mtx").write_text("%%MatrixMarket matrix coordinate complex general\n1 1 0\n")
    code, _, err = run(capsys, "phi", "--A", tmp_path / "bad.mtx", "--L", tmp_path / "L.mtx")
    assert code == 2 and "bad.mtx:1:" in err


# --- integrate ---------------------------------------------------------------

def test_integrate_small_expeul(tmp_path, capsys):
    code, out, _ = run(capsys, "integrate", "--problem", "heat2d", "--scheme", "expeul",
                       "-n", 6, "--alpha", 0.01, "--h", 0.1, "--t-end", 0.5,
                       "--snapshot-stride", 1, "--reference", "dense", "-o", tmp_path)
    assert code == 0
    fields = out.strip().split(",")
    assert fields[0] == "expeul" and fields[1] == "36"
    assert float(fields[3]) <= 1e-8
    report = (tmp_path / "report.csv").read_text()
    assert report.startswith("# lyaphi ")
    assert report.splitlines()[1] == ",".join(lio.REPORT_COLUMNS)
    snaps = sorted(p.name for p in tmp_path.glob("snap_*_L.mtx"))
    assert snaps == [f"snap_{k:06d}_L.mtx" for k in range(6)]
    cfg = lio.read_config(tmp_path / "config.txt")
    assert cfg["n"] == 6 and cfg["scheme"] == "expeul"


def test_integrate_config_file_and_override(tmp_path, capsys):
    (tmp_path / "run.cfg").write_text("problem = advdiff\nscheme = exprb3\nn = 4\n"
                                      "h = 0.05\nt_end = 0.1\n")
    code, out, _ = run(capsys, "integrate", "--config", tmp_path / "run.cfg",
                       "--scheme", "exprb2", "--reference", "dense", "-o", tmp_path / "o")
    assert code == 0 and out.startswith("exprb2,16,0.05,")
    assert float(out.split(",")[3]) < 1e-2


def test_integrate_zero_steps(tmp_path, capsys):
    code, out, _ = run(capsys, "integrate", "--problem", "heat2d", "--scheme", "expeul",
                       "-n", 3, "--h", 0.1, "--t-end", 0, "--reference", "one-step",
                       "-o", tmp_path)
    assert code == 0
    assert [p.name for p in tmp_path.glob("snap_*_L.mtx")] == ["snap_000000_L.mtx"]
    assert out.split(",")[3] == "0.0000e+00"


@pytest.mark.parametrize("extra", [
    ("--scheme", "rk4"),
    ("--scheme", "exprb2"),
    ("--h", "-1"),
])
def test_integrate_usage_errors(tmp_path, capsys, extra):
    base = ("integrate", "--problem", "heat2d", "--scheme", "expeul", "-n", 3, "-o", tmp_path)
    code, _, err = run(capsys, *base, *extra)
    assert code == 2 and "error" in err


def test_integrate_bad_config(tmp_path, capsys):
    (tmp_path / "x.cfg").write_text("colour = red\n")
    assert run(capsys, "integrate", "--config", tmp_path / "x.cfg", "-o", tmp_path)[0] == 2


@pytest.mark.slow
def test_integrate_heat_n100_against_one_step(tmp_path, capsys):
    code, out, _ = run(capsys, "integrate", "--problem", "heat2d", "--scheme", "expeul",
                       "-n", 100, "--alpha", 2e-4, "--h", 0.01, "--t-end", 1.0,
                       "--snapshot-stride", 0, "--reference", "one-step", "-o", tmp_path)
    assert code == 0
    assert float(out.split(",")[3]) <= 1e-7


# --- validate-theta ----------------------------------------------------------

def test_validate_theta(capsys):
    code, out, _ = run(capsys, "validate-theta")
    assert code == 0
    rows = {line.split("\t")[0]: line.split("\t") for line in out.splitlines()[1:]}
    for d, pub in (("5", "2.40e-03"), ("15", "6.41e-01"), ("20", "1.44e+00")):
        assert rows[d][2] == pub and rows[d][-1] == "ok"


def test_validate_theta_detects_corrupt_table(tmp_path, capsys):
    table = builtin_table()
    bad = dict(table.theta)
    bad[20] *= 1.01
    (tmp_path / "t.tsv").write_text(format_table(type(table)(table.tol, bad)))
    code, out, _ = run(capsys, "validate-theta", "--table", tmp_path / "t.tsv")
    assert code == 1 and "MISMATCH" in out


# --- bench -------------------------------------------------------------------

BATCH = """# two small Riccati runs
problem=advdiff scheme=exprb2 n=4 h=0.05 t_end=0.1 reference=dense
problem=advdiff scheme=exprb2 n=4 h=0.025 t_end=0.1 reference=dense
"""


@pytest.mark.parametrize("jobs", [1, 2])
def test_bench_batch(tmp_path, capsys, jobs):
    (tmp_path / "b.txt").write_text(BATCH)
    code, out, _ = run(capsys, "bench", "--batch", tmp_path / "b.txt", "--jobs", jobs,
                       "-o", tmp_path / "bench.csv")
    assert code == 0
    lines = (tmp_path / "bench.csv").read_text().splitlines()
    assert lines[0].startswith("# lyaphi ") and len(lines) == 4
    assert out.startswith("order exprb2 ")
    assert float(out.split()[2]) > 1.0


def test_bench_arguments(tmp_path, capsys):
    assert run(capsys, "bench", "-o", tmp_path / "x.csv")[0] == 2
    (tmp_path / "b.txt").write_text("problem=heat2d nonsense\n")
    assert run(capsys, "bench", "--batch", tmp_path / "b.txt", "-o", tmp_path / "x.csv")[0] == 2


def test_parse_batch_and_orders():
    runs = parse_batch(BATCH)
    assert [r["h"] for r in runs] == [0.05, 0.025]
    with pytest.raises(UsageError, match="line 2"):
        parse_batch("n=3\nn=three\n")
    rows = [{"method": "x", "h": h, "error": 3 * h ** 2} for h in (0.1, 0.05, 0.025)]
    assert observed_orders(rows)["x"] == pytest.approx(2.0)


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.startswith("lyaphi ")
