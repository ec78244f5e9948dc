"""``lyaphi`` command line: gen, phi, integrate, validate-theta, bench.

Exit codes: 0 success, 1 numerical failure, 2 usage error. Progress goes to
standard error; data goes to files or standard output. Verbosity of the
progress log is controlled by ``LYAPHI_LOG`` (a :mod:`logging` level name).
"""
import argparse
import functools
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from lyaphi import __version__
from lyaphi import io as lio
from lyaphi.errors import DimensionError, LyaphiError
from lyaphi.integrators import (SCHEMES, DleProblem, DreProblem, IntegratorState, PhiOptions,
                                expeul_step, integrate, step_count)
from lyaphi.linalg import (DEFAULT_COMPRESS_TOL, LdlFactor, as_sparse, ldl_assemble,
                           ldl_rel_diff)
from lyaphi.params import DEFAULT_M_MAX, DEFAULT_P_MAX
from lyaphi.phi_dense import KRON_CAP, oracle_phi_kron, oracle_phi_symmetric
from lyaphi.phi_lowrank import DEFAULT_RANK_CAP, phi_apply_lowrank
from lyaphi.problems import dle_data, dre_default_BC, gen_advdiff, gen_heat2d, random_block
from lyaphi.reference import DENSE_REFERENCE_CAP, dle_exact_symmetric, dre_reference
from lyaphi.theta import (PUBLISHED_THETA, builtin_table, default_ktrunc, hseries_coeffs,
                          parse_table, theta_for, three_digits)

log = logging.getLogger("lyaphi")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2
REFERENCES = ("none", "one-step", "dense")
DRE_PRESET_H = (1 / 80, 1 / 160, 1 / 320, 1 / 640, 1 / 1280)


class UsageError(Exception):
    pass


def _setup_logging():
    level = os.environ.get("LYAPHI_LOG", "INFO").upper()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(getattr(logging, level, logging.INFO))
    log.propagate = False


def _add_phi_opts(p):
    p.add_argument("--tol-compress", type=float, default=DEFAULT_COMPRESS_TOL)
    p.add_argument("--rank-cap", type=int, default=DEFAULT_RANK_CAP)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--m-max", type=int, default=DEFAULT_M_MAX)
    p.add_argument("--p-max", type=int, default=DEFAULT_P_MAX)


def build_parser():
    ap = argparse.ArgumentParser(prog="lyaphi", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"lyaphi {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write benchmark matrices as .mtx files")
    g.add_argument("kind", choices=("heat2d", "advdiff"))
    g.add_argument("-n", type=int, required=True, help="grid points per side")
    g.add_argument("--alpha", type=float, default=1.0, help="diffusion coefficient (heat2d)")
    g.add_argument("--p", type=int, default=5, help="columns of the random B (heat2d)")
    g.add_argument("--r0", type=int, default=None, help="rank of the random initial factor")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--matrix-only", action="store_true", help="write only A.mtx")
    g.add_argument("-o", "--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("phi", help="low-rank phi_l(L_A)[L D L^T]")
    p.add_argument("--A", dest="A", type=Path, required=True)
    p.add_argument("--L", dest="L", type=Path, required=True)
    p.add_argument("--D", dest="D", type=Path, default=None, help="default: identity")
    p.add_argument("-l", type=int, default=1)
    p.add_argument("-o", "--out-prefix", type=Path, default=None,
                   help="write <prefix>_L.mtx and <prefix>_D.mtx")
    p.add_argument("--check-oracle", action="store_true",
                   help="compare against the dense lifted oracle (small N only)")
    _add_phi_opts(p)

    i = sub.add_parser("integrate", help="fixed-step DLE/DRE integration")
    i.add_argument("--config", type=Path, default=None, help="key = value run file")
    i.add_argument("--problem", choices=("heat2d", "advdiff", "file"))
    i.add_argument("--scheme")
    i.add_argument("-n", type=int)
    i.add_argument("--alpha", type=float)
    i.add_argument("--h", type=float)
    i.add_argument("--t-end", type=float)
    i.add_argument("--t0", type=float)
    i.add_argument("--tol-compress", type=float)
    i.add_argument("--rank-cap", type=int)
    i.add_argument("--seed", type=int)
    i.add_argument("--snapshot-stride", type=int, help="0 keeps only the final state")
    i.add_argument("--reference", choices=REFERENCES)
    i.add_argument("-o", "--out-dir", type=Path, default=Path("run"))

    v = sub.add_parser("validate-theta", help="regenerate and check the theta radii")
    v.add_argument("--table", type=Path, default=None, help="alternative table file")

    b = sub.add_parser("bench", help="batches of integration runs with a CSV report")
    b.add_argument("--batch", type=Path, help="one run per line: key=value ...")
    b.add_argument("--preset", choices=("dre-orders", "dle-capacity"))
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("-o", "--out", type=Path, default=Path("bench.csv"))
    return ap


# ---------------------------------------------------------------- gen

def cmd_gen(ns):
    cfg = {"kind": ns.kind, "n": ns.n, "alpha": ns.alpha, "seed": ns.seed, "p": ns.p,
           "r0": ns.r0}
    if ns.n < 2:
        raise UsageError("n must be >= 2")
    if ns.kind == "heat2d" and not ns.alpha > 0:
        raise UsageError("alpha must be positive for heat2d")
    head = lio.provenance(cfg)
    out = ns.out_dir
    N = ns.n * ns.n
    if ns.kind == "heat2d":
        A = gen_heat2d(ns.n, ns.alpha)
        files = {"A": A}
        if not ns.matrix_only:
            _, B, X0 = dle_data(ns.n, ns.alpha, p=ns.p, r0=ns.r0 or 2, seed=ns.seed)
            files.update(B=B, L0=X0.L)
    else:
        A = gen_advdiff(ns.n)
        files = {"A": A}
        if not ns.matrix_only:
            B, Ct = dre_default_BC(N, ns.n)
            files.update(B=B, C=Ct, L0=random_block(N, ns.r0 or 1, ns.seed))
    for name, val in files.items():
        lio.mm_write(out / f"{name}.mtx", val, head)
    print(f"wrote {', '.join(f'{k}.mtx' for k in files)} to {out} "
          f"(N={N}, nnz={A.nnz})")
    return EXIT_OK


# ---------------------------------------------------------------- phi

def _read_dense(path, name):
    X = lio.mm_read(path)
    return X.toarray() if hasattr(X, "toarray") else X


def cmd_phi(ns):
    A = as_sparse(lio.mm_read(ns.A))
    N = A.shape[0]
    L = _read_dense(ns.L, "L")
    D = _read_dense(ns.D, "D") if ns.D is not None else np.eye(L.shape[1])
    if ns.l < 0:
        raise UsageError("l must be >= 0")
    if A.shape[1] != N or L.shape[0] != N:
        raise UsageError(f"A is {A.shape} but L has {L.shape[0]} rows")
    try:
        Q = LdlFactor(L, D)
    except ValueError as exc:
        raise UsageError(str(exc))
    symmetric = abs(A - A.T).sum() == 0
    if ns.check_oracle and N > KRON_CAP and not (symmetric and N <= DENSE_REFERENCE_CAP):
        raise UsageError(f"oracle unavailable for N = {N} (nonsymmetric A needs N <= {KRON_CAP})")
    res = phi_apply_lowrank(A, Q, ns.l, tol_compress=ns.tol_compress, rank_cap=ns.rank_cap,
                            seed=ns.seed, m_max=ns.m_max, p_max=ns.p_max)
    pr, st = res.params, res.stats
    cfg = {"A": str(ns.A), "L": str(ns.L), "D": str(ns.D), "l": ns.l,
           "tol_compress": ns.tol_compress, "rank_cap": ns.rank_cap, "seed": ns.seed,
           "m_max": ns.m_max, "p_max": ns.p_max}
    if ns.out_prefix is not None:
        head = lio.provenance(cfg)
        lio.mm_write(f"{ns.out_prefix}_L.mtx", res.factor.L, head)
        lio.mm_write(f"{ns.out_prefix}_D.mtx", res.factor.D, head)
    print(f"m={pr.m} s={pr.s} p*={pr.p_star} rank={st.final_rank} "
          f"matvecs={st.matvecs} seconds={st.seconds:.3f}")
    if st.capped:
        log.warning(f"rank cap reached in {st.capped} compression(s); tolerance not met")
    if ns.check_oracle:
        Qd = ldl_assemble(Q, DENSE_REFERENCE_CAP)
        Ad = A.toarray()
        ref = oracle_phi_kron(Ad, Qd, ns.l) if N <= KRON_CAP else oracle_phi_symmetric(Ad, Qd, ns.l)
        got = ldl_assemble(res.factor, DENSE_REFERENCE_CAP)
        den = np.linalg.norm(ref)
        err = np.linalg.norm(got - ref) / (den if den > 0 else 1.0)
        bound = max(1e-9, 10 * ns.tol_compress)
        print(f"oracle_rel_error={err:.4e} bound={bound:.1e}")
        if not err <= bound:
            return EXIT_NUMERIC
    return EXIT_OK


# ---------------------------------------------------------------- integrate / bench

def resolve_config(file_cfg=None, overrides=None):
    cfg = dict(lio.CONFIG_DEFAULTS)
    cfg.update(file_cfg or {})
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    if cfg["problem"] not in ("heat2d", "advdiff", "file"):
        raise UsageError(f"unknown problem {cfg['problem']!r}")
    if cfg["scheme"] not in SCHEMES:
        raise UsageError(f"unknown scheme {cfg['scheme']!r}; expected one of {SCHEMES}")
    if cfg["problem"] == "heat2d" and cfg["scheme"] != "expeul":
        raise UsageError("heat2d is a Lyapunov problem; use scheme expeul")
    if cfg["problem"] == "advdiff" and cfg["scheme"] == "expeul":
        raise UsageError("advdiff is a Riccati problem; use exprb2 or exprb3")
    if cfg["reference"] not in REFERENCES:
        raise UsageError(f"unknown reference {cfg['reference']!r}")
    if cfg["problem"] != "file" and cfg["n"] < 2:
        raise UsageError("n must be >= 2")
    if cfg["problem"] == "heat2d" and not cfg["alpha"] > 0:
        raise UsageError("alpha must be positive for heat2d")
    if not cfg["h"] > 0 or cfg["t_end"] < cfg["t0"]:
        raise UsageError("need h > 0 and t_end >= t0")
    if cfg["problem"] == "file" and "A" not in cfg:
        raise UsageError("problem = file needs A (and B, L0) paths")
    return cfg


def build_problem(cfg):
    kind, n, seed = cfg["problem"], cfg["n"], cfg["seed"]
    if kind == "heat2d":
        A, B, X0 = dle_data(n, cfg["alpha"], p=cfg["p"], seed=seed)
        return DleProblem(A, B, X0)
    if kind == "advdiff":
        A = gen_advdiff(n)
        B, Ct = dre_default_BC(n * n, n)
        X0 = LdlFactor.from_thin(random_block(n * n, 1, seed))
        return DreProblem(A, B, Ct, X0)
    A = as_sparse(lio.mm_read(cfg["A"]))
    N = A.shape[0]
    B = _read_dense(cfg["B"], "B") if "B" in cfg else np.zeros((N, 1))
    X0 = LdlFactor.from_thin(_read_dense(cfg["L0"], "L0")) if "L0" in cfg else LdlFactor.zero(N)
    if cfg["scheme"] == "expeul":
        return DleProblem(A, B, X0)
    Ct = _read_dense(cfg["C"], "C") if "C" in cfg else np.zeros((N, 1))
    return DreProblem(A, B, Ct, X0)


def _opts(cfg):
    return PhiOptions(tol_compress=cfg["tol_compress"], rank_cap=cfg["rank_cap"],
                      seed=cfg["seed"])


def _rel(X, R):
    d = np.linalg.norm(R)
    return float(np.linalg.norm(X - R) / (d if d > 0 else 1.0))


@functools.lru_cache(maxsize=8)
def _cached_dre_reference(n, seed, t0, t_end):
    cfg = {"problem": "advdiff", "n": n, "seed": seed, "scheme": "exprb2"}
    P = build_problem(cfg)
    return dre_reference(P.A, P.B, P.Ct, P.X0, t_end - t0)


def reference_error(cfg, problem, final, opts):
    kind = cfg["reference"]
    if kind == "none":
        return None
    span = cfg["t_end"] - cfg["t0"]
    if kind == "one-step":
        if not isinstance(problem, DleProblem):
            raise UsageError("the one-step reference applies to expeul runs only")
        if span == 0:
            return 0.0
        one = expeul_step(problem, IntegratorState(cfg["t0"], problem.X0), span, opts)
        return float(ldl_rel_diff(final.X, one.X))
    X = ldl_assemble(final.X, DENSE_REFERENCE_CAP)
    if isinstance(problem, DleProblem):
        return _rel(X, dle_exact_symmetric(problem.A, problem.B, problem.X0, span))
    if cfg["problem"] == "advdiff":
        R = _cached_dre_reference(cfg["n"], cfg["seed"], cfg["t0"], cfg["t_end"])
    else:
        R = dre_reference(problem.A, problem.B, problem.Ct, problem.X0, span)
    return _rel(X, R)


def run_config(cfg, on_step=None):
    """Run one resolved config; returns ``(csv row, trajectory)``."""
    problem = build_problem(cfg)
    opts = _opts(cfg)
    t_start = time.perf_counter()
    traj = integrate(problem, cfg["scheme"], cfg["t0"], cfg["t_end"], cfg["h"], opts,
                     snapshot_stride=cfg["snapshot_stride"], on_step=on_step)
    seconds = time.perf_counter() - t_start
    error = None
    if traj.error is None:
        error = reference_error(cfg, problem, traj.final, opts)
    ss = [ph["s"] for st in traj for ph in st.stats.get("phi", [])] or [None]
    ms = [ph["m"] for st in traj for ph in st.stats.get("phi", [])] or [None]
    row = {"method": cfg["scheme"], "N": problem.A.shape[0], "h": cfg["h"], "error": error,
           "seconds": seconds, "max_rank": traj.max_rank,
           "s": max(ss, key=lambda v: v or 0), "m": max(ms, key=lambda v: v or 0)}
    return row, traj


def _write_snapshot(out, state, index, head):
    lio.mm_write(out / f"snap_{index:06d}_L.mtx", state.X.L, head + f" t={state.t!r}")
    lio.mm_write(out / f"snap_{index:06d}_D.mtx", state.X.D, head + f" t={state.t!r}")


def cmd_integrate(ns):
    file_cfg = lio.read_config(ns.config) if ns.config else {}
    over = {"problem": ns.problem, "scheme": ns.scheme, "n": ns.n, "alpha": ns.alpha,
            "h": ns.h, "t_end": ns.t_end, "t0": ns.t0, "tol_compress": ns.tol_compress,
            "rank_cap": ns.rank_cap, "seed": ns.seed, "snapshot_stride": ns.snapshot_stride,
            "reference": ns.reference}
    cfg = resolve_config(file_cfg, over)
    out = ns.out_dir
    head = lio.provenance(cfg)
    lio.atomic_write_text(out / "config.txt", f"# {head}\n" + lio.format_config(cfg))

    def progress(i, state):
        log.info(f"step {i} t={state.t:.6g} rank={state.X.rank} "
                 f"seconds={state.stats['cumulative_seconds']:.3f}")

    row, traj = run_config(cfg, on_step=progress)
    for state in traj:
        _write_snapshot(out, state, step_count(cfg["t0"], state.t, cfg["h"]), head)
    lio.csv_report([row], out / "report.csv", head)
    if traj.error is not None:
        log.error(f"integration stopped at t={traj.final.t:.6g}: {traj.error}")
        return EXIT_NUMERIC
    print(lio.csv_text([row]).splitlines()[1])
    return EXIT_OK


def parse_batch(text):
    runs = []
    for k, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            try:
                runs.append(lio.parse_config("\n".join(line.split())))
            except lio.ConfigError as exc:
                raise UsageError(f"batch line {k}: {exc}")
    return runs


def preset_runs(name):
    if name == "dre-orders":
        return [{"problem": "advdiff", "scheme": sc, "n": 8, "h": h, "t_end": 0.1,
                 "tol_compress": 1e-14, "reference": "dense"}
                for sc in ("exprb2", "exprb3") for h in DRE_PRESET_H]
    return [{"problem": "heat2d", "scheme": "expeul", "n": 50, "alpha": 2e-3, "h": 0.01,
             "t_end": 1.0, "tol_compress": 1e-10, "reference": "one-step"}]


def _bench_one(cfg):
    try:
        row, traj = run_config(cfg)
    except (LyaphiError, ArithmeticError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"
    return row, None if traj.error is None else str(traj.error)


def observed_orders(rows):
    """Least-squares slope of log(error) against log(h), per method."""
    out = {}
    for method in sorted({r["method"] for r in rows}):
        pts = [(r["h"], r["error"]) for r in rows
               if r["method"] == method and r["error"] and r["error"] > 0]
        if len(pts) >= 2:
            h, e = np.log(np.array(pts)).T
            out[method] = float(np.polyfit(h, e, 1)[0])
    return out


def cmd_bench(ns):
    if (ns.batch is None) == (ns.preset is None):
        raise UsageError("give exactly one of --batch or --preset")
    if ns.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    raw = parse_batch(ns.batch.read_text()) if ns.batch else preset_runs(ns.preset)
    cfgs = [resolve_config(c) for c in raw]
    if ns.jobs == 1:
        results = [_bench_one(c) for c in cfgs]
    else:
        with ProcessPoolExecutor(max_workers=ns.jobs) as pool:
            results = list(pool.map(_bench_one, cfgs))
    rows, failed = [], 0
    for cfg, (row, err) in zip(cfgs, results):
        if err is not None:
            failed += 1
            log.error(f"run {cfg['scheme']} h={cfg['h']}: {err}")
        if row is not None:
            rows.append(row)
            log.info(lio.csv_text([row]).splitlines()[1])
    head = lio.provenance({"runs": cfgs})
    lio.csv_report(rows, ns.out, head)
    for method, order in observed_orders(rows).items():
        print(f"order {method} {order:.3f}")
    return EXIT_NUMERIC if failed else EXIT_OK


# ---------------------------------------------------------------- validate-theta

def cmd_validate_theta(ns):
    shipped = builtin_table() if ns.table is None else _load_table(ns.table)
    ok = True
    print("m_plus_l\tregenerated\tpublished\trel_vs_published\trel_vs_shipped\tstatus")
    for d, pub in sorted(PUBLISHED_THETA.items()):
        series = hseries_coeffs(d, default_ktrunc(d))
        th = theta_for(d, series=series)
        rel_pub = abs(th - pub) / pub
        rel_ship = abs(th - shipped[d]) / shipped[d]
        good = three_digits(th) == pub and rel_ship <= 1e-8
        ok &= good
        print(f"{d}\t{th:.10e}\t{pub:.2e}\t{rel_pub:.3e}\t{rel_ship:.3e}\t"
              f"{'ok' if good else 'MISMATCH'}")
    return EXIT_OK if ok else EXIT_NUMERIC


def _load_table(path):
    return parse_table(Path(path).read_text())


COMMANDS = {"gen": cmd_gen, "phi": cmd_phi, "integrate": cmd_integrate,
            "validate-theta": cmd_validate_theta, "bench": cmd_bench}


def main(argv=None):
    _setup_logging()
    ns = build_parser().parse_args(argv)
    try:
        return COMMANDS[ns.command](ns)
    except (UsageError, lio.ConfigError, lio.MatrixMarketError, DimensionError,
            FileNotFoundError, IsADirectoryError) as exc:
        print(f"lyaphi {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LyaphiError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"lyaphi {ns.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
