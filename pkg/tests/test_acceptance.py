"""Acceptance suite: one PASS/FAIL line per criterion.

The lines are printed as the tests run and repeated in the pytest terminal
summary.  Criteria 7 to 9 drive the command-line ``bench`` subcommand on the
shipped configs; criterion 11 reruns them with two threads and compares the
output bytes.
"""
import csv
import math
import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.sparse as sp

from msct_potts import io as msio
from msct_potts.metrics import mae, mssim, rmse
from msct_potts.potts_core import (NEAR_ISOTROPIC, blockwise_potts_value, jump_set,
                                   nonascending_direction, potts_1d, prox_blockwise_potts)
from msct_potts.projector import Geometry, RayOperator, build_operator
from msct_potts.solvers import (CGState, SolverConfig, augmented_gram, cg_step_generic,
                                proximity, superiorized_cg_basic)

import oracles

ROOT = Path(__file__).resolve().parent.parent
RESULTS = []


def report(k, ok, detail):
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# --------------------------------------------------------------------------
# command-line benches shared by criteria 7, 8, 9 and 11


class Bench:
    def __init__(self, root):
        self.root = root
        self.done = {}

    def __call__(self, name, threads=1):
        key = (name, threads)
        if key not in self.done:
            out = self.root / f"{name}_t{threads}"
            env = dict(os.environ, NUMBA_NUM_THREADS=str(threads))
            t0 = time.perf_counter()
            res = subprocess.run([sys.executable, "-m", "msct_potts", "bench", "--config",
                                  str(ROOT / "configs" / f"{name}.ini"), "--out", str(out),
                                  "--threads", str(threads)],
                                 capture_output=True, text=True, env=env)
            elapsed = time.perf_counter() - t0
            assert res.returncode == 0, res.stderr
            self.done[key] = (out, elapsed)
        return self.done[key]


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    return Bench(tmp_path_factory.mktemp("acceptance"))


def bench_rows(out):
    with open(out / "bench.csv") as fh:
        return {r["run"]: r for r in csv.DictReader(fh)}


def last_trace_row(out, run):
    with open(out / f"trace_{run}.csv") as fh:
        return list(csv.DictReader(fh))[-1]


# --------------------------------------------------------------------------


def test_criterion_01_potts_oracle():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(500):
        L = int(rng.integers(1, 11))
        C = int(rng.integers(1, 4))
        gamma = float(rng.choice([0.01, 0.1, 1.0, 10.0]))
        g = rng.standard_normal((C, L))
        best, _ = oracles.potts_brute(g, gamma)
        worst = max(worst, abs(oracles.energy(potts_1d(g, gamma), g, gamma) - best))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-9 and elapsed < 10,
           f"500 instances, max energy gap {worst:.2e}, {elapsed:.1f} s")


def test_criterion_02_prox_properties():
    rng = np.random.default_rng(102)
    incl = ascent = 0
    for _ in range(200):
        u = np.round(rng.standard_normal((4, 7, 7, 2)), 1)
        beta = float(rng.uniform(0.01, 2.0))
        out = prox_blockwise_potts(u, beta)
        for s, (d, _) in enumerate(NEAR_ISOTROPIC):
            incl += not jump_set(out[s], d) <= jump_set(u[s], d)
    for _ in range(200):
        u = rng.standard_normal((4, 7, 7, 2))
        beta = float(rng.uniform(0.01, 2.0))
        v, delta = nonascending_direction(u, beta)
        F0 = blockwise_potts_value(u)
        ascent += sum(blockwise_potts_value(u + t * v) > F0 for t in np.linspace(0, delta, 11))
    report(2, incl == 0 and ascent == 0,
           f"jump-inclusion violations {incl}/200, non-ascent violations {ascent}/200")


def test_criterion_03_adjoint_determinism():
    rng = np.random.default_rng(103)
    worst = 0.0
    geoms = [Geometry(mode="parallel", n=24, detectors=35, angles=13),
             Geometry(mode="fan", n=24, detectors=40, angles=11)]
    ops = [build_operator(g) for g in geoms]
    for i in range(100):
        A = ops[i % 2]
        u = rng.standard_normal(A.cols)
        y = rng.standard_normal(A.rows)
        lhs, rhs = float(np.dot(A.apply(u), y)), float(np.dot(u, A.apply_adjoint(y)))
        worst = max(worst, abs(lhs - rhs) / max(abs(lhs), abs(rhs), 1e-300))
    same = all(build_operator(g).to_bytes() == A.to_bytes() for g, A in zip(geoms, ops))
    report(3, worst <= 1e-12 and same,
           f"100 adjoint checks, max rel gap {worst:.1e}; rebuilds bit-identical: {same}")


def test_criterion_04_equal_blocks():
    rng = np.random.default_rng(104)
    block_gap = normal_gap = 0.0
    for i in range(50):
        S = (2, 4)[i % 2]
        N = int(rng.integers(3, 7))
        m = N + int(rng.integers(2, 6))
        D = rng.standard_normal((m, N))
        w, f = rng.uniform(0.5, 2, m), rng.standard_normal(m)
        mu = float(rng.uniform(0.1, 2.0))
        big, rhs = oracles.augmented_dense(D, w, f, mu, S)
        X = np.linalg.solve(big, rhs).reshape(S, N)
        block_gap = max(block_gap, float(np.max(np.abs(X - X[0]))))
        G, b = D.T @ np.diag(w) @ D, D.T @ (w * f)
        normal_gap = max(normal_gap, float(np.max(np.abs(G @ X[0] - b))))
    report(4, block_gap <= 1e-8 and normal_gap <= 1e-8,
           f"50 systems, max block gap {block_gap:.1e}, normal-equation residual {normal_gap:.1e}")


def test_criterion_05_finite_termination():
    rng = np.random.default_rng(105)
    worst = 0.0
    for i in range(20):
        n, S = ((3, 2), (4, 2), (3, 4), (5, 2))[i % 4]
        N = S * n * n
        D = rng.standard_normal((2 * n * n, n * n))
        w, f = rng.uniform(0.5, 2, D.shape[0]), rng.standard_normal(D.shape[0])
        A = RayOperator(sp.csr_matrix(D))
        gram = augmented_gram(A, w, float(rng.uniform(0.1, 1.0)))
        b = np.tile(A.apply_adjoint(w * f), (S, 1))
        b /= np.linalg.norm(b)
        st = CGState.fresh(np.zeros((S, n * n)))
        for _ in range(N + 5):
            cg_step_generic(gram, b, st)
        worst = max(worst, float(np.linalg.norm(gram(st.x) - b)))
    report(5, worst <= 1e-9, f"20 systems with N <= 50, max residual after N+5 steps {worst:.1e}")


def test_criterion_06_superiorized_termination():
    rng = np.random.default_rng(106)
    misses, iters = [], []
    for p in range(10):
        n, m, S = 3, 14, 4
        D = rng.standard_normal((m, n * n))
        w = rng.uniform(0.5, 2.0, (m, 1))
        f = rng.standard_normal((m, 1))
        mu = 0.5
        big, rhs = oracles.augmented_dense(D, w[:, 0], f[:, 0], mu, S)
        X = np.linalg.solve(big, rhs).reshape(S, -1)
        eps = 1.01 * oracles.augmented_objective(D, w[:, 0], f[:, 0], mu, X)
        A = RayOperator(sp.csr_matrix(D))
        for strategy in ("proximal", "nonascending"):
            for a in (0.9, 0.99, 0.999):
                cfg = SolverConfig(beta0=1.0, anneal=a, mu=mu, epsilon=eps, max_iter_scg=20000)
                blocks, trace = superiorized_cg_basic(A, f, w, cfg, strategy)
                iters.append(len(trace))
                if not (trace.converged and proximity(A, f, w, blocks, mu) < eps):
                    misses.append((p, strategy, a))
    report(6, not misses,
           f"60 runs, non-terminations {len(misses)}, max iterations {max(iters)}")


@pytest.mark.slow
def test_criterion_07_radon15_ordering(bench):
    out, elapsed = bench("radon15")
    rows = bench_rows(out)
    m = {k: float(rows[k]["mean_mssim"]) for k in
         ("scg", "cg_prox", "cg_nonascending", "cg_unperturbed")}
    ok = m["scg"] >= m["cg_prox"] >= m["cg_nonascending"] >= m["cg_unperturbed"]
    report(7, ok and elapsed < 300,
           "mean MSSIM S-CG {scg:.4f} >= prox {cg_prox:.4f} >= nonascending "
           "{cg_nonascending:.4f} >= unperturbed {cg_unperturbed:.4f}".format(**m)
           + f", {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_08_radon20_comparison(bench):
    out, elapsed = bench("radon20")
    rows = bench_rows(out)
    m = {k: float(r["mean_mssim"]) for k, r in rows.items()}
    ref = msio_kv(out / "reference.csv")
    beat = all(m[a] > m[b] for a in ("admm", "scg") for b in ("penalty", "s_landweber"))
    within = []
    for run in ("admm", "scg"):
        last = last_trace_row(out, run)
        for key in ("data_dev", "blockwise_potts"):
            within.append(abs(float(last[key]) / ref[key] - 1.0))
    ok = beat and max(within) <= 0.25 and elapsed < 600
    report(8, ok, f"MSSIM admm {m['admm']:.4f}, scg {m['scg']:.4f} vs penalty "
                  f"{m['penalty']:.4f}, s_landweber {m['s_landweber']:.4f}; "
                  f"max deviation from reference {max(within):.1%}; {elapsed:.0f} s")


@pytest.mark.slow
def test_criterion_09_organic_third_channel(bench):
    out, elapsed = bench("organic")
    rows = bench_rows(out)
    c3 = {k: float(r["mssim_c2"]) for k, r in rows.items()}
    ok = min(c3["admm"], c3["scg"]) > c3["cg_plain"] and elapsed < 600
    report(9, ok, f"third-channel MSSIM admm {c3['admm']:.4f}, scg {c3['scg']:.4f} vs "
                  f"channel-wise PWLS-CG {c3['cg_plain']:.4f}; {elapsed:.0f} s")


def test_criterion_10_metric_oracles():
    rng = np.random.default_rng(110)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(11, 24))
        u = rng.random((n, n))
        v = u + rng.uniform(0.01, 0.5) * rng.standard_normal((n, n))
        worst = max(worst, abs(mssim(u, v) - oracles.mssim_direct(u, v)),
                    abs(rmse(u, v) - oracles.rmse_direct(u, v)),
                    abs(mae(u, v) - oracles.mae_direct(u, v)))
    identical = mssim(u, u) == 1.0
    report(10, worst <= 1e-10 and identical,
           f"50 pairs, max oracle gap {worst:.1e}; mssim(u, u) == 1: {identical}")


@pytest.mark.slow
def test_criterion_11_determinism(bench):
    diffs = []
    for name in ("radon15", "radon20", "organic"):
        one, _ = bench(name, 1)
        two, _ = bench(name, 2)
        files = msio.manifest_names(one) + ["manifest.sha256"]
        if files != msio.manifest_names(two) + ["manifest.sha256"]:
            diffs.append(f"{name}: file lists differ")
            continue
        diffs += [f"{name}/{f}" for f in files
                  if (one / f).read_bytes() != (two / f).read_bytes()]
    report(11, not diffs, "radon15/radon20/organic outputs byte-identical with 1 and 2 threads"
           if not diffs else f"differing files: {', '.join(diffs)}")


def msio_kv(path):
    with open(path) as fh:
        return {r["key"]: float(r["value"]) for r in csv.DictReader(fh)}
