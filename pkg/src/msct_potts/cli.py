"""Command-line driver with the subcommands ``simulate``, ``reconstruct``,
``evaluate`` and ``bench``.

Every command writes its files atomically into ``--out`` and refreshes the
folder's ``manifest.sha256``.  Exit codes: 0 success, 2 invalid usage or
configuration, 3 a reconstruction stopped at its iteration cap, 4 invalid
input data or a failed run.
"""
import argparse
from dataclasses import replace
import logging
import os
import sys

import numpy as np

from . import io as msio
from .config import ConfigError, RunSpec, dump_config, load_config
from .experiments import build_problem, reference_values, run
from .metrics import evaluate
from .projector import RayOperator, build_operator
from .solvers import METHODS, run_method
from .solvers.trace import CSV_HEADER as TRACE_HEADER

__all__ = ["main", "EXIT_OK", "EXIT_USAGE", "EXIT_MAXITER", "EXIT_FAILED"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MAXITER = 3
EXIT_FAILED = 4

log = logging.getLogger("msct_potts")


class CommandError(Exception):
    def __init__(self, message, code=EXIT_FAILED):
        super().__init__(message)
        self.code = code


class Outputs:
    """Output folder that remembers what was written for the manifest."""

    def __init__(self, folder):
        self.folder = folder
        try:
            os.makedirs(folder, exist_ok=True)
        except OSError as exc:
            raise CommandError(f"cannot create output folder {folder}: {exc}") from None
        if not os.access(folder, os.W_OK):
            raise CommandError(f"output folder {folder} is not writable")
        self.names = []

    def path(self, name):
        return os.path.join(self.folder, name)

    def write(self, name, data):
        msio.atomic_write(self.path(name), data)
        self.names.append(name)

    def array(self, name, arr, magic=msio.IMAGE_MAGIC):
        self.write(name, msio.encode_array(arr, magic))

    def pgm(self, name, img, lo=None, hi=None):
        self.write(name, msio.render_pgm(img, lo, hi))

    def finish(self):
        msio.write_manifest(self.folder, self.names)


def set_threads(n):
    """Limit numba and BLAS threads; results do not depend on the count."""
    if n is None:
        return
    if n < 1:
        raise CommandError("--threads must be >= 1", EXIT_USAGE)
    import numba
    from threadpoolctl import threadpool_limits

    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    threadpool_limits(n)


def _config(path, seed=None, method=None):
    cfg = load_config(path)
    if seed is not None:
        if seed < 0:
            raise CommandError("--seed must be non-negative", EXIT_USAGE)
        cfg = replace(cfg, seed=seed)
    if method is not None:
        if method not in METHODS:
            raise CommandError(f"unknown method {method!r}; choose from {', '.join(METHODS)}",
                               EXIT_USAGE)
        cfg = replace(cfg, method=method)
    return cfg


def _as_columns(arr):
    return arr[:, None] if arr.ndim == 1 else arr


# --------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    cfg = _config(args.config, args.seed)
    out = Outputs(args.out)
    problem = build_problem(cfg)
    out.write("config.ini", dump_config(cfg))
    out.array("truth.msimg", problem.truth)
    msio.write_labels_pgm(out.path("labels.pgm"), problem.phantom.labels)
    out.names.append("labels.pgm")
    out.array("sinogram.mssin", problem.f, msio.SINO_MAGIC)
    out.array("weights.mssin", problem.W, msio.SINO_MAGIC)
    if problem.sinogram.counts is not None:
        out.array("counts.mssin", problem.sinogram.counts, msio.SINO_MAGIC)
    out.write("operator.rayop", problem.A.to_bytes())
    out.finish()
    log.info("simulated %s: sinogram %s", cfg.phantom, problem.f.shape)
    return EXIT_OK


def _summary_csv(trace):
    rows = [("method", trace.method), ("iterations", str(len(trace))),
            ("converged", "true" if trace.converged else "false")]
    last = trace.last() or {}
    for key in TRACE_HEADER[1:-1]:
        if key in last:
            rows.append((key, repr(last[key])))
    for key, series in sorted(trace.extra.items()):
        rows.append((key, repr(series[-1])))
    return "key,value\n" + "".join(f"{k},{v}\n" for k, v in rows)


def cmd_reconstruct(args):
    folder = os.path.dirname(os.path.abspath(args.sinogram or os.path.join(args.out, "x")))
    sino_path = args.sinogram or os.path.join(folder, "sinogram.mssin")
    config_path = args.config or os.path.join(folder, "config.ini")
    cfg = _config(config_path, args.seed, args.method)
    try:
        f = _as_columns(msio.read_array(sino_path, msio.SINO_MAGIC))
        weights_path = args.weights or os.path.join(folder, "weights.mssin")
        W = _as_columns(msio.read_array(weights_path, msio.SINO_MAGIC)) \
            if args.weights or os.path.exists(weights_path) else None
    except (OSError, ValueError) as exc:
        raise CommandError(f"cannot read input: {exc}") from None
    op_path = os.path.join(folder, "operator.rayop")
    A = RayOperator.load(op_path) if os.path.exists(op_path) \
        else build_operator(cfg.geometry.with_size(cfg.size_px))
    if f.shape[0] != A.rows or A.cols != cfg.size_px ** 2:
        raise CommandError(f"sinogram has {f.shape[0]} rows and the image {cfg.size_px}^2 "
                           f"pixels, but the operator is {A.rows} x {A.cols}")
    out = Outputs(args.out)
    try:
        u, trace = run_method(cfg.method, A, f, W, cfg.solver)
    except ValueError as exc:
        raise CommandError(f"{cfg.method} failed: {exc}") from None
    out.array("result.msimg", u)
    out.write("trace.csv", trace.to_csv(timing=cfg.timing))
    out.write("summary.csv", _summary_csv(trace))
    if "residual" in trace.extra:
        text = "iter,residual\n" + "".join(
            f"{k},{r!r}\n" for k, r in zip(trace.iters, trace.extra["residual"]))
        out.write("residual.csv", text)
    out.finish()
    if not trace.converged:
        log.warning("%s stopped at its iteration cap after %d iterations", cfg.method, len(trace))
        return EXIT_MAXITER
    return EXIT_OK


def cmd_evaluate(args):
    try:
        result = msio.read_array(args.result, msio.IMAGE_MAGIC)
        truth = msio.read_array(args.truth, msio.IMAGE_MAGIC)
    except (OSError, ValueError) as exc:
        raise CommandError(f"cannot read input: {exc}") from None
    if result.shape != truth.shape:
        raise CommandError(f"result {result.shape} and ground truth {truth.shape} differ in shape")
    if result.ndim == 2:
        result, truth = result[..., None], truth[..., None]
    try:
        report = evaluate(result, truth)
    except ValueError as exc:
        raise CommandError(str(exc)) from None
    out = Outputs(args.out)
    out.write("metrics.csv", report.to_csv())
    write_renders(out, result, truth)
    out.finish()
    return EXIT_OK


def write_renders(out, result, truth, prefix=""):
    """Channel renders scaled to the ground-truth channel's ``[min, max]``; the
    absolute difference is scaled from 0 to that channel's range."""
    for c in range(truth.shape[-1]):
        lo, hi = float(truth[..., c].min()), float(truth[..., c].max())
        out.pgm(f"{prefix}truth_c{c}.pgm", truth[..., c], lo, hi)
        out.pgm(f"{prefix}result_c{c}.pgm", result[..., c], lo, hi)
        out.pgm(f"{prefix}diff_c{c}.pgm", np.abs(result[..., c] - truth[..., c]), 0.0, hi - lo)


def bench_runs(cfg, names):
    """Runs selected by ``names`` (config run names or method names), deduplicated."""
    if names is None:
        chosen = list(cfg.bench_runs())
    else:
        table = {r.name: r for r in cfg.runs}
        chosen = []
        for name in names:
            if name in table:
                chosen.append(table[name])
            elif name in METHODS:
                chosen.append(RunSpec(name, name))
            else:
                raise CommandError(f"unknown run or method {name!r}", EXIT_USAGE)
    seen, runs = set(), []
    for r in chosen:
        if r.name in seen:
            log.warning("duplicate run %r ignored", r.name)
            continue
        seen.add(r.name)
        runs.append(r)
    if len(runs) < 2:
        raise CommandError("bench needs at least two distinct runs", EXIT_USAGE)
    return runs


def bench_table(rows):
    """Rows sorted by mean MSSIM (best first, ties in run order) as CSV text."""
    C = rows[0][2].channels if rows else 0
    head = ["rank", "run", "method", "converged", "iterations",
            "mean_rmse", "mean_mae", "mean_mssim"]
    for key in ("rmse", "mae", "mssim"):
        head += [f"{key}_c{c}" for c in range(C)]
    order = sorted(range(len(rows)), key=lambda i: (-rows[i][2].mean()["mssim"], i))
    lines = [",".join(head)]
    for rank, i in enumerate(order, 1):
        spec, trace, rep = rows[i]
        m = rep.mean()
        vals = [str(rank), spec.name, spec.method, "true" if trace.converged else "false",
                str(len(trace)), repr(m["rmse"]), repr(m["mae"]), repr(m["mssim"])]
        for arr in (rep.rmse, rep.mae, rep.mssim):
            vals += [repr(float(x)) for x in arr]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def cmd_bench(args):
    cfg = _config(args.config, args.seed)
    names = None if args.method is None else [x.strip() for x in args.method.split(",") if x.strip()]
    runs = bench_runs(cfg, names)
    out = Outputs(args.out)
    problem = build_problem(cfg)
    out.write("config.ini", dump_config(cfg))
    out.array("truth.msimg", problem.truth)
    ref = reference_values(problem, cfg.solver.dirs)
    out.write("reference.csv", "key,value\n" + "".join(f"{k},{v!r}\n" for k, v in ref.items()))
    rows, traces = [], [",".join(("run",) + TRACE_HEADER)]
    status = EXIT_OK
    for spec in runs:
        log.info("bench: running %s (%s)", spec.name, spec.method)
        try:
            u, trace = run(problem, spec, cfg.solver)
        except Exception as exc:  # keep what finished so far
            log.error("run %r failed: %s", spec.name, exc)
            status = EXIT_FAILED
            break
        out.array(f"result_{spec.name}.msimg", u)
        text = trace.to_csv(timing=cfg.timing)
        out.write(f"trace_{spec.name}.csv", text)
        traces += [f"{spec.name},{line}" for line in text.splitlines()[1:]]
        rows.append((spec, trace, evaluate(u, problem.truth)))
        out.write("bench.csv", bench_table(rows))
        out.write("traces.csv", "\n".join(traces) + "\n")
        out.finish()
    out.finish()
    if status != EXIT_OK:
        raise CommandError(f"bench aborted; results of {len(rows)} run(s) kept in {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="msct-potts", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=True):
        p.add_argument("--config", required=config_required, help="experiment INI file")
        p.add_argument("--out", required=True, help="output folder")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help="worker threads for the line solver and BLAS")

    p = sub.add_parser("simulate", help="phantom, sinogram, weights and operator")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reconstruct", help="run one solver on a sinogram")
    common(p, config_required=False)
    p.add_argument("--method", help="override the configured method")
    p.add_argument("--sinogram", help="MSSIN1 log data (default: OUT/sinogram.mssin)")
    p.add_argument("--weights", help="MSSIN1 weights (default: next to the sinogram, else ones)")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="metrics CSV and PGM renders")
    p.add_argument("result", help="MSIMG1 reconstruction")
    p.add_argument("truth", help="MSIMG1 ground truth")
    p.add_argument("--out", required=True, help="output folder")
    p.add_argument("--threads", type=int, help="worker threads")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("bench", help="compare several runs on one simulated problem")
    common(p)
    p.add_argument("--method", help="comma-separated run or method names (default: [bench] runs)")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        set_threads(args.threads)
        return args.func(args)
    except ConfigError as exc:
        log.error("%s", exc)
        return EXIT_USAGE
    except CommandError as exc:
        log.error("%s", exc)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
