"""Potts ADMM and its penalty-method variant."""
import math
import time

import numpy as np

from ..potts_core import direction_subproblem
from .cg import solve_tikhonov_pwls
from .params import SolverConfig
from .trace import SolverTrace, finite_or_raise

__all__ = ["potts_admm", "penalty_method", "prepare_problem"]


def prepare_problem(A, f, W):
    """Validate ``f`` and ``W`` as ``(m, C)`` arrays; returns ``(f, W, n, C)``."""
    f = np.asarray(f, dtype=float)
    W = np.ones_like(f) if W is None else np.asarray(W, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if W.ndim == 1:
        W = W[:, None]
    if f.shape[0] != A.rows or W.shape != f.shape:
        raise ValueError(f"data {f.shape} and weights {W.shape} must both be ({A.rows}, C)")
    finite_or_raise(f, W)
    if np.any(W <= 0):
        raise ValueError("weights must be positive")
    n = math.isqrt(A.cols)
    if n * n != A.cols:
        raise ValueError("operator columns must form a square image")
    return f, W, n, f.shape[1]


def potts_admm(A, f, W=None, config=None, multipliers=True, callback=None):
    """Minimise the multi-channel Potts model by ADMM.

    All variables start at zero.  Iteration ``k`` (from 1) uses
    ``rho_k = c0 * k^2.01`` and ``mu_k = rho_k / S``: a channel-wise PWLS
    step for the data variable ``v``, then sequential directional Potts
    steps for the split variables ``u_s`` (blocks ``r < s`` already
    updated), then multiplier ascent.  Iteration stops once all pairwise
    ``||u_s - u_t||_inf`` and all ``||u_s - v||_inf`` fall below ``tol``.

    Returns ``(u, trace)`` with ``u`` the average of the split variables.
    With ``multipliers=False`` the multipliers stay at zero (penalty method).
    """
    cfg = config or SolverConfig()
    f, W, n, C = prepare_problem(A, f, W)
    dirs = cfg.dirs
    S = len(dirs)
    N = n * n
    shape = (n, n, C)
    v = np.zeros((N, C))
    u = np.zeros((S,) + shape)
    lam = {(s, t): np.zeros(shape) for s in range(S) for t in range(s + 1, S)}
    tau = np.zeros((S,) + shape)
    trace = SolverTrace(method="admm" if multipliers else "penalty")

    for k in range(1, cfg.max_iter_admm + 1):
        t0 = time.perf_counter()
        rho = cfg.rho(k)
        mu = rho / S

        z = np.mean(u - tau / rho, axis=0).reshape(N, C)
        for c in range(C):
            v[:, c], _ = solve_tikhonov_pwls(A, W[:, c], f[:, c], mu * S, z[:, c],
                                             warm_start=v[:, c], tol=cfg.cg_tol,
                                             maxiter=cfg.cg_maxiter)
        vimg = v.reshape(shape)

        denom = rho + mu * (S - 1)
        for s, (d, w) in enumerate(dirs):
            target = rho * vimg + tau[s]
            for t in range(s + 1, S):
                target += mu * u[t] - lam[s, t]
            for r in range(s):
                target += mu * u[r] + lam[r, s]
            u[s] = direction_subproblem(target / denom, d, 2.0 * cfg.gamma * w / denom)

        if multipliers:
            for (s, t), l in lam.items():
                l += mu * (u[s] - u[t])
            tau += rho * (vimg[None] - u)

        split = float(np.max(np.abs(u - vimg[None])))
        elapsed = 1000.0 * (time.perf_counter() - t0)
        trace.record(k, A, f, u, dirs, elapsed, split_dist=split, rho=rho)
        if callback is not None:
            callback(k, u, vimg)
        if trace.max_block_dist[-1] < cfg.tol and split < cfg.tol:
            trace.converged = True
            break

    trace.blocks = u.copy()
    return u.mean(axis=0), trace


def penalty_method(A, f, W=None, config=None, callback=None):
    """Potts ADMM with all Lagrange multipliers pinned to zero."""
    return potts_admm(A, f, W, config, multipliers=False, callback=callback)

