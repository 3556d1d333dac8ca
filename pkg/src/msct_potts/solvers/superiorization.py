"""Potts-superiorized conjugate gradients and related baselines.

Split variables are kept per channel as ``(S, N)`` arrays (``N = n * n``),
so one CG state per channel covers all blocks of that channel.
"""
import math
import time

import numpy as np

from ..potts_core import nonascending_direction, prox_blockwise_potts
from ..projector import operator_norm_sq
from .admm import prepare_problem
from .cg import CGBreakdown, CGState, augmented_gram, cg_step_generic, dot, landweber_step
from .params import SolverConfig
from .trace import SolverTrace

__all__ = [
    "potts_scg",
    "superiorized_cg_basic",
    "potts_s_landweber",
    "pwls_cg",
    "proximity",
]


def _blocks(states, n):
    X = np.stack([st.x for st in states], axis=-1)           # (S, N, C)
    return X.reshape(X.shape[0], n, n, X.shape[-1])


def _set_blocks(states, U):
    S = U.shape[0]
    for c, st in enumerate(states):
        st.x = np.ascontiguousarray(U[..., c].reshape(S, -1))


def _safe_step(gram, b, st):
    """CG step; on breakdown fall back to a steepest-descent step."""
    try:
        cg_step_generic(gram, b, st)
    except CGBreakdown:
        st.p = np.zeros_like(st.x)
        st.h = np.zeros_like(st.x)
        cg_step_generic(gram, b, st)


def _relres(gram, b, st):
    r = gram(st.x) - b
    bn = math.sqrt(dot(b, b))
    return math.sqrt(dot(r, r)) / bn if bn else math.sqrt(dot(r, r))


def proximity(A, f, W, blocks, mu):
    """``sum_{s,c} ||W^(1/2)(A u_{s,c} - f_c)||^2 + mu^2 sum_{s<t} ||u_s - u_t||^2``."""
    S = blocks.shape[0]
    C = f.shape[1]
    X = np.moveaxis(blocks.reshape(S, -1, C), 0, 1).reshape(A.cols, S * C)
    res = A.apply(X).reshape(A.rows, S, C) - f[:, None, :]
    val = float(np.sum(W[:, None, :] * res * res))
    for s in range(S):
        for t in range(s + 1, S):
            diff = blocks[s] - blocks[t]
            val += mu * mu * float(np.sum(diff * diff))
    return val


def _scg_loop(A, f, W, cfg, method, step, callback):
    """Shared loop of Potts S-CG and Potts S-Landweber.

    ``step(c, state, mu, rhs, w, f)`` performs the data step of channel ``c``.
    """
    f, W, n, C = prepare_problem(A, f, W)
    dirs = cfg.dirs
    S = len(dirs)
    beta = cfg.beta0
    perturb_first = True if cfg.perturb_first is None else cfg.perturb_first
    states = []
    rhs = []
    for c in range(C):
        b = A.apply_adjoint(W[:, c] * f[:, c])
        rhs.append(b)
        p = np.tile(b, (S, 1))
        h = augmented_gram(A, W[:, c], cfg.mu0)(p)
        states.append(CGState(p.copy(), p, h))
    trace = SolverTrace(method=method)

    def perturb(beta):
        if beta > 0:
            _set_blocks(states, prox_blockwise_potts(_blocks(states, n), beta, dirs))

    def _converged(mu):
        return max(_relres(augmented_gram(A, W[:, c], mu), rhs[c][None], states[c])
                   for c in range(C)) <= cfg.cg_tol

    separated = False

    for k in range(cfg.max_iter_scg):
        t0 = time.perf_counter()
        mu = cfg.mu0 * cfg.beta0 / beta if beta > 0 else cfg.mu0
        if perturb_first:
            perturb(beta)
        for c in range(C):
            step(c, states[c], mu, rhs[c], W[:, c], f[:, c])
        if not perturb_first:
            perturb(beta)
        U = _blocks(states, n)
        elapsed = 1000.0 * (time.perf_counter() - t0)
        trace.record(k + 1, A, f, U, dirs, elapsed, mu=mu, beta=beta)
        beta *= cfg.anneal
        if callback is not None:
            callback(k + 1, U)
        if trace.max_block_dist[-1] >= cfg.tol:
            separated = True
        elif separated or _converged(mu):
            # blocks that never separated only count once CG itself has converged
            trace.converged = True
            break
    U = _blocks(states, n)
    trace.blocks = U
    return U.mean(axis=0), trace


def potts_scg(A, f, W=None, config=None, callback=None):
    """Potts S-CG.

    Every block starts at ``A^T W f``.  Each iteration sets the coupling
    ``mu_k = mu0 * beta0 / beta_k``, perturbs the blocks by the proximal map
    of the block-wise Potts prior (jump penalty ``2 beta_k omega_s``), takes
    one augmented CG step per channel and anneals ``beta``.  Stops when all
    blocks agree within ``tol`` and returns their average.

    The blocks start out equal, so agreement only ends the run once they have
    separated at least once, or once the augmented CG residual is below
    ``cg_tol`` (e.g. with ``beta0 = 0``, where nothing ever separates them).
    """
    cfg = config or SolverConfig()

    def step(c, st, mu, b, w, fc):
        _safe_step(augmented_gram(A, w, mu), b[None], st)

    return _scg_loop(A, f, W, cfg, "scg", step, callback)


def potts_s_landweber(A, f, W=None, config=None, callback=None):
    """Potts S-CG with the CG step replaced by a Landweber step.

    The step size is ``step_factor / ||A_mu||^2`` with
    ``||A_mu||^2 = ||W^(1/2) A||^2 + S mu^2`` (the augmented Gram norm),
    recomputed for each ``mu_k``.  ``step_factor`` must lie in ``(0, 2)``.
    """
    cfg = config or SolverConfig()
    if not 0 < cfg.step_factor < 2:
        raise ValueError(f"step_factor {cfg.step_factor} violates the Landweber bound (0, 2)")
    f2, W2, _, C = prepare_problem(A, f, W)
    norms = [operator_norm_sq(A, weights=W2[:, c]) for c in range(C)]
    S = len(cfg.dirs)

    def step(c, st, mu, b, w, fc):
        sigma = cfg.step_factor / (norms[c] + S * mu * mu)
        st.x = landweber_step(A, w, fc, mu, st.x, sigma)

    return _scg_loop(A, f2, W2, cfg, "s_landweber", step, callback)


def superiorized_cg_basic(A, f, W=None, config=None, strategy="proximal", callback=None):
    """Basic Potts-superiorized CG at a fixed coupling ``mu``.

    Blocks start at zero.  Each iteration takes one augmented CG step per
    channel and then perturbs: ``"nonascending"`` adds ``beta_k v`` with
    ``v`` the normalised step towards the block-wise Potts prox and
    ``beta_k = (||A^T f|| / ||A||^2) a^k beta0``; ``"proximal"`` replaces the
    blocks by ``prox_{beta_k F}``.  Stops as soon as :func:`proximity` falls
    below ``epsilon``.
    """
    if strategy not in ("nonascending", "proximal"):
        raise ValueError(f"unknown perturbation strategy {strategy!r}")
    cfg = config or SolverConfig()
    f, W, n, C = prepare_problem(A, f, W)
    dirs = cfg.dirs
    S = len(dirs)
    mu = cfg.mu
    perturb_first = False if cfg.perturb_first is None else cfg.perturb_first
    scale = 1.0
    if strategy == "nonascending" and cfg.beta0 > 0:
        norm = operator_norm_sq(A)
        atf = A.apply_adjoint(f)
        scale = math.sqrt(dot(atf, atf)) / norm if norm > 0 else 0.0
    grams = [augmented_gram(A, W[:, c], mu) for c in range(C)]
    rhs = [A.apply_adjoint(W[:, c] * f[:, c])[None] for c in range(C)]
    states = [CGState.fresh(np.zeros((S, n * n))) for _ in range(C)]
    trace = SolverTrace(method=f"scg_basic_{strategy}")
    beta = cfg.beta0

    def perturb(beta):
        if not beta > 0:
            return
        U = _blocks(states, n)
        if strategy == "proximal":
            U = prox_blockwise_potts(U, beta, dirs)
        else:
            v, delta = nonascending_direction(U, beta, dirs)
            if delta == 0.0:
                return
            U = U + scale * beta * v
        _set_blocks(states, U)

    for k in range(cfg.max_iter_scg):
        t0 = time.perf_counter()
        if perturb_first:
            perturb(beta)
        for c in range(C):
            _safe_step(grams[c], rhs[c], states[c])
        if not perturb_first:
            perturb(beta)
        beta *= cfg.anneal
        U = _blocks(states, n)
        prox_val = proximity(A, f, W, U, mu)
        elapsed = 1000.0 * (time.perf_counter() - t0)
        trace.record(k + 1, A, f, U, dirs, elapsed, proximity=prox_val)
        if callback is not None:
            callback(k + 1, U)
        if prox_val < cfg.epsilon:
            trace.converged = True
            break
    U = _blocks(states, n)
    trace.blocks = U
    return U, trace


def pwls_cg(A, f, W=None, config=None, callback=None):
    """Unregularised channel-wise PWLS by CG from zero.

    Runs until every channel's relative normal-equation residual is at most
    ``cg_tol`` or ``cg_maxiter`` steps were taken.
    """
    cfg = config or SolverConfig()
    f, W, n, C = prepare_problem(A, f, W)
    grams = [augmented_gram(A, W[:, c], 0.0) for c in range(C)]
    rhs = [A.apply_adjoint(W[:, c] * f[:, c])[None] for c in range(C)]
    states = [CGState.fresh(np.zeros((1, n * n))) for _ in range(C)]
    trace = SolverTrace(method="cg_plain")
    res = [_relres(grams[c], rhs[c], states[c]) for c in range(C)]
    if max(res) <= cfg.cg_tol:
        trace.converged = True
    k = 0
    while not trace.converged and k < cfg.cg_maxiter:
        t0 = time.perf_counter()
        for c in range(C):
            if res[c] > cfg.cg_tol:
                _safe_step(grams[c], rhs[c], states[c])
                res[c] = _relres(grams[c], rhs[c], states[c])
        k += 1
        U = _blocks(states, n)
        elapsed = 1000.0 * (time.perf_counter() - t0)
        trace.record(k, A, f, U, cfg.dirs, elapsed, residual=max(res))
        if callback is not None:
            callback(k, U)
        if max(res) <= cfg.cg_tol:
            trace.converged = True
    U = _blocks(states, n)
    trace.blocks = U
    return U[0], trace
