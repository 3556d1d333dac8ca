"""Conjugate-gradient machinery for (augmented) PWLS normal equations.

All inner products use ``np.sum`` rather than BLAS so results do not depend
on the number of BLAS threads.
"""
from dataclasses import dataclass
import math

import numpy as np

from .trace import finite_or_raise

__all__ = [
    "CGBreakdown",
    "CGState",
    "dot",
    "conjugate_gradient",
    "solve_tikhonov_pwls",
    "pwls_gram",
    "augmented_gram",
    "cg_step_generic",
    "cg_step_augmented",
    "restart",
    "landweber_step",
]


class CGBreakdown(ArithmeticError):
    """``<p, Gp>`` vanished (or turned negative) with a nonzero residual."""


def dot(x, y):
    return float(np.sum(x * y))


@dataclass
class CGState:
    """Iterate ``x``, search direction ``p`` and ``h = G p``.

    A fresh state has ``p = h = 0``; the first step then moves along ``-r``.
    """

    x: np.ndarray
    p: np.ndarray
    h: np.ndarray

    @classmethod
    def fresh(cls, x0):
        x0 = np.array(x0, dtype=float)
        return cls(x0, np.zeros_like(x0), np.zeros_like(x0))


def cg_step_generic(gram, b, state):
    """One CG step for ``G x = b`` with ``G = B^T B`` given as a callable.

    Updates and returns ``state``.  A zero residual leaves the state as is.
    """
    r = gram(state.x) - b
    if not np.any(r):
        return state
    ph = dot(state.p, state.h)
    alpha = dot(r, state.h) / ph if ph != 0.0 else 0.0
    p = -r + alpha * state.p
    h = gram(p)
    ph = dot(p, h)
    if not ph > 0.0:
        raise CGBreakdown(f"<p, Gp> = {ph:g} with nonzero residual")
    kappa = -dot(r, p) / ph
    state.x = state.x + kappa * p
    state.p = p
    state.h = h
    return state


def restart(gram, b, state):
    """Reset the search direction to steepest descent: ``p = -r``, ``h = G p``."""
    state.p = b - gram(state.x)
    state.h = gram(state.p)
    return state


def pwls_gram(A, w, shift=0.0):
    """``x -> A^T W A x + shift * x`` for a single image or stacked columns."""
    w = np.asarray(w, dtype=float)

    def gram(x):
        y = A.apply(x)
        y = w[:, None] * y if y.ndim == 2 else w * y
        out = A.apply_adjoint(y)
        return out + shift * x if shift else out

    return gram


def augmented_gram(A, w, mu):
    """Gram operator of the augmented PWLS problem on blocks of shape ``(S, N)``.

    ``G(X)_s = A^T W A X_s + mu^2 * sum_{t != s} (X_s - X_t)``.
    """
    w = np.asarray(w, dtype=float)
    mu2 = float(mu) ** 2

    def gram(X):
        S = X.shape[0]
        y = A.apply(X.T) * w[:, None]
        out = A.apply_adjoint(y).T
        if mu2 and S > 1:
            out = out + mu2 * (S * X - X.sum(axis=0, keepdims=True))
        return np.ascontiguousarray(out)

    return gram


def cg_step_augmented(A, w, f, mu, state):
    """One CG step on the augmented normal equations of one channel.

    ``state`` holds ``(S, N)`` arrays ``x, p, h``; the right-hand side is
    ``A^T W f`` in every block.
    """
    gram = augmented_gram(A, w, mu)
    b = np.broadcast_to(A.apply_adjoint(np.asarray(w) * f), state.x.shape)
    return cg_step_generic(gram, b, state)


def landweber_step(A, w, f, mu, X, sigma):
    """``X - sigma * (G_mu X - A^T W f)`` on ``(S, N)`` blocks."""
    gram = augmented_gram(A, w, mu)
    b = A.apply_adjoint(np.asarray(w) * f)
    return X - sigma * (gram(X) - b[None, :])


def conjugate_gradient(gram, b, x0=None, tol=1e-6, maxiter=2000):
    """Standard CG for SPD ``G x = b``.

    Stops once ``||G x - b|| <= tol * ||b||``.  Returns ``(x, relres, iters)``.
    """
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    bnorm = math.sqrt(dot(b, b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    r = b - gram(x)
    rr = dot(r, r)
    target = (tol * bnorm) ** 2
    p = r.copy()
    it = 0
    while rr > target and it < maxiter:
        q = gram(p)
        pq = dot(p, q)
        if not pq > 0.0:
            raise CGBreakdown(f"<p, Gp> = {pq:g}")
        step = rr / pq
        x += step * p
        r -= step * q
        rr_new = dot(r, r)
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
    # report the true residual, not the recursively updated one
    res = b - gram(x)
    return x, math.sqrt(dot(res, res)) / bnorm, it


def solve_tikhonov_pwls(A, w, f, mu, z, warm_start=None, tol=1e-6, maxiter=2000):
    """Minimise ``||W^(1/2)(A v - f)||^2 + (mu/2) ||v - z||^2`` for one channel.

    Solves ``(A^T W A + (mu/2) I) v = A^T W f + (mu/2) z`` by CG from
    ``warm_start``.  Returns ``(v, relative residual)``.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    w = np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    z = np.asarray(z, dtype=float)
    finite_or_raise(w, f, z)
    if warm_start is not None:
        finite_or_raise(warm_start)
    half = 0.5 * float(mu)
    b = A.apply_adjoint(w * f) + half * z
    v, res, _ = conjugate_gradient(pwls_gram(A, w, half), b, warm_start, tol, maxiter)
    return v, res
