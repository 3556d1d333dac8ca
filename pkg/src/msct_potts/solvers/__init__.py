"""Reconstruction solvers: Potts ADMM, Potts S-CG and baselines."""
from .admm import penalty_method, potts_admm
from .cg import (CGBreakdown, CGState, augmented_gram, cg_step_augmented, cg_step_generic,
                 conjugate_gradient, landweber_step, solve_tikhonov_pwls)
from .params import SolverConfig
from .superiorization import (potts_s_landweber, potts_scg, proximity, pwls_cg,
                              superiorized_cg_basic)
from .trace import SolverTrace, data_deviation, max_block_distance

METHODS = ("admm", "scg", "penalty", "s_landweber", "cg_plain",
           "scg_basic_nonascending", "scg_basic_prox")


def run_method(method, A, f, W=None, config=None):
    """Dispatch by method name; returns ``(u, trace)`` with ``u`` of shape ``(n, n, C)``."""
    if method == "admm":
        return potts_admm(A, f, W, config)
    if method == "penalty":
        return penalty_method(A, f, W, config)
    if method == "scg":
        return potts_scg(A, f, W, config)
    if method == "s_landweber":
        return potts_s_landweber(A, f, W, config)
    if method == "cg_plain":
        return pwls_cg(A, f, W, config)
    if method in ("scg_basic_nonascending", "scg_basic_prox"):
        strategy = "nonascending" if method.endswith("nonascending") else "proximal"
        blocks, trace = superiorized_cg_basic(A, f, W, config, strategy)
        return blocks.mean(axis=0), trace
    raise ValueError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
