"""Solver parameters shared by all reconstruction methods."""
from dataclasses import dataclass, fields, replace

from ..potts_core import PRESETS

__all__ = ["SolverConfig"]


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of the Potts solvers and their baselines.

    ADMM: ``gamma``, ``rho_c0``, ``rho_exponent``, ``cg_tol``,
    ``cg_maxiter``, ``max_iter_admm``.  Superiorized CG: ``beta0``,
    ``anneal``, ``mu0`` (annealed coupling), ``mu`` (fixed coupling of the
    basic variants), ``epsilon`` (their proximity target), ``max_iter_scg``.
    S-Landweber: ``step_factor`` times ``1 / ||A_mu||^2``.
    ``perturb_first`` is ``None`` to follow each algorithm's own ordering.
    """

    gamma: float = 1.0
    rho_c0: float = 1e-7
    rho_exponent: float = 2.01
    tol: float = 1e-5
    cg_tol: float = 1e-6
    cg_maxiter: int = 2000
    beta0: float = 1.0
    anneal: float = 0.999
    mu0: float = 1e-4
    mu: float = 1.0
    epsilon: float = 0.0
    step_factor: float = 1.0
    directions: str = "near_isotropic"
    max_iter_admm: int = 3000
    max_iter_scg: int = 10000
    perturb_first: bool = None

    def __post_init__(self):
        for name in ("gamma", "rho_c0", "rho_exponent", "tol", "cg_tol", "mu0"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("beta0", "mu", "epsilon"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be non-negative")
        if not 0 < self.anneal < 1:
            raise ValueError("anneal must lie in (0, 1)")
        if not self.step_factor > 0:
            raise ValueError("step_factor must be positive")
        for name in ("cg_maxiter", "max_iter_admm", "max_iter_scg"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.directions not in PRESETS:
            raise ValueError(f"unknown direction preset {self.directions!r}")

    @property
    def dirs(self):
        return PRESETS[self.directions]

    def rho(self, k):
        """Coupling ``rho_k = c0 * k^exponent`` for ``k >= 1``."""
        return self.rho_c0 * float(k) ** self.rho_exponent

    def updated(self, **changes):
        return replace(self, **changes)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]
