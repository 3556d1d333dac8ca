"""Reconstruction problems built from an :class:`ExperimentConfig`.

Measurements are simulated on an ``oversample``-times finer grid than the
reconstruction grid.  The standard configurations used by the demos and the
acceptance suite are defined at the bottom of this module.
"""
from dataclasses import dataclass
import hashlib
import math

import numpy as np

from . import io as msio
from .config import ExperimentConfig, RunSpec
from .projector import Geometry, build_operator
from .solvers import SolverConfig, data_deviation, run_method
from .potts_core import blockwise_potts_value
from .spectral_sim import (Phantom, SpectralModel, builtin_phantoms, log_transform,
                           make_multichannel_ground_truth, pwls_weights, simulate_counts,
                           simulate_gaussian, spectral_volume, upsample_labels)

__all__ = ["Problem", "derive_seed", "build_problem", "reference_values", "run", "radon15_config",
           "radon20_config", "organic_config"]


@dataclass
class Problem:
    A: object               # reconstruction-grid operator
    f: np.ndarray           # (m, C) log data
    W: np.ndarray           # (m, C) PWLS weights
    truth: np.ndarray       # (n, n, C) ground truth
    sinogram: object
    model: SpectralModel
    phantom: Phantom


def derive_seed(seed, label):
    """Sub-seed for the random stream ``label`` derived from the config seed."""
    digest = hashlib.sha256(f"{int(seed)}/{label}".encode("ascii")).digest()
    return int.from_bytes(digest[:8], "little")


def _phantoms(cfg):
    """Phantom and spectral model at the reconstruction and simulation sizes."""
    n, k = cfg.size_px, cfg.oversample
    if cfg.labels_file:
        labels = msio.read_pgm(cfg.labels_file).astype(np.int64)
        if labels.shape != (n, n):
            raise ValueError(f"label map is {labels.shape}, expected ({n}, {n})")
        model = msio.read_lac_table(cfg.lac_table, cfg.spectrum)
        return Phantom(labels), Phantom(upsample_labels(labels, k)), model
    coarse, model = builtin_phantoms(cfg.phantom, n, cfg.spectrum)
    fine, _ = builtin_phantoms(cfg.phantom, n * k, cfg.spectrum)
    return coarse, fine, model


def build_problem(cfg):
    """Simulate the measurements described by ``cfg``."""
    coarse, fine, model = _phantoms(cfg)
    n = cfg.size_px
    geom = cfg.geometry.with_size(n)
    A = build_operator(geom)
    A_fine = build_operator(geom, n * cfg.oversample)
    truth = make_multichannel_ground_truth(coarse, model)
    if cfg.noise == "gaussian":
        sino = simulate_gaussian(make_multichannel_ground_truth(fine, model), A_fine,
                                 cfg.sigma, derive_seed(cfg.seed, "noise"))
    else:
        sino = simulate_counts(spectral_volume(fine, model), A_fine, model, noise=cfg.noise,
                               seed=derive_seed(cfg.seed, "noise"), reference=cfg.log_reference)
        log_transform(sino)
    return Problem(A=A, f=sino.logdata, W=pwls_weights(sino), truth=truth, sinogram=sino,
                   model=model, phantom=coarse)


def reference_values(problem, dirs):
    """Data deviation and block-wise Potts value of the ground truth itself."""
    blocks = np.stack([problem.truth] * len(dirs))
    return {"data_dev": data_deviation(problem.A, problem.f, blocks),
            "blockwise_potts": blockwise_potts_value(list(blocks), dirs)}


def run(problem, spec, base):
    """Run one :class:`RunSpec`; returns ``(u, trace)``."""
    return run_method(spec.method, problem.A, problem.f, problem.W, spec.solver_config(base))


# --------------------------------------------------------------------------
# standard experiments


def _radon_geometry(n, views):
    det = math.ceil(math.sqrt(2) * n)
    return Geometry(mode="parallel", n=n, detectors=det, angles=views,
                    domain_width=float(n), detector_width=float(det))


def radon15_config(n=64, seed=3):
    """Colour Shepp-Logan, 15 parallel views, Gaussian noise.

    The noise level is scaled from a 512 x 512 setting to ``n`` so that the
    signal-to-noise ratio of the line integrals is preserved.
    """
    sigma = 0.25 * n / 512
    m_total = 15 * math.ceil(math.sqrt(2) * n) * 3
    mu = 10.0
    base = SolverConfig(beta0=1.0, anneal=0.99, mu0=0.02, mu=mu, tol=1e-3,
                        epsilon=m_total * sigma**2 + mu**2, max_iter_scg=3000, perturb_first=False,
                        directions="near_isotropic")
    runs = (
        RunSpec("scg", "scg"),
        RunSpec("cg_prox", "scg_basic_prox"),
        RunSpec("cg_nonascending", "scg_basic_nonascending"),
        RunSpec("cg_unperturbed", "scg_basic_prox", (("beta0", 0.0),)),
    )
    return ExperimentConfig(phantom="shepp_logan_color", size_px=n, oversample=1,
                            geometry=_radon_geometry(n, 15), noise="gaussian", sigma=sigma,
                            seed=seed, method="scg", solver=base, runs=runs)


def radon20_config(n=64, seed=4):
    """Colour Shepp-Logan, 20 parallel views, Gaussian noise scaled from 256 x 256."""
    sigma = 0.35 * n / 256
    base = SolverConfig(gamma=2.0, rho_c0=1e-2, tol=1e-3, cg_tol=1e-6, max_iter_admm=500,
                        beta0=1.0, anneal=0.99, mu0=0.02, max_iter_scg=3000,
                        step_factor=1.0, perturb_first=False, directions="near_isotropic")
    runs = (
        RunSpec("admm", "admm"),
        RunSpec("scg", "scg"),
        RunSpec("penalty", "penalty"),
        RunSpec("s_landweber", "s_landweber"),
    )
    return ExperimentConfig(phantom="shepp_logan_color", size_px=n, oversample=1,
                            geometry=_radon_geometry(n, 20), noise="gaussian", sigma=sigma,
                            seed=seed, method="admm", solver=base, runs=runs)


def organic_config(n=64, seed=9):
    """Organic-spheres stand-in: 3 bins, Poisson noise, 21 fan-beam views."""
    geom = Geometry(mode="fan", n=n, detectors=96, angles=21, domain_width=1.0,
                    detector_width=2.0, source_to_center=3.0, source_to_detector=5.0)
    base = SolverConfig(gamma=100.0, rho_c0=0.1, tol=1e-3, max_iter_admm=500,
                        beta0=1.0, anneal=0.99, mu0=1.0, max_iter_scg=3000,
                        cg_tol=1e-6, cg_maxiter=500, perturb_first=False,
                        directions="near_isotropic")
    runs = (
        RunSpec("admm", "admm"),
        RunSpec("scg", "scg"),
        RunSpec("cg_plain", "cg_plain"),
    )
    return ExperimentConfig(phantom="organic_spheres_like", size_px=n, oversample=2,
                            geometry=geom, log_reference="bin_total", noise="poisson",
                            seed=seed, method="admm", solver=base, runs=runs)
