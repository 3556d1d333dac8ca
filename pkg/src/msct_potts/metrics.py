"""Channel-wise image quality measures: RMSE, MAE (both scaled by 100) and MSSIM."""
from dataclasses import dataclass
import math

import numpy as np
from scipy import ndimage

__all__ = ["rmse", "mae", "mssim", "gaussian_window", "MetricReport", "evaluate", "CSV_HEADER"]

CSV_HEADER = ("channel", "rmse", "mae", "mssim")

C1 = 1e-4
C2 = 9e-4
WINDOW = 11
SIGMA = 1.5


def _pair(u, v):
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    return u, v


def rmse(u, v):
    u, v = _pair(u, v)
    return 100.0 * math.sqrt(float(np.mean((u - v) ** 2)))


def mae(u, v):
    u, v = _pair(u, v)
    return 100.0 * float(np.mean(np.abs(u - v)))


def gaussian_window(size=WINDOW, sigma=SIGMA):
    """Normalised circular Gaussian weights on a ``size x size`` stencil."""
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x[:, None] ** 2 + x[None, :] ** 2) / (2 * sigma**2))
    return g / g.sum()


def _local_mean(x, w):
    # mode="reflect" in scipy repeats the edge sample (symmetric padding)
    return ndimage.correlate(x, w, mode="reflect")


def mssim(u, v):
    """Mean SSIM over all pixels with a Gaussian 11 x 11 window.

    Images are used in their own units with the fixed constants ``C1, C2``.
    Every pixel gets a full window via symmetric reflection at the border.
    """
    u, v = _pair(u, v)
    if u.ndim != 2 or min(u.shape) < WINDOW:
        raise ValueError(f"mssim needs a 2D image of at least {WINDOW}x{WINDOW}")
    if np.array_equal(u, v):
        return 1.0
    w = gaussian_window()
    mu_u = _local_mean(u, w)
    mu_v = _local_mean(v, w)
    var_u = _local_mean(u * u, w) - mu_u**2
    var_v = _local_mean(v * v, w) - mu_v**2
    cov = _local_mean(u * v, w) - mu_u * mu_v
    num = (2 * mu_u * mu_v + C1) * (2 * cov + C2)
    den = (mu_u**2 + mu_v**2 + C1) * (var_u + var_v + C2)
    return float(np.mean(num / den))


@dataclass
class MetricReport:
    rmse: np.ndarray
    mae: np.ndarray
    mssim: np.ndarray

    @property
    def channels(self):
        return self.rmse.size

    def mean(self):
        return {"rmse": float(np.mean(self.rmse)), "mae": float(np.mean(self.mae)),
                "mssim": float(np.mean(self.mssim))}

    def rows(self):
        """CSV rows ``channel,rmse,mae,mssim`` plus a ``mean`` row."""
        out = [(str(c), self.rmse[c], self.mae[c], self.mssim[c]) for c in range(self.channels)]
        m = self.mean()
        out.append(("mean", m["rmse"], m["mae"], m["mssim"]))
        return out

    def to_csv(self):
        """CSV text with header ``channel,rmse,mae,mssim``; floats round-trip exactly."""
        lines = [",".join(CSV_HEADER)]
        lines += [f"{c},{float(r)!r},{float(a)!r},{float(s)!r}" for c, r, a, s in self.rows()]
        return "\n".join(lines) + "\n"


def evaluate(result, truth):
    """Per-channel metrics of an ``(n, n, C)`` reconstruction against ground truth."""
    result, truth = _pair(result, truth)
    if result.ndim == 2:
        result, truth = result[:, :, None], truth[:, :, None]
    C = result.shape[-1]
    return MetricReport(
        rmse=np.array([rmse(result[..., c], truth[..., c]) for c in range(C)]),
        mae=np.array([mae(result[..., c], truth[..., c]) for c in range(C)]),
        mssim=np.array([mssim(result[..., c], truth[..., c]) for c in range(C)]),
    )
