"""Multi-spectral measurement simulation.

A :class:`SpectralModel` holds an energy grid with spacing ``delta`` (keV),
the source flux per grid energy, a partition of the grid into ``C``
contiguous detector bins and the LAC curves (1/cm) of the materials.  The
ground-truth channel ``c`` is the LAC at the left edge ``e_c`` of bin ``c``.

Counts follow the binned Beer-Lambert sum over all grid energies of a bin,
optionally with Poisson noise; the log transform then refers the counts to
a per-bin reference flux.
"""
from dataclasses import dataclass, field
import math

import numpy as np

__all__ = [
    "SpectralModel",
    "Phantom",
    "Sinogram",
    "bremsstrahlung_spectrum",
    "make_multichannel_ground_truth",
    "spectral_volume",
    "simulate_counts",
    "log_transform",
    "pwls_weights",
    "upsample_labels",
    "simulate_gaussian",
    "builtin_phantoms",
    "SpectrumSpec",
]


@dataclass
class SpectralModel:
    """Energy grid, flux, detector bins and material LAC curves.

    ``bin_edges`` are indices into ``energies``: bin ``c`` holds the grid
    energies ``energies[bin_edges[c]:bin_edges[c + 1]]``.  ``lac`` has one row
    per material; row 0 is the background and must be zero.
    """

    energies: np.ndarray
    flux: np.ndarray
    bin_edges: np.ndarray
    lac: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        self.energies = np.asarray(self.energies, dtype=float)
        self.flux = np.asarray(self.flux, dtype=float)
        self.bin_edges = np.asarray(self.bin_edges, dtype=np.int64)
        self.lac = np.atleast_2d(np.asarray(self.lac, dtype=float))
        E = self.energies.size
        if E < 1 or self.flux.shape != (E,):
            raise ValueError("flux must have one entry per grid energy")
        if E > 1 and not np.allclose(np.diff(self.energies), self.energies[1] - self.energies[0]):
            raise ValueError("energy grid must be equispaced")
        if np.any(self.flux < 0):
            raise ValueError("flux must be non-negative")
        edges = self.bin_edges
        if edges.ndim != 1 or edges.size < 2 or edges[0] < 0 or edges[-1] > E or np.any(np.diff(edges) <= 0):
            raise ValueError("bin edges must be strictly increasing indices into the energy grid")
        if self.lac.shape[1] != E:
            raise ValueError("each LAC curve needs one value per grid energy")
        if np.any(self.lac < 0):
            raise ValueError("LAC curves must be non-negative")
        if not self.names:
            self.names = tuple(f"material{k}" for k in range(self.lac.shape[0]))
        self.names = tuple(self.names)

    @property
    def channels(self):
        return self.bin_edges.size - 1

    @property
    def materials(self):
        return self.lac.shape[0]

    @property
    def delta(self):
        return float(self.energies[1] - self.energies[0]) if self.energies.size > 1 else 1.0

    def bin_slices(self):
        return [slice(int(a), int(b)) for a, b in zip(self.bin_edges[:-1], self.bin_edges[1:])]

    def representative_indices(self):
        """Grid index of the left edge of each bin."""
        return self.bin_edges[:-1].copy()

    def representative_energies(self):
        return self.energies[self.representative_indices()]

    def channel_lac(self):
        """``(materials, C)`` LAC values at the bin representatives."""
        return self.lac[:, self.representative_indices()]

    def bin_flux(self):
        """Total source flux per bin."""
        return np.array([self.flux[s].sum() for s in self.bin_slices()])

    def reference_flux(self, reference="left_endpoint"):
        """Per-bin flux used to normalise counts in the log transform.

        ``"left_endpoint"``: flux at the bin's left edge times the number of
        grid energies in the bin.  ``"bin_total"``: total flux in the bin.
        """
        if reference == "left_endpoint":
            widths = np.diff(self.bin_edges)
            return self.flux[self.representative_indices()] * widths
        if reference == "bin_total":
            return self.bin_flux()
        raise ValueError(f"unknown flux reference {reference!r}")


@dataclass
class Phantom:
    """Integer material map; label 0 is air."""

    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2 or not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError("labels must be a 2D integer array")
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("labels must be non-negative")

    @property
    def n(self):
        return self.labels.shape[0]


@dataclass
class Sinogram:
    """Raw counts ``Y`` (m x C), reference flux per bin and log data ``f``."""

    counts: np.ndarray
    flux_per_bin: np.ndarray
    logdata: np.ndarray = field(default=None)

    @property
    def shape(self):
        return self.counts.shape


def bremsstrahlung_spectrum(energies, kvp, peak=None, total=1.0, rise=None):
    """Smooth tube-like spectrum: rises to a peak, then decays linearly to ``kvp``.

    Normalised so the flux over ``energies`` sums to ``total``.
    """
    e = np.asarray(energies, dtype=float)
    peak = 0.4 * kvp if peak is None else peak
    rise = 0.25 * peak if rise is None else rise
    up = 1.0 / (1.0 + np.exp(-(e - 0.6 * peak) / rise))
    down = np.clip((kvp - e) / (kvp - peak), 0.0, None)
    shape = np.where(e <= peak, up, up * down)
    shape = np.where(e >= kvp, 0.0, shape)
    s = shape.sum()
    if s <= 0:
        raise ValueError("spectrum vanishes on the energy grid")
    return total * shape / s


def upsample_labels(labels, factor):
    """Nearest-neighbour upsampling of a label map."""
    return np.kron(np.asarray(labels), np.ones((factor, factor), dtype=np.asarray(labels).dtype))


def _check_labels(phantom, model):
    labels = phantom.labels if isinstance(phantom, Phantom) else np.asarray(phantom)
    if labels.size and labels.max() >= model.materials:
        raise ValueError(f"label {labels.max()} has no material (only {model.materials} defined)")
    return labels


def make_multichannel_ground_truth(phantom, model):
    """``(n, n, C)`` image with the LAC of each pixel's material at the bin edges."""
    labels = _check_labels(phantom, model)
    return model.channel_lac()[labels]


def spectral_volume(phantom, model):
    """``(n, n, E)`` LAC of each pixel at every grid energy."""
    labels = _check_labels(phantom, model)
    return model.lac[labels]


def _per_energy(u, model):
    """Pixel LAC at every grid energy, shape ``(n*n, E)``.

    ``u`` either has one channel per grid energy or one per bin; in the
    latter case values are interpolated linearly between bin representatives.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        u = u[:, :, None]
    flat = u.reshape(-1, u.shape[-1])
    E = model.energies.size
    if flat.shape[1] == E:
        return flat
    if flat.shape[1] != model.channels:
        raise ValueError(f"image has {flat.shape[1]} channels; expected {E} energies or {model.channels} bins")
    rep = model.representative_energies()
    if rep.size == 1:
        return np.repeat(flat, E, axis=1)
    out = np.empty((flat.shape[0], E))
    for k, e in enumerate(model.energies):
        j = int(np.clip(np.searchsorted(rep, e, side="right") - 1, 0, rep.size - 2))
        t = (e - rep[j]) / (rep[j + 1] - rep[j])
        out[:, k] = (1 - t) * flat[:, j] + t * flat[:, j + 1]
    return np.clip(out, 0.0, None)


def expected_counts(u, A, model):
    """Noise-free binned counts ``sum_{e in bin} I0(e) exp(-(A u_e)_i)``."""
    vals = _per_energy(u, model)
    if np.any(vals < 0):
        raise ValueError("attenuation values must be non-negative")
    line = A.apply(vals)                                   # (m, E)
    trans = model.flux[None, :] * np.exp(-line)
    return np.stack([trans[:, s].sum(axis=1) for s in model.bin_slices()], axis=1)


def simulate_counts(u_fine, A_fine, model, noise="none", seed=None, reference="left_endpoint"):
    """Simulate photon counts for the image ``u_fine`` on ``A_fine``'s grid.

    ``noise`` is ``"none"`` (expected counts, kept as floats) or ``"poisson"``
    (integer counts drawn with a PCG64 generator seeded by ``seed``; the
    draws are made in ray-major, bin-minor order).
    """
    u = np.asarray(u_fine, dtype=float)
    if np.any(u < 0):
        raise ValueError("attenuation values must be non-negative")
    if u.shape[0] * (u.shape[1] if u.ndim > 1 else 1) != A_fine.cols:
        raise ValueError("image size does not match the operator")
    mean = expected_counts(u, A_fine, model)
    if noise == "none":
        counts = mean
    elif noise == "poisson":
        if seed is None:
            raise ValueError("poisson noise needs a seed")
        rng = np.random.Generator(np.random.PCG64(seed))
        counts = rng.poisson(mean).astype(float)
    else:
        raise ValueError(f"unknown noise model {noise!r}")
    ref = np.broadcast_to(model.reference_flux(reference), counts.shape).copy()
    return Sinogram(counts=counts, flux_per_bin=ref)


def simulate_gaussian(u_fine, A_fine, sigma, seed):
    """Linear data ``A u_c + N(0, sigma^2)`` per channel (no photon statistics).

    Returns a :class:`Sinogram` without counts; its log data are the noisy
    line integrals and the PWLS weights are taken as one.
    """
    u = np.asarray(u_fine, dtype=float)
    if u.ndim == 2:
        u = u[:, :, None]
    if u.shape[0] * u.shape[1] != A_fine.cols:
        raise ValueError("image size does not match the operator")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    f = A_fine.apply(u.reshape(A_fine.cols, -1))
    if sigma > 0:
        rng = np.random.Generator(np.random.PCG64(seed))
        f = f + sigma * rng.standard_normal(f.shape)
    return Sinogram(counts=None, flux_per_bin=None, logdata=f)


def log_transform(sino):
    """Fill ``sino.logdata`` with ``-log(max(Y, 1) / I0_c)``."""
    ref = np.asarray(sino.flux_per_bin, dtype=float)
    if np.any(ref <= 0):
        raise ValueError("reference flux must be positive")
    y = np.maximum(np.asarray(sino.counts, dtype=float), 1.0)
    sino.logdata = -np.log(y / np.broadcast_to(ref, y.shape))
    return sino


def pwls_weights(sino):
    """Diagonal PWLS weights: detected photons, floored at one.

    Data without counts (the Gaussian model) get unit weights.
    """
    if sino.counts is None:
        return np.ones_like(sino.logdata)
    return np.maximum(np.asarray(sino.counts, dtype=float), 1.0)


# --------------------------------------------------------------------------
# synthetic LAC curves


def lac_curve(energies, density, photo, compton=0.2, edge=None, edge_jump=0.0):
    """Smooth decreasing attenuation curve (1/cm).

    A photoelectric term ``~ E^-3`` plus a slowly decaying Compton term,
    scaled by ``density``; an optional absorption edge multiplies the
    photoelectric part above ``edge`` keV by ``1 + edge_jump``.
    """
    e = np.asarray(energies, dtype=float)
    pe = photo * (30.0 / e) ** 3
    if edge is not None:
        pe = np.where(e >= edge, pe * (1.0 + edge_jump), pe)
    cs = compton / (1.0 + 2.0 * e / 511.0) ** 0.5
    return density * (pe + cs)


def energy_grid(lo, hi, delta=1.0):
    count = int(round((hi - lo) / delta)) + 1
    return lo + delta * np.arange(count)


def equal_bins(count, channels):
    """Bin edges splitting ``count`` grid energies into near-equal bins."""
    return np.round(np.linspace(0, count, channels + 1)).astype(np.int64)


def ellipse_mask(n, cx, cy, ax, ay, phi_deg=0.0):
    """Pixels of an ``n x n`` grid on ``[-1, 1]^2`` inside the given ellipse."""
    coords = (np.arange(n) + 0.5) / n * 2 - 1
    x = coords[None, :]
    y = -coords[:, None]
    phi = math.radians(phi_deg)
    xr = (x - cx) * math.cos(phi) + (y - cy) * math.sin(phi)
    yr = -(x - cx) * math.sin(phi) + (y - cy) * math.cos(phi)
    return (xr / ax) ** 2 + (yr / ay) ** 2 <= 1.0


# --------------------------------------------------------------------------
# built-in phantoms

# modified Shepp-Logan ellipses: centre x, centre y, semi-axes, rotation (deg)
_SHEPP_LOGAN = (
    (0.0, 0.0, 0.69, 0.92, 0.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0),
    (0.22, 0.0, 0.11, 0.31, -18.0),
    (-0.22, 0.0, 0.16, 0.41, 18.0),
    (0.0, 0.35, 0.21, 0.25, 0.0),
    (0.0, 0.1, 0.046, 0.046, 0.0),
    (0.0, -0.1, 0.046, 0.046, 0.0),
    (-0.08, -0.605, 0.046, 0.023, 0.0),
    (0.0, -0.606, 0.023, 0.023, 0.0),
    (0.06, -0.605, 0.023, 0.046, 0.0),
)

# one colour per ellipse label (channels differ in contrast, not just scale)
_SHEPP_LOGAN_COLORS = np.array([
    [0.0, 0.0, 0.0],
    [1.0, 0.9, 0.8],
    [0.2, 0.3, 0.25],
    [0.7, 0.2, 0.4],
    [0.1, 0.6, 0.5],
    [0.5, 0.5, 0.9],
    [0.8, 0.4, 0.1],
    [0.3, 0.8, 0.2],
    [0.6, 0.1, 0.7],
    [0.9, 0.7, 0.3],
    [0.4, 0.9, 0.6],
])


def _paint(n, ellipses, labels=None):
    out = np.zeros((n, n), dtype=np.int64)
    for k, (cx, cy, ax, ay, phi) in enumerate(ellipses):
        out[ellipse_mask(n, cx, cy, ax, ay, phi)] = k + 1 if labels is None else labels[k]
    return out


def shepp_logan_color(n):
    """Three-channel Shepp-Logan phantom.

    The spectral model has one grid energy per bin, so the ground truth is
    the colour table itself and the measurement model is exactly linear.
    """
    labels = _paint(n, _SHEPP_LOGAN)
    energies = np.array([1.0, 2.0, 3.0])
    model = SpectralModel(energies=energies, flux=np.full(3, 1.0), bin_edges=[0, 1, 2, 3],
                          lac=_SHEPP_LOGAN_COLORS,
                          names=("air",) + tuple(f"ellipse{k}" for k in range(1, 11)))
    return Phantom(labels), model


@dataclass(frozen=True)
class SpectrumSpec:
    """Energy grid (keV), tube potential, bins and total flux of an X-ray source.

    ``bins`` lists inclusive ``(lo, hi)`` keV ranges on the integer grid
    ``lo..hi`` with spacing ``delta``; ``None`` splits the grid evenly.
    """

    lo: float
    hi: float
    kvp: float
    channels: int = 3
    bins: tuple = None
    total: float = 1e4
    delta: float = 1.0

    def build(self, curves, names):
        energies = energy_grid(self.lo, self.hi, self.delta)
        flux = bremsstrahlung_spectrum(energies, self.kvp, total=self.total)
        if self.bins is None:
            edges = equal_bins(energies.size, self.channels)
        else:
            edges = [int(round((b[0] - self.lo) / self.delta)) for b in self.bins]
            edges.append(int(round((self.bins[-1][1] - self.lo) / self.delta)) + 1)
            for (a, _), (_, b) in zip(self.bins[1:], self.bins[:-1]):
                if int(round((a - b) / self.delta)) != 1:
                    raise ValueError("energy bins must be contiguous")
        lac = np.vstack([np.zeros(energies.size)] + [f(energies) for f in curves])
        return SpectralModel(energies=energies, flux=flux, bin_edges=edges, lac=lac,
                             names=("air",) + tuple(names))


def _geocore_labels(n):
    return _paint(n, (
        (0.0, 0.0, 0.85, 0.85, 0.0),       # quartz core
        (-0.35, 0.3, 0.22, 0.15, 30.0),    # pyrite
        (0.3, 0.35, 0.12, 0.2, -20.0),     # galena
        (0.25, -0.35, 0.2, 0.12, 10.0),    # pyrite
        (-0.2, -0.3, 0.08, 0.08, 0.0),     # gold
        (0.32, -0.35, 0.06, 0.05, 0.0),    # gold inside pyrite
    ), labels=(1, 2, 3, 2, 4, 4))


_GEOCORE_CURVES = (
    lambda e: lac_curve(e, 2.65, 0.9),
    lambda e: lac_curve(e, 5.0, 2.2),
    lambda e: lac_curve(e, 7.6, 3.0, edge=88.0, edge_jump=3.0),
    lambda e: lac_curve(e, 19.3, 4.0, edge=80.7, edge_jump=3.5),
)


def _organic_labels(n):
    discs = (
        (-0.4, 0.4, 0.3, 0.3, 0.0),
        (0.4, 0.4, 0.25, 0.25, 0.0),
        (-0.4, -0.4, 0.25, 0.25, 0.0),
        (0.4, -0.4, 0.3, 0.3, 0.0),
        (0.0, 0.0, 0.15, 0.15, 0.0),
    )
    return _paint(n, discs, labels=(1, 2, 2, 1, 3))


_ORGANIC_CURVES = (
    lambda e: lac_curve(e, 0.92, 0.11),          # fat
    lambda e: lac_curve(e, 1.05, 0.2),           # muscle
    lambda e: lac_curve(e, 1.5, 0.8),            # bone-like
)

DEFAULT_SPECTRA = {
    "geocore_like": SpectrumSpec(45.0, 114.0, 120.0, channels=3, total=4e4),
    "organic_spheres_like": SpectrumSpec(15.0, 120.0, 150.0, bins=((15, 40), (41, 80), (81, 120)),
                                         total=1e4),
}


def geocore_like(n, spectrum=None):
    """Drill-core cross section: a quartz matrix with pyrite, galena and gold grains.

    The dense grains carry absorption edges so channel contrasts differ.
    """
    spec = spectrum or DEFAULT_SPECTRA["geocore_like"]
    model = spec.build(_GEOCORE_CURVES, ("quartz", "pyrite", "galena", "gold"))
    return Phantom(_geocore_labels(n)), model


def organic_spheres_like(n, spectrum=None):
    """Air plus fat, muscle and bone-like discs, pairwise disjoint.

    Fat and muscle attenuate very similarly at high energies, so the third
    (highest) bin carries little contrast between them.
    """
    spec = spectrum or DEFAULT_SPECTRA["organic_spheres_like"]
    model = spec.build(_ORGANIC_CURVES, ("fat", "muscle", "bone"))
    return Phantom(_organic_labels(n)), model


PHANTOMS = {
    "shepp_logan_color": shepp_logan_color,
    "geocore_like": geocore_like,
    "organic_spheres_like": organic_spheres_like,
}


def builtin_phantoms(name, n, spectrum=None):
    """``(Phantom, SpectralModel)`` for a built-in phantom of size ``n x n``.

    ``spectrum`` (a :class:`SpectrumSpec`) replaces the default source of
    the X-ray phantoms; the colour Shepp-Logan phantom has a fixed model.
    """
    if name not in PHANTOMS:
        raise ValueError(f"unknown phantom {name!r}; choose from {', '.join(PHANTOMS)}")
    if n < 32:
        raise ValueError("built-in phantoms need n >= 32")
    if name == "shepp_logan_color":
        if spectrum is not None:
            raise ValueError("shepp_logan_color has a fixed colour model")
        return shepp_logan_color(int(n))
    return PHANTOMS[name](int(n), spectrum)
