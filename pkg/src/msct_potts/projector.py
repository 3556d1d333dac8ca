"""Sparse ray-incidence operators for parallel- and fan-beam geometries.

The image covers the square ``[-w/2, w/2]^2`` (``w = domain_width``) with an
``n x n`` pixel grid; pixel ``(r, c)`` has flat index ``r * n + c``, row 0 at
the top.  Entry ``A[i, j]`` is the length of ray ``i`` inside pixel ``j``,
found by exact traversal of the grid lines crossed by the ray.
"""
from dataclasses import dataclass, replace
import math

import numpy as np
import scipy.sparse as sp

__all__ = [
    "GeometryError",
    "ShapeError",
    "Geometry",
    "RayOperator",
    "build_operator",
    "apply",
    "apply_adjoint",
    "operator_norm_sq",
    "ray_lines",
]

_MAGIC = b"RAYOP1"
_RECORD = np.dtype([("row", "<u8"), ("col", "<u8"), ("val", "<f8")])


class GeometryError(ValueError):
    """Invalid or degenerate acquisition geometry."""


class ShapeError(ValueError):
    """Operand length does not match the operator."""


@dataclass(frozen=True)
class Geometry:
    """Acquisition geometry; lengths in cm.

    Parallel views are spread over ``[0, pi)``, fan views over ``[0, 2 pi)``.
    The fan detector is a flat array perpendicular to the source-centre axis.
    """

    mode: str = "parallel"
    n: int = 64
    detectors: int = 96
    angles: int = 20
    domain_width: float = 1.0
    detector_width: float = 1.5
    source_to_center: float = 3.0
    source_to_detector: float = 5.0

    def __post_init__(self):
        if self.mode not in ("parallel", "fan"):
            raise GeometryError(f"unknown geometry mode {self.mode!r}")
        for name in ("n", "detectors", "angles"):
            if int(getattr(self, name)) < 1:
                raise GeometryError(f"{name} must be >= 1")
        for name in ("domain_width", "detector_width"):
            if not getattr(self, name) > 0:
                raise GeometryError(f"{name} must be positive")
        if self.mode == "fan":
            if not self.source_to_center > 0:
                raise GeometryError("source_to_center must be positive")
            if not self.source_to_detector > self.source_to_center:
                raise GeometryError("source_to_detector must exceed source_to_center")

    @property
    def rays(self):
        return self.angles * self.detectors

    def view_angles(self):
        span = math.pi if self.mode == "parallel" else 2 * math.pi
        return np.arange(self.angles) * (span / self.angles)

    def detector_offsets(self):
        pitch = self.detector_width / self.detectors
        return (np.arange(self.detectors) - (self.detectors - 1) / 2.0) * pitch

    def with_size(self, n):
        return replace(self, n=int(n))


def ray_lines(geom):
    """Start points, unit directions and parameter ranges of all rays.

    Rays are ordered view-major, then by detector.  Parallel rays are full
    lines (``s`` unbounded); fan rays are segments from source to detector.
    """
    th = geom.view_angles()
    t = geom.detector_offsets()
    e = np.stack([np.cos(th), np.sin(th)], axis=1)           # ray / central axis
    nrm = np.stack([-np.sin(th), np.cos(th)], axis=1)         # detector axis
    if geom.mode == "parallel":
        p0 = t[None, :, None] * nrm[:, None, :]
        d = np.broadcast_to(e[:, None, :], p0.shape)
        smax = np.full(p0.shape[:2], np.inf)
        smin = -smax
    else:
        src = -geom.source_to_center * e
        half = geom.domain_width / 2
        inside = (np.abs(src[:, 0]) <= half) & (np.abs(src[:, 1]) <= half)
        if np.any(inside):
            raise GeometryError("source lies inside the image square")
        det = (src + geom.source_to_detector * e)[:, None, :] + t[None, :, None] * nrm[:, None, :]
        p0 = np.broadcast_to(src[:, None, :], det.shape)
        vec = det - p0
        length = np.hypot(vec[..., 0], vec[..., 1])
        d = vec / length[..., None]
        smin = np.zeros(length.shape)
        smax = length
    m = geom.rays
    return (np.ascontiguousarray(p0).reshape(m, 2), np.ascontiguousarray(d).reshape(m, 2),
            smin.reshape(m), smax.reshape(m))


def _clip_to_square(p, d, smin, smax, half):
    """Parameter interval of the ray inside ``[-half, half]^2`` (slab method)."""
    lo, hi = smin, smax
    for k in range(2):
        if d[k] == 0.0:
            if abs(p[k]) > half:
                return None
            continue
        s1 = (-half - p[k]) / d[k]
        s2 = (half - p[k]) / d[k]
        if s1 > s2:
            s1, s2 = s2, s1
        lo = max(lo, s1)
        hi = min(hi, s2)
    if not hi > lo:
        return None
    return lo, hi


def _trace_ray(p, d, smin, smax, n, width):
    half = width / 2
    span = _clip_to_square(p, d, smin, smax, half)
    if span is None:
        return None
    lo, hi = span
    h = width / n
    planes = -half + h * np.arange(n + 1)
    cuts = [np.array([lo, hi])]
    for k in range(2):
        if d[k] != 0.0:
            s = (planes - p[k]) / d[k]
            cuts.append(s[(s > lo) & (s < hi)])
    s = np.unique(np.concatenate(cuts))
    seg = np.diff(s)
    mid = 0.5 * (s[:-1] + s[1:])
    x = p[0] + mid * d[0]
    y = p[1] + mid * d[1]
    col = np.clip(np.floor((x + half) / h).astype(np.int64), 0, n - 1)
    row = np.clip(np.floor((half - y) / h).astype(np.int64), 0, n - 1)
    keep = seg > 1e-12 * h
    idx = row[keep] * n + col[keep]
    seg = seg[keep]
    if idx.size == 0:
        return None
    uniq, inv = np.unique(idx, return_inverse=True)
    return uniq, np.bincount(inv, weights=seg)


class RayOperator:
    """Immutable sparse ``m x n^2`` matrix of ray/pixel intersection lengths."""

    def __init__(self, matrix):
        matrix = sp.csr_matrix(matrix, dtype=np.float64)
        matrix.sort_indices()
        matrix.eliminate_zeros()
        for arr in (matrix.data, matrix.indices, matrix.indptr):
            arr.flags.writeable = False
        self._m = matrix
        self._mt = matrix.T.tocsr()

    @property
    def shape(self):
        return self._m.shape

    @property
    def rows(self):
        return self._m.shape[0]

    @property
    def cols(self):
        return self._m.shape[1]

    @property
    def nnz(self):
        return self._m.nnz

    @property
    def matrix(self):
        return self._m

    def triplets(self):
        """``(row, col, value)`` arrays in row-major order."""
        m = self._m
        rows = np.repeat(np.arange(m.shape[0], dtype=np.int64), np.diff(m.indptr))
        return rows, m.indices.astype(np.int64), m.data.copy()

    def apply(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape[0] != self.cols or u.ndim > 2:
            raise ShapeError(f"operand has {u.shape[0]} entries, operator has {self.cols} columns")
        return self._m @ u

    def apply_adjoint(self, y):
        y = np.asarray(y, dtype=float)
        if y.shape[0] != self.rows or y.ndim > 2:
            raise ShapeError(f"operand has {y.shape[0]} entries, operator has {self.rows} rows")
        return self._mt @ y

    __matmul__ = apply

    def to_bytes(self):
        """``RAYOP1`` serialisation: magic, ``u64`` rows, cols, nnz, then triplets."""
        rows, cols, vals = self.triplets()
        rec = np.empty(rows.size, dtype=_RECORD)
        rec["row"], rec["col"], rec["val"] = rows, cols, vals
        header = np.array([self.rows, self.cols, rows.size], dtype="<u8")
        return _MAGIC + header.tobytes() + rec.tobytes()

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[:6] != _MAGIC:
            raise ValueError(f"{path}: not a RAYOP1 file")
        rows, cols, nnz = np.frombuffer(blob, dtype="<u8", count=3, offset=6).tolist()
        rec = np.frombuffer(blob, dtype=_RECORD, count=nnz, offset=30)
        mat = sp.csr_matrix((rec["val"].astype(np.float64),
                             (rec["row"].astype(np.int64), rec["col"].astype(np.int64))),
                            shape=(rows, cols))
        return cls(mat)

    def __eq__(self, other):
        if not isinstance(other, RayOperator) or other.shape != self.shape:
            return NotImplemented
        a, b = self._m, other._m
        return (np.array_equal(a.indptr, b.indptr) and np.array_equal(a.indices, b.indices)
                and np.array_equal(a.data, b.data))

    __hash__ = None


def build_operator(geom, n=None):
    """Exact chord-length operator for ``geom``.

    ``n`` overrides the image size, e.g. to simulate data on a finer grid
    than the one used for reconstruction.
    """
    if n is not None:
        geom = geom.with_size(n)
    n = geom.n
    p0, d, smin, smax = ray_lines(geom)
    indptr = [0]
    cols = []
    vals = []
    for i in range(geom.rays):
        hit = _trace_ray(p0[i], d[i], smin[i], smax[i], n, geom.domain_width)
        if hit is not None:
            cols.append(hit[0])
            vals.append(hit[1])
            indptr.append(indptr[-1] + hit[0].size)
        else:
            indptr.append(indptr[-1])
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    mat = sp.csr_matrix((vals, cols, np.array(indptr)), shape=(geom.rays, n * n))
    return RayOperator(mat)


def apply(A, u):
    """``A @ u`` for a flattened single-channel image (or stacked columns)."""
    return A.apply(u)


def apply_adjoint(A, y):
    """``A.T @ y``."""
    return A.apply_adjoint(y)


def operator_norm_sq(A, iters=100, weights=None):
    """Power-iteration estimate of ``||W^(1/2) A||_2^2``.

    Starts from the constant unit vector; ``weights`` is an optional diagonal
    ``W`` of length ``A.rows``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    w = None if weights is None else np.asarray(weights, dtype=float)

    def gram(x):
        y = A.apply(x)
        return A.apply_adjoint(y if w is None else w * y)

    x = np.full(A.cols, 1.0 / math.sqrt(A.cols))
    lam = 0.0
    for _ in range(iters):
        y = gram(x)
        lam = float(np.sum(x * y))
        norm = math.sqrt(float(np.sum(y * y)))
        if norm == 0.0:
            return 0.0
        x = y / norm
    return lam
