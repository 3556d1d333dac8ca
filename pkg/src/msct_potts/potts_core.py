"""Multi-channel Potts machinery.

Images are arrays of shape ``(rows, cols, C)``; plain 2D arrays are treated as
single-channel images.  A direction ``d = (a, b)`` pairs pixel ``(r, c)`` with
its neighbour ``(r - b, c + a)``, i.e. ``a`` steps along a row and ``b`` steps
upwards.  ``(1, 0)`` therefore runs along rows, ``(0, 1)`` along columns,
``(1, 1)`` along diagonals towards the top right and ``(1, -1)`` along
anti-diagonals towards the bottom right.
"""
from dataclasses import dataclass
from functools import lru_cache
import math

import numpy as np

from . import _dp

__all__ = [
    "DirectionSet",
    "AXIAL",
    "NEAR_ISOTROPIC",
    "potts_1d",
    "potts_1d_energy",
    "line_family",
    "direction_subproblem",
    "multichannel_potts_value",
    "blockwise_potts_value",
    "prox_blockwise_potts",
    "nonascending_direction",
    "jump_set",
    "jump_mask",
    "segment_count",
    "jump_alignment",
]


@dataclass(frozen=True)
class DirectionSet:
    """Finite-difference directions ``d_s`` with positive weights ``omega_s``."""

    directions: tuple
    weights: tuple

    def __post_init__(self):
        dirs = tuple(tuple(int(v) for v in d) for d in self.directions)
        weights = tuple(float(w) for w in self.weights)
        if len(dirs) != len(weights) or not dirs:
            raise ValueError("need one positive weight per direction")
        for d in dirs:
            if len(d) != 2 or d == (0, 0):
                raise ValueError(f"invalid direction {d}")
        for i, d in enumerate(dirs):
            for e in dirs[i + 1:]:
                if d[0] * e[1] - d[1] * e[0] == 0:
                    raise ValueError(f"directions {d} and {e} are parallel")
        if any(not w > 0 for w in weights):
            raise ValueError("weights must be positive")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return len(self.directions)

    def __iter__(self):
        return iter(zip(self.directions, self.weights))


AXIAL = DirectionSet(((1, 0), (0, 1)), (1.0, 1.0))
NEAR_ISOTROPIC = DirectionSet(
    ((1, 0), (0, 1), (1, 1), (1, -1)),
    (math.sqrt(2) - 1, math.sqrt(2) - 1, 1 - math.sqrt(2) / 2, 1 - math.sqrt(2) / 2),
)

PRESETS = {"axial": AXIAL, "near_isotropic": NEAR_ISOTROPIC}


def _as_image(u):
    u = np.asarray(u, dtype=float)
    if u.ndim == 2:
        return u[:, :, None], True
    if u.ndim != 3:
        raise ValueError(f"expected a (rows, cols[, C]) image, got shape {u.shape}")
    return u, False


# --------------------------------------------------------------------------
# 1D solver


def potts_1d(g, gamma):
    """Exact minimiser of ``||u - g||^2 + gamma * #jumps(u)``.

    ``g`` has shape ``(C, L)`` or ``(L,)``.  A jump is counted at position
    ``i`` if any channel differs between ``i`` and ``i + 1``; the minimiser is
    piecewise equal to the channel-wise segment means.
    """
    g = np.asarray(g, dtype=float)
    squeeze = g.ndim == 1
    g2 = np.ascontiguousarray(g[None, :] if squeeze else g)
    if g2.ndim != 2 or g2.shape[1] < 1:
        raise ValueError("data must have shape (C, L) with L >= 1")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if not np.all(np.isfinite(g2)):
        raise ValueError("data must be finite")
    out = np.empty_like(g2)
    _dp.solve_line(g2, float(gamma), out, True)
    return out[0] if squeeze else out


def potts_1d_energy(u, g, gamma):
    """``||u - g||^2 + gamma * (number of any-channel jumps of u)``."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    g = np.atleast_2d(np.asarray(g, dtype=float))
    jumps = np.count_nonzero(np.any(u[:, 1:] != u[:, :-1], axis=0))
    return float(np.sum((u - g) ** 2) + gamma * jumps)


# --------------------------------------------------------------------------
# line families


@lru_cache(maxsize=64)
def _line_family(rows, cols, a, b):
    order = []
    offsets = [0]
    for r in range(rows):
        for c in range(cols):
            pr, pc = r + b, c - a
            if 0 <= pr < rows and 0 <= pc < cols:
                continue  # not a line start
            rr, cc = r, c
            while 0 <= rr < rows and 0 <= cc < cols:
                order.append(rr * cols + cc)
                rr -= b
                cc += a
            offsets.append(len(order))
    order = np.array(order, dtype=np.int64)
    offsets = np.array(offsets, dtype=np.int64)
    order.flags.writeable = False
    offsets.flags.writeable = False
    return order, offsets


def line_family(shape, d):
    """Paths of direction ``d`` through a ``shape`` grid.

    Returns ``(order, offsets)``: ``order`` lists flat pixel indices line by
    line, line ``k`` being ``order[offsets[k]:offsets[k + 1]]``.  Lines start
    at pixels whose predecessor lies outside the grid, taken in raster order.
    """
    rows, cols = shape[:2]
    return _line_family(int(rows), int(cols), int(d[0]), int(d[1]))


def direction_subproblem(data, d, gamma_eff):
    """Minimise ``||u - data||^2 + gamma_eff * ||grad_d u||_0`` exactly.

    The problem separates into independent 1D Potts problems along the lines
    of direction ``d``.
    """
    img, squeeze = _as_image(data)
    if gamma_eff < 0:
        raise ValueError("gamma must be non-negative")
    if not np.all(np.isfinite(img)):
        raise ValueError("data must be finite")
    rows, cols, C = img.shape
    order, offsets = line_family((rows, cols), d)
    flat = img.reshape(rows * cols, C)
    lines = np.ascontiguousarray(flat[order].T)
    solved = np.empty_like(lines)
    _dp.solve_lines(lines, offsets, float(gamma_eff), solved)
    out = np.empty_like(flat)
    out[order] = solved.T
    out = out.reshape(rows, cols, C)
    return out[:, :, 0] if squeeze else out


# --------------------------------------------------------------------------
# prior values and jump sets


def _pair_slices(shape, d):
    """Slices selecting all pixels ``x`` and their partners ``x + d`` in-grid."""
    rows, cols = shape[:2]
    a, b = d
    # x = (r, c) pairs with (r - b, c + a)
    r0, r1 = max(0, b), rows + min(0, b)
    c0, c1 = max(0, -a), cols - max(0, a)
    if r1 <= r0 or c1 <= c0:
        return None
    src = (slice(r0, r1), slice(c0, c1))
    dst = (slice(r0 - b, r1 - b), slice(c0 + a, c1 + a))
    return src, dst


def jump_mask(u, d):
    """Boolean map over the source pixels ``x`` of in-grid pairs ``(x, x+d)``.

    Returns ``(mask, src_slices)``; ``mask`` is True where any channel jumps.
    """
    img, _ = _as_image(u)
    sl = _pair_slices(img.shape, d)
    if sl is None:
        return np.zeros((0, 0), dtype=bool), None
    src, dst = sl
    mask = np.any(img[src] != img[dst], axis=-1)
    return mask, src


def _count_jumps(img, d):
    mask, _ = jump_mask(img, d)
    return int(np.count_nonzero(mask))


def multichannel_potts_value(u, dirs=NEAR_ISOTROPIC):
    """``sum_s omega_s * #{x : u(x) != u(x + d_s) in some channel}``."""
    img, _ = _as_image(u)
    return float(sum(w * _count_jumps(img, d) for d, w in dirs))


def _as_blocks(blocks, dirs):
    blocks = [np.asarray(b, dtype=float) for b in blocks]
    if len(blocks) != len(dirs):
        raise ValueError(f"expected {len(dirs)} blocks, got {len(blocks)}")
    shape = blocks[0].shape
    if any(b.shape != shape for b in blocks):
        raise ValueError("all blocks must share one shape")
    return blocks


def blockwise_potts_value(blocks, dirs=NEAR_ISOTROPIC):
    """``sum_s omega_s ||grad_{d_s} u_s||_0``: block ``s`` only counts jumps along ``d_s``."""
    blocks = _as_blocks(blocks, dirs)
    return float(sum(w * _count_jumps(_as_image(b)[0], d) for b, (d, w) in zip(blocks, dirs)))


def prox_blockwise_potts(blocks, beta, dirs=NEAR_ISOTROPIC):
    """Proximal map of ``beta * F`` for the block-wise Potts prior ``F``.

    Block ``s`` is the solution of a directional Potts problem along ``d_s``
    with jump penalty ``2 * beta * omega_s``.
    """
    if not beta > 0:
        raise ValueError("beta must be positive")
    blocks = _as_blocks(blocks, dirs)
    return np.stack([direction_subproblem(b, d, 2.0 * beta * w)
                     for b, (d, w) in zip(blocks, dirs)])


def nonascending_direction(blocks, beta, dirs=NEAR_ISOTROPIC):
    """Normalised step towards the block-wise Potts prox.

    Returns ``(v, delta)`` with ``delta = ||prox(u) - u||`` and
    ``v = (prox(u) - u) / delta`` (``v = 0`` when ``delta == 0``).
    """
    u = np.stack(_as_blocks(blocks, dirs))
    step = prox_blockwise_potts(u, beta, dirs) - u
    delta = float(np.sqrt(np.sum(step * step)))
    if delta == 0.0:
        return np.zeros_like(u), 0.0
    return step / delta, delta


def jump_set(u, d):
    """Unordered pixel pairs ``{x, x + d}`` where ``u`` differs in some channel.

    Pixels are ``(row, col)`` tuples; each pair is returned as a sorted tuple.
    """
    mask, src = jump_mask(u, d)
    if src is None:
        return frozenset()
    a, b = d
    rs, cs = np.nonzero(mask)
    rs = rs + src[0].start
    cs = cs + src[1].start
    pairs = set()
    for r, c in zip(rs.tolist(), cs.tolist()):
        p, q = (r, c), (r - b, c + a)
        pairs.add((p, q) if p <= q else (q, p))
    return frozenset(pairs)


def _differs(img, d, tol):
    """Per-channel jump indicators ``|u(x) - u(x + d)| > tol`` on in-grid pairs."""
    sl = _pair_slices(img.shape, d)
    if sl is None:
        return np.zeros((0, 0, img.shape[-1]), dtype=bool)
    src, dst = sl
    return np.abs(img[src] - img[dst]) > tol


def segment_count(u, tol=0.0):
    """Number of 4-connected regions on which ``u`` is constant.

    Neighbours whose channels all differ by at most ``tol`` are joined; with
    ``tol = 0`` only exactly equal neighbours are.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components

    img, _ = _as_image(u)
    rows, cols = img.shape[:2]
    idx = np.arange(rows * cols).reshape(rows, cols)
    src, dst = [], []
    for d in ((1, 0), (0, 1)):
        sl = _pair_slices(img.shape, d)
        if sl is None:
            continue
        same = ~np.any(_differs(img, d, tol), axis=-1)
        src.append(idx[sl[0]][same])
        dst.append(idx[sl[1]][same])
    src = np.concatenate(src) if src else np.zeros(0, dtype=int)
    dst = np.concatenate(dst) if dst else np.zeros(0, dtype=int)
    graph = coo_matrix((np.ones(src.size), (src, dst)), shape=(rows * cols,) * 2)
    return int(connected_components(graph, directed=False)[0])


def jump_alignment(u, dirs=NEAR_ISOTROPIC, tol=0.0):
    """Fraction of (pair, channel) entries that jump, among pairs where some channel jumps.

    1.0 means every jump appears in all channels at once; images without
    jumps count as aligned.
    """
    img, _ = _as_image(u)
    hits = total = 0
    for d, _ in dirs:
        diff = _differs(img, d, tol)
        anym = np.any(diff, axis=-1)
        hits += int(np.count_nonzero(diff[anym]))
        total += int(np.count_nonzero(anym)) * img.shape[-1]
    return hits / total if total else 1.0
