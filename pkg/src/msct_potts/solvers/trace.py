"""Per-iteration records of the reconstruction solvers."""
from dataclasses import dataclass, field
import io

import numpy as np

from ..potts_core import blockwise_potts_value

__all__ = ["SolverTrace", "data_deviation", "max_block_distance", "CSV_HEADER"]

CSV_HEADER = ("iter", "data_dev", "blockwise_potts", "max_block_dist", "wall_ms")


def data_deviation(A, f, blocks):
    """``(1/S) sum_{s,c} ||A u_{s,c} - f_c||^2`` for blocks of shape ``(S, n, n, C)``."""
    blocks = np.asarray(blocks, dtype=float)
    S = blocks.shape[0]
    total = 0.0
    for s in range(S):
        res = A.apply(blocks[s].reshape(A.cols, -1)) - f
        total += float(np.sum(res * res))
    return total / S


def max_block_distance(blocks):
    """Largest pairwise ``||u_s - u_t||_inf`` (0 for a single block)."""
    blocks = np.asarray(blocks)
    S = blocks.shape[0]
    best = 0.0
    for s in range(S):
        for t in range(s + 1, S):
            best = max(best, float(np.max(np.abs(blocks[s] - blocks[t]))))
    return best


@dataclass
class SolverTrace:
    """Iteration log plus final state.

    ``blocks`` holds the final split variables ``(S, n, n, C)``; ``extra``
    collects solver-specific per-iteration series (e.g. the distance of the
    split variables to the ADMM data variable).
    """

    method: str = ""
    iters: list = field(default_factory=list)
    data_dev: list = field(default_factory=list)
    blockwise_potts: list = field(default_factory=list)
    max_block_dist: list = field(default_factory=list)
    wall_ms: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    converged: bool = False
    blocks: np.ndarray = None

    def __len__(self):
        return len(self.iters)

    def record(self, k, A, f, blocks, dirs, wall_ms, **extra):
        self.iters.append(int(k))
        self.data_dev.append(data_deviation(A, f, blocks))
        if len(blocks) == len(dirs):
            self.blockwise_potts.append(blockwise_potts_value(blocks, dirs))
        else:
            # a single image: equal blocks, so the block-wise value is the multi-channel one
            self.blockwise_potts.append(blockwise_potts_value([blocks[0]] * len(dirs), dirs))
        self.max_block_dist.append(max_block_distance(blocks))
        self.wall_ms.append(float(wall_ms))
        for key, val in extra.items():
            self.extra.setdefault(key, []).append(float(val))

    def last(self):
        if not self.iters:
            return None
        return {"iter": self.iters[-1], "data_dev": self.data_dev[-1],
                "blockwise_potts": self.blockwise_potts[-1],
                "max_block_dist": self.max_block_dist[-1], "wall_ms": self.wall_ms[-1]}

    def to_csv(self, timing=False):
        """CSV text with one row per iteration.

        Wall-clock times are only written when ``timing`` is set; otherwise the
        column holds ``nan`` so that repeated runs give identical files.
        """
        out = io.StringIO()
        out.write(",".join(CSV_HEADER) + "\n")
        for k, d, p, b, t in zip(self.iters, self.data_dev, self.blockwise_potts,
                                 self.max_block_dist, self.wall_ms):
            ms = repr(t) if timing else "nan"
            out.write(f"{k},{d!r},{p!r},{b!r},{ms}\n")
        return out.getvalue()

    @staticmethod
    def read_csv(text):
        """Parse CSV text back into a dict of numpy columns."""
        lines = [ln for ln in text.strip().splitlines() if ln]
        header = tuple(lines[0].split(","))
        if header != CSV_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
        arr = np.array(rows, dtype=float).reshape(-1, len(CSV_HEADER))
        return {name: arr[:, i] for i, name in enumerate(CSV_HEADER)}


def finite_or_raise(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("inputs must be finite")

