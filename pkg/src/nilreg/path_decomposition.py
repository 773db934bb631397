"""Partition of the non-negative integers into N paths with jumps 1 or M.

Construction: split [[0, M-1]] into consecutive blocks R_0 = {0}, R_1, ...,
R_{N-1}. Row c of a period is the translate of [[1, M-1]] by c(M-1). Path i
(1-based) owns block R_j in row (j - i + 1) mod N, and the pattern repeats with
period N(M-1). Consecutive blocks sit in consecutive rows, which forces every
jump between blocks to equal M; inside a block the jumps are 1. Path 1 also
owns the point 0.

Two block layouts are provided: the binary layout, whose block sizes are
balanced through the binary expansion of the remainder q, and the simple
layout with singletons R_0..R_{N-2} followed by one long block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DecompositionError(ValueError):
    pass


def _is_one_plus_power_of_two(n: int) -> int | None:
    m = n - 1
    if m >= 2 and m & (m - 1) == 0:
        return m.bit_length() - 1
    return None


@dataclass(frozen=True)
class BlockPartition:
    N: int
    M: int
    p: int
    q: int
    r_exponents: tuple[int, ...]
    s: tuple[int, ...]
    blocks: tuple[tuple[int, int], ...]
    layout: str = "binary"

    @property
    def sizes(self) -> np.ndarray:
        return np.array([b - a + 1 for a, b in self.blocks], dtype=np.int64)


def _blocks_from_sizes(sizes: Sequence[int]) -> tuple[tuple[int, int], ...]:
    blocks = [(0, 0)]
    end = 0
    for size in sizes:
        blocks.append((end + 1, end + size))
        end += size
    return tuple(blocks)


def binary_s_values(N: int, M: int) -> BlockPartition:
    k = _is_one_plus_power_of_two(N)
    if k is None:
        raise DecompositionError(f"N={N} is not of the form 1 + 2^k with k >= 1")
    if M <= N:
        raise DecompositionError(f"M={M} must exceed N={N}")
    p, q = divmod(M - 1, N - 1)
    r = tuple(b for b in range(k - 1, -1, -1) if q >> b & 1)
    s = []
    for i in range(1, N):
        # largest s (1-based) with 2^(k - r_s) dividing i; r_s decreases with s
        best = 0
        for idx, rs in enumerate(r, start=1):
            if i % (1 << (k - rs)) == 0:
                best = idx
        s.append(best)
    blocks = _blocks_from_sizes([p + si for si in s])
    return BlockPartition(N, M, p, q, r, tuple(s), blocks, "binary")


def simple_partition(N: int, M: int) -> BlockPartition:
    """Singletons R_0..R_{N-2} and R_{N-1} = [[N-1, M-1]]."""
    if N < 2 or M < N:
        raise DecompositionError(f"need 2 <= N <= M, got N={N}, M={M}")
    sizes = [1] * (N - 2) + [M - N + 1]
    p, q = divmod(M - 1, N - 1)
    return BlockPartition(N, M, p, q, (), (), _blocks_from_sizes(sizes), "simple")


def residue_partition(N: int) -> BlockPartition:
    """All blocks singletons: the paths are the residue classes mod N (M = N)."""
    return BlockPartition(N, N, 1, 0, (), (0,) * (N - 1), _blocks_from_sizes([1] * (N - 1)), "residue")


@dataclass(frozen=True)
class PathFamily:
    partition: BlockPartition
    degenerate: bool = False

    @property
    def N(self) -> int:
        return self.partition.N

    @property
    def M(self) -> int:
        return self.partition.M

    @property
    def period(self) -> int:
        return self.N * (self.M - 1)

    @property
    def _ends(self) -> np.ndarray:
        return np.array([b for _, b in self.partition.blocks[1:]], dtype=np.int64)

    def path_of(self, v) -> np.ndarray:
        """1-based path label of each non-negative integer in ``v``."""
        v = np.asarray(v, dtype=np.int64)
        if np.any(v < 0):
            raise ValueError("points must be non-negative")
        N, M = self.N, self.M
        w = (v - 1) % self.period
        c = w // (M - 1)
        u = w % (M - 1) + 1
        j = np.searchsorted(self._ends, u) + 1
        label = (j - c) % N + 1
        return np.where(v == 0, 1, label)

    def start(self, i: int) -> int:
        return 0 if i == 1 else self.partition.blocks[i - 1][0]

    def points(self, i: int, upto: int) -> np.ndarray:
        vals = np.arange(upto + 1, dtype=np.int64)
        return vals[self.path_of(vals) == i]

    def count_upto(self, K: int) -> np.ndarray:
        """Points of each path inside [[0, K]] (index 0 is path 1); -1 < K."""
        N, M = self.N, self.M
        out = np.zeros(N, dtype=object if K > 2**62 // max(M, 2) else np.int64)
        if K < 0:
            return out
        a, rem = divmod(K, self.period)
        out = out + a * (M - 1)
        out[0] += 1
        full_rows, partial = divmod(rem, M - 1)
        sizes = self.partition.sizes.copy()
        sizes[0] = 0  # R_0 only matters at the origin
        cyc = np.concatenate([sizes, sizes])
        pref = np.concatenate([[0], np.cumsum(cyc)])
        i0 = np.arange(N)  # path i has block (c + i - 1) mod N in row c
        out = out + (pref[i0 + full_rows] - pref[i0])
        jstar = (full_rows + i0) % N
        starts = np.array([a for a, _ in self.partition.blocks])
        ends = np.array([b for _, b in self.partition.blocks])
        part = np.clip(np.minimum(ends[jstar], partial) - starts[jstar] + 1, 0, None)
        part[jstar == 0] = 0
        return out + part

    def count_window(self, K1: int, K2: int) -> np.ndarray:
        return self.count_upto(K2) - self.count_upto(K1 - 1)

    def jump_word(self, i: int) -> list[int]:
        """Gaps along path i over one period, starting from its first point."""
        pts = self.points(i, self.start(i) + self.period)
        return np.diff(pts).tolist()

    def run_length_word(self, i: int) -> list[tuple[int, int]]:
        word = self.jump_word(i)
        runs: list[tuple[int, int]] = []
        for g in word:
            if runs and runs[-1][0] == g:
                runs[-1] = (g, runs[-1][1] + 1)
            else:
                runs.append((g, 1))
        return runs

    def serialize(self) -> dict:
        return {
            "N": self.N,
            "M": self.M,
            "layout": self.partition.layout,
            "degenerate": self.degenerate,
            "paths": [{"start": self.start(i), "word": self.run_length_word(i)} for i in range(1, self.N + 1)],
        }


def build_paths(N: int, M: int, layout: str = "binary") -> PathFamily:
    """Family for N = 1 + 2^k paths (binary layout) or any N (simple layout).

    M == N falls back to residue classes and is flagged as degenerate.
    """
    if M == N:
        if layout == "binary" and _is_one_plus_power_of_two(N) is None:
            raise DecompositionError(f"N={N} is not of the form 1 + 2^k")
        return PathFamily(residue_partition(N), degenerate=True)
    if layout == "binary":
        return PathFamily(binary_s_values(N, M))
    if layout == "simple":
        return PathFamily(simple_partition(N, M))
    raise ValueError(f"unknown layout {layout!r}")


def window_bound(N: int, M: int) -> float:
    return 4 + 2 * (M - 1) / (N - 1) + 4 * math.log2(N - 1)


def prefix_bound(N: int, M: int) -> float:
    return 2 + (M - 1) / (N - 1) + 2 * math.log2(N)


@dataclass(frozen=True)
class DeviationReport:
    min_count: int
    max_count: int
    bound: float

    @property
    def spread(self) -> int:
        return self.max_count - self.min_count

    @property
    def within(self) -> bool:
        return self.spread <= self.bound


def deviation(f: PathFamily, K1: int, K2: int) -> DeviationReport:
    if not 0 <= K1 <= K2:
        raise ValueError("need 0 <= K1 <= K2")
    c = f.count_window(K1, K2)
    return DeviationReport(int(c.min()), int(c.max()), window_bound(f.N, f.M))


def prefix_deviation(f: PathFamily, K: int) -> DeviationReport:
    c = f.count_upto(K)
    return DeviationReport(int(c.min()), int(c.max()), prefix_bound(f.N, f.M))
