"""Ball census of the orbit graph on Z^{d-1} under positive generator moves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

Move = Callable[[tuple[int, ...]], tuple[int, ...]]


def default_moves(d: int, symmetric: bool = False) -> list[Move]:
    """f_{k+1,1} (coordinate k += 1) and f_{k+1,k} (coordinate k += coordinate k-1).

    Both families act on Z^{d-1}; f_{2,1} belongs to both and is listed once.
    """
    dim = d - 1
    moves: list[Move] = []

    def unit(k: int, s: int) -> Move:
        def mv(v):
            w = list(v)
            w[k] += s
            return tuple(w)

        return mv

    def amp(k: int, s: int) -> Move:
        def mv(v):
            w = list(v)
            w[k] += s * v[k - 1]
            return tuple(w)

        return mv

    signs = (1, -1) if symmetric else (1,)
    for s in signs:
        for k in range(dim):
            moves.append(unit(k, s))
        for k in range(1, dim):
            moves.append(amp(k, s))
    return moves


@dataclass
class BallCensus:
    d: int
    counts: list[int] = field(default_factory=list)
    complete: bool = True

    @property
    def last_radius(self) -> int:
        return len(self.counts) - 1

    def spheres(self) -> list[int]:
        return [self.counts[0]] + [b - a for a, b in zip(self.counts, self.counts[1:])]

    def rows(self) -> list[tuple[int, int, int]]:
        return [(n, b, s) for n, (b, s) in enumerate(zip(self.counts, self.spheres()))]


def ball_census(
    d: int,
    n_max: int,
    moves: Sequence[Move] | None = None,
    mem_cap: int | None = None,
    symmetric: bool = False,
) -> BallCensus:
    """Exact breadth-first census; stops early (complete=False) past ``mem_cap`` points."""
    if n_max < 0:
        raise ValueError("n_max must be non-negative")
    if moves is None:
        moves = default_moves(d, symmetric)
    origin = (0,) * (d - 1)
    seen = {origin}
    frontier = [origin]
    census = BallCensus(d, [1])
    for _ in range(n_max):
        nxt = []
        for v in frontier:
            for mv in moves:
                w = mv(v)
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        if mem_cap is not None and len(seen) > mem_cap:
            census.complete = False
            return census
        census.counts.append(len(seen))
        frontier = nxt
    return census


def closed_form_d3(n: int) -> int:
    num = n**3 + 11 * n + 6
    assert num % 6 == 0
    return num // 6


def growth_exponent_estimate(c: BallCensus, fit_window: Iterable[int]) -> float:
    """Least-squares slope of log(ball) against log(radius) over the window."""
    lo, hi = fit_window
    if not (1 <= lo < hi <= c.last_radius):
        raise ValueError(f"window [{lo}, {hi}] outside computed radii 1..{c.last_radius}")
    r = np.arange(lo, hi + 1)
    counts = np.array(c.counts[lo : hi + 1], dtype=float)
    if np.any(np.diff(counts) <= 0):
        raise ValueError("counts not strictly increasing on the window")
    slope, _ = np.polyfit(np.log(r), np.log(counts), 1)
    return float(slope)
