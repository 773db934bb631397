"""Markov walk on Z^2 whose arrival law on each l1-sphere is uniform."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

Point = tuple[int, int]
Rule = Callable[[Point], list[tuple[Point, Fraction]]]


def _sgn(v: int) -> int:
    return 1 if v > 0 else -1


def transition(s: Point) -> list[tuple[Point, Fraction]]:
    """Outgoing moves; each one increases |x| + |y| by exactly one."""
    x, y = s
    if x == 0 and y == 0:
        q = Fraction(1, 4)
        return [((1, 0), q), ((-1, 0), q), ((0, 1), q), ((0, -1), q)]
    if y == 0:
        n = abs(x)
        side = Fraction(1, 2 * (n + 1))
        return [((x + _sgn(x), 0), Fraction(n, n + 1)), ((x, 1), side), ((x, -1), side)]
    if x == 0:
        n = abs(y)
        side = Fraction(1, 2 * (n + 1))
        return [((0, y + _sgn(y)), Fraction(n, n + 1)), ((1, y), side), ((-1, y), side)]
    i, j = abs(x), abs(y)
    den = 2 * (i + j + 1)
    return [((x + _sgn(x), y), Fraction(2 * i + 1, den)), ((x, y + _sgn(y)), Fraction(2 * j + 1, den))]


def perturbed_rule(at: Point = (2, 1)) -> Rule:
    """The standard rule with the two probabilities at ``at`` swapped."""

    def rule(s: Point):
        out = transition(s)
        if s == at:
            (a, pa), (b, pb) = out
            return [(a, pb), (b, pa)]
        return out

    return rule


def sphere(k: int) -> list[Point]:
    if k == 0:
        return [(0, 0)]
    pts = []
    for i in range(-k, k + 1):
        r = k - abs(i)
        pts.append((i, r))
        if r:
            pts.append((i, -r))
    return pts


@dataclass
class ArrivalDistribution:
    k: int
    probabilities: dict[Point, Fraction]

    def is_uniform(self) -> bool:
        target = Fraction(1, 4 * self.k)
        pts = sphere(self.k)
        return len(self.probabilities) == len(pts) and all(self.probabilities.get(p) == target for p in pts)

    def rows(self) -> list[tuple[int, int, int, int]]:
        return [(x, y, q.numerator, q.denominator) for (x, y), q in sorted(self.probabilities.items())]


def _step(dist: dict[Point, Fraction], rule: Rule) -> dict[Point, Fraction]:
    nxt: dict[Point, Fraction] = defaultdict(Fraction)
    for s, ps in dist.items():
        for t, q in rule(s):
            nxt[t] += ps * q
    return dict(nxt)


def arrival_distribution(k: int, rule: Rule = transition) -> ArrivalDistribution:
    if k < 1:
        raise ValueError("k must be at least 1")
    dist = {(0, 0): Fraction(1)}
    for _ in range(k):
        dist = _step(dist, rule)
    return ArrivalDistribution(k, dist)


@dataclass
class EquidistributionReport:
    k_max: int
    first_failure: int | None

    @property
    def success(self) -> bool:
        return self.first_failure is None


def verify_equidistribution(k_max: int, rule: Rule = transition) -> EquidistributionReport:
    dist = {(0, 0): Fraction(1)}
    for k in range(1, k_max + 1):
        dist = _step(dist, rule)
        if not ArrivalDistribution(k, dist).is_uniform():
            return EquidistributionReport(k_max, k)
    return EquidistributionReport(k_max, None)


def _cumulative(s: Point) -> tuple[list[Point], np.ndarray]:
    moves = transition(s)
    return [t for t, _ in moves], np.cumsum([float(q) for _, q in moves])


def sample_path(seed: int, steps: int) -> list[Point]:
    rng = np.random.default_rng(seed)
    path = [(0, 0)]
    for _ in range(steps):
        targets, cum = _cumulative(path[-1])
        k = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        path.append(targets[min(k, len(targets) - 1)])
    return path


def sample_endpoints(seed: int, n_paths: int, steps: int) -> dict[Point, int]:
    """Endpoint histogram of independent walks, simulated jointly."""
    rng = np.random.default_rng(seed)
    xs = np.zeros(n_paths, dtype=np.int64)
    ys = np.zeros(n_paths, dtype=np.int64)
    for _ in range(steps):
        u = rng.random(n_paths)
        i, j = np.abs(xs), np.abs(ys)
        sx = np.where(xs >= 0, 1, -1)
        sy = np.where(ys >= 0, 1, -1)
        origin = (i == 0) & (j == 0)
        on_x = (j == 0) & ~origin
        on_y = (i == 0) & ~origin
        inner = (i > 0) & (j > 0)
        dx = np.zeros(n_paths, dtype=np.int64)
        dy = np.zeros(n_paths, dtype=np.int64)
        # origin: four directions
        q = np.minimum((u * 4).astype(np.int64), 3)
        dx = np.where(origin, np.choose(q, [1, -1, 0, 0]), dx)
        dy = np.where(origin, np.choose(q, [0, 0, 1, -1]), dy)
        # axis points: outward n/(n+1), else split the perpendicular moves
        n = np.maximum(i, j)
        out = u < n / (n + 1)
        perp = np.where(u < n / (n + 1) + 1 / (2 * (n + 1)), 1, -1)
        dx = np.where(on_x, np.where(out, sx, 0), dx)
        dy = np.where(on_x, np.where(out, 0, perp), dy)
        dx = np.where(on_y, np.where(out, 0, perp), dx)
        dy = np.where(on_y, np.where(out, sy, 0), dy)
        # interior: away from the y-axis with (2i+1)/(2(i+j+1))
        horiz = u < (2 * i + 1) / (2 * (i + j + 1))
        dx = np.where(inner, np.where(horiz, sx, 0), dx)
        dy = np.where(inner, np.where(horiz, 0, sy), dy)
        xs, ys = xs + dx, ys + dy
    hist: dict[Point, int] = defaultdict(int)
    for a, b in zip(xs.tolist(), ys.tolist()):
        hist[(a, b)] += 1
    return dict(hist)
