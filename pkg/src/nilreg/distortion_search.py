"""Level-by-level path selection with bounded L_alpha sums on the orbit lattice.

Points of Z^{d-1} carry weights (the length of the union of intervals over
each point); the task is to find a chain of consecutively intersecting paths,
one per level, whose weight sums sum(l^alpha) stay under the per-level
thresholds given by the Hölder/Chebyshev density bound.

For d = 3 the levels are the rectangles P(n) = [[n, 8n-1]] x [[0, H(n)]] cut
into horizontal rows and Q(n) = [[n, 2n-1]] x [[0, H(n)]] cut into vertical
paths with jumps 1 or m (m the column), for n = 4^k and H(n) = floor(n^{2+eps}).
For general d the levels are the parallelepipeds Q(n) of a recursion that
alternates directions, each cut into paths along its current direction.

Selection is exact: a forward pass computes which paths are reachable through
a chain of good paths (the densities D', D''), and a backward pass extracts
the chain with the smallest ids.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .group_core import GeneratorWord, Letter, act_on_index, elementary, evaluate_word
from .interval_model import LengthSchemeB, choose_exponents_b, exact, fiber_total

DEFAULT_WEIGHT_ALPHA = 0.3
DEFAULT_MEM_CAP = 20_000_000  # points held at once


class InfeasibleAlpha(ValueError):
    pass


class SelectionFailure(RuntimeError):
    def __init__(self, message: str, ledger: list | None = None):
        super().__init__(message)
        self.ledger = ledger or []


class RealizationError(RuntimeError):
    pass


class ResourceLimit(MemoryError):
    pass


# --- density bounds ----------------------------------------------------------------


@dataclass(frozen=True)
class DensityBound:
    threshold: float
    density: float


def holder_density_bound(point_budget: float, part_count: int, A: float, alpha: float) -> DensityBound:
    """Parts whose sum(l^alpha) exceeds the threshold make up less than 1/A of all parts.

    With total weight <= 1 on at most ``point_budget`` points, Hölder gives
    sum(l^alpha) <= point_budget^(1-alpha); Chebyshev over the parts does the rest.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha={alpha} must lie in (0, 1)")
    if part_count < 1:
        raise ValueError("need at least one part")
    if A <= 0:
        raise ValueError("A must be positive")
    return DensityBound(A * point_budget ** (1 - alpha) / part_count, 1 - 1 / A)


def density_thresholds(n: int, eps: float, alpha: float, A: float, C1: float, C2: float) -> tuple[float, float]:
    """Closed forms of the bound for n' >= n^2/C2 and for n' >= n^{2+eps}/C2, respectively."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha={alpha} must lie in (0, 1)")
    base = A * C1 ** (1 - alpha) * C2
    return (
        base / n ** (3 * alpha - 1 - eps * (1 - alpha)),
        base / n ** (3 * alpha - 1 + eps * alpha),
    )


@dataclass
class WeightedGrid:
    points: np.ndarray  # (k, dim) integers
    weights: np.ndarray  # (k,) positive, total <= 1
    parts: np.ndarray  # (k,) part label in 0..n_parts-1

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("weights must be positive")
        if math.fsum(self.weights.tolist()) > 1 + 1e-12:
            raise ValueError("total weight exceeds 1")
        if len(self.points) != len(np.unique(self.points, axis=0)):
            raise ValueError("points must be distinct")

    @property
    def n_parts(self) -> int:
        return int(self.parts.max()) + 1

    def part_sums(self, alpha: float) -> np.ndarray:
        return np.bincount(self.parts, weights=self.weights**alpha, minlength=self.n_parts)

    def heavy_parts(self, alpha: float, threshold: float) -> int:
        return int(np.count_nonzero(self.part_sums(alpha) > threshold))


# --- integer helpers ----------------------------------------------------------------


def integer_root(x: int, k: int) -> int:
    """floor(x^(1/k)) for non-negative integers."""
    if x < 0 or k < 1:
        raise ValueError("need x >= 0 and k >= 1")
    if x < 2:
        return x
    r = 1 << ((x.bit_length() + k - 1) // k)  # r^k >= x
    while True:
        s = ((k - 1) * r + x // r ** (k - 1)) // k
        if s >= r:
            break
        r = s
    while r**k > x:
        r -= 1
    while (r + 1) ** k <= x:
        r += 1
    return r


def height(n: int, eps) -> int:
    """floor(n^{2+eps}) exactly, with eps read as a rational."""
    e = exact(eps)
    return integer_root(n ** (2 * e.denominator + e.numerator), e.denominator)


def is_one_plus_power_of_two(x: int) -> bool:
    m = x - 1
    return m >= 1 and m & (m - 1) == 0


# --- path labels, vectorised ---------------------------------------------------------


def path_labels(v, N: int, M, layout: str = "binary") -> np.ndarray:
    """1-based path label of each v >= 0 for the partition into N paths with jumps 1 or M.

    Same partition as ``path_decomposition.build_paths`` but closed-form and
    vectorised over v and M: block R_j (1 <= j <= N-1) ends at
    j p + sum over set bits b of q of floor(j / 2^(k-b)) for the binary layout,
    where M - 1 = p (N - 1) + q and N = 1 + 2^k.
    """
    v = np.asarray(v, dtype=np.int64)
    M = np.asarray(M, dtype=np.int64)
    v, M = np.broadcast_arrays(v, M)
    if np.any(M < N):
        raise ValueError("need M >= N")
    w = (v - 1) % (N * (M - 1))
    c = w // (M - 1)
    u = w % (M - 1) + 1
    if layout == "simple":
        j = np.where(u <= N - 2, u, N - 1)
    elif layout == "binary":
        if not is_one_plus_power_of_two(N) or N < 3:
            raise ValueError(f"N={N} is not of the form 1 + 2^k with k >= 1")
        k = (N - 1).bit_length() - 1
        p, q = np.divmod(M - 1, N - 1)

        def end(j):
            out = j * p
            for b in range(k):
                out = out + ((q >> b) & 1) * (j >> (k - b))
            return out

        lo = np.ones_like(u)
        hi = np.full_like(u, N - 1)
        while np.any(lo < hi):
            mid = (lo + hi) // 2
            ok = end(mid) >= u
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid + 1)
        j = lo
    else:
        raise ValueError(f"unknown layout {layout!r}")
    label = (j - c) % N + 1
    return np.where(v == 0, 1, label)


# --- weights ------------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightSpec:
    """Projected fiber lengths of a length scheme on Z^{d-1}, divided by Z."""

    scheme: LengthSchemeB
    Z: float
    box: tuple[tuple[int, int], ...]  # region whose weights sum to Z

    @property
    def exponents(self) -> tuple[float, ...]:
        return tuple(float(p) for p in self.scheme.p)

    def raw(self, pts: np.ndarray, chunk: int = 1 << 18) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts))
        ex = np.array(self.exponents)
        out = np.empty(len(pts))
        for a in range(0, len(pts), chunk):
            blk = np.abs(pts[a : a + chunk]).astype(float)
            c = blk ** ex[:-1] @ np.ones(len(ex) - 1) + 1.0
            out[a : a + chunk] = fiber_total(c, ex[-1])
        return out

    def weights(self, pts: np.ndarray) -> np.ndarray:
        return self.raw(pts) / self.Z


def canonical_weight(spec: WeightSpec, point: Sequence[int]) -> float:
    """Scalar weight with a fixed operation order; certificates store these bit for bit."""
    ex = spec.exponents
    c = 1.0
    for x, p in zip(point, ex[:-1]):
        c += math.pow(abs(int(x)), p)
    return float(fiber_total(np.array([c]), ex[-1])[0]) / spec.Z


def canonical_sum(spec: WeightSpec, points, alpha: float) -> float:
    return math.fsum(math.pow(canonical_weight(spec, p), alpha) for p in points)


def _box_points(box) -> np.ndarray:
    axes = [np.arange(lo, hi + 1) for lo, hi in box]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(box))


def make_weight_spec(d: int, box, alpha_b: float = DEFAULT_WEIGHT_ALPHA, mem_cap: int = DEFAULT_MEM_CAP) -> WeightSpec:
    """Weights normalised so that their sum over ``box`` (a subset of Z^{d-1}) is 1."""
    scheme = choose_exponents_b(d, alpha_b)
    box = tuple((int(a), int(b)) for a, b in box)
    size = math.prod(b - a + 1 for a, b in box)
    if size > mem_cap:
        raise ResourceLimit(f"weight box has {size} points, above the cap {mem_cap}")
    spec = WeightSpec(scheme, 1.0, box)
    raw = spec.raw(_box_points(box))
    return WeightSpec(scheme, math.fsum(raw.tolist()), box)


# --- d = 3 grids ----------------------------------------------------------------------------


@dataclass(frozen=True)
class GridD3:
    k: int
    eps: float

    @property
    def n(self) -> int:
        return 4**self.k

    @property
    def H(self) -> int:
        return height(self.n, self.eps)

    @property
    def p_columns(self) -> tuple[int, int]:
        return (self.n, 8 * self.n - 1)

    @property
    def q_columns(self) -> tuple[int, int]:
        return (self.n, 2 * self.n - 1)

    @property
    def p_count(self) -> int:
        """Number of horizontal paths (rows)."""
        return self.H + 1

    @property
    def q_count(self) -> int:
        return self.n * self.n

    @property
    def p_points(self) -> int:
        return 7 * self.n * (self.H + 1)

    @property
    def q_points(self) -> int:
        return self.n * (self.H + 1)

    def q_labels(self, heights=None) -> np.ndarray:
        """Labels of the Q paths over the column block: array (heights, columns)."""
        h = np.arange(self.H + 1) if heights is None else np.asarray(heights)
        cols = np.arange(self.q_columns[0], self.q_columns[1] + 1)
        return path_labels(h[:, None], self.n, cols[None, :], "simple")

    def q_ids(self, heights=None) -> np.ndarray:
        """Path ids (m - n) n + label - 1, same shape as ``q_labels``."""
        lab = self.q_labels(heights)
        return (np.arange(self.n)[None, :] * self.n) + lab - 1

    def q_path(self, pid: int) -> tuple[int, int]:
        """(column, label) of a Q path id."""
        return self.n + pid // self.n, pid % self.n + 1

    def q_points_of(self, pid: int, lo: int = 0, hi: int | None = None) -> np.ndarray:
        col, lab = self.q_path(pid)
        hi = self.H if hi is None else hi
        h = np.arange(lo, hi + 1)
        return h[path_labels(h, self.n, col, "simple") == lab]


def build_grids_d3(k_max: int, eps: float) -> list[GridD3]:
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    return [GridD3(k, eps) for k in range(1, k_max + 1)]


def conditions_d3(alpha: float, eps: float) -> list[str]:
    a, e = exact(alpha), exact(eps)
    bad = []
    if not a > Fraction(1, 3):
        bad.append("alpha > 1/3")
    if not e < max((3 * a - 1) / (1 - a), Fraction(1)):
        bad.append("eps < max((3 alpha - 1)/(1 - alpha), 1)")
    if not 3 * a - 1 - e * (1 - a) > 0:
        bad.append("3 alpha - 1 - eps (1 - alpha) > 0")
    return bad


# --- general d: parallelepipeds ------------------------------------------------------------


def direction(n: int, d: int) -> int:
    """i(n): residue of n mod d-1, taken in 1..d-1."""
    r = n % (d - 1)
    return r if r else d - 1


def successor(i: int, d: int) -> int:
    """Next direction, cyclically (d-1 is followed by 1)."""
    return i % (d - 1) + 1


@dataclass
class ParallelepipedFamily:
    d: int
    lower: list[tuple[int, ...]]  # x_{., n} for n = 0..n_max
    upper: list[tuple[int, ...]]
    envelope: dict = field(default_factory=dict)

    @property
    def n_max(self) -> int:
        return len(self.lower) - 1

    def bounds(self, n: int) -> list[tuple[int, int]]:
        return list(zip(self.lower[n], self.upper[n]))

    def size(self, n: int) -> int:
        """Exact number of lattice points, prod(y - x + 1)."""
        return math.prod(y - x + 1 for x, y in self.bounds(n))

    def size_product_formula(self, n: int) -> int:
        """prod(y - x), the count formula that ignores one endpoint per side."""
        return math.prod(y - x for x, y in self.bounds(n))

    def intersection(self, n: int) -> list[tuple[int, int]]:
        return [(max(a, c), min(b, e)) for (a, b), (c, e) in zip(self.bounds(n), self.bounds(n + 1))]

    def all_bounds_ok(self) -> bool:
        return all(is_one_plus_power_of_two(v) for row in self.lower + self.upper for v in row)


def build_parallelepipeds(d: int, n_max: int) -> ParallelepipedFamily:
    """Q(0) = [[2, 1+4^{d+1}]]^{d-1}; step n raises x in direction i(n) to 1 + 4^i (x - 1)
    and y in the next direction j to 1 + 4^j (y - 1)."""
    if d < 3:
        raise ValueError("need d >= 3")
    if n_max < 1:
        raise ValueError("need n_max >= 1")
    x = [2] * (d - 1)
    y = [1 + 4 ** (d + 1)] * (d - 1)
    lower, upper = [tuple(x)], [tuple(y)]
    for n in range(n_max):
        i = direction(n, d)
        j = successor(i, d)
        x[i - 1] = 1 + 4**i * (x[i - 1] - 1)
        y[j - 1] = 1 + 4**j * (y[j - 1] - 1)
        lower.append(tuple(x))
        upper.append(tuple(y))
    fam = ParallelepipedFamily(d, lower, upper)
    fam.envelope = fit_envelope(fam)
    return fam


def fit_envelope(f: ParallelepipedFamily) -> dict:
    """Slopes of log(y - x) and log x against n, and the constants C1..C4 (min/max ratios)."""
    d = f.d
    ns = np.arange(f.n_max + 1)
    out: dict = {"slope_width": {}, "slope_lower": {}, "target": {}}
    c1 = c3 = math.inf
    c2 = c4 = 0.0
    for i in range(1, d):
        xs = np.array([float(f.lower[n][i - 1]) for n in ns])
        ws = np.array([float(f.upper[n][i - 1] - f.lower[n][i - 1]) for n in ns])
        out["slope_width"][i] = float(np.polyfit(ns, np.log(ws), 1)[0])
        out["slope_lower"][i] = float(np.polyfit(ns, np.log(xs), 1)[0])
        out["target"][i] = i / (d - 1) * math.log(4)
        scale = 4.0 ** (i * ns / (d - 1))
        c1, c2 = min(c1, float((ws / scale).min())), max(c2, float((ws / scale).max()))
        c3, c4 = min(c3, float((xs / scale).min())), max(c4, float((xs / scale).max()))
    out.update(C1=c1, C2=c2, C3=c3, C4=c4)
    return out


@dataclass
class LevelPaths:
    """Paths of Q(n) along direction i(n)."""

    family: ParallelepipedFamily
    n: int
    direction: int
    N: int | None  # paths per fiber (None for unit-step levels)

    @property
    def bounds(self) -> list[tuple[int, int]]:
        return self.family.bounds(self.n)

    @property
    def transverse_sizes(self) -> list[int]:
        return [y - x + 1 for k, (x, y) in enumerate(self.bounds) if k != self.direction - 1]

    @property
    def path_count(self) -> int:
        t = math.prod(self.transverse_sizes)
        return t if self.N is None else t * self.N

    @property
    def degenerate_fibers(self) -> int:
        """Fibers whose jump M equals N (residue-class fallback)."""
        if self.N is None:
            return 0
        x, y = self.bounds[self.direction - 2]
        return math.prod(self.transverse_sizes) // (y - x + 1) if x <= self.N <= y else 0

    def path_ids(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        i = self.direction - 1
        rank = np.zeros(len(pts), dtype=np.int64)
        for k, (x, y) in enumerate(self.bounds):
            if k == i:
                continue
            rank = rank * (y - x + 1) + (pts[:, k] - x)
        if self.N is None:
            return rank
        lab = path_labels(pts[:, i], self.N, pts[:, i - 1], "binary")
        return rank * self.N + lab - 1

    def step_ok(self, a: np.ndarray, b: np.ndarray) -> bool:
        """Consecutive path points differ in the path direction by 1 or by coordinate i-1."""
        i = self.direction - 1
        diff = b - a
        others = np.delete(diff, i)
        if np.any(others != 0):
            return False
        if self.N is None:
            return abs(int(diff[i])) == 1
        return abs(int(diff[i])) in (1, int(a[i - 1]))


def partition_level(f: ParallelepipedFamily, n: int) -> LevelPaths:
    if not 0 <= n <= f.n_max:
        raise ValueError(f"level {n} not built")
    i = direction(n, f.d)
    if i == 1:
        return LevelPaths(f, n, 1, None)
    return LevelPaths(f, n, i, f.lower[n][i - 2])


def _enumerate(bounds, mem_cap: int) -> np.ndarray:
    size = math.prod(y - x + 1 for x, y in bounds)
    if size > mem_cap:
        raise ResourceLimit(f"{size} points exceed the cap {mem_cap}")
    return _box_points(bounds)


# --- constants ------------------------------------------------------------------------------


@dataclass
class Constants:
    alpha: float
    exponent: float  # gamma (d = 3) or d alpha / 2 - 1/(d-1)
    B: float
    C: float
    A: list[float]
    r: list[int | None]
    s: list[int | None]
    r_prime: list[int | None]
    s_prime: list[int | None]
    B_tail: float | None = None
    C6: float | None = None
    notes: list[str] = field(default_factory=list)


def _ratio_product(r, s, rp, sp) -> float:
    out = 1.0
    for a, b, c, e in zip(r, s, rp, sp):
        if a is None:
            continue
        if a == 0 or c == 0:
            return math.inf
        out *= (b / a) * (e / c)
    return out


def counts_d3(grids: Sequence[GridD3]) -> tuple[list, list, list, list]:
    """r_k, s_k (Q(n_k) paths inside Q(n_k)) and r'_k, s'_k (inside P(n_{k-1}) n Q(n_k))."""
    r, s, rp, sp = [None], [None], [None], [None]
    for prev, g in zip(grids, grids[1:]):
        ids = g.q_ids()
        full = np.bincount(ids.ravel(), minlength=g.q_count)
        low = np.bincount(ids[: prev.H + 1].ravel(), minlength=g.q_count)
        r.append(int(full.min()))
        s.append(int(full.max()))
        rp.append(int(low.min()))
        sp.append(int(low.max()))
    return r, s, rp, sp


def tail_factor_d3(k: int, eps: float) -> float | None:
    """Bound on (s_k/r_k)(s'_k/r'_k) from the +-2n deviation estimates; None when not positive."""
    x = 4.0 ** (k * eps)
    y = 4.0 ** (k * eps - 1)
    if x <= 2 or y <= 8:
        return None
    return (x + 2) / (x - 2) * (y + 8) / (y - 8)


def tail_product_d3(k0: int, eps: float) -> float | None:
    """Product of the factor bounds over k >= k0 (None if any factor is unbounded)."""
    log_total = 0.0
    k = k0
    while True:
        f = tail_factor_d3(k, eps)
        if f is None:
            return None
        log_total += math.log(f)
        if math.log(f) < 1e-17:
            return math.exp(log_total)
        k += 1


def compute_constants_d3(grids: Sequence[GridD3], alpha: float, eps: float, first_level_A: float = 0.0) -> Constants:
    if len(grids) < 2:
        raise ValueError("need at least two levels")
    gamma = 3 * alpha - 1 - eps * (1 - alpha)
    if gamma <= 0:
        raise InfeasibleAlpha(f"3 alpha - 1 - eps (1 - alpha) = {gamma:.4g} <= 0: C diverges")
    r, s, rp, sp = counts_d3(grids)
    B = _ratio_product(r, s, rp, sp)
    C = 4.0 / (2.0**gamma - 1.0)
    A = [max(2 ** (2 + gamma) * B * C, first_level_A)]
    A += [B * C * 2 ** (k * gamma) for k in range(2, len(grids) + 1)]
    # the factor bound is only meaningful once n^eps > 2 and 4^{k eps - 1} > 8
    k0 = len(grids) + 1
    tail = tail_product_d3(k0, eps)
    notes = [] if tail is not None else [f"tail factors from level {k0} on are not covered by the deviation estimate"]
    return Constants(alpha, gamma, B, C, A, r, s, rp, sp, tail, None, notes)


# --- selection state ----------------------------------------------------------------------


@dataclass
class LevelRecord:
    level: int
    kind: str  # "P", "Q" (d = 3) or "L" (general d)
    n: int
    path: dict
    path_sum: float
    threshold: float
    A: float
    good_fraction: float
    density: float
    ledger_bound: float


@dataclass
class SelectionState:
    d: int
    alpha: float
    eps: float | None
    weights: WeightSpec
    constants: Constants
    records: list[LevelRecord]
    grids: list = field(default_factory=list, repr=False)
    parallelepipeds: ParallelepipedFamily | None = field(default=None, repr=False)

    @property
    def level_sums(self) -> list[float]:
        return [r.path_sum for r in self.records]

    def closed_form_bound(self) -> float:
        """80 A_1 4^{eps(1-alpha)} + 40 B C^2 (d = 3) or 2 A_1 C6 + 2 B C6 (general d)."""
        c = self.constants
        if self.d == 3 and self.eps is not None:
            return 80 * c.A[0] * 4 ** (self.eps * (1 - self.alpha)) + 40 * c.B * c.C**2
        return 2 * c.A[0] * c.C6 + 2 * c.B * c.C6


# --- d = 3 selection --------------------------------------------------------------------


def _picker(pick: str):
    if pick == "lowest":
        return lambda a: int(np.min(a))
    if pick == "highest":
        return lambda a: int(np.max(a))
    raise ValueError(f"unknown pick rule {pick!r}")


def _weight_table(spec: WeightSpec, cols: int, rows: int) -> np.ndarray:
    """Weights on [[0, cols-1]] x [[0, rows-1]], indexed [column, row]."""
    pts = _box_points(((0, cols - 1), (0, rows - 1)))
    return spec.weights(pts).reshape(cols, rows)


def select_paths_d3(
    alpha: float = 0.45,
    eps: float = 0.1,
    levels: int = 3,
    alpha_b: float = DEFAULT_WEIGHT_ALPHA,
    mem_cap: int = DEFAULT_MEM_CAP,
    pick: str = "lowest",
) -> SelectionState:
    """Chain Q(n_1), P(n_1), ..., Q(n_K), P(n_K) of good, consecutively meeting paths.

    ``pick`` chooses the smallest ("lowest") or largest ("highest") admissible id
    at each step of the backward pass.
    """
    choose = _picker(pick)
    bad = conditions_d3(alpha, eps)
    if bad:
        raise InfeasibleAlpha("conditions fail: " + "; ".join(bad))
    grids = build_grids_d3(levels, eps)
    last = grids[-1]
    box = ((0, 8 * last.n - 1), (0, last.H))
    spec = make_weight_spec(3, box, alpha_b, mem_cap)
    W = _weight_table(spec, 8 * last.n, last.H + 1) ** alpha

    # level sums for every path
    p_sums, q_sums, q_ids = [], [], []
    for g in grids:
        c0, c1 = g.p_columns
        p_sums.append(W[c0 : c1 + 1, : g.H + 1].sum(axis=0))
        ids = g.q_ids()
        q0, q1 = g.q_columns
        q_sums.append(np.bincount(ids.ravel(), weights=W[q0 : q1 + 1, : g.H + 1].T.ravel(), minlength=g.q_count))
        q_ids.append(ids)

    # A_1 large enough that every level-1 path of either kind is good
    g1 = grids[0]
    first0 = 10 ** (1 - alpha) / g1.n ** (3 * alpha - 1 + eps * alpha)
    second0 = 2 ** (1 - alpha) / g1.n ** (3 * alpha - 1 - eps * (1 - alpha))
    need = max(p_sums[0].max() / first0, q_sums[0].max() / second0)
    consts = compute_constants_d3(grids, alpha, eps, first_level_A=float(need) * (1 + 1e-9))

    def thresholds(k):
        g = grids[k]
        A = consts.A[k]
        return (
            A * 10 ** (1 - alpha) / g.n ** (3 * alpha - 1 + eps * alpha),
            A * 2 ** (1 - alpha) / g.n ** (3 * alpha - 1 - eps * (1 - alpha)),
        )

    # forward pass: reachable (and good) paths per level
    reach_p, reach_q = [], []
    ledger = []
    bound_q = 1.0
    prev_rows = None
    for k, g in enumerate(grids):
        t_first, t_second = thresholds(k)
        good_q = q_sums[k] <= t_second
        good_p = p_sums[k] <= t_first
        if prev_rows is None:
            rq = good_q
        else:
            hp = grids[k - 1].H
            ids_low = q_ids[k][: hp + 1]
            hit = np.zeros(g.q_count, dtype=bool)
            hit[ids_low[prev_rows[: hp + 1]].ravel()] = True
            rq = good_q & hit
            bound_q = 1 - ((1 - bound_p) * consts.s_prime[k] / consts.r_prime[k] + 1 / consts.A[k])
        # rows of P(n_k) meeting a reachable point of Q(n_k)
        meets = rq[q_ids[k]].any(axis=1)
        rp = good_p & meets
        if k == 0:
            bound_p = 1.0  # A_1 makes every level-1 path good
        else:
            bound_p = 1 - ((1 - bound_q) * consts.s[k] / consts.r[k] + 1 / consts.A[k])
        ledger.append(
            {
                "level": k + 1,
                "good_q": float(good_q.mean()),
                "good_p": float(good_p.mean()),
                "D_q": float(rq.mean()),
                "D_p": float(rp.mean()),
                "bound_q": bound_q,
                "bound_p": bound_p,
            }
        )
        reach_q.append(rq)
        reach_p.append(rp)
        prev_rows = rp
        if not rp.any():
            raise SelectionFailure(f"no reachable row at level {k + 1}", ledger)

    # backward pass: smallest ids
    chosen_p = [None] * levels
    chosen_q = [None] * levels
    h = choose(np.nonzero(reach_p[-1])[0])
    for k in range(levels - 1, -1, -1):
        g = grids[k]
        chosen_p[k] = h
        cand = np.unique(q_ids[k][h][reach_q[k][q_ids[k][h]]])
        pid = choose(cand)
        chosen_q[k] = pid
        if k == 0:
            break
        col, lab = g.q_path(pid)
        hp = grids[k - 1].H
        pts = g.q_points_of(pid, 0, hp)
        rows = pts[reach_p[k - 1][pts]]
        h = choose(rows)

    records = []
    for k, g in enumerate(grids):
        t_first, t_second = thresholds(k)
        col, lab = g.q_path(chosen_q[k])
        q_pts = [(col, int(hh)) for hh in g.q_points_of(chosen_q[k])]
        p_pts = [(c, chosen_p[k]) for c in range(g.p_columns[0], g.p_columns[1] + 1)]
        lk = ledger[k]
        records.append(
            LevelRecord(k + 1, "Q", g.n, {"column": col, "label": lab, "id": chosen_q[k]}, canonical_sum(spec, q_pts, alpha), t_second, consts.A[k], lk["good_q"], lk["D_q"], lk["bound_q"])
        )
        records.append(
            LevelRecord(k + 1, "P", g.n, {"row": chosen_p[k], "id": chosen_p[k]}, canonical_sum(spec, p_pts, alpha), t_first, consts.A[k], lk["good_p"], lk["D_p"], lk["bound_p"])
        )
    state = SelectionState(3, alpha, eps, spec, consts, records, grids=grids)
    for rec in records:
        if rec.path_sum > rec.threshold:
            raise SelectionFailure(f"level {rec.level} {rec.kind}: canonical sum exceeds its threshold", ledger)
    return state


# --- general d selection ---------------------------------------------------------------------


def compute_constants_general(
    f: ParallelepipedFamily, alpha: float, n_max: int, mem_cap: int = DEFAULT_MEM_CAP
) -> Constants:
    d = f.d
    beta = d * alpha / 2 - 1 / (d - 1)
    if beta <= 0:
        raise InfeasibleAlpha(f"d alpha / 2 - 1/(d-1) = {beta:.4g} <= 0: C diverges")
    r, s, rp, sp = [], [], [], []
    for n in range(1, n_max):
        inter = f.intersection(n)
        pts = _enumerate(inter, mem_cap)
        a = partition_level(f, n)
        b = partition_level(f, n + 1)
        ca = np.bincount(a.path_ids(pts))
        cb = np.bincount(b.path_ids(pts))
        ca, cb = ca[ca > 0], cb[cb > 0]
        r.append(int(ca.min()))
        s.append(int(ca.max()))
        rp.append(int(cb.min()))
        sp.append(int(cb.max()))
    B = _ratio_product(r, s, rp, sp)
    C = 2.0 / (2.0**beta - 1.0)
    env = f.envelope
    C5 = min(partition_level(f, n).path_count / 4.0 ** (n * (d / 2 - 1 / (d - 1))) for n in range(1, n_max + 1))
    C6 = env["C2"] ** ((d - 1) * (1 - alpha)) / C5
    A = [B * C * 2**beta] + [B * C * 2 ** (n * beta) for n in range(2, n_max + 1)]
    return Constants(alpha, beta, B, C, A, r, s, rp, sp, None, C6, [])


def select_paths_general(
    d: int,
    alpha: float,
    n_max: int,
    alpha_b: float | None = None,
    mem_cap: int = DEFAULT_MEM_CAP,
) -> SelectionState:
    """Chain of intersecting paths in Q(1), ..., Q(n_max) by exact enumeration."""
    f = build_parallelepipeds(d, n_max)
    for n in range(1, n_max + 1):
        if f.size(n) > mem_cap:
            raise ResourceLimit(f"Q({n}) has {f.size(n)} points, above the cap {mem_cap}")
    if alpha_b is None:
        alpha_b = 0.9 * 2 / (d * (d - 1))
    hull = [(min(f.lower[n][k] for n in range(1, n_max + 1)), max(f.upper[n][k] for n in range(1, n_max + 1))) for k in range(d - 1)]
    # normalise over the union of the levels, enumerated level by level
    scheme = choose_exponents_b(d, alpha_b)
    unit = WeightSpec(scheme, 1.0, tuple(hull))
    total = 0.0
    parts = []
    for n in range(1, n_max + 1):
        pts = _enumerate(f.bounds(n), mem_cap)
        if n > 1:
            # drop points already counted at earlier levels
            keep = np.ones(len(pts), dtype=bool)
            for m in range(1, n):
                inside = np.ones(len(pts), dtype=bool)
                for k, (x, y) in enumerate(f.bounds(m)):
                    inside &= (pts[:, k] >= x) & (pts[:, k] <= y)
                keep &= ~inside
            pts = pts[keep]
        parts.append(math.fsum(unit.raw(pts).tolist()))
    total = math.fsum(parts)
    spec = WeightSpec(scheme, total, tuple(hull))
    consts = compute_constants_general(f, alpha, n_max, mem_cap)

    level_pts, level_ids, sums, reach = [], [], [], []
    ledger = []
    bound = 1.0
    for n in range(1, n_max + 1):
        lp = partition_level(f, n)
        pts = _enumerate(f.bounds(n), mem_cap)
        ids = lp.path_ids(pts)
        w = spec.weights(pts) ** alpha
        s = np.bincount(ids, weights=w, minlength=lp.path_count)
        present = np.bincount(ids, minlength=lp.path_count) > 0
        if n == 1:
            base = consts.C6 / 4.0 ** consts.exponent
            consts.A[0] = max(consts.A[0], float(s.max() / base) * (1 + 1e-9))
        thr = consts.A[n - 1] * consts.C6 / 4.0 ** (n * consts.exponent)
        good = (s <= thr) & present
        if n == 1:
            rq = good
        else:
            inter = f.intersection(n - 1)
            inside = np.ones(len(pts), dtype=bool)
            for k, (x, y) in enumerate(inter):
                inside &= (pts[:, k] >= x) & (pts[:, k] <= y)
            prev_lp = partition_level(f, n - 1)
            prev_ids = prev_lp.path_ids(pts[inside])
            hit_pts = reach[-1][prev_ids]
            hit = np.zeros(lp.path_count, dtype=bool)
            hit[ids[inside][hit_pts]] = True
            rq = good & hit
            k = n - 2
            bound = 1 - ((1 - bound) * consts.s[k] / consts.r[k] * consts.s_prime[k] / consts.r_prime[k] + 1 / consts.A[n - 2])
        n_present = int(present.sum())
        ledger.append({"level": n, "good": float(good.sum() / n_present), "D": float(rq.sum() / n_present), "bound": bound, "threshold": thr})
        level_pts.append(pts)
        level_ids.append(ids)
        sums.append(s)
        reach.append(rq)
        if not rq.any():
            raise SelectionFailure(f"no reachable path at level {n}", ledger)

    chosen = [None] * n_max
    chosen[-1] = int(np.nonzero(reach[-1])[0][0])
    for n in range(n_max - 1, 0, -1):
        pts, ids = level_pts[n], level_ids[n]
        on_path = pts[ids == chosen[n]]
        prev_lp = partition_level(f, n)
        inter = f.intersection(n)
        inside = np.ones(len(on_path), dtype=bool)
        for k, (x, y) in enumerate(inter):
            inside &= (on_path[:, k] >= x) & (on_path[:, k] <= y)
        cand = prev_lp.path_ids(on_path[inside])
        cand = cand[reach[n - 1][cand]]
        chosen[n - 1] = int(cand.min())

    records = []
    for n in range(1, n_max + 1):
        pts, ids = level_pts[n - 1], level_ids[n - 1]
        on_path = pts[ids == chosen[n - 1]]
        lp = partition_level(f, n)
        lk = ledger[n - 1]
        records.append(
            LevelRecord(
                n, "L", n, {"id": chosen[n - 1], "direction": lp.direction, "start": on_path[0].tolist(), "points": len(on_path)},
                canonical_sum(spec, on_path.tolist(), alpha), lk["threshold"], consts.A[n - 1], lk["good"], lk["D"], lk["bound"],
            )
        )
    state = SelectionState(d, alpha, None, spec, consts, records, parallelepipeds=f)
    for rec in records:
        if rec.path_sum > rec.threshold:
            raise SelectionFailure(f"level {rec.level}: canonical sum exceeds its threshold", ledger)
    return state


# --- L_alpha sums ----------------------------------------------------------------------------


def lalpha_sum(trajectory, weight_of, alpha: float) -> np.ndarray:
    """Partial sums S_0 = 0, S_k = sum of weight^alpha over the first k points."""
    out = np.zeros(len(trajectory) + 1)
    acc = 0.0
    for k, p in enumerate(trajectory, start=1):
        acc += math.pow(weight_of(p), alpha)
        out[k] = acc
    return out


# --- trajectories and words -------------------------------------------------------------------


@dataclass
class Realization:
    trajectory: np.ndarray  # (L, d-1) points, pairwise distinct
    levels: np.ndarray  # level of each point (0 for the approach from the origin)
    word: GeneratorWord
    start_index: int  # position of the first point of the first chosen path


def loop_erase(points: list[tuple], levels: list[int]) -> tuple[list[tuple], list[int]]:
    out: list[tuple] = []
    lev: list[int] = []
    where: dict = {}
    for p, l in zip(points, levels):
        if p in where:
            cut = where[p]
            for q in out[cut + 1 :]:
                del where[q]
            del out[cut + 1 :]
            del lev[cut + 1 :]
            continue
        where[p] = len(out)
        out.append(p)
        lev.append(l)
    return out, lev


def letter_for_step(a: Sequence[int], b: Sequence[int]) -> Letter:
    """Generator of one lattice step: unit step in direction i is f_{i+1,1}, a step of
    amplitude a_{i-1} in direction i is f_{i+1,i}."""
    diff = [y - x for x, y in zip(a, b)]
    moved = [k for k, v in enumerate(diff) if v != 0]
    if len(moved) != 1:
        raise RealizationError(f"step {a} -> {b} moves {len(moved)} coordinates")
    k = moved[0]
    step = diff[k]
    if abs(step) == 1:
        return Letter(k + 2, 1, step)
    if k >= 1 and a[k - 1] != 0 and abs(step) == abs(a[k - 1]):
        sign = step // a[k - 1]
        return Letter(k + 2, k + 1, sign)
    raise RealizationError(f"step {a} -> {b} is neither a unit nor an amplitude-{a[k - 1] if k else '-'} jump")


def _segment(points: np.ndarray, start, stop) -> list[int]:
    """Points of a sorted path from ``start`` to ``stop`` (both on it), in travel order."""
    lo, hi = min(start, stop), max(start, stop)
    sel = points[(points >= lo) & (points <= hi)].tolist()
    return sel if start <= stop else sel[::-1]


def realize_word(state: SelectionState) -> Realization:
    if state.d != 3 or not state.grids:
        return realize_word_general(state)
    grids = state.grids
    recs = {(r.level, r.kind): r for r in state.records}
    pts: list[tuple] = [(0, 0)]
    levels: list[int] = [0]
    q1 = recs[(1, "Q")].path
    col = q1["column"]
    g1 = grids[0]
    start = int(g1.q_points_of(q1["id"])[0])
    for c in range(1, col + 1):
        pts.append((c, 0))
        levels.append(0)
    for h in range(1, start + 1):
        pts.append((col, h))
        levels.append(0)
    start_point = (col, start)
    cur_h = start
    for k, g in enumerate(grids, start=1):
        q = recs[(k, "Q")].path
        row = recs[(k, "P")].path["row"]
        col = q["column"]
        path = g.q_points_of(q["id"])
        seg = _segment(path, cur_h, row)
        for h in seg[1:] if seg and seg[0] == cur_h else seg:
            pts.append((col, h))
            levels.append(k)
        # along the row to the next chosen column, or to the end of the last row
        nxt = recs[(k + 1, "Q")].path["column"] if k < len(grids) else g.p_columns[1]
        for c in range(col + 1, nxt + 1):
            pts.append((c, row))
            levels.append(k)
        cur_h = row
    erased, lev = loop_erase(pts, levels)
    word = GeneratorWord(tuple(letter_for_step(a, b) for a, b in zip(erased, erased[1:])))
    traj = np.array(erased, dtype=np.int64)
    real = Realization(traj, np.array(lev), word, erased.index(start_point) if start_point in erased else 0)
    check_realization(real)
    return real


def realize_word_general(state: SelectionState) -> Realization:
    """Concatenate the chosen paths of a general-d selection into one trajectory."""
    f = state.parallelepipeds
    d = state.d
    pieces = []
    for rec in state.records:
        n = rec.level
        lp = partition_level(f, n)
        pts = _enumerate(f.bounds(n), DEFAULT_MEM_CAP)
        on = pts[lp.path_ids(pts) == rec.path["id"]]
        i = lp.direction - 1
        on = on[np.argsort(on[:, i], kind="stable")]
        pieces.append((n, on, i))
    start = tuple(int(v) for v in pieces[0][1][0])
    traj: list[tuple] = [tuple([0] * (d - 1))]
    levels = [0]
    cur = list(traj[0])
    for k in range(d - 1):  # approach the start with unit steps
        while cur[k] != start[k]:
            cur[k] += 1 if start[k] > cur[k] else -1
            traj.append(tuple(cur))
            levels.append(0)
    for idx, (n, on, i) in enumerate(pieces):
        coords = on[:, i]
        if idx + 1 < len(pieces):
            # leave at a point shared with the next path
            nxt = {tuple(p) for p in pieces[idx + 1][1].tolist()}
            exit_pt = next(tuple(p) for p in on.tolist() if tuple(p) in nxt)
            stop = exit_pt[i]
        else:
            stop = int(coords[-1])
        seg = _segment(coords, cur[i], stop)
        base = list(on[0])
        for c in seg:
            base[i] = int(c)
            p = tuple(base)
            if p != traj[-1]:
                traj.append(p)
                levels.append(n)
        cur = list(traj[-1])
    erased, lev = loop_erase(traj, levels)
    word = GeneratorWord(tuple(letter_for_step(a, b) for a, b in zip(erased, erased[1:])))
    real = Realization(np.array(erased, dtype=np.int64), np.array(lev), word, erased.index(start) if start in erased else 0)
    check_realization(real)
    return real


def check_realization(real: Realization) -> None:
    """Replay the word letter by letter and through matrices; both must retrace the trajectory."""
    traj = [tuple(int(v) for v in p) for p in real.trajectory]
    if len(set(traj)) != len(traj):
        raise RealizationError("trajectory revisits a point")
    dim = len(traj[0])
    cur = traj[0]
    for k, let in enumerate(real.word.letters):
        cur = evaluate_word(GeneratorWord((let,)), cur)
        e = elementary(dim, let.i, let.j)
        via_matrix = act_on_index(e if let.sign > 0 else e.inverse(), traj[k])
        if cur != traj[k + 1] or via_matrix != traj[k + 1]:
            raise RealizationError(f"letter {k} does not reproduce step {traj[k]} -> {traj[k + 1]}")
    whole = act_on_index(real.word.matrix(dim), traj[0])
    if whole != traj[-1]:
        raise RealizationError("word matrix does not reproduce the endpoint")


def level_contributions(real: Realization, spec: WeightSpec, alpha: float) -> dict[int, float]:
    out: dict[int, list[float]] = {}
    for p, l in zip(real.trajectory.tolist(), real.levels.tolist()):
        out.setdefault(int(l), []).append(math.pow(canonical_weight(spec, p), alpha))
    return {k: math.fsum(v) for k, v in sorted(out.items())}


# --- certificates --------------------------------------------------------------------------

CERT_HEADER = "nilreg-selection-certificate v1"


def _hex(x: float) -> str:
    return float(x).hex()


def _runs(seq) -> list[tuple]:
    runs: list[list] = []
    for g in seq:
        if runs and runs[-1][0] == g:
            runs[-1][1] += 1
        else:
            runs.append([g, 1])
    return [tuple(r) for r in runs]


def encode_word(word: GeneratorWord) -> str:
    toks = [(let.i, let.j, let.sign) for let in word.letters]
    return " ".join(f"{i}{j}{'+' if s > 0 else '-'}{c}" for (i, j, s), c in _runs(toks))


def decode_word(text: str) -> GeneratorWord:
    letters = []
    for tok in text.split():
        i, j, sign, count = int(tok[0]), int(tok[1]), 1 if tok[2] == "+" else -1, int(tok[3:])
        letters.extend([Letter(i, j, sign)] * count)
    return GeneratorWord(tuple(letters))


def write_certificate(state: SelectionState, real: Realization) -> str:
    """Text certificate of a d = 3 selection: every number a verifier needs, floats in hex."""
    if state.d != 3 or not state.grids:
        raise ValueError("certificates are written for d = 3 selections")
    c = state.constants
    spec = state.weights
    lines = [
        CERT_HEADER,
        f"params d=3 alpha={state.alpha!r} eps={state.eps!r} levels={len(state.grids)}",
        f"weights alpha_b={spec.scheme.alpha!r} p={','.join(str(exact(p)) for p in spec.scheme.p)} "
        f"box={spec.box[0][1]},{spec.box[1][1]} Z={_hex(spec.Z)}",
        f"constants gamma={_hex(c.exponent)} B={_hex(c.B)} C={_hex(c.C)} A={','.join(_hex(a) for a in c.A)}",
    ]
    recs = {(r.level, r.kind): r for r in state.records}
    for k, g in enumerate(state.grids, start=1):
        q, p = recs[(k, "Q")], recs[(k, "P")]
        col, lab = q.path["column"], q.path["label"]
        pts = g.q_points_of(q.path["id"])
        word = " ".join(f"{gap}x{cnt}" for gap, cnt in _runs(np.diff(pts).tolist()))
        lines.append(
            f"level {k} n={g.n} H={g.H} A={_hex(c.A[k - 1])} first={_hex(p.threshold)} second={_hex(q.threshold)} "
            f"P_row={p.path['row']} P_sum={_hex(p.path_sum)} "
            f"Q_col={col} Q_label={lab} Q_start={int(pts[0])} Q_sum={_hex(q.path_sum)} "
            f"D_Q={_hex(q.density)} D_P={_hex(p.density)} bound_Q={_hex(q.ledger_bound)} bound_P={_hex(p.ledger_bound)}"
        )
        lines.append(f"qword {k} {word}")
    traj_sum = math.fsum(math.pow(canonical_weight(spec, pt), state.alpha) for pt in real.trajectory.tolist())
    end = real.trajectory[-1].tolist()
    lines.append(f"trajectory length={len(real.trajectory)} end={end[0]},{end[1]} start_index={real.start_index} L_alpha={_hex(traj_sum)}")
    lines.append(f"word {encode_word(real.word)}")
    lines.append(f"bound total={_hex(math.fsum(state.level_sums))} closed_form={_hex(state.closed_form_bound())}")
    body = "\n".join(lines) + "\n"
    return body + f"digest sha256={hashlib.sha256(body.encode()).hexdigest()}\n"


def _kv(tokens: Sequence[str]) -> dict[str, str]:
    return dict(t.split("=", 1) for t in tokens if "=" in t)


def parse_certificate(text: str) -> dict:
    lines = text.splitlines()
    if not lines or lines[0] != CERT_HEADER:
        raise ValueError("not a selection certificate (bad header)")
    out: dict = {"levels": {}, "qwords": {}}
    for line in lines[1:]:
        head, *rest = line.split(" ", 1)
        rest = rest[0] if rest else ""
        if head == "level":
            k, *toks = rest.split()
            out["levels"][int(k)] = _kv(toks)
        elif head == "qword":
            k, _, word = rest.partition(" ")
            out["qwords"][int(k)] = word
        elif head == "word":
            out["word"] = rest
        else:
            out[head] = _kv(rest.split())
    return out


@dataclass
class VerificationReport:
    checks: list[tuple[str, bool, str]]

    @property
    def ok(self) -> bool:
        return bool(self.checks) and all(ok for _, ok, _ in self.checks)

    def failures(self) -> list[str]:
        return [f"{name}: {detail}" for name, ok, detail in self.checks if not ok]


def verify_certificate(text: str, recompute_normaliser: bool = True) -> VerificationReport:
    """Recheck a certificate from scratch: paths are walked from their starts, every sum is
    redone by exhaustive canonical summation and compared bit for bit."""
    from .path_decomposition import build_paths

    checks: list[tuple[str, bool, str]] = []

    def check(name, ok, detail="", failure=None):
        checks.append((name, bool(ok), detail if ok or failure is None else failure))
        return ok

    body, _, last = text.rstrip("\n").rpartition("\n")
    body += "\n"
    try:
        cert = parse_certificate(text)
    except (ValueError, IndexError) as exc:
        return VerificationReport([("parse", False, str(exc))])
    digest = last.split("sha256=")[-1] if last.startswith("digest") else ""
    if not check("digest", digest == hashlib.sha256(body.encode()).hexdigest(), "sha256", failure="sha256 mismatch"):
        return VerificationReport(checks)
    try:
        prm = cert["params"]
        alpha, eps, K = float(prm["alpha"]), float(prm["eps"]), int(prm["levels"])
        w = cert["weights"]
        alpha_b = float(w["alpha_b"])
        scheme = choose_exponents_b(3, alpha_b)
        stored_p = tuple(Fraction(t) for t in w["p"].split(","))
        check("weight exponents", stored_p == tuple(exact(p) for p in scheme.p), str(stored_p))
        cols, rows = (int(t) for t in w["box"].split(","))
        spec = WeightSpec(scheme, float.fromhex(w["Z"]), ((0, cols), (0, rows)))
        if recompute_normaliser:
            z = make_weight_spec(3, spec.box, alpha_b, mem_cap=max(DEFAULT_MEM_CAP, (cols + 1) * (rows + 1))).Z
            check("normaliser", z == spec.Z, f"{z!r} vs {spec.Z!r}")
        cst = cert["constants"]
        gamma = float.fromhex(cst["gamma"])
        B, C = float.fromhex(cst["B"]), float.fromhex(cst["C"])
        A = [float.fromhex(t) for t in cst["A"].split(",")]
        check("gamma", math.isclose(gamma, 3 * alpha - 1 - eps * (1 - alpha), rel_tol=1e-12), repr(gamma))
        check("C", math.isclose(C, 4 / (2**gamma - 1), rel_tol=1e-12), repr(C))
        check("A_1", A[0] >= 2 ** (2 + gamma) * B * C * (1 - 1e-12), repr(A[0]))
        for k in range(2, K + 1):
            check(f"A_{k}", math.isclose(A[k - 1], B * C * 2 ** (k * gamma), rel_tol=1e-12), repr(A[k - 1]))

        prev_row = None
        level_total = []
        for k in range(1, K + 1):
            lv = cert["levels"][k]
            n, H = 4**k, height(4**k, eps)
            check(f"level {k} size", int(lv["n"]) == n and int(lv["H"]) == H, f"n={lv['n']} H={lv['H']}")
            Ak = float.fromhex(lv["A"])
            first = Ak * 10 ** (1 - alpha) / n ** (3 * alpha - 1 + eps * alpha)
            second = Ak * 2 ** (1 - alpha) / n ** (3 * alpha - 1 - eps * (1 - alpha))
            check(f"level {k} thresholds", Ak == A[k - 1] and math.isclose(first, float.fromhex(lv["first"]), rel_tol=1e-12)
                  and math.isclose(second, float.fromhex(lv["second"]), rel_tol=1e-12))
            # P row: exhaustive sum along columns n..8n-1
            h = int(lv["P_row"])
            check(f"level {k} P row inside", 0 <= h <= H, str(h))
            p_sum = canonical_sum(spec, [(c, h) for c in range(n, 8 * n)], alpha)
            check(f"level {k} P sum", p_sum == float.fromhex(lv["P_sum"]), f"{p_sum!r}")
            check(f"level {k} P good", p_sum <= first, f"{p_sum} vs {first}")
            # Q path: walk from the start with the stored jumps
            m, lab, start = int(lv["Q_col"]), int(lv["Q_label"]), int(lv["Q_start"])
            check(f"level {k} Q column", n <= m <= 2 * n - 1, str(m))
            walk = [start]
            for tok in cert["qwords"][k].split():
                gap, cnt = (int(t) for t in tok.split("x"))
                check(f"level {k} Q jump", gap in (1, m), str(gap))
                for _ in range(cnt):
                    walk.append(walk[-1] + gap)
            fam = build_paths(n, m, "simple")
            expect = fam.points(lab, H)
            check(f"level {k} Q path", walk == expect.tolist(), f"{len(walk)} walked vs {len(expect)} points")
            q_sum = canonical_sum(spec, [(m, v) for v in walk], alpha)
            check(f"level {k} Q sum", q_sum == float.fromhex(lv["Q_sum"]), f"{q_sum!r}")
            check(f"level {k} Q good", q_sum <= second, f"{q_sum} vs {second}")
            check(f"level {k} Q meets P", h in set(walk), f"row {h}")
            if prev_row is not None:
                check(f"level {k} Q meets previous P", prev_row in set(walk) and prev_row <= height(4 ** (k - 1), eps), f"row {prev_row}")
            for key in ("D_Q", "D_P", "bound_Q", "bound_P"):
                val = float.fromhex(lv[key])
                check(f"level {k} {key} >= 1/2", val >= 0.5, repr(val))
            prev_row = h
            level_total += [p_sum, q_sum]

        # word replay
        word = decode_word(cert["word"])
        tr = cert["trajectory"]
        cur = (0, 0)
        seen = {cur}
        traj = [cur]
        for let in word.letters:
            cur = evaluate_word(GeneratorWord((let,)), cur)
            traj.append(cur)
            seen.add(cur)
        end = tuple(int(t) for t in tr["end"].split(","))
        last_level = cert["levels"][K]
        check("word length", len(traj) == int(tr["length"]), f"{len(traj)}")
        check("word simple", len(seen) == len(traj), "", failure="trajectory revisits a point")
        check("word end", cur == end == (8 * 4**K - 1, int(last_level["P_row"])), f"{cur}")
        check("word matrix", act_on_index(word.matrix(2), (0, 0)) == end, "", failure="matrix replay differs")
        first_q = cert["levels"][1]
        check("word start", traj[int(tr["start_index"])] == (int(first_q["Q_col"]), int(first_q["Q_start"])), "", failure="start point differs")
        la = math.fsum(math.pow(canonical_weight(spec, p), alpha) for p in traj)
        check("trajectory L_alpha", la == float.fromhex(tr["L_alpha"]), f"{la!r}")
        bd = cert["bound"]
        total = math.fsum(level_total)
        closed = 80 * A[0] * 4 ** (eps * (1 - alpha)) + 40 * B * C**2
        check("level total", total == float.fromhex(bd["total"]), repr(total))
        check("closed form", math.isclose(closed, float.fromhex(bd["closed_form"]), rel_tol=1e-12), repr(closed))
        check("total bound", total <= closed, f"{total} vs {closed}")
    except (KeyError, ValueError, IndexError) as exc:
        check("format", False, f"{type(exc).__name__}: {exc}")
    return VerificationReport(checks)
