"""Interval length schemes, exponent feasibility and truncated interval families.

Two schemes are supported:

* scheme B on Z^d with ``|I_v| = 1 / (sum_j |v_j|^{p_j} + 1)``;
* scheme C on Z^2 with ``|I_{i,j}| = 1 / (|i|^p + |j|^q + 1)`` and ``p = (2q-1)/(q-1)``.

Feasibility checks run in exact rational arithmetic on the decimal value of each
input, so conditions that hold with equality are not lost to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np
from scipy.special import hyp2f1

Number = Union[int, float, Fraction]


class InfeasibleExponent(ValueError):
    def __init__(self, message: str, violated: Sequence[str] = ()):
        super().__init__(message)
        self.violated = list(violated)


def exact(x: Number) -> Fraction:
    """Rational value of ``x``; floats are read through their shortest repr."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(repr(float(x)))


# --- scheme B ----------------------------------------------------------------


@dataclass(frozen=True)
class LengthSchemeB:
    d: int
    alpha: Number
    p: tuple[Number, ...]

    @property
    def exponents(self) -> np.ndarray:
        return np.array([float(x) for x in self.p])

    @property
    def fiber_exponent(self) -> float:
        return float(self.p[-1])


def critical_alpha(d: int) -> Fraction:
    return Fraction(2, d * (d - 1))


def validate_b(s: LengthSchemeB) -> list[str]:
    """Names of the violated conditions among (i_B)..(v_B); empty when all hold."""
    d = s.d
    a = exact(s.alpha)
    p = [exact(x) for x in s.p]
    if len(p) != d:
        return ["(i_B)"]
    bad = []
    if not (all(p[j] > p[j + 1] for j in range(d - 1)) and p[-1] > 1):
        bad.append("(i_B)")
    if any(x <= 0 for x in p):
        # the remaining conditions need positive exponents to make sense
        return bad + ["(ii_B)", "(iii_B)", "(iv_B)", "(v_B)"]
    if not sum(1 / x for x in p) < 1:
        bad.append("(ii_B)")
    pd = p[-1]
    factor = pd / (pd - 1) if pd != 1 else None
    if factor is None or not a <= factor / p[0]:
        bad.append("(iii_B)")
    # indices here are 0-based: p[j] is p_{j+1}
    if factor is None or any(not a <= factor * (1 / p[j] - 1 / p[j - 1]) for j in range(1, d - 1)):
        bad.append("(iv_B)")
    if d < 2 or not a <= 1 / pd - 1 / p[d - 2]:
        bad.append("(v_B)")
    return bad


def choose_exponents_b(d: int, alpha: Number) -> LengthSchemeB:
    """Concrete choice p_d = 5/4 and p_j = 5/(j alpha) for j < d."""
    if d < 2:
        raise ValueError("d must be at least 2")
    a = exact(alpha)
    if not 0 < a < critical_alpha(d):
        # report which conditions the formula would break
        violated = []
        if a > 0:
            probe = LengthSchemeB(d, alpha, tuple([Fraction(5) / (j * a) for j in range(1, d)] + [Fraction(5, 4)]))
            violated = validate_b(probe)
        raise InfeasibleExponent(
            f"alpha={alpha} is outside (0, 2/(d(d-1))) = (0, {critical_alpha(d)}) for d={d}",
            violated or ["(ii_B)"],
        )
    p = tuple([Fraction(5) / (j * a) for j in range(1, d)] + [Fraction(5, 4)])
    s = LengthSchemeB(d, alpha, p)
    bad = validate_b(s)
    if bad:
        raise InfeasibleExponent(f"concrete exponents fail {bad}", bad)
    return s


def infeasibility_witness(d: int, alpha: Number, pd: Number) -> Fraction:
    """Lower bound for sum 1/p_j implied by (iii_B) and (iv_B).

    Chaining the two conditions gives 1/p_j >= j alpha (p_d - 1)/p_d; a value
    of at least 1 contradicts (ii_B).
    """
    a, pd = exact(alpha), exact(pd)
    return a * (pd - 1) * d * (d - 1) / (2 * pd) + 1 / pd


# --- scheme C ----------------------------------------------------------------


@dataclass(frozen=True)
class LengthSchemeC:
    d: int
    alpha: Number
    q: Number

    @property
    def p(self) -> Fraction:
        q = exact(self.q)
        return (2 * q - 1) / (q - 1)

    @property
    def exponents(self) -> np.ndarray:
        return np.array([float(self.p), float(self.q)])

    @property
    def fiber_exponent(self) -> float:
        return float(self.q)


def validate_c(s: LengthSchemeC) -> list[str]:
    a, q, d = exact(s.alpha), exact(s.q), s.d
    bad = []
    if not 1 < q < 2:
        # p is undefined or meaningless outside this range
        return ["(i_C)", "(ii_C)", "(iii_C)", "(iv_C)", "(v_C)", "(vi_C)", "(vii_C)"]
    p = (2 * q - 1) / (q - 1)
    if not a < 2 - q:
        bad.append("(ii_C)")
    if not a < q / (2 * q - 1):
        bad.append("(iii_C)")
    if not a < 1 / q:
        bad.append("(iv_C)")
    if not p > d * q:
        bad.append("(v_C)")
    if not a <= 1 / q - d / p:
        bad.append("(vi_C)")
    if not a < 1 / (q - 1) - d * q / (2 * q - 1):
        bad.append("(vii_C)")
    return bad


def choose_exponents_c(d: int, alpha: Number, max_iter: int = 40) -> LengthSchemeC:
    """Start at q = 1 + 1/2 and halve the offset until (i_C)..(vii_C) hold."""
    a = exact(alpha)
    if not 0 < a < 1:
        raise InfeasibleExponent(f"alpha={alpha} must lie in (0, 1)", ["(iv_C)"])
    offset = Fraction(1, 2)
    bad: list[str] = []
    for _ in range(max_iter):
        s = LengthSchemeC(d, alpha, 1 + offset)
        bad = validate_c(s)
        if not bad:
            return s
        offset /= 2
    raise InfeasibleExponent(f"no q found after {max_iter} halvings", bad)


# --- lengths -----------------------------------------------------------------


Scheme = Union[LengthSchemeB, LengthSchemeC]


def length_b(s: LengthSchemeB, v: Sequence[int]) -> float:
    return 1.0 / (sum(abs(x) ** float(pj) for x, pj in zip(v, s.p)) + 1.0)


def length_c(s: LengthSchemeC, i: int, j: int) -> float:
    return 1.0 / (abs(i) ** float(s.p) + abs(j) ** float(s.q) + 1.0)


def denominators(s: Scheme, idx: np.ndarray) -> np.ndarray:
    """Vectorised ``1/|I_v|`` for rows of an integer index array."""
    idx = np.atleast_2d(np.asarray(idx))
    ex = s.exponents
    return np.abs(idx).astype(float) ** ex @ np.ones(len(ex)) + 1.0


def lengths(s: Scheme, idx: np.ndarray) -> np.ndarray:
    return 1.0 / denominators(s, idx)


def log_lengths(s: Scheme, idx: np.ndarray) -> np.ndarray:
    return -np.log(denominators(s, idx))


# --- fiber sums ----------------------------------------------------------------


def _unit_tail_integral(b: np.ndarray, p: float) -> np.ndarray:
    """F(b) = integral from b to infinity of du / (1 + u^p)."""
    b = np.asarray(b, dtype=float)
    out = np.empty_like(b)
    small = b < 1.0
    total = (math.pi / p) / math.sin(math.pi / p)
    bs = b[small]
    out[small] = total - bs * hyp2f1(1.0, 1.0 / p, 1.0 + 1.0 / p, -(bs**p))
    t = 1.0 / b[~small]
    e = (p - 1.0) / p
    out[~small] = t ** (p - 1.0) / (p - 1.0) * hyp2f1(1.0, e, 1.0 + e, -(t**p))
    return out


def tail_sum(c: np.ndarray, p: float, start: int, explicit: int = 128) -> np.ndarray:
    """Sum over j >= start of 1/(c + j^p), for c >= 1 and p > 1.

    The first ``explicit`` terms are added directly; the rest uses the
    Euler-Maclaurin formula with the integral in closed form.
    """
    c = np.asarray(c, dtype=float)
    js = np.arange(start, start + explicit, dtype=float)
    head = (1.0 / (c[..., None] + js**p)).sum(axis=-1)
    m = float(start + explicit)
    scale = c ** (1.0 / p)
    integral = c ** (1.0 / p - 1.0) * _unit_tail_integral(m / scale, p)
    g = 1.0 / (c + m**p)
    dg = -p * m ** (p - 1.0) * g * g
    return head + integral + 0.5 * g - dg / 12.0


def fiber_total(c: np.ndarray, p: float) -> np.ndarray:
    """Sum over all j in Z of 1/(c + |j|^p)."""
    c = np.asarray(c, dtype=float)
    return 1.0 / c + 2.0 * tail_sum(c, p, 1)


def projected_weights_b(s: LengthSchemeB, points: np.ndarray) -> np.ndarray:
    """Total length of the fiber over each point of Z^{d-1} (last coordinate summed)."""
    pts = np.atleast_2d(np.asarray(points))
    c = np.abs(pts).astype(float) ** s.exponents[:-1] @ np.ones(s.d - 1) + 1.0
    return fiber_total(c, s.fiber_exponent)


# --- truncated families ------------------------------------------------------


def _box(box, dim: int) -> tuple[tuple[int, int], ...]:
    if isinstance(box, int):
        return tuple((-box, box) for _ in range(dim))
    box = tuple((int(lo), int(hi)) for lo, hi in box)
    if len(box) != dim:
        raise ValueError(f"box has {len(box)} ranges for dimension {dim}")
    return box


def compensated_cumsum(values: np.ndarray) -> np.ndarray:
    """Exclusive prefix sums with Neumaier compensation."""
    out = np.empty(len(values))
    s = 0.0
    comp = 0.0
    for k, v in enumerate(values.tolist()):
        out[k] = s + comp
        t = s + v
        if abs(s) >= abs(v):
            comp += (s - t) + v
        else:
            comp += (v - t) + s
        s = t
    return out


@dataclass
class IntervalFamily:
    """Lexicographically concatenated intervals over a truncation box.

    Rows are in lexicographic order of ``indices``; the last coordinate varies
    fastest, so each fiber (fixed leading coordinates) is a contiguous block.
    With ``tails`` each fiber is padded on both sides by the total length of
    the intervals the box cuts away, which keeps fiber geometry faithful to
    the untruncated family. Point locations are kept hierarchical (fiber,
    offset inside the fiber, offset inside the interval) because interval
    lengths can be far below the spacing of floats near the global position.
    """

    scheme: Scheme
    box: tuple[tuple[int, int], ...]
    indices: np.ndarray
    lengths: np.ndarray
    log_lengths: np.ndarray
    fiber_of: np.ndarray
    local_left: np.ndarray
    fiber_left: np.ndarray
    fiber_tail_left: np.ndarray
    fiber_tail_right: np.ndarray
    fiber_box_length: np.ndarray
    total: float
    scale: float = 1.0
    tails: bool = False
    strides: np.ndarray = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.lengths)

    @property
    def dim(self) -> int:
        return self.indices.shape[1]

    @property
    def fiber_total(self) -> np.ndarray:
        return self.fiber_tail_left + self.fiber_box_length + self.fiber_tail_right

    @property
    def left(self) -> np.ndarray:
        f = self.fiber_of
        return self.fiber_left[f] + self.fiber_tail_left[f] + self.local_left

    @property
    def right(self) -> np.ndarray:
        return self.left + self.lengths

    def row_of(self, idx: np.ndarray) -> np.ndarray:
        """Row numbers for index tuples; -1 where the index leaves the box."""
        idx = np.atleast_2d(np.asarray(idx, dtype=np.int64))
        lo = np.array([b[0] for b in self.box])
        hi = np.array([b[1] for b in self.box])
        inside = np.all((idx >= lo) & (idx <= hi), axis=1)
        rows = ((idx - lo) * self.strides).sum(axis=1)
        return np.where(inside, rows, -1)

    def position(self, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Global coordinate of local point u in [0, 1] of each row (lossy)."""
        return self.left[rows] + u * self.lengths[rows]

    def distance(self, ra, ua, rb, ub) -> np.ndarray:
        """Accurate |x - y| for points given as (row, local fraction)."""
        ra, rb = np.asarray(ra), np.asarray(rb)
        ua, ub = np.asarray(ua, dtype=float), np.asarray(ub, dtype=float)
        swap = (ra > rb) | ((ra == rb) & (ua > ub))
        r1, r2 = np.where(swap, rb, ra), np.where(swap, ra, rb)
        u1, u2 = np.where(swap, ub, ua), np.where(swap, ua, ub)
        L1, L2 = self.lengths[r1], self.lengths[r2]
        f1, f2 = self.fiber_of[r1], self.fiber_of[r2]
        same = r1 == r2
        # pieces of the path from x to y, each accurate at its own scale
        out_of_1 = (1.0 - u1) * L1
        into_2 = u2 * L2
        between_local = self.local_left[r2] - (self.local_left[r1] + L1)
        same_fiber = out_of_1 + np.maximum(between_local, 0.0) + into_2
        to_fiber_end = out_of_1 + (self.fiber_box_length[f1] - self.local_left[r1] - L1) + self.fiber_tail_right[f1]
        from_fiber_start = self.fiber_tail_left[f2] + self.local_left[r2] + into_2
        gap = self.fiber_left[f2] - (self.fiber_left[f1] + self.fiber_total[f1])
        cross = np.maximum(to_fiber_end, 0.0) + np.maximum(gap, 0.0) + from_fiber_start
        return np.where(same, (u2 - u1) * L1, np.where(f1 == f2, same_fiber, cross))

    def to_rows(self) -> list[tuple]:
        left = self.left
        return [
            (*map(int, self.indices[k]), float(self.lengths[k]), float(left[k]), float(left[k] + self.lengths[k]))
            for k in range(len(self))
        ]


def build_family(scheme: Scheme, box, normalize: bool = False, tails: bool = False) -> IntervalFamily:
    dim = scheme.d if isinstance(scheme, LengthSchemeB) else 2
    box = _box(box, dim)
    if any(lo > hi for lo, hi in box):
        raise ValueError("empty box")
    axes = [np.arange(lo, hi + 1) for lo, hi in box]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    sizes = np.array([hi - lo + 1 for lo, hi in box])
    strides = np.ones(dim, dtype=np.int64)
    for k in range(dim - 2, -1, -1):
        strides[k] = strides[k + 1] * sizes[k + 1]

    den = denominators(scheme, grid)
    lens = 1.0 / den
    n_fib = len(grid) // sizes[-1]
    per = sizes[-1]
    fiber_of = np.repeat(np.arange(n_fib), per)
    fib_lens = lens.reshape(n_fib, per)
    local_left = np.concatenate([compensated_cumsum(row) for row in fib_lens]) if n_fib < 4096 else (
        np.cumsum(fib_lens, axis=1) - fib_lens
    ).reshape(-1)
    box_len = np.array([math.fsum(row) for row in fib_lens.tolist()])

    if tails:
        lead = grid[::per, :-1]
        ex = scheme.exponents
        c = np.abs(lead).astype(float) ** ex[:-1] @ np.ones(dim - 1) + 1.0
        lo, hi = box[-1]
        pf = scheme.fiber_exponent
        tail_right = tail_sum(c, pf, hi + 1) if hi >= 0 else fiber_total(c, pf) - tail_sum(c, pf, -hi)
        tail_left = tail_sum(c, pf, -lo + 1) if lo <= 0 else fiber_total(c, pf) - tail_sum(c, pf, lo)
    else:
        tail_left = np.zeros(n_fib)
        tail_right = np.zeros(n_fib)

    fib_total = tail_left + box_len + tail_right
    fiber_left = compensated_cumsum(fib_total)
    total = math.fsum(fib_total.tolist())
    scale = 1.0
    log_len = -np.log(den)
    if normalize:
        scale = total
        lens = lens / scale
        log_len = log_len - math.log(scale)
        local_left = local_left / scale
        box_len, tail_left, tail_right = box_len / scale, tail_left / scale, tail_right / scale
        fiber_left = fiber_left / scale
        total = 1.0
    return IntervalFamily(
        scheme=scheme,
        box=box,
        indices=grid,
        lengths=lens,
        log_lengths=log_len,
        fiber_of=fiber_of,
        local_left=local_left,
        fiber_left=fiber_left,
        fiber_tail_left=tail_left,
        fiber_tail_right=tail_right,
        fiber_box_length=box_len,
        total=total,
        scale=scale,
        tails=tails,
        strides=strides,
    )


def truncated_total(scheme: Scheme, radius: int) -> float:
    """Sum of all lengths over the symmetric box of the given radius."""
    dim = scheme.d if isinstance(scheme, LengthSchemeB) else 2
    axes = [np.arange(-radius, radius + 1)] * dim
    ex = scheme.exponents
    # accumulate one leading slice at a time to keep memory flat
    parts = []
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, dim - 1)
    rest_den = np.abs(rest).astype(float) ** ex[1:] @ np.ones(dim - 1)
    for i in axes[0]:
        parts.append(math.fsum((1.0 / (abs(int(i)) ** ex[0] + rest_den + 1.0)).tolist()))
    return math.fsum(parts)


def fiber_corrected_total(scheme: Scheme, radius: int) -> float:
    """Sum over the (d-1)-box of whole-fiber totals: the box total plus every fiber's tails."""
    dim = scheme.d if isinstance(scheme, LengthSchemeB) else 2
    axes = [np.arange(-radius, radius + 1)] * (dim - 1)
    lead = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim - 1)
    ex = scheme.exponents
    c = np.abs(lead).astype(float) ** ex[:-1] @ np.ones(dim - 1) + 1.0
    return math.fsum(fiber_total(c, scheme.fiber_exponent).tolist())
