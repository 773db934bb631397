"""Generators assembled as piecewise flow maps on a truncated interval family.

A generator acts on indices by an affine rule ``g`` that never looks at the
last coordinate, so ``g(v - e) = g(v) - e`` for the last unit vector ``e``.
The piece on I = I_v is the flow map sending the pair (I', I) onto (J', J),
where I' = I_{v-e}, J = I_{g(v)} and J' = I_{g(v)-e}. Lengths of I' and J'
always come from the closed-form length formula, so a neighbour cut away by
the truncation is used as a phantom interval.

With x at local fraction u of I the map sends x to local fraction psi_t(u)
of J, where t = log(|J'||I| / (|I'||J|)), and

    log Df(x) = log|J| - log|I| + log D psi_t(u).

At u = 0 this equals log(|J'| / |I'|), which is the value of the previous
piece at its right end, so Df is continuous along a fiber.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .group_core import MetabelianGenerator, r_binomial
from .interval_model import (
    IntervalFamily,
    LengthSchemeB,
    LengthSchemeC,
    build_family,
    log_lengths,
)
from .pixton_maps import DEFAULT_INTEGRATOR, IntegratorConfig, psi_grouped

IndexFn = Callable[[np.ndarray], np.ndarray]


class OutsideDomain(ValueError):
    pass


# --- index rules ----------------------------------------------------------------


def generator_b_index_fn(d: int, j: int, sign: int = 1) -> IndexFn:
    """Vectorised f_j = f_{j+1,j}: coordinate j-1 moves by 1 (j = 1) or by coordinate j-2."""
    if not 1 <= j <= d:
        raise ValueError(f"generator {j} outside 1..{d}")

    def fn(idx: np.ndarray) -> np.ndarray:
        out = np.array(idx, copy=True)
        step = 1 if j == 1 else out[:, j - 2]
        out[:, j - 1] += sign * step
        return out

    return fn


def _r_column(k: int, i: np.ndarray) -> np.ndarray:
    vals = np.unique(i)
    table = {int(a): r_binomial(k, int(a)) for a in vals}
    return np.array([table[int(a)] for a in i], dtype=np.int64)


def generator_c_index_fn(gen: MetabelianGenerator) -> IndexFn:
    def fn(idx: np.ndarray) -> np.ndarray:
        out = np.array(idx, copy=True)
        if gen.k is None:
            out[:, 0] += gen.sign
        else:
            out[:, 1] += gen.sign * _r_column(gen.k, out[:, 0])
        return out

    return fn


# --- assembled maps -------------------------------------------------------------------


@dataclass
class AssembledMap:
    name: str
    family: IntervalFamily
    index_fn: IndexFn
    target_rows: np.ndarray  # -1 outside the domain mask
    t: np.ndarray  # flow time of each piece (0 outside the mask)
    log_scale: np.ndarray  # log|J| - log|I|
    inverse_name: str | None = None
    lead_src: np.ndarray = field(default=None, repr=False)  # leading power sum of each source
    lead_tgt: np.ndarray = field(default=None, repr=False)
    shift: np.ndarray = field(default=None, repr=False)  # move of the last coordinate

    @property
    def mask(self) -> np.ndarray:
        return self.target_rows >= 0

    @property
    def domain(self) -> np.ndarray:
        return np.nonzero(self.mask)[0]

    def piece(self, row: int) -> dict:
        """Source and target quadruples of one piece, in family units."""
        fam = self.family
        v = fam.indices[row : row + 1]
        e = np.zeros_like(v)
        e[:, -1] = 1
        w = self.index_fn(v)
        scale = fam.scale
        lens = [float(np.exp(log_lengths(fam.scheme, z))[0] / scale) for z in (v - e, v, w - e, w)]
        return {
            "source": tuple(map(int, v[0])),
            "target": tuple(map(int, w[0])),
            "a_neg": -lens[0],
            "a_pos": lens[1],
            "b_neg": -lens[2],
            "b_pos": lens[3],
            "t": float(self.t[row]),
        }


def _lead_power(scheme, idx: np.ndarray) -> np.ndarray:
    ex = scheme.exponents
    return np.abs(np.asarray(idx[:, :-1], dtype=float)) ** ex[:-1] @ np.ones(len(ex) - 1)


def _h(scheme, last) -> np.ndarray:
    return np.abs(np.asarray(last, dtype=float)) ** scheme.fiber_exponent + 1.0


def _cross(scheme, s_src, s_tgt, shift, i, k) -> np.ndarray:
    """log_scale(row with last coordinate i) - log_scale(row with last coordinate k) in one fiber.

    log_scale = log den(v) - log den(g v) with den = S + h(last). Written as a
    log1p of an explicitly factored numerator so that the result keeps its
    relative accuracy when the two values agree to many digits. Either the
    generator moves a leading coordinate (shift = 0, S changes) or it shifts
    the last coordinate by ``shift`` (S unchanged).
    """
    hi, hk = _h(scheme, i), _h(scheme, k)
    lead = shift == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        num_lead = (s_src - s_tgt) * (hk - hi)
        den_lead = (s_tgt + hi) * (s_src + hk)
        his, hks = _h(scheme, i + shift), _h(scheme, k + shift)
        num_tr = s_src * ((hi - his) + (hks - hk)) + (hi * hks - his * hk)
        den_tr = (s_src + his) * (s_src + hk)
    return np.log1p(np.where(lead, num_lead / den_lead, num_tr / den_tr))


def assemble(family: IntervalFamily, index_fn: IndexFn, name: str, inverse_name: str | None = None) -> AssembledMap:
    idx = family.indices
    tgt = index_fn(idx)
    e = np.zeros_like(idx)
    e[:, -1] = 1
    if not np.array_equal(index_fn(idx - e), tgt - e):
        raise ValueError(f"{name}: index rule depends on the last coordinate")
    shift = tgt[:, -1] - idx[:, -1]
    if np.any((shift != 0) & np.any(tgt[:, :-1] != idx[:, :-1], axis=1)):
        raise ValueError(f"{name}: moves leading and last coordinates at once")
    rows = family.row_of(tgt)
    mask = rows >= 0
    scheme = family.scheme
    s_src = _lead_power(scheme, idx)
    s_tgt = _lead_power(scheme, tgt)
    # log|J| - log|I| = log den(v) - log den(gv); the normalisation scale cancels
    last = idx[:, -1]
    diff = (s_src - s_tgt) + (_h(scheme, last) - _h(scheme, last + shift))
    log_scale = np.log1p(diff / (s_tgt + _h(scheme, last + shift)))
    # t = log_scale(v - e) - log_scale(v)
    t = _cross(scheme, s_src, s_tgt, shift, last - 1, last)
    return AssembledMap(
        name=name,
        family=family,
        index_fn=index_fn,
        target_rows=np.where(mask, rows, -1),
        t=np.where(mask, t, 0.0),
        log_scale=np.where(mask, log_scale, 0.0),
        inverse_name=inverse_name,
        lead_src=s_src,
        lead_tgt=s_tgt,
        shift=shift,
    )


def _den(scheme, idx: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(idx, dtype=float)) ** scheme.exponents @ np.ones(idx.shape[1]) + 1.0


def log_scale_difference(m: AssembledMap, ra, rb) -> np.ndarray:
    """log_scale[ra] - log_scale[rb], accurate for rows in one fiber, direct otherwise."""
    ra, rb = np.asarray(ra), np.asarray(rb)
    fam = m.family
    same = fam.fiber_of[ra] == fam.fiber_of[rb]
    out = m.log_scale[ra] - m.log_scale[rb]
    if np.any(same):
        a, b = ra[same], rb[same]
        out[same] = _cross(fam.scheme, m.lead_src[a], m.lead_tgt[a], m.shift[a], fam.indices[a, -1], fam.indices[b, -1])
    return out


def assemble_generator_b(scheme: LengthSchemeB, family: IntervalFamily, j: int, sign: int = 1) -> AssembledMap:
    name = f"f{j}" if sign > 0 else f"f{j}^-1"
    inv = f"f{j}^-1" if sign > 0 else f"f{j}"
    if family.scheme is not scheme and family.scheme != scheme:
        raise ValueError("family was built from a different scheme")
    return assemble(family, generator_b_index_fn(scheme.d, j, sign), name, inv)


def assemble_generator_c(scheme: LengthSchemeC, family: IntervalFamily, gen: MetabelianGenerator) -> AssembledMap:
    gen.check(scheme.d)
    if family.scheme is not scheme and family.scheme != scheme:
        raise ValueError("family was built from a different scheme")
    return assemble(family, generator_c_index_fn(gen), gen.name, gen.inverse().name)


def identity_map(family: IntervalFamily) -> AssembledMap:
    return assemble(family, lambda idx: np.array(idx, copy=True), "id", "id")


def evaluate(m: AssembledMap, rows, u, config: IntegratorConfig = DEFAULT_INTEGRATOR):
    """Image of local points: (target rows, local fraction in the target, log Df)."""
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    tr, v, log_dpsi = evaluate_flow(m, rows, u, config)
    return tr, v, m.log_scale[rows] + log_dpsi


def evaluate_flow(m: AssembledMap, rows, u, config: IntegratorConfig = DEFAULT_INTEGRATOR):
    """Like ``evaluate`` but the last output is the flow part log D psi_t(u) alone."""
    rows = np.atleast_1d(np.asarray(rows, dtype=np.int64))
    u = np.broadcast_to(np.asarray(u, dtype=float), rows.shape)
    if np.any((u < 0) | (u > 1)):
        raise OutsideDomain("local fractions must lie in [0, 1]")
    if np.any((rows < 0) | (rows >= len(m.family))) or np.any(m.target_rows[rows] < 0):
        raise OutsideDomain(f"{m.name}: point outside the masked domain")
    t = m.t[rows]
    v = np.array(u, dtype=float, copy=True)
    log_dpsi = np.zeros(len(rows))
    moving = t != 0
    if np.any(moving):
        v[moving], log_dpsi[moving] = psi_grouped(t[moving], u[moving], config, log=True)
    return m.target_rows[rows], v, log_dpsi


def locate(family: IntervalFamily, x) -> tuple[np.ndarray, np.ndarray]:
    """(row, local fraction) of global coordinates that fall inside box intervals."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    left = family.left
    rows = np.searchsorted(left, x, side="right") - 1
    rows = np.clip(rows, 0, len(family) - 1)
    u = (x - left[rows]) / family.lengths[rows]
    if np.any((u < -1e-12) | (u > 1 + 1e-12)):
        raise OutsideDomain("point lies in a fiber tail, outside every box interval")
    return rows, np.clip(u, 0.0, 1.0)


def evaluate_global(m: AssembledMap, x, config: IntegratorConfig = DEFAULT_INTEGRATOR):
    """Global coordinate version of ``evaluate``: (y, Df)."""
    rows, u = locate(m.family, x)
    tr, v, log_d = evaluate(m, rows, u, config)
    return m.family.position(tr, v), np.exp(log_d)


def fiber_end_log_df(m: AssembledMap, side: int, far: float = 1e20) -> np.ndarray:
    """log Df at the two ends of each fiber, as the limit |i_d| -> infinity of the piece scale.

    Evaluated at the phantom index with last coordinate ``side * far`` for each fiber.
    """
    fam = m.family
    per = fam.box[-1][1] - fam.box[-1][0] + 1
    lead = fam.indices[::per].astype(float)
    lead[:, -1] = side * far
    tgt = m.index_fn(fam.indices[::per]).astype(float)
    tgt[:, -1] += side * far - fam.indices[::per, -1]
    return np.log(_den(fam.scheme, lead)) - np.log(_den(fam.scheme, tgt))


# --- Hölder estimation ------------------------------------------------------------------

STRATA = ("I", "II-adjacent", "II-a", "II-b", "II-c", "II-d", "II-cross", "III-direct", "III-routed")


def classify_same_fiber(i: np.ndarray, ip: np.ndarray, s0: np.ndarray, pd: float) -> np.ndarray:
    """Regime label for pairs inside one fiber with last coordinates i, ip (not adjacent)."""
    a = np.minimum(np.abs(i), np.abs(ip)).astype(float)
    b = np.maximum(np.abs(i), np.abs(ip)).astype(float)
    out = np.full(len(i), "II-d", dtype=object)
    cross = i * ip < 0
    case_a = b <= 2 * a + 1
    case_b = ~case_a & (b**pd <= s0)
    case_c = ~case_a & ~case_b & (a**pd >= s0)
    out[case_c] = "II-c"
    out[case_b] = "II-b"
    out[case_a] = "II-a"
    out[cross] = "II-cross"
    return out


def envelope_a(scheme: LengthSchemeB, idx: np.ndarray, idx_p: np.ndarray, alpha: float) -> np.ndarray:
    """Closed-form case-(a) bound for f_1 up to its multiplicative constant.

    i'^{p_d-1} (i'-i)^{1-a} (|i_1|+1)^{p_1-1} / ((S + i^{p_d} + 1)(S + i'^{p_d} + 1)^{1-a}),
    with S the sum over the leading coordinates and i < i' the fiber magnitudes.
    """
    p = scheme.exponents
    pd = p[-1]
    lead = np.abs(idx[:, :-1]).astype(float)
    s0 = lead ** p[:-1] @ np.ones(len(p) - 1)
    a = np.minimum(np.abs(idx[:, -1]), np.abs(idx_p[:, -1])).astype(float)
    b = np.maximum(np.abs(idx[:, -1]), np.abs(idx_p[:, -1])).astype(float)
    num = b ** (pd - 1) * (b - a) ** (1 - alpha) * (lead[:, 0] + 1) ** (p[0] - 1)
    den = (s0 + a**pd + 1) * (s0 + b**pd + 1) ** (1 - alpha)
    return num / den


@dataclass
class HolderEstimate:
    alpha: float
    seminorm: float
    strata: dict[str, float]
    counts: dict[str, int]
    witness: dict
    # stored samples: |log Df(x) - log Df(y)| and |x - y| per pair, with labels
    dlog: np.ndarray = field(repr=False, default=None)
    dist: np.ndarray = field(repr=False, default=None)
    labels: np.ndarray = field(repr=False, default=None)
    envelope: np.ndarray = field(repr=False, default=None)  # case-(a) envelope, NaN elsewhere

    def quotients(self, alpha: float | None = None) -> np.ndarray:
        a = self.alpha if alpha is None else alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            q = self.dlog / self.dist**a
        return np.where(self.dlog == 0, 0.0, q)

    def seminorm_at(self, alpha: float) -> float:
        q = self.quotients(alpha)
        return float(q.max()) if q.size else 0.0

    def envelope_constant(self) -> float | None:
        """Smallest constant M with quotient <= M * envelope on the case-(a) samples."""
        sel = self.labels == "II-a"
        if self.envelope is None or not np.any(sel):
            return None
        return float((self.quotients()[sel] / self.envelope[sel]).max())

    def records(self, name: str) -> list[dict]:
        return [
            {"map": name, "alpha": self.alpha, "stratum": s, "max": self.strata[s], "pairs": self.counts[s], "witness": self.witness.get(s)}
            for s in STRATA
            if s in self.strata
        ]


def _mixed_u(rng: np.random.Generator, n: int) -> np.ndarray:
    """Local fractions: uniform, clustered at 0, clustered at 1, in equal shares."""
    kind = rng.integers(0, 3, n)
    w = rng.random(n)
    return np.where(kind == 0, w, np.where(kind == 1, w**4, 1 - w**4))


def _fiber_tables(m: AssembledMap):
    fam = m.family
    dom = m.domain
    fib = fam.fiber_of[dom]
    order = np.argsort(fib, kind="stable")
    dom, fib = dom[order], fib[order]
    fibers, start, count = np.unique(fib, return_index=True, return_counts=True)
    return dom, fibers, start, count


def holder_seminorm(
    m: AssembledMap,
    alpha: float,
    pairs: int = 10**5,
    seed: int = 0,
    config: IntegratorConfig = DEFAULT_INTEGRATOR,
) -> HolderEstimate:
    """Stratified estimate of sup |log Df(x) - log Df(y)| / |x - y|^alpha.

    Shares of the budget: 20% same interval, 10% adjacent intervals, 40% split over
    the non-adjacent same-fiber regimes (a)-(d) and opposite signs, 15% across
    fibers directly and 15% single points measured against their fiber ends, where
    Df = 1. Every pair of points in different fibers is controlled by the routed
    stratum, since |x - y| exceeds the distance from either point to the ends between.
    """
    fam = m.family
    rng = np.random.default_rng(seed)
    dom, fibers, fstart, fcount = _fiber_tables(m)
    if dom.size == 0:
        raise OutsideDomain(f"{m.name}: empty domain")
    n_same = pairs // 5
    n_adj = pairs // 10
    n_far = 2 * pairs // 5
    n_cross = 3 * pairs // 20
    n_routed = pairs - n_same - n_adj - n_far - n_cross

    ra_parts, ua_parts, rb_parts, ub_parts, lab_parts = [], [], [], [], []

    def push(ra, ua, rb, ub, lab):
        ra_parts.append(ra)
        ua_parts.append(ua)
        rb_parts.append(rb)
        ub_parts.append(ub)
        lab_parts.append(np.asarray(lab, dtype=object) if not isinstance(lab, str) else np.full(len(ra), lab, dtype=object))

    # I: same interval
    r = rng.choice(dom, n_same)
    push(r, _mixed_u(rng, n_same), r, _mixed_u(rng, n_same), "I")

    # II adjacent: r and its successor, both in the domain and the same fiber
    nxt = dom[:-1][(np.diff(dom) == 1) & (fam.fiber_of[dom[:-1]] == fam.fiber_of[dom[1:]])]
    if nxt.size:
        r = rng.choice(nxt, n_adj)
        push(r, _mixed_u(rng, n_adj), r + 1, _mixed_u(rng, n_adj), "II-adjacent")

    # II far: fill each regime from candidate pools, half from fibers of small leading size
    p = fam.scheme.exponents
    pd = float(p[-1])
    lead_size = np.abs(fam.indices[dom[fstart], :-1]).astype(float) ** p[:-1] @ np.ones(len(p) - 1)
    small = np.argsort(lead_size, kind="stable")[: max(1, len(fibers) // 10)]
    regimes = ("II-a", "II-b", "II-c", "II-d", "II-cross")
    quota = {g: n_far // len(regimes) for g in regimes}
    have = {g: 0 for g in regimes}
    for _ in range(40):
        if all(have[g] >= quota[g] for g in regimes):
            break
        n_cand = 4 * n_far
        pick = np.where(rng.random(n_cand) < 0.5, rng.integers(0, len(fibers), n_cand), rng.choice(small, n_cand))
        ok = fcount[pick] >= 3
        pick = pick[ok]
        k1 = (rng.random(len(pick)) * fcount[pick]).astype(np.int64)
        k2 = (rng.random(len(pick)) * fcount[pick]).astype(np.int64)
        ra, rb = dom[fstart[pick] + k1], dom[fstart[pick] + k2]
        far = np.abs(ra - rb) >= 2
        ra, rb, pick = ra[far], rb[far], pick[far]
        lab = classify_same_fiber(fam.indices[ra, -1], fam.indices[rb, -1], lead_size[pick], pd)
        for g in regimes:
            sel = np.nonzero(lab == g)[0][: quota[g] - have[g]]
            if sel.size:
                push(ra[sel], _mixed_u(rng, sel.size), rb[sel], _mixed_u(rng, sel.size), g)
                have[g] += sel.size

    # III direct: points in different fibers
    if len(fibers) > 1:
        ra = rng.choice(dom, n_cross)
        rb = rng.choice(dom, n_cross)
        keep = fam.fiber_of[ra] != fam.fiber_of[rb]
        push(ra[keep], _mixed_u(rng, int(keep.sum())), rb[keep], _mixed_u(rng, int(keep.sum())), "III-direct")

    ra = np.concatenate(ra_parts)
    ua = np.concatenate(ua_parts)
    rb = np.concatenate(rb_parts)
    ub = np.concatenate(ub_parts)
    labels = np.concatenate(lab_parts)

    _, _, la = evaluate_flow(m, ra, ua, config)
    _, _, lb = evaluate_flow(m, rb, ub, config)
    dlog = np.abs(log_scale_difference(m, ra, rb) + (la - lb))
    dist = fam.distance(ra, ua, rb, ub)

    # III routed: each point against the nearer end of its fiber, where Df = 1
    rr = rng.choice(dom, n_routed)
    ur = _mixed_u(rng, n_routed)
    _, _, lr = evaluate(m, rr, ur, config)
    f = fam.fiber_of[rr]
    L = fam.lengths[rr]
    to_right = (1 - ur) * L + (fam.fiber_box_length[f] - fam.local_left[rr] - L) + fam.fiber_tail_right[f]
    to_left = fam.fiber_tail_left[f] + fam.local_left[rr] + ur * L
    ends = np.minimum(np.maximum(to_right, 0.0), np.maximum(to_left, 0.0))
    dlog = np.concatenate([dlog, np.abs(lr)])
    dist = np.concatenate([dist, ends])
    labels = np.concatenate([labels, np.full(n_routed, "III-routed", dtype=object)])
    ra = np.concatenate([ra, rr])
    ua = np.concatenate([ua, ur])
    rb = np.concatenate([rb, np.full(n_routed, -1)])
    ub = np.concatenate([ub, np.full(n_routed, np.nan)])

    env = np.full(len(dlog), np.nan)
    if isinstance(fam.scheme, LengthSchemeB) and m.name == "f1":
        sel = labels == "II-a"
        env[sel] = envelope_a(fam.scheme, fam.indices[ra[sel]], fam.indices[rb[sel]], alpha)

    est = HolderEstimate(alpha, 0.0, {}, {}, {}, dlog, dist, labels, env)
    q = est.quotients()
    for s in STRATA:
        sel = np.nonzero(labels == s)[0]
        est.counts[s] = int(sel.size)
        if sel.size == 0:
            continue
        k = sel[int(np.argmax(q[sel]))]
        est.strata[s] = float(q[k])
        est.witness[s] = {
            "x": [int(ra[k]), float(ua[k])],
            "y": None if rb[k] < 0 else [int(rb[k]), float(ub[k])],
            "index_x": fam.indices[ra[k]].tolist(),
            "index_y": None if rb[k] < 0 else fam.indices[rb[k]].tolist(),
        }
    est.seminorm = max(est.strata.values()) if est.strata else 0.0
    return est


# --- relations ---------------------------------------------------------------------


def parse_word(word: str | Sequence[str]) -> list[str]:
    """Letters separated by spaces, e.g. ``"f^-1 g2^-1 f g2"``; the empty word is identity."""
    if isinstance(word, str):
        return word.split()
    return list(word)


def commutator_word(a: str, b: str) -> list[str]:
    inv = lambda x: x[:-3] if x.endswith("^-1") else x + "^-1"  # noqa: E731
    return [inv(a), inv(b), a, b]


@dataclass
class RelationResult:
    lhs: list[str]
    rhs: list[str]
    index_ok: bool
    index_checked: int
    index_witness: list | None
    pointwise_checked: int
    pointwise_sup: float

    def record(self) -> dict:
        return {
            "lhs": " ".join(self.lhs),
            "rhs": " ".join(self.rhs) or "id",
            "index_ok": self.index_ok,
            "index_checked": self.index_checked,
            "index_witness": self.index_witness,
            "pointwise_checked": self.pointwise_checked,
            "pointwise_sup": self.pointwise_sup,
        }


def _index_walk(maps: dict[str, AssembledMap], word: list[str], idx: np.ndarray) -> np.ndarray:
    for letter in word:
        idx = maps[letter].index_fn(idx)
    return idx


def _point_walk(maps, word, rows, u, config):
    ok = np.ones(len(rows), dtype=bool)
    rows = rows.copy()
    u = u.copy()
    for letter in word:
        m = maps[letter]
        inside = ok & (m.target_rows[np.where(ok, rows, 0)] >= 0)
        ok = inside
        sel = np.nonzero(ok)[0]
        if sel.size:
            rows[sel], u[sel], _ = evaluate(m, rows[sel], u[sel], config)
    return ok, rows, u


def verify_relations(
    maps: dict[str, AssembledMap],
    relations: Iterable[tuple[Sequence[str] | str, Sequence[str] | str]],
    samples: int = 1000,
    seed: int = 0,
    index_points: np.ndarray | None = None,
    config: IntegratorConfig = DEFAULT_INTEGRATOR,
) -> list[RelationResult]:
    """Check lhs = rhs exactly on indices and pointwise on sampled points.

    Pointwise deviation is |v_lhs - v_rhs| times the target length, so it is a
    distance in family units; points whose orbit leaves the box are skipped.
    """
    fams = {id(m.family) for m in maps.values()}
    if len(fams) != 1:
        raise ValueError("all maps must share one family")
    fam = next(iter(maps.values())).family
    rng = np.random.default_rng(seed)
    if index_points is None:
        index_points = fam.indices
    out = []
    for lhs, rhs in relations:
        lhs, rhs = parse_word(lhs), parse_word(rhs)
        a = _index_walk(maps, lhs, index_points)
        b = _index_walk(maps, rhs, index_points)
        bad = np.nonzero(np.any(a != b, axis=1))[0]
        witness = None if bad.size == 0 else index_points[bad[0]].tolist()

        # pointwise: sample from rows whose orbits stay in the box under both words
        rows_all = np.arange(len(fam))
        u0 = np.full(len(fam), 0.5)
        ok_l, _, _ = _point_walk(maps, lhs, rows_all, u0, config) if lhs else (np.ones(len(fam), bool), None, None)
        ok_r, _, _ = _point_walk(maps, rhs, rows_all, u0, config) if rhs else (np.ones(len(fam), bool), None, None)
        cand = np.nonzero(ok_l & ok_r)[0]
        sup = 0.0
        n = 0
        if cand.size:
            rows = rng.choice(cand, samples)
            u = _mixed_u(rng, samples)
            _, rl, vl = _point_walk(maps, lhs, rows, u, config)
            _, rr, vr = _point_walk(maps, rhs, rows, u, config)
            same = rl == rr
            dev = np.where(same, np.abs(vl - vr) * fam.lengths[rl], np.inf)
            sup = float(dev.max())
            n = samples
        out.append(RelationResult(lhs, rhs, witness is None, len(index_points), witness, n, sup))
    return out


def metabelian_relations(d: int) -> list[tuple[list[str], list[str]]]:
    """[g_i, g_j] = id for i < j and [f, g_k] = g_{k-1} for 1 <= k <= d, plus [f, g_0] = id."""
    rels = []
    for i in range(d + 1):
        for j in range(i + 1, d + 1):
            rels.append((commutator_word(f"g{i}", f"g{j}"), []))
    rels.append((commutator_word("f", "g0"), []))
    for k in range(1, d + 1):
        rels.append((commutator_word("f", f"g{k}"), [f"g{k-1}"]))
    return rels


def metabelian_maps(scheme: LengthSchemeC, family: IntervalFamily) -> dict[str, AssembledMap]:
    gens = [MetabelianGenerator()] + [MetabelianGenerator(k) for k in range(scheme.d + 1)]
    out = {}
    for g in gens:
        for h in (g, g.inverse()):
            out[h.name] = assemble_generator_c(scheme, family, h)
    return out


def nilpotent_maps(scheme: LengthSchemeB, family: IntervalFamily) -> dict[str, AssembledMap]:
    out = {}
    for j in range(1, scheme.d + 1):
        for s in (1, -1):
            m = assemble_generator_b(scheme, family, j, s)
            out[m.name] = m
    return out


# --- stability over growing truncations ------------------------------------------------


@dataclass
class StabilityRow:
    radius: int
    seminorm: float
    ratio: float | None
    flagged: bool


def stability_report(
    builder: Callable[[int], AssembledMap],
    alpha: float,
    boxes: Sequence[int],
    pairs: int = 10**5,
    seed: int = 0,
    limit: float = 1.5,
) -> list[StabilityRow]:
    """Seminorm per truncation radius; flags growth ratios above ``limit``."""
    if len(boxes) < 2:
        raise ValueError("need at least two boxes")
    rows: list[StabilityRow] = []
    prev = None
    for r in boxes:
        s = holder_seminorm(builder(r), alpha, pairs, seed).seminorm
        if prev is None:
            ratio = None
        elif prev == 0:
            ratio = 1.0 if s == 0 else math.inf
        else:
            ratio = s / prev
        rows.append(StabilityRow(r, s, ratio, ratio is not None and ratio > limit))
        prev = s
    return rows


def family_for(scheme, radius: int) -> IntervalFamily:
    """Normalised family with fiber tails: the model of [0, 1] used for estimates."""
    return build_family(scheme, radius, normalize=True, tails=True)


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
