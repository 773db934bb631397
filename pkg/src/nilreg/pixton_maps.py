"""Flow-built diffeomorphisms between interval pairs.

``xi`` is a vector field on [0, 1] equal to x near 0 and vanishing on
[1/2, 1]. Its flow ``psi_t`` fixes 0 and every point of [1/2, 1], so

    phi_{a', a}^{b', b}(x) = b * psi_t(x / a),   t = log(b' a / (a' b)),

maps [0, a] onto [0, b] with derivative b'/a' at 0 and b/a at a. Since the
time parameters add up under composition, these maps form a cocycle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DELTA = 1.0 / 8.0  # end of the linear zone
RAMP = 1.0 / 8.0  # width of each smoothstep transition
PLATEAU_SLOPE = 0.75  # |xi'| on the descending plateau
SUPPORT_END = 0.5
_C = DELTA + RAMP + RAMP  # start of the final transition

# sup |xi''| = (1 + s) * max S' / w with S' = 30 t^2 (1-t)^2 peaking at 15/8
M_XI = (1.0 + PLATEAU_SLOPE) * (15.0 / 8.0) / RAMP
# Constant in |D log D phi| <= (M/a)|e^t - 1| for comparable quadruples.
# D log D psi_t(u) = (xi'(psi_t u) - xi'(u)) / xi(u) and |psi_t u - u| <= xi(u)(e^|t| - 1),
# so the left side is at most M_XI (e^|t| - 1) <= 4 M_XI |e^t - 1| once |t| <= log 4.
M_RATIO = 4.0 * M_XI


def _smooth(t):
    return t * t * t * (10.0 + t * (-15.0 + 6.0 * t))


def _smooth_int(t):
    return t**4 * (2.5 + t * (-3.0 + t))


def _smooth_d(t):
    return 30.0 * t * t * (1.0 - t) ** 2


def _check_domain(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any((x < 0.0) | (x > 1.0)):
        raise ValueError("xi is defined on [0, 1]")
    return x


def _zones(x):
    s = PLATEAU_SLOPE
    z0 = x <= DELTA
    z1 = (x > DELTA) & (x <= DELTA + RAMP)
    z2 = (x > DELTA + RAMP) & (x <= _C)
    z3 = (x > _C) & (x < SUPPORT_END)
    return s, z0, z1, z2, z3


def _xi(x):
    s, z0, z1, z2, z3 = _zones(x)
    t1 = np.clip((x - DELTA) / RAMP, 0.0, 1.0)
    t3 = np.clip((x - _C) / RAMP, 0.0, 1.0)
    top = DELTA + RAMP * (1.0 - s) / 2.0
    at_c = top - s * RAMP
    out = np.zeros_like(x)
    out = np.where(z0, x, out)
    out = np.where(z1, DELTA + (x - DELTA) - (1.0 + s) * RAMP * _smooth_int(t1), out)
    out = np.where(z2, top - s * (x - DELTA - RAMP), out)
    out = np.where(z3, at_c - s * ((x - _C) - RAMP * _smooth_int(t3)), out)
    return np.maximum(out, 0.0)


def _dxi(x):
    s, z0, z1, z2, z3 = _zones(x)
    t1 = np.clip((x - DELTA) / RAMP, 0.0, 1.0)
    t3 = np.clip((x - _C) / RAMP, 0.0, 1.0)
    out = np.zeros_like(x)
    out = np.where(z0, 1.0, out)
    out = np.where(z1, 1.0 - (1.0 + s) * _smooth(t1), out)
    out = np.where(z2, -s, out)
    out = np.where(z3, -s * (1.0 - _smooth(t3)), out)
    return out


def _d2xi(x):
    s, z0, z1, z2, z3 = _zones(x)
    t1 = np.clip((x - DELTA) / RAMP, 0.0, 1.0)
    t3 = np.clip((x - _C) / RAMP, 0.0, 1.0)
    out = np.zeros_like(x)
    out = np.where(z1, -(1.0 + s) * _smooth_d(t1) / RAMP, out)
    out = np.where(z3, s * _smooth_d(t3) / RAMP, out)
    return out


def xi(x):
    return _xi(_check_domain(x))


def dxi(x):
    return _dxi(_check_domain(x))


def d2xi(x):
    return _d2xi(_check_domain(x))


@dataclass(frozen=True)
class VectorFieldXi:
    linear_zone: float = DELTA
    support_end: float = SUPPORT_END
    ramp: float = RAMP
    plateau_slope: float = PLATEAU_SLOPE
    M_xi: float = M_XI


def certify_profile(grid_size: int = 10**6) -> dict:
    """Grid certificate of the profile: slope range, second derivative bound, sign."""
    x = np.linspace(0.0, 1.0, grid_size + 1)
    d1 = _dxi(x)
    d2 = _d2xi(x)
    v = _xi(x)
    # xi' is monotone on each zone, so its extremes sit at the zone endpoints
    knots = np.array([0.0, DELTA, DELTA + RAMP, _C, SUPPORT_END, 1.0])
    return {
        "max_abs_dxi": float(np.abs(d1).max()),
        "max_abs_dxi_certified": float(np.abs(_dxi(knots)).max()),
        "max_descent_slope": float(np.abs(d1[x > DELTA + RAMP]).max()),
        "max_abs_d2xi": float(np.abs(d2).max()),
        "min_xi": float(v.min()),
        "M_xi": M_XI,
    }


# --- flow --------------------------------------------------------------------


@dataclass(frozen=True)
class IntegratorConfig:
    steps_per_unit: int = 512
    min_steps: int = 16
    max_abs_t: float = 64.0


DEFAULT_INTEGRATOR = IntegratorConfig()


class IntegrationFailure(RuntimeError):
    pass


def _zone_table():
    # on zone z: xi = a + b y + c RAMP S_int(u), xi' = b + c S(u), u = (y - start) / RAMP
    s = PLATEAU_SLOPE
    top = DELTA + RAMP * (1.0 - s) / 2.0
    a = np.array([0.0, 0.0, top + s * (DELTA + RAMP), top - s * RAMP + s * _C, 0.0])
    b = np.array([1.0, 1.0, -s, -s, 0.0])
    c = np.array([0.0, -(1.0 + s), 0.0, s, 0.0])
    start = np.array([0.0, DELTA, 0.0, _C, 0.0])
    return np.array([DELTA, DELTA + RAMP, _C, SUPPORT_END]), a, b, c, start


_KNOTS, _ZA, _ZB, _ZC, _ZSTART = _zone_table()


def _xi_dxi(y):
    """xi and xi' together from one zone lookup; the integrator's inner loop."""
    z = np.searchsorted(_KNOTS, y, side="left")  # zone 0 is [0, DELTA], zone 4 is [1/2, 1]
    b, c = _ZB[z], _ZC[z]
    u = np.clip((y - _ZSTART[z]) / RAMP, 0.0, 1.0)
    u3 = u * u * u
    v = _ZA[z] + b * y + c * RAMP * (u3 * u * (2.5 + u * (-3.0 + u)))
    dv = b + c * (u3 * (10.0 + u * (-15.0 + 6.0 * u)))
    return np.maximum(v, 0.0), dv


def _rk4(t, y, L, n_steps):
    """Integrate y' = t xi(y), L' = t xi'(y) over unit time with n_steps.

    L is log D psi; carrying the logarithm keeps full relative accuracy when t is tiny.
    """
    h = 1.0 / n_steps
    for _ in range(n_steps):
        k1, l1 = _xi_dxi(y)
        k2, l2 = _xi_dxi(y + 0.5 * h * t * k1)
        k3, l3 = _xi_dxi(y + 0.5 * h * t * k2)
        k4, l4 = _xi_dxi(y + h * t * k3)
        y = y + h * t / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        L = L + h * t / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
        y = np.clip(y, 0.0, 1.0)
    return y, L


def psi_log(t, x, config: IntegratorConfig = DEFAULT_INTEGRATOR):
    """(psi_t(x), log D psi_t(x)); broadcasts over t and x."""
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), _check_domain(x))
    shape = t.shape
    t = t.astype(float).ravel()
    x = x.astype(float).ravel()
    if np.any(np.abs(t) > config.max_abs_t):
        raise IntegrationFailure(f"|t| exceeds the budget {config.max_abs_t}")
    et = np.exp(t)
    y = x.copy()
    L = np.zeros_like(x)

    linear = (x <= DELTA) & ((t <= 0) | (et * x <= DELTA))
    fixed = (x >= SUPPORT_END) | (t == 0)
    y = np.where(linear, et * x, y)
    L = np.where(linear, t, L)
    todo = ~(linear | fixed)
    # forward start inside the linear zone: jump to the zone boundary exactly
    enter = todo & (x <= DELTA) & (x > 0) & (t > 0)
    tau = np.where(enter, np.log(DELTA / np.where(enter, x, 1.0)), 0.0)
    y0 = np.where(enter, DELTA, x)
    rest = t - tau
    if np.any(todo):
        idx = np.nonzero(todo)
        rt = rest[idx]
        n = max(config.min_steps, int(math.ceil(np.abs(rt).max() * config.steps_per_unit)))
        y[idx], L[idx] = _rk4(rt, y0[idx], tau[idx], n)
    if np.any(~np.isfinite(L)):
        raise IntegrationFailure("derivative left the representable range")
    return y.reshape(shape), L.reshape(shape)


def psi(t, x, config: IntegratorConfig = DEFAULT_INTEGRATOR):
    """Flow value and derivative (psi_t(x), D psi_t(x)); broadcasts over t and x."""
    y, L = psi_log(t, x, config)
    D = np.exp(L)
    if np.any(D <= 0):
        raise IntegrationFailure("derivative lost positivity")
    return y, D


def psi_grouped(t, x, config: IntegratorConfig = DEFAULT_INTEGRATOR, buckets: int = 8, log: bool = False):
    """``psi`` with elements bucketed by |t| so small times take few steps.

    With ``log`` the second output is log D psi_t instead of D psi_t.
    """
    t, x = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(x, dtype=float))
    t = t.ravel()
    x = x.ravel()
    y = np.empty_like(x)
    L = np.empty_like(x)
    if t.size == 0:
        return y, L
    at = np.abs(t)
    edges = np.quantile(at, np.linspace(0, 1, buckets + 1))
    which = np.clip(np.searchsorted(edges, at, side="left") - 1, 0, buckets - 1)
    for b in range(buckets):
        sel = which == b
        if np.any(sel):
            y[sel], L[sel] = psi_log(t[sel], x[sel], config)
    return (y, L) if log else (y, np.exp(L))


# --- time-coordinate oracle ------------------------------------------------------


def time_coordinate(y):
    """T(y) = integral of 1/xi from 1/8 to y, for y in (0, 1/2); an exact flow chart.

    psi_t(x) = T^{-1}(T(x) + t) and D psi_t(x) = xi(psi_t(x)) / xi(x). Used only
    as an independent check of the integrator.
    """
    from scipy.integrate import quad

    y = float(y)
    if y <= DELTA:
        return math.log(y / DELTA)
    val, _ = quad(lambda s: 1.0 / float(_xi(np.array(s))), DELTA, y, epsabs=1e-14, epsrel=1e-13, limit=200)
    return val


def psi_oracle(t: float, x: float) -> tuple[float, float]:
    from scipy.optimize import brentq

    if x <= 0.0 or x >= SUPPORT_END or t == 0:
        return (x * math.exp(t) if x <= 0.0 else x, math.exp(t) if x <= 0.0 else 1.0)
    target = time_coordinate(x) + t
    if target <= 0:
        y = DELTA * math.exp(target)
    else:
        gap = 0.25
        while time_coordinate(SUPPORT_END - gap) < target:
            gap /= 2
        y = brentq(lambda s: time_coordinate(s) - target, DELTA, SUPPORT_END - gap, xtol=1e-15, rtol=1e-15)
    return y, float(_xi(np.array(y)) / _xi(np.array(x)))


# --- maps between interval pairs -----------------------------------------------------


@dataclass(frozen=True)
class PixtonMap:
    """phi_{a', a}^{b', b} translated so that [w, w+a] goes onto [w', w'+b]."""

    a_neg: float
    a_pos: float
    b_neg: float
    b_pos: float
    w: float = 0.0
    w_prime: float = 0.0

    def __post_init__(self):
        if not (self.a_neg < 0 < self.a_pos and self.b_neg < 0 < self.b_pos):
            raise ValueError("need a' < 0 < a and b' < 0 < b")

    @property
    def t(self) -> float:
        return math.log((self.b_neg * self.a_pos) / (self.a_neg * self.b_pos))

    def __call__(self, x, config: IntegratorConfig = DEFAULT_INTEGRATOR):
        x = np.asarray(x, dtype=float) - self.w
        y, D = psi(self.t, np.clip(x / self.a_pos, 0.0, 1.0), config)
        return self.w_prime + self.b_pos * y, (self.b_pos / self.a_pos) * D


def phi(a_neg, a_pos, b_neg, b_pos, x, config: IntegratorConfig = DEFAULT_INTEGRATOR):
    return PixtonMap(a_neg, a_pos, b_neg, b_pos)(x, config)


def log_ratio(a_neg, a_pos, b_neg, b_pos) -> float:
    return math.log((b_neg * a_pos) / (a_neg * b_pos))


def check_cocycle(a_neg, a_pos, b_neg, b_pos, c_neg, c_pos, grid=201, config=DEFAULT_INTEGRATOR) -> float:
    x = np.linspace(0.0, a_pos, grid) if np.isscalar(grid) else np.asarray(grid)
    y, _ = phi(a_neg, a_pos, b_neg, b_pos, x, config)
    z, _ = phi(b_neg, b_pos, c_neg, c_pos, np.clip(y, 0.0, b_pos), config)
    direct, _ = phi(a_neg, a_pos, c_neg, c_pos, x, config)
    return float(np.abs(z - direct).max())


def comparable(a_neg, a_pos, b_neg, b_pos) -> bool:
    """Every length is at most twice the smallest one."""
    lens = [abs(a_neg), a_pos, abs(b_neg), b_pos]
    return max(lens) <= 2 * min(lens)


@dataclass
class BoundsReport:
    t: float
    max_log_dpsi: float
    flow_ok: bool
    ratio_checked: bool
    max_dlog_dphi: float | None
    ratio_bound: float | None
    ratio_ok: bool | None
    witness: float | None = None
    warning: str | None = None


def check_bounds(a_neg, a_pos, b_neg, b_pos, grid: int = 10**4, slack: float = 1e-6, config=DEFAULT_INTEGRATOR) -> BoundsReport:
    """|log D psi_t| <= |t| and |D log D phi| <= (M/a) |b'a/(a'b) - 1| on a grid."""
    t = log_ratio(a_neg, a_pos, b_neg, b_pos)
    u = np.linspace(0.0, 1.0, grid + 1)
    _, D = psi(t, u, config)
    logD = np.log(D)
    m = float(np.abs(logD).max())
    rep = BoundsReport(t, m, m <= abs(t) + slack, False, None, None, None)
    if not comparable(a_neg, a_pos, b_neg, b_pos):
        rep.warning = "comparability fails; ratio bound skipped"
        return rep
    # D log D phi(x) = (1/a) D log D psi_t(u); use the centred difference of log D psi
    x = u * a_pos
    dlog = np.gradient(logD, x)
    bound = M_RATIO / a_pos * abs(math.exp(t) - 1.0)
    k = int(np.argmax(np.abs(dlog)))
    rep.ratio_checked = True
    rep.max_dlog_dphi = float(np.abs(dlog).max())
    rep.ratio_bound = bound
    rep.ratio_ok = rep.max_dlog_dphi <= bound + slack
    rep.witness = float(x[k])
    return rep


def dlog_dpsi_exact(t, u, config=DEFAULT_INTEGRATOR):
    """D log D psi_t(u) = (xi'(psi_t u) - xi'(u)) / xi(u), from D psi_t = xi(psi_t)/xi."""
    y, _ = psi(t, u, config)
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (_dxi(y) - _dxi(u)) / _xi(u)
    return np.where(_xi(u) > 0, out, 0.0)
