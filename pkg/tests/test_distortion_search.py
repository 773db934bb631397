import math
import re
import hashlib

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nilreg.distortion_search import (
    GridD3,
    InfeasibleAlpha,
    ResourceLimit,
    WeightedGrid,
    build_grids_d3,
    build_parallelepipeds,
    canonical_sum,
    compute_constants_d3,
    compute_constants_general,
    conditions_d3,
    counts_d3,
    decode_word,
    encode_word,
    height,
    holder_density_bound,
    integer_root,
    lalpha_sum,
    level_contributions,
    partition_level,
    path_labels,
    realize_word,
    select_paths_d3,
    select_paths_general,
    verify_certificate,
    write_certificate,
    canonical_weight,
)
from nilreg.group_core import elementary
from nilreg.path_decomposition import build_paths


@pytest.fixture(scope="module")
def run_lowest():
    state = select_paths_d3(0.45, 0.1, 3)
    return state, realize_word(state)


@pytest.fixture(scope="module")
def run_highest():
    state = select_paths_d3(0.45, 0.1, 3, pick="highest")
    return state, realize_word(state)


@pytest.fixture(scope="module")
def certificate(run_highest):
    return write_certificate(*run_highest)


# --- density bounds ------------------------------------------------------------


def test_chebyshev_density():
    for budget, parts, alpha in [(10, 3, 0.5), (1e6, 1000, 0.4), (5, 1, 0.9)]:
        assert holder_density_bound(budget, parts, 2, alpha).density == 0.5
    with pytest.raises(ValueError):
        holder_density_bound(10, 3, 2, 1.0)


def test_point_budget_example():
    g = GridD3(1, 0.1)
    assert g.p_points == 7 * 4 * 19 == 532
    assert 532 <= 10 * 4**3.1


def _random_grid(seed, n_parts, per_part):
    rng = np.random.default_rng(seed)
    k = n_parts * per_part
    w = rng.pareto(1.5, k) + 1e-6
    w /= w.sum() * (1 + 1e-9)
    pts = np.stack([np.arange(k), np.zeros(k, dtype=int)], axis=1)
    parts = rng.permutation(np.repeat(np.arange(n_parts), per_part))
    return WeightedGrid(pts, w, parts)


def test_hundred_parts_a_four():
    g = _random_grid(1, 100, 30)
    b = holder_density_bound(len(g.points), 100, 4, 0.45)
    sums = g.part_sums(0.45)
    assert np.count_nonzero(sums <= b.threshold) >= 75


@given(st.integers(0, 10**6), st.integers(1, 60), st.integers(1, 20), st.floats(1.01, 20), st.floats(0.05, 0.95))
def test_heavy_parts_fewer_than_share(seed, n_parts, per_part, A, alpha):
    g = _random_grid(seed, n_parts, per_part)
    b = holder_density_bound(len(g.points), n_parts, A, alpha)
    assert g.heavy_parts(alpha, b.threshold) < n_parts / A


def test_weighted_grid_validation():
    pts = np.array([[0, 0], [1, 0]])
    with pytest.raises(ValueError):
        WeightedGrid(pts, np.array([0.7, 0.6]), np.array([0, 1]))
    with pytest.raises(ValueError):
        WeightedGrid(pts, np.array([0.5, 0.0]), np.array([0, 1]))
    with pytest.raises(ValueError):
        WeightedGrid(np.array([[0, 0], [0, 0]]), np.array([0.1, 0.1]), np.array([0, 1]))


# --- d = 3 grids -------------------------------------------------------------


@given(st.integers(0, 10**40), st.integers(1, 7))
def test_integer_root(x, k):
    r = integer_root(x, k)
    assert r**k <= x < (r + 1) ** k


def test_heights():
    assert [height(4**k, 0.1) for k in (1, 2, 3)] == [18, 337, 6208]
    mpmath.mp.dps = 50
    for k in range(1, 9):
        assert height(4**k, 0.1) == int(mpmath.floor(mpmath.mpf(4**k) ** mpmath.mpf("2.1")))


def test_first_grid():
    g = build_grids_d3(1, 0.1)[0]
    assert g.p_columns == (4, 31) and g.H == 18 and g.p_count == 19
    assert g.q_columns == (4, 7) and g.q_count == 16


@given(st.sampled_from([3, 5, 9, 17]), st.integers(0, 80), st.sampled_from(["binary", "simple"]))
def test_path_labels_match_families(N, extra, layout):
    M = N + 1 + extra
    v = np.arange(3 * N * M)
    assert path_labels(v, N, M, layout).tolist() == build_paths(N, M, layout).path_of(v).tolist()


def test_q_columns_use_simple_layout():
    g = GridD3(1, 0.1)
    lab = g.q_labels()
    for c, m in enumerate(range(4, 8)):
        assert lab[:, c].tolist() == build_paths(4, m, "simple").path_of(np.arange(g.H + 1)).tolist()


def test_rectangle_counts_within_deviation():
    grids = build_grids_d3(3, 0.1)
    r, s, rp, sp = counts_d3(grids)
    for k in (2, 3):
        n = 4**k
        assert n ** 1.1 - 2 * n <= r[k - 1] <= s[k - 1] <= n ** 1.1 + 2 * n
        assert r[k - 1] >= 1 and rp[k - 1] >= 1 and rp[k - 1] <= sp[k - 1]
        prev = 4 ** (k - 1)
        assert prev ** 2.1 / n - 2 * n <= rp[k - 1] and sp[k - 1] <= prev ** 2.1 / n + 2 * n


def test_counts_by_brute_force():
    grids = build_grids_d3(2, 0.1)
    r, s, rp, sp = counts_d3(grids)
    g, prev = grids[1], grids[0]
    full, low = [], []
    for m in range(g.n, 2 * g.n):
        fam = build_paths(g.n, m, "simple")
        full += fam.count_upto(g.H).tolist()
        low += fam.count_upto(prev.H).tolist()
    assert (r[1], s[1], rp[1], sp[1]) == (min(full), max(full), min(low), max(low))


# --- parallelepipeds -----------------------------------------------------------


def test_first_parallelepiped():
    f = build_parallelepipeds(3, 4)
    assert f.bounds(0) == [(2, 257), (2, 257)]


@pytest.mark.parametrize("d", [3, 4, 5])
def test_bounds_one_plus_power(d):
    f = build_parallelepipeds(d, 12)
    assert f.all_bounds_ok()
    for n in range(f.n_max + 1):
        assert all(x < y for x, y in f.bounds(n))
        assert f.size(n) == math.prod(y - x + 1 for x, y in f.bounds(n))
        assert f.size_product_formula(n) < f.size(n)


@pytest.mark.parametrize("d", [3, 4, 5])
def test_width_slopes(d):
    env = build_parallelepipeds(d, 40).envelope
    for i in range(1, d):
        assert env["slope_width"][i] == pytest.approx(env["target"][i], rel=0.1)


def test_unit_level_path_count():
    f = build_parallelepipeds(3, 3)
    for n in range(1, 4):
        lp = partition_level(f, n)
        if lp.direction != 1:
            continue
        (x1, y1), (x2, y2) = f.bounds(n)
        assert lp.path_count == y2 - x2 + 1
        h = np.arange(x1, y1 + 1)
        pts = np.stack([h, np.full_like(h, x2 + 3)], axis=1)
        assert len(set(lp.path_ids(pts).tolist())) == 1


def test_amplitude_level_jumps():
    f = build_parallelepipeds(3, 2)
    lp = partition_level(f, 2)
    assert lp.direction == 2 and lp.N == f.lower[2][0]
    (x1, y1), (x2, y2) = f.bounds(2)
    for z in (x1, x1 + 1, (x1 + y1) // 2, y1):
        if z == lp.N:
            continue
        col = np.arange(x2, min(y2, x2 + 6 * z * lp.N) + 1)
        pts = np.stack([np.full_like(col, z), col], axis=1)
        ids = lp.path_ids(pts)
        for pid in np.unique(ids):
            on = pts[ids == pid]
            gaps = set(np.diff(on[:, 1]).tolist())
            assert gaps <= {1, z}
            for a, b in zip(on, on[1:]):
                assert lp.step_ok(a, b)


# --- constants -----------------------------------------------------------------


def test_gamma_example():
    c = compute_constants_d3(build_grids_d3(2, 0.1), 0.4, 0.1)
    assert c.exponent == pytest.approx(0.14)
    assert c.C == pytest.approx(4 / (2**0.14 - 1))
    assert math.isfinite(c.B)


def test_critical_alpha_infeasible():
    assert conditions_d3(1 / 3, 0.1)
    with pytest.raises(InfeasibleAlpha):
        select_paths_d3(alpha=1 / 3)
    with pytest.raises(InfeasibleAlpha):
        compute_constants_d3(build_grids_d3(2, 0.1), 1 / 3, 0.0)
    with pytest.raises(InfeasibleAlpha):
        compute_constants_general(build_parallelepipeds(4, 2), 1 / 6, 2)


# --- selection -----------------------------------------------------------------


def _vector_sum(spec, pts, alpha):
    return float(np.sum(spec.weights(np.array(pts)) ** alpha))


@pytest.mark.parametrize("which", ["run_lowest", "run_highest"])
def test_selection_thresholds_resummed(which, request):
    state, _ = request.getfixturevalue(which)
    grids = state.grids
    for rec in state.records:
        g = grids[rec.level - 1]
        if rec.kind == "P":
            pts = [(c, rec.path["row"]) for c in range(g.p_columns[0], g.p_columns[1] + 1)]
        else:
            pts = [(rec.path["column"], int(h)) for h in g.q_points_of(rec.path["id"])]
        assert _vector_sum(state.weights, pts, state.alpha) == pytest.approx(rec.path_sum, rel=1e-12)
        assert rec.path_sum <= rec.threshold
        assert rec.density >= 0.5 and rec.ledger_bound >= 0.5
        assert rec.good_fraction >= 1 - 1 / rec.A


def test_consecutive_paths_meet(run_highest):
    state, _ = run_highest
    recs = {(r.level, r.kind): r for r in state.records}
    for k, g in enumerate(state.grids, start=1):
        q = set(g.q_points_of(recs[(k, "Q")].path["id"]).tolist())
        assert recs[(k, "P")].path["row"] in q
        if k > 1:
            row = recs[(k - 1, "P")].path["row"]
            assert row in q and row <= state.grids[k - 2].H


def test_weights_total_one_on_box(run_lowest):
    state, _ = run_lowest
    spec = state.weights
    (c0, c1), (r0, r1) = spec.box
    cols, rows = np.meshgrid(np.arange(c0, c1 + 1), np.arange(r0, r1 + 1), indexing="ij")
    total = math.fsum(spec.weights(np.stack([cols.ravel(), rows.ravel()], axis=1)).tolist())
    assert total == pytest.approx(1.0, rel=1e-12)


def test_level_sums_below_closed_form(run_lowest):
    state, _ = run_lowest
    assert math.fsum(state.level_sums) <= state.closed_form_bound()


# --- realization ----------------------------------------------------------------


def test_letters_and_replay(run_highest):
    _, real = run_highest
    kinds = {(l.i, l.j) for l in real.word.letters}
    assert kinds <= {(2, 1), (3, 1), (3, 2)}
    assert (3, 2) in kinds and (3, 1) in kinds
    traj = [tuple(p) for p in real.trajectory.tolist()]
    assert len(set(traj)) == len(traj)
    # independent replay: multiply out each step as an integer matrix on (x, y, 1)
    v = np.array([0, 0, 1], dtype=object)
    for let, nxt in zip(real.word.letters, traj[1:]):
        e = np.eye(3, dtype=object)
        i, j = let.i - 2, let.j - 2
        col = 2 if let.j == 1 else j
        e[i, col] = let.sign
        v = e.dot(v)
        assert (v[0], v[1]) == nxt


def test_unit_and_amplitude_steps(run_highest):
    _, real = run_highest
    for let, a, b in zip(real.word.letters, real.trajectory, real.trajectory[1:]):
        if (let.i, let.j) == (3, 1):
            assert b[1] - a[1] == let.sign and b[0] == a[0]
        if (let.i, let.j) == (3, 2):
            assert b[1] - a[1] == let.sign * a[0]


def test_lalpha_partial_sums(run_lowest):
    state, real = run_lowest
    assert lalpha_sum([], lambda p: 1.0, 0.5).tolist() == [0.0]
    sums = lalpha_sum(real.trajectory.tolist(), lambda p: canonical_weight(state.weights, p), 0.45)
    assert np.all(np.diff(sums) > 0)
    assert sums[-1] == pytest.approx(canonical_sum(state.weights, real.trajectory.tolist(), 0.45), rel=1e-12)
    assert sums[-1] <= state.closed_form_bound()


@pytest.mark.parametrize("which", ["run_lowest", "run_highest"])
def test_small_alpha_contributions_grow(which, request):
    state, real = request.getfixturevalue(which)
    contrib = level_contributions(real, state.weights, 0.25)
    vals = [contrib[k] for k in (1, 2, 3)]
    assert vals == sorted(vals)


def test_word_codec_roundtrip(run_highest):
    _, real = run_highest
    assert decode_word(encode_word(real.word)) == real.word


# --- certificates -----------------------------------------------------------------


def _redigest(text):
    body = text[: text.rindex("digest sha256=")]
    return body + f"digest sha256={hashlib.sha256(body.encode()).hexdigest()}\n"


def test_certificate_verifies(certificate):
    rep = verify_certificate(certificate)
    assert rep.ok, rep.failures()


def test_certificate_digest_tamper(certificate):
    bad = certificate.replace("P_row=", "P_row=1", 1)
    rep = verify_certificate(bad)
    assert not rep.ok and any(f.startswith("digest") for f in rep.failures())


def _flip_last_hex(m):
    h = m.group(1)
    last = h[h.index("p") - 1]
    new = "0" if last != "0" else "1"
    return f"P_sum={h[: h.index('p') - 1]}{new}{h[h.index('p'):]}"


@pytest.mark.parametrize("field", ["P_sum", "Q_label", "P_row"])
def test_certificate_semantic_tamper(certificate, field):
    if field == "P_sum":
        bad = re.sub(r"P_sum=(\S+)", _flip_last_hex, certificate, count=1)
    elif field == "Q_label":
        bad = re.sub(r"Q_label=(\d+)", lambda m: f"Q_label={int(m.group(1)) % 4 + 1}", certificate, count=1)
    else:
        bad = re.sub(r"P_row=(\d+)", lambda m: f"P_row={int(m.group(1)) + 1}", certificate, count=1)
    assert bad != certificate
    rep = verify_certificate(_redigest(bad), recompute_normaliser=False)
    assert not rep.ok
    assert not any(f.startswith("digest") for f in rep.failures())


# --- general d -----------------------------------------------------------------


def test_general_selection_small():
    state = select_paths_general(3, 0.45, 2)
    assert [r.level for r in state.records] == [1, 2]
    for rec in state.records:
        assert rec.path_sum <= rec.threshold
        assert rec.density >= 0.5
    real = realize_word(state)
    traj = [tuple(p) for p in real.trajectory.tolist()]
    assert len(set(traj)) == len(traj)


def test_general_resource_limit():
    with pytest.raises(ResourceLimit):
        select_paths_general(4, 0.45, 2)
