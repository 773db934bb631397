import itertools
import random

import pytest

from nilreg.group_core import act_on_index, elementary
from nilreg.orbit_graph import ball_census, closed_form_d3, default_moves, growth_exponent_estimate


def _matrix_census(n_max):
    """Breadth-first ball sizes using the matrix action of f_{2,1}, f_{3,1}, f_{3,2}."""
    gens = [elementary(2, 2, 1), elementary(2, 3, 1), elementary(2, 3, 2)]
    seen = {(0, 0)}
    frontier = [(0, 0)]
    sizes = [1]
    for _ in range(n_max):
        nxt = []
        for v in frontier:
            for g in gens:
                w = act_on_index(g, v)
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
        sizes.append(len(seen))
    return sizes


def test_closed_form_examples():
    assert [closed_form_d3(n) for n in (0, 1, 2, 3, 6)] == [1, 3, 6, 11, 48]


def test_census_d3_matches_closed_form():
    c = ball_census(3, 40)
    assert c.complete
    assert c.counts == [closed_form_d3(n) for n in range(41)]


def test_census_d3_matches_matrix_action():
    assert ball_census(3, 25).counts == _matrix_census(25)


def test_census_d2_is_a_ray():
    assert ball_census(2, 30).counts == [n + 1 for n in range(31)]


def test_growth_slopes():
    assert growth_exponent_estimate(ball_census(3, 40), (20, 40)) == pytest.approx(3, abs=0.15)
    assert growth_exponent_estimate(ball_census(2, 60), (30, 60)) == pytest.approx(1, abs=0.05)


def test_spheres_positive():
    for d in (2, 3, 4):
        c = ball_census(d, 8)
        assert all(s > 0 for s in c.spheres())
        assert sum(c.spheres()) == c.counts[-1]


def test_move_order_is_irrelevant():
    moves = default_moves(4)
    rng = random.Random(7)
    base = ball_census(4, 7).counts
    for _ in range(3):
        shuffled = moves[:]
        rng.shuffle(shuffled)
        assert ball_census(4, 7, moves=shuffled).counts == base


def test_mem_cap_marks_incomplete():
    c = ball_census(4, 50, mem_cap=1000)
    assert not c.complete
    assert c.last_radius < 50


def test_fit_window_validation():
    c = ball_census(3, 10)
    for bad in [(0, 5), (5, 5), (3, 11)]:
        with pytest.raises(ValueError):
            growth_exponent_estimate(c, bad)


def test_d4_small_radii_by_enumeration():
    # every point within 4 moves of the origin, found by brute force over words
    moves = default_moves(4)
    reach = {(0, 0, 0)}
    layer = {(0, 0, 0)}
    for _ in range(4):
        layer = {mv(v) for v, mv in itertools.product(layer, moves)}
        reach |= layer
    assert ball_census(4, 4).counts[-1] == len(reach)
