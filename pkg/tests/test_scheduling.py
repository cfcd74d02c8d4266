import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from faultnet.deployment import Deployment, FailureMask, SeedSpec, place_nodes, sample_failures
from faultnet.errors import InfeasibleLinkError, InvalidParameterError
from faultnet.percolation import build_grid
from faultnet.scheduling import (
    DIRECTIONAL,
    MacParams,
    build_tdma,
    cluster_size,
    effective_delta,
    guard_disks_disjoint,
    protocol_feasible,
    relay_nodes,
    verify_schedule,
)


def _grid(k, n=0, seed=0):
    d = place_nodes(n, SeedSpec(seed))
    return build_grid(d, FailureMask(np.zeros(n, bool), 0.0), 1.0 / k)


def test_effective_delta_omni():
    assert effective_delta(MacParams(delta=0.5)) == 0.5


def test_effective_delta_directional_60_degrees():
    p = MacParams(delta=1.0, antenna=DIRECTIONAL, theta=math.radians(60))
    assert effective_delta(p) == pytest.approx(0.5)


def test_effective_delta_directional_wide_beam():
    assert effective_delta(MacParams(delta=0.3, antenna=DIRECTIONAL, theta=math.pi)) == 0.3


def test_directional_requires_theta():
    with pytest.raises(InvalidParameterError):
        MacParams(delta=1.0, antenna=DIRECTIONAL)


@pytest.mark.parametrize("dp, M", [(0.0, 4), (1.0, 6), (0.5, 5), (2.0, 7)])
def test_cluster_size(dp, M):
    assert cluster_size(dp) == M


@given(st.floats(0, 10))
def test_cluster_size_covers_guard(dp):
    M = cluster_size(dp)
    assert M >= 3
    assert M > 1 + math.sqrt(2) * (2 + dp)
    assert M - 1 <= 1 + math.sqrt(2) * (2 + dp)


def test_tdma_single_phase():
    s = build_tdma(_grid(5), 1)
    assert np.all(s.phase == 0)


def test_tdma_phase_formula():
    s = build_tdma(_grid(10), 3)
    assert s.phase[4, 7] == 4
    assert s.phase[0, 0] == s.phase[3, 3]


def test_tdma_congruence():
    s = build_tdma(_grid(9), 4)
    for a in range(9):
        for b in range(9):
            for c in range(9):
                for e in range(9):
                    same = a % 4 == c % 4 and b % 4 == e % 4
                    assert (s.phase[a, b] == s.phase[c, e]) == same


def test_protocol_single_pair():
    assert protocol_feasible([((0, 0), (0.1, 0))], 1.0, 0.2)


def test_protocol_coincident_receivers():
    active = [((0, 0), (0.5, 0.5)), ((1, 1), (0.5, 0.5))]
    assert not protocol_feasible(active, 0.1, 1.0)


def test_protocol_direct_check():
    active = [((0, 0), (0, 0.1)), ((0, 1), (0, 0.9))]
    assert protocol_feasible(active, 1.0, 0.2)
    assert not protocol_feasible(active, 8.5, 0.2)


def test_protocol_rejects_long_link():
    with pytest.raises(InfeasibleLinkError):
        protocol_feasible([((0, 0), (0.5, 0))], 0.5, 0.2)


def _brute_protocol(active, dp):
    for i, (ti, ri) in enumerate(active):
        own = math.dist(ti, ri)
        for k, (tk, _) in enumerate(active):
            if k != i and math.dist(tk, ri) < (1 + dp) * own:
                return False
    return True


link = st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 2 * math.pi), st.floats(0.001, 0.1))


# delta' below float epsilon rounds 1 + delta' to 1 and is excluded
@given(st.lists(link, min_size=1, max_size=8), st.one_of(st.just(0.0), st.floats(1e-6, 3)))
@settings(max_examples=200, deadline=None)
def test_protocol_matches_brute_force_and_implies_guard_disks(links, dp):
    active = [((x, y), (x + l * math.cos(t), y + l * math.sin(t))) for x, y, t, l in links]
    ok = protocol_feasible(active, dp, 0.1)
    assert ok == _brute_protocol(active, dp)
    if ok:
        assert guard_disks_disjoint(active, dp)


def test_guard_disks_do_not_imply_protocol():
    # receivers far apart, but transmitter 1 sits on receiver 0
    active = [((0, 0), (0.1, 0)), ((0.1, 0.0), (0.1, 0.5))]
    assert guard_disks_disjoint(active, 0.5)
    assert not protocol_feasible(active, 0.5, 0.6)


@pytest.mark.parametrize("dp", [0.0, 0.5, 1.0, 2.0])
def test_schedule_guarantee(dp):
    M = cluster_size(dp)
    for s in range(20):
        spec = SeedSpec(s)
        d = place_nodes(800, spec)
        m = sample_failures(d, 0.3, spec)
        r = 0.03 + 0.2 * np.random.default_rng(s).random()
        g = build_grid(d, m, r / math.sqrt(2))
        assert verify_schedule(g, build_tdma(g, M), dp, r)


def test_schedule_one_phase_fails():
    g = _grid(4)
    r = math.sqrt(2) * g.a
    assert not verify_schedule(g, build_tdma(g, 1), 0.5, r)


def test_schedule_one_short_of_guard_fails():
    dp = 1.0
    g = _grid(20)
    r = math.sqrt(2) * g.a
    M = cluster_size(dp)
    assert verify_schedule(g, build_tdma(g, M), dp, r)
    assert not verify_schedule(g, build_tdma(g, M - 1), dp, r)


def test_schedule_single_cell():
    g = _grid(1)
    for M in (1, 2, 5):
        assert verify_schedule(g, build_tdma(g, M), 2.0, math.sqrt(2))


def test_relay_is_nearest_to_centre():
    pts = np.array([[0.1, 0.1], [0.26, 0.24], [0.3, 0.3], [0.75, 0.75], [0.9, 0.9]])
    faulty = np.array([False, False, False, True, False])
    g = build_grid(Deployment(pts), FailureMask(faulty, 0.0), 0.5)
    relay = relay_nodes(g, pts)
    assert relay[0, 0] == 1
    assert relay[1, 1] == 4
    assert relay[0, 1] == -1


def test_relay_tie_breaks_on_index():
    pts = np.array([[0.2, 0.25], [0.3, 0.25], [0.25, 0.2]])
    g = build_grid(Deployment(pts), FailureMask(np.zeros(3, bool), 0.0), 0.5)
    assert relay_nodes(g, pts)[0, 0] == 0
