import itertools

import numpy as np
import pytest

from conftest import random_profile, small_random_net, two_user_net
from tvws import equilibrium as eq
from tvws import game_core as gc
from tvws.errors import CapacityError
from tvws.net_model import generate_random_network


def brute_robust_ne(net, prof):
    """Enumerate every unilateral deviation with full 2^N expectations."""
    for n in range(net.n):
        cur = gc.expected_utility(net, prof, n, gc.EXACT)
        for c in net.aps[n].channels:
            new = list(prof)
            new[n] = c
            val = gc.expected_utility(net, new, n, gc.EXACT)
            if val - cur > eq.IMPROVEMENT_TOL * max(abs(cur), abs(val), 1.0):
                return False
    return True


def brute_state_ne(net, b, prof):
    for n in b:
        cur = gc.utility(net, b, prof, n)
        for c in net.aps[n].channels:
            new = list(prof)
            new[n] = c
            if gc.utility(net, b, new, n) - cur > eq.IMPROVEMENT_TOL * max(cur, 1.0):
                return False
    return True


def test_single_user_always_ne():
    net = generate_random_network(1, seed=0)
    for c in net.aps[0].channels:
        assert eq.is_pure_ne(net, (c,))
        assert eq.is_pure_ne(net, (c,), eq.StateGame(frozenset({0})))


def test_shared_channel_not_ne():
    net = two_user_net()
    check = eq.is_pure_ne(net, (1, 1))
    assert not check.is_ne
    assert check.witness.user == 0 and check.witness.channel == 2 and check.witness.gain > 0
    assert eq.is_pure_ne(net, (1, 2))
    assert not eq.is_pure_ne(net, (2, 2), eq.StateGame(frozenset({0, 1})))
    # an idle peer causes no interference in the state-based game
    assert eq.is_pure_ne(net, (1, 1), eq.StateGame(frozenset({0})))


def test_ne_check_matches_exhaustive_oracle():
    rng = np.random.default_rng(0)
    agree = 0
    for seed in range(8):
        net = small_random_net(seed, n_max=4)
        for _ in range(10):
            prof = random_profile(net, rng)
            assert eq.is_pure_ne(net, prof, eq.RobustGame(gc.EXACT)).is_ne == brute_robust_ne(net, prof)
            assert eq.is_pure_ne(net, prof).is_ne == brute_robust_ne(net, prof)
            b = frozenset(i for i in range(net.n) if rng.random() < 0.7)
            assert eq.is_pure_ne(net, prof, eq.StateGame(b)).is_ne == brute_state_ne(net, b, prof)
            agree += 1
    assert agree == 80


def test_br_from_equilibrium_is_fixed_point():
    net = two_user_net()
    trace = eq.best_response_dynamics(net, (1, 2), order="round_robin")
    assert trace.converged and trace.rounds == 1 and not trace.switches


def test_br_separates_two_users():
    net = two_user_net()
    trace = eq.best_response_dynamics(net, (1, 1), order="round_robin")
    assert trace.converged and trace.rounds == 2
    assert len(trace.switches) == 1
    assert sorted(trace.final) == [1, 2]
    assert trace.potential_values[-1] > trace.potential_values[0]


def test_br_converges_to_ne_on_random_networks():
    for seed in range(15):
        net = small_random_net(seed)
        rng = np.random.default_rng(seed)
        trace = eq.best_response_dynamics(net, random_profile(net, rng), seed=seed)
        assert trace.converged
        assert brute_robust_ne(net, trace.final)
        assert len(trace.profiles) == len(trace.potential_values) == len(trace.switches) + 1


def test_br_is_deterministic(fig2):
    a = eq.best_response_dynamics(fig2, (1, 2, 1, 3, 1, 2, 1, 3), seed=5)
    b = eq.best_response_dynamics(fig2, (1, 2, 1, 3, 1, 2, 1, 3), seed=5)
    assert a.profiles == b.profiles


def test_br_exact_and_factored_agree(fig2):
    start = (2, 4, 3, 4, 5, 5, 4, 5)
    a = eq.best_response_dynamics(fig2, start, seed=1, mode=gc.FACTORED)
    b = eq.best_response_dynamics(fig2, start, seed=1, mode=gc.EXACT)
    assert a.profiles == b.profiles


def test_br_tie_keeps_current_channel():
    # user 1 is the only user: every channel is interference-free, so it stays put
    net = generate_random_network(1, seed=4)
    if len(net.aps[0].channels) > 1:
        last = net.aps[0].channels[-1]
        assert eq.best_response_dynamics(net, (last,)).final == (last,)


def test_optimal_single_user():
    net = generate_random_network(1, seed=4)
    prof, val = eq.exhaustive_optimal(net)
    assert prof == (net.aps[0].channels[0],)
    assert val == pytest.approx(0.8 * gc.max_throughput(net)[0], rel=1e-12)


def test_optimal_two_users_orthogonal():
    net = two_user_net()
    prof, val = eq.exhaustive_optimal(net)
    assert prof == (1, 2)
    assert val == pytest.approx(gc.max_throughput(net).sum(), rel=1e-12)


def test_optimal_matches_brute_force():
    for seed in range(5):
        net = small_random_net(seed, n_max=5)
        best_val, best = -1.0, None
        for p in itertools.product(*(ap.channels for ap in net.aps)):
            v = gc.expected_network_throughput(net, p)
            if v > best_val * (1 + 1e-13):
                best_val, best = v, p
        prof, val = eq.exhaustive_optimal(net)
        assert val == pytest.approx(best_val, rel=1e-12)
        assert gc.expected_network_throughput(net, prof) == pytest.approx(best_val, rel=1e-12)


def test_optimal_factored_and_monte_carlo_modes():
    net = small_random_net(2, n_max=4)
    p1, v1 = eq.exhaustive_optimal(net, gc.EXACT)
    p2, v2 = eq.exhaustive_optimal(net, gc.FACTORED)
    assert p1 == p2 and v1 == pytest.approx(v2, rel=1e-12)
    _, v3 = eq.exhaustive_optimal(net, gc.monte_carlo(20_000, 0))
    assert v3 == pytest.approx(v1, rel=0.02)


def test_optimal_search_space_guard(monkeypatch, fig2):
    monkeypatch.setattr(eq, "MAX_SEARCH_SPACE", 10)
    with pytest.raises(CapacityError):
        eq.exhaustive_optimal(fig2)


def test_optimal_bounds_every_br_equilibrium(fig2):
    _, opt = eq.exhaustive_optimal(fig2)
    for s in range(20):
        trace = eq.best_response_dynamics(fig2, random_profile(fig2, np.random.default_rng(s)), seed=s)
        assert gc.expected_network_throughput(fig2, trace.final) <= opt * (1 + 1e-12)
