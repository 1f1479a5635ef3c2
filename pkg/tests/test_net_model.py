import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvws.errors import ContractViolation
from tvws.harness import SCENARIOS
from tvws.net_model import (
    DEFAULT_POWER_MENU_MW,
    AccessPoint,
    GenerationParams,
    Network,
    dbm_to_watts,
    fixture_fig2,
    generate_random_network,
    load_network,
    network_to_dict,
    sample_active_set,
    save_network,
    state_probabilities,
    state_probability,
)


def test_generate_defaults():
    net = generate_random_network(8, seed=11)
    assert net.n == 8 and net.num_channels == 5
    assert net.bandwidth_hz == 6e6 and net.pathloss_exp == 4.0
    assert net.noise_watts == pytest.approx(1e-13, rel=1e-12)
    menu_w = {p * 1e-3 for p in DEFAULT_POWER_MENU_MW}
    for ap in net.aps:
        assert 1 <= len(ap.channels) and set(ap.channels) <= {1, 2, 3, 4, 5}
        assert ap.tx_power in menu_w
        assert 0 <= ap.position[0] <= 500 and 0 <= ap.position[1] <= 500
        assert ap.rx_distance == 20.0 and ap.active_prob == 0.8


def test_single_ap_network():
    net = generate_random_network(1, seed=0)
    assert net.dist.tolist() == [[0.0]]


def test_generation_is_deterministic():
    a = json.dumps(network_to_dict(generate_random_network(12, seed=5)))
    b = json.dumps(network_to_dict(generate_random_network(12, seed=5)))
    c = json.dumps(network_to_dict(generate_random_network(12, seed=6)))
    assert a == b and a != c


@pytest.mark.parametrize(
    "n, params",
    [
        (0, GenerationParams()),
        (3, GenerationParams(vacancy_prob=0.0)),
        (3, GenerationParams(vacancy_prob=1.5)),
        (3, GenerationParams(power_menu_mw=())),
    ],
)
def test_generation_rejects_bad_input(n, params):
    with pytest.raises(ContractViolation):
        generate_random_network(n, 0, params)


def test_sparse_vacancy_redraws_empty_sets():
    net = generate_random_network(30, seed=2, params=GenerationParams(vacancy_prob=0.05))
    assert all(len(ap.channels) >= 1 for ap in net.aps)


def test_vacancy_rate_matches_theta():
    net = generate_random_network(2000, seed=3)
    sizes = np.array([len(ap.channels) for ap in net.aps])
    # conditional on non-empty: E|A| = 5*0.7 / (1 - 0.3^5)
    assert sizes.mean() == pytest.approx(3.5 / (1 - 0.3**5), abs=0.06)


def test_dist_is_symmetric_euclidean():
    net = generate_random_network(9, seed=4)
    pos = np.array([ap.position for ap in net.aps])
    for i, j in itertools.product(range(9), repeat=2):
        expect = math.hypot(*(pos[i] - pos[j]))
        assert net.dist[i, j] == pytest.approx(expect, rel=1e-9, abs=0)
        assert net.dist[i, j] == net.dist[j, i]
    assert not net.dist.flags.writeable


def test_fixture_published_values(fig2):
    assert fig2.n == 8
    assert fig2.aps[0].channels == (1, 2)
    assert fig2.aps[0].tx_power == pytest.approx(0.350)
    assert fig2.aps[1].channels == (2, 3, 4)
    assert fig2.aps[2].channels == (1, 3, 4)
    assert fig2.aps[3].channels == (3, 4)
    assert all(ap.active_prob == 0.8 for ap in fig2.aps)
    assert fig2.noise_watts == pytest.approx(1e-13, rel=1e-12)


def test_round_trip(tmp_path, fig2):
    path = tmp_path / "net.json"
    save_network(fig2, path)
    back = load_network(path)
    assert network_to_dict(back) == network_to_dict(fig2)
    assert np.array_equal(back.dist, fig2.dist)
    doc = json.loads(path.read_text())
    assert doc["aps"][0]["id"] == 1 and doc["aps"][0]["channels"] == [1, 2]


def test_invalid_access_points():
    with pytest.raises(ContractViolation):
        AccessPoint(0, (0, 0), 0.1, (), 0.5, 20.0)
    with pytest.raises(ContractViolation):
        AccessPoint(0, (0, 0), 0.1, (1, 1), 0.5, 20.0)
    with pytest.raises(ContractViolation):
        AccessPoint(0, (0, 0), 0.1, (1,), 0.0, 20.0)
    with pytest.raises(ContractViolation):
        AccessPoint(0, (0, 0), -1.0, (1,), 0.5, 20.0)
    ap = AccessPoint(0, (0, 0), 0.1, (6,), 0.5, 20.0)
    with pytest.raises(ContractViolation):
        Network(aps=(ap,), num_channels=5)


def test_dbm_conversion():
    assert dbm_to_watts(-100.0) == pytest.approx(1e-13, rel=1e-12)
    assert dbm_to_watts(30.0) == pytest.approx(1.0)


# -- state probabilities -----------------------------------------------------


def test_state_probability_homogeneous(fig2):
    assert state_probability(fig2, range(8)) == pytest.approx(0.8**8, rel=1e-14)
    assert 0.8**8 == pytest.approx(0.16777216, rel=1e-14)
    assert state_probability(fig2, ()) == pytest.approx(0.2**8, rel=1e-14)


def test_state_probability_scenario1(fig2):
    net = fig2.with_active_probs(SCENARIOS[1])
    lam = SCENARIOS[1]
    direct = lam[0] * lam[1]
    for p in lam[2:]:
        direct *= 1 - p
    assert state_probability(net, {0, 1}) == pytest.approx(direct, rel=1e-14)
    total = math.fsum(state_probability(net, b) for k in range(9) for b in itertools.combinations(range(8), k))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_state_probability_rejects_unknown_user(fig2):
    with pytest.raises(ContractViolation):
        state_probability(fig2, {8})


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=12))
def test_state_probabilities_sum_to_one(lams):
    net = generate_random_network(len(lams), seed=0).with_active_probs(lams)
    mu = state_probabilities(net)
    assert np.all(mu >= 0) and np.all(mu <= 1)
    assert abs(math.fsum(mu) - 1.0) <= 1e-12


def test_vectorized_state_probabilities_match_scalar():
    net = generate_random_network(5, seed=1).with_active_probs([0.1, 0.35, 0.5, 0.9, 1.0])
    mu = state_probabilities(net)
    for k in range(32):
        members = {i for i in range(5) if k >> i & 1}
        assert mu[k] == pytest.approx(state_probability(net, members), rel=1e-14, abs=1e-300)


# -- sampling ----------------------------------------------------------------


def test_sampling_all_active():
    net = generate_random_network(6, seed=0).with_active_probs(1.0)
    rng = np.random.default_rng(0)
    assert all(sample_active_set(net, rng) == frozenset(range(6)) for _ in range(100))


def test_sampling_inclusion_rate():
    net = generate_random_network(5, seed=0).with_active_probs(0.5)
    rng = np.random.default_rng(1)
    counts = np.zeros(5)
    for _ in range(100_000):
        for i in sample_active_set(net, rng):
            counts[i] += 1
    assert np.all(np.abs(counts / 100_000 - 0.5) < 0.01)


def test_sampling_histogram_matches_state_probability():
    net = generate_random_network(4, seed=0).with_active_probs([0.2, 0.5, 0.7, 0.9])
    rng = np.random.default_rng(2)
    hist = {}
    draws = 1_000_000
    for _ in range(draws):
        b = sample_active_set(net, rng)
        hist[b] = hist.get(b, 0) + 1
    gaps = [
        abs(hist.get(frozenset(b), 0) / draws - state_probability(net, b))
        for k in range(5)
        for b in itertools.combinations(range(4), k)
    ]
    assert max(gaps) < 0.005


def test_sampling_deterministic_per_rng_state():
    net = generate_random_network(7, seed=0)
    a = [sample_active_set(net, np.random.default_rng(9)) for _ in range(3)]
    assert a[0] == a[1] == a[2]
