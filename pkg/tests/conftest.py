import numpy as np
import pytest

from tvws.net_model import AccessPoint, Network, fixture_fig2, generate_random_network


def two_user_net(d12=100.0, p=(0.1, 0.1), channels=((1, 2), (1, 2)), lam=1.0):
    aps = [
        AccessPoint(0, (0.0, 0.0), p[0], channels[0], lam, 20.0),
        AccessPoint(1, (d12, 0.0), p[1], channels[1], lam, 20.0),
    ]
    return Network(aps=tuple(aps), num_channels=max(max(c) for c in channels))


def random_profile(net, rng):
    return tuple(int(rng.choice(ap.channels)) for ap in net.aps)


def small_random_net(seed, n_max=8, lam=None):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, n_max + 1))
    net = generate_random_network(n, seed)
    if lam is None:
        lam = rng.uniform(0.05, 1.0, size=n)
    return net.with_active_probs(lam)


@pytest.fixture(scope="session")
def fig2():
    return fixture_fig2()
