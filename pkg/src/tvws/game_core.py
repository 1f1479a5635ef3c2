"""Physical-layer payoffs and the two games' utility/potential functions.

A channel profile is a length-N integer sequence; entry n is user n's standing
channel choice (a database channel label in 1..M), kept even while n is idle.

Expectations over the random active set can be evaluated three ways:

* ``exact``: sum over all 2^N activity patterns (N <= 12);
* ``factored``: exact as well, but user n's expectation only enumerates the
  activity of n's co-channel peers, since every other user's activity
  integrates out. Usable at any N with modest co-channel groups;
* ``monte_carlo``: sample mean over seeded draws of the active set.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, ContractViolation
from .net_model import Network, state_matrix, state_probabilities

LOG_BASE = 2.0
MAX_EXACT_USERS = 12
MAX_FACTORED_PEERS = 20
_MC_CHUNK = 1 << 15


@dataclass(frozen=True)
class Mode:
    kind: str = "exact"
    samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("exact", "factored", "monte_carlo"):
            raise ContractViolation(f"unknown expectation mode {self.kind!r}")
        if self.kind == "monte_carlo" and self.samples < 1:
            raise ContractViolation("monte_carlo needs at least one sample")


EXACT = Mode("exact")
FACTORED = Mode("factored")


def monte_carlo(samples: int, seed: int) -> Mode:
    return Mode("monte_carlo", samples=samples, seed=seed)


@dataclass(frozen=True)
class PayoffBreakdown:
    user: int
    channel: int
    sinr: float
    throughput_bps: float
    weighted_interference: float
    co_channel_peers: frozenset


def _log(x):
    return np.log(x) / np.log(LOG_BASE)


def rate(bandwidth_hz, sinr):
    """Shannon rate B log(1 + sinr), in bits/s for the default base 2."""
    return bandwidth_hz * _log(1.0 + sinr)


def check_profile(net: Network, prof: Sequence[int]) -> np.ndarray:
    a = np.asarray(prof, dtype=np.int64)
    if a.shape != (net.n,):
        raise ContractViolation(f"profile must have {net.n} entries, got shape {a.shape}")
    for n, c in enumerate(a):
        if int(c) not in net.aps[n].channels:
            raise ContractViolation(f"AP {net.aps[n].id} (index {n}) cannot use channel {int(c)}; allowed {net.aps[n].channels}")
    return a


def _require_active(b: Iterable[int], n: int) -> None:
    if n not in b:
        raise ContractViolation(f"user {n} is not in the active set")


def co_channel_set(b: Iterable[int], prof: Sequence[int], n: int) -> frozenset:
    b = frozenset(b)
    _require_active(b, n)
    return frozenset(i for i in b if i != n and prof[i] == prof[n])


def max_throughput(net: Network) -> np.ndarray:
    """Interference-free throughput B log(1 + P_n d_n^-alpha / sigma) per user."""
    return rate(net.bandwidth_hz, net.signal / net.noise_watts)


def _interference(net: Network, b, prof, n) -> float:
    peers = co_channel_set(b, prof, n)
    return float(sum(net.gain[i, n] for i in sorted(peers)))


def sinr(net: Network, b, prof, n: int) -> float:
    return float(net.signal[n] / (_interference(net, b, prof, n) + net.noise_watts))


def throughput(net: Network, b, prof, n: int) -> float:
    return float(rate(net.bandwidth_hz, sinr(net, b, prof, n)))


def utility(net: Network, b, prof, n: int) -> float:
    """State-based game payoff; identical to the user's throughput."""
    return throughput(net, b, prof, n)


def weighted_interference(net: Network, b, prof, n: int) -> float:
    peers = co_channel_set(b, prof, n)
    return -float(sum(net.pair_weight[i, n] for i in sorted(peers)))


def potential_phi(net: Network, b, prof) -> float:
    """Aggregate weighted interference over the active users (always <= 0)."""
    return float(sum(weighted_interference(net, b, prof, n) for n in sorted(b)))


def payoff_breakdown(net: Network, b, prof, n: int) -> PayoffBreakdown:
    return PayoffBreakdown(
        user=n,
        channel=int(prof[n]),
        sinr=sinr(net, b, prof, n),
        throughput_bps=throughput(net, b, prof, n),
        weighted_interference=weighted_interference(net, b, prof, n),
        co_channel_peers=co_channel_set(b, prof, n),
    )


# -- vectorized state evaluation --------------------------------------------


def _same_channel(a: np.ndarray) -> np.ndarray:
    c = a[:, None] == a[None, :]
    np.fill_diagonal(c, False)
    return c


def state_throughputs(net: Network, prof, states: np.ndarray) -> np.ndarray:
    """Throughput of every user in every activity pattern (rows of ``states``).

    Inactive users get 0.
    """
    a = np.asarray(prof)
    interference = states @ (net.gain * _same_channel(a))
    rates = rate(net.bandwidth_hz, net.signal / (interference + net.noise_watts))
    return rates * states


def state_potentials(net: Network, prof, states: np.ndarray) -> np.ndarray:
    """phi for every activity pattern."""
    w = net.pair_weight * _same_channel(np.asarray(prof))
    return -np.sum((states @ w) * states, axis=1)


def _weighted_mean(values: np.ndarray, weights: np.ndarray) -> np.ndarray:
    # pairwise summation runs along the contiguous last axis
    prod = np.ascontiguousarray((values * weights[:, None]).T)
    return prod.sum(axis=-1)


def _exact_guard(net: Network) -> None:
    if net.n > MAX_EXACT_USERS:
        raise CapacityError(
            f"exact enumeration of 2^{net.n} states is disabled above N={MAX_EXACT_USERS}; "
            "use the factored or monte_carlo mode"
        )


def _mc_states(net: Network, mode: Mode):
    rng = np.random.default_rng(mode.seed)
    left = mode.samples
    while left > 0:
        k = min(left, _MC_CHUNK)
        yield (rng.random((k, net.n)) < net.active_probs).astype(float)
        left -= k


def _factored_user(net: Network, a: np.ndarray, n: int, channel: int | None = None) -> float:
    """Exact expected throughput of user n on ``channel`` (default: its profile entry)."""
    c = a[n] if channel is None else channel
    peers = [i for i in range(net.n) if i != n and a[i] == c]
    if len(peers) > MAX_FACTORED_PEERS:
        raise CapacityError(f"user {n} has {len(peers)} co-channel peers; too many to enumerate")
    lam = net.active_probs
    if not peers:
        return float(lam[n] * max_throughput(net)[n])
    sub = state_matrix(len(peers))
    plam = lam[peers]
    mu = np.prod(np.where(sub > 0, plam, 1.0 - plam), axis=1)
    interference = sub @ net.gain[peers, n]
    rates = rate(net.bandwidth_hz, net.signal[n] / (interference + net.noise_watts))
    return float(lam[n] * np.sum(mu * rates))


def expected_utilities(net: Network, prof, mode: Mode = EXACT) -> np.ndarray:
    """Robust-game utility (expected throughput) of every user."""
    a = check_profile(net, prof)
    if mode.kind == "exact":
        _exact_guard(net)
        states = state_matrix(net.n)
        return _weighted_mean(state_throughputs(net, a, states), state_probabilities(net, states))
    if mode.kind == "factored":
        return np.array([_factored_user(net, a, n) for n in range(net.n)])
    total = np.zeros(net.n)
    for states in _mc_states(net, mode):
        total += state_throughputs(net, a, states).sum(axis=0)
    return total / mode.samples


def expected_utility(net: Network, prof, n: int, mode: Mode = EXACT) -> float:
    if mode.kind == "factored":
        return _factored_user(net, check_profile(net, prof), n)
    return float(expected_utilities(net, prof, mode)[n])


def expected_network_throughput(net: Network, prof, mode: Mode = EXACT) -> float:
    return float(np.sum(expected_utilities(net, prof, mode)))


def expected_potential(net: Network, prof, mode: Mode = EXACT) -> float:
    """Expected aggregate weighted interference, Phi."""
    a = check_profile(net, prof)
    if mode.kind == "exact":
        _exact_guard(net)
        states = state_matrix(net.n)
        mu = state_probabilities(net, states)
        return float(_weighted_mean(state_potentials(net, a, states)[:, None], mu)[0])
    if mode.kind == "factored":
        return potential_closed_form(net, a)
    total = 0.0
    for states in _mc_states(net, mode):
        total += float(state_potentials(net, a, states).sum())
    return total / mode.samples


def potential_closed_form(net: Network, prof) -> float:
    """-sum over co-channel ordered pairs of lam_i lam_n P_i P_n d_in^-alpha."""
    a = np.asarray(prof)
    lam = net.active_probs
    w = net.pair_weight * _same_channel(a)
    return -float(lam @ w @ lam)


# -- batched evaluation ------------------------------------------------------


def _batch_same(profiles: np.ndarray) -> np.ndarray:
    same = profiles[:, :, None] == profiles[:, None, :]
    idx = np.arange(profiles.shape[1])
    same[:, idx, idx] = False
    return same


def batch_state_eval(net: Network, profiles: np.ndarray, states: np.ndarray):
    """Row k: profile ``profiles[k]`` under activity pattern ``states[k]``.

    Returns ``(throughput, v, phi)`` with shapes (K, N), (K, N), (K,); entries
    for inactive users are 0.
    """
    s = np.asarray(states, dtype=float)
    link = _batch_same(np.asarray(profiles)) & (s[:, :, None] > 0) & (s[:, None, :] > 0)
    interference = np.einsum("kin,in->kn", link, net.gain)
    rates = rate(net.bandwidth_hz, net.signal / (interference + net.noise_watts)) * s
    v = -np.einsum("kin,in->kn", link, net.pair_weight)
    return rates, v, v.sum(axis=1)


def batch_expected(net: Network, profiles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact (2^N enumeration) robust utilities (K, N) and potentials (K,) per profile."""
    _exact_guard(net)
    states = state_matrix(net.n)
    mu = state_probabilities(net, states)
    same = _batch_same(np.asarray(profiles))
    interference = np.einsum("si,kin->ksn", states, same * net.gain)
    rates = rate(net.bandwidth_hz, net.signal / (interference + net.noise_watts)) * states
    omega = np.ascontiguousarray(np.transpose(rates * mu[None, :, None], (0, 2, 1))).sum(axis=-1)
    phi = -np.einsum("si,kin,sn->ks", states, same * net.pair_weight, states)
    return omega, np.ascontiguousarray(phi * mu).sum(axis=-1)
