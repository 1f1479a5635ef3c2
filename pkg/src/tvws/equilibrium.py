"""Centralized baselines: pure-NE checks, best-response dynamics, exhaustive optimum."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import game_core as gc
from .errors import CapacityError
from .game_core import EXACT, FACTORED, Mode
from .net_model import Network

IMPROVEMENT_TOL = 1e-12
MAX_SEARCH_SPACE = 10**7


@dataclass(frozen=True)
class StateGame:
    """The state-based game for a fixed active set."""

    active: frozenset


@dataclass(frozen=True)
class RobustGame:
    """The robust game: payoffs are expectations over the active set."""

    mode: Mode = FACTORED


@dataclass(frozen=True)
class Deviation:
    user: int
    channel: int
    gain: float


@dataclass(frozen=True)
class NeCheck:
    is_ne: bool
    witness: Deviation | None = None

    def __bool__(self):
        return self.is_ne


def _improves(new: float, old: float) -> bool:
    return new - old > IMPROVEMENT_TOL * max(abs(old), abs(new), 1.0)


def channel_payoffs(net: Network, prof: Sequence[int], n: int, game) -> dict[int, float]:
    """Payoff user n would get on each of its channels, others held fixed."""
    a = np.array(prof, dtype=np.int64)
    out = {}
    for c in net.aps[n].channels:
        if isinstance(game, StateGame):
            if n not in game.active:
                return {}
            a[n] = c
            out[c] = gc.utility(net, game.active, a, n)
        elif game.mode.kind == "factored":
            out[c] = gc._factored_user(net, a, n, channel=c)
        else:
            a[n] = c
            out[c] = gc.expected_utility(net, a, n, game.mode)
    return out


def is_pure_ne(net: Network, prof: Sequence[int], game=RobustGame()) -> NeCheck:
    """No user has a strictly better channel (relative gain above ``IMPROVEMENT_TOL``).

    The witness is the first improving deviation with the largest gain for the
    lowest-indexed user that has one.
    """
    gc.check_profile(net, prof)
    for n in range(net.n):
        pay = channel_payoffs(net, prof, n, game)
        if not pay:
            continue
        cur = pay[int(prof[n])]
        best_c = max(pay, key=lambda c: (pay[c], -c))
        if best_c != int(prof[n]) and _improves(pay[best_c], cur):
            return NeCheck(False, Deviation(n, best_c, pay[best_c] - cur))
    return NeCheck(True)


@dataclass
class BrTrace:
    profiles: list[tuple[int, ...]] = field(default_factory=list)
    potential_values: list[float] = field(default_factory=list)
    switches: list[tuple[int, int, int]] = field(default_factory=list)
    converged: bool = False
    rounds: int = 0

    @property
    def final(self) -> tuple[int, ...]:
        return self.profiles[-1]


def _potential(net: Network, a, mode: Mode) -> float:
    if mode.kind == "factored":
        return gc.potential_closed_form(net, a)
    return gc.expected_potential(net, a, mode)


def best_response_dynamics(
    net: Network,
    start: Sequence[int],
    order: str = "random",
    seed: int = 0,
    max_rounds: int = 1000,
    mode: Mode = FACTORED,
) -> BrTrace:
    """Sequential best responses on the robust game.

    A round is one pass over all users (fresh random permutation per pass when
    ``order="random"``). A user moves only if its best channel beats the current
    one by more than ``IMPROVEMENT_TOL`` relative; ties keep the current channel,
    then go to the lowest index. ``profiles``/``potential_values`` hold the start
    point plus one entry per switch.
    """
    a = gc.check_profile(net, start).copy()
    rng = np.random.default_rng(seed)
    game = RobustGame(mode)
    trace = BrTrace(profiles=[tuple(int(x) for x in a)], potential_values=[_potential(net, a, mode)])
    for rnd in range(1, max_rounds + 1):
        trace.rounds = rnd
        users = rng.permutation(net.n) if order == "random" else np.arange(net.n)
        moved = False
        for n in users:
            n = int(n)
            pay = channel_payoffs(net, a, n, game)
            cur = int(a[n])
            best_c = max(pay, key=lambda c: (pay[c], -c))
            if best_c != cur and _improves(pay[best_c], pay[cur]):
                a[n] = best_c
                moved = True
                trace.switches.append((n, cur, best_c))
                trace.profiles.append(tuple(int(x) for x in a))
                trace.potential_values.append(_potential(net, a, mode))
        if not moved:
            trace.converged = True
            break
    return trace


def random_profile(net: Network, rng: np.random.Generator) -> tuple[int, ...]:
    return tuple(int(rng.choice(ap.channels)) for ap in net.aps)


def search_space_size(net: Network) -> int:
    return math.prod(len(ap.channels) for ap in net.aps)


def _profile_batches(net: Network, batch: int):
    it = itertools.product(*(ap.channels for ap in net.aps))
    while True:
        chunk = list(itertools.islice(it, batch))
        if not chunk:
            return
        yield np.array(chunk, dtype=np.int64)


def exhaustive_optimal(net: Network, mode: Mode = EXACT) -> tuple[tuple[int, ...], float]:
    """Profile maximizing expected network throughput; first in lexicographic order on ties."""
    size = search_space_size(net)
    if size > MAX_SEARCH_SPACE:
        raise CapacityError(f"joint profile space has {size} points (limit {MAX_SEARCH_SPACE})")
    best_val = -math.inf
    best = None
    if mode.kind == "exact":
        gc._exact_guard(net)
        batch = max(1, 2_000_000 // (2**net.n * net.n * net.n))
        for profiles in _profile_batches(net, batch):
            vals = gc.batch_expected(net, profiles)[0].sum(axis=1)
            k = int(np.argmax(vals))
            if vals[k] > best_val:
                best_val, best = float(vals[k]), profiles[k]
    else:
        for profiles in _profile_batches(net, 4096):
            for p in profiles:
                v = gc.expected_network_throughput(net, p, mode)
                if v > best_val:
                    best_val, best = v, p
    return tuple(int(x) for x in best), best_val
