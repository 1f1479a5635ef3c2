"""Network topology, database answers and user activity statistics.

Internally user ids and channel indices are 0-based for users and 1-based for
channels (channel numbers are the database labels, so they stay as-is).
Everything is in SI units: watts, meters, hertz.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractViolation

ActiveSet = frozenset  # frozenset[int] of active user ids

DEFAULT_POWER_MENU_MW = (100.0, 200.0, 250.0, 300.0, 350.0, 280.0, 400.0)


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * np.log10(watts) + 30.0


@dataclass(frozen=True)
class AccessPoint:
    id: int
    position: tuple[float, float]
    tx_power: float
    channels: tuple[int, ...]
    active_prob: float
    rx_distance: float

    def __post_init__(self):
        if not self.tx_power > 0:
            raise ContractViolation(f"AP {self.id}: tx_power must be positive")
        if not self.rx_distance > 0:
            raise ContractViolation(f"AP {self.id}: rx_distance must be positive")
        if not 0 < self.active_prob <= 1:
            raise ContractViolation(f"AP {self.id}: active_prob must lie in (0, 1]")
        if not self.channels:
            raise ContractViolation(f"AP {self.id}: empty channel set")
        if len(set(self.channels)) != len(self.channels):
            raise ContractViolation(f"AP {self.id}: duplicate channels")
        object.__setattr__(self, "channels", tuple(sorted(int(c) for c in self.channels)))
        object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))


def _pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


@dataclass(frozen=True)
class Network:
    """Immutable network description.

    ``dist`` is derived from the AP positions (transmitter to transmitter),
    so it is symmetric by construction.
    """

    aps: tuple[AccessPoint, ...]
    num_channels: int
    bandwidth_hz: float = 6e6
    noise_watts: float = 1e-13
    pathloss_exp: float = 4.0
    dist: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "aps", tuple(self.aps))
        if self.num_channels < 1:
            raise ContractViolation("num_channels must be positive")
        if not self.aps:
            raise ContractViolation("a network needs at least one AP")
        for k, ap in enumerate(self.aps):
            if ap.id != k:
                raise ContractViolation(f"AP ids must be 0..N-1 in order, got {ap.id} at {k}")
            if ap.channels[0] < 1 or ap.channels[-1] > self.num_channels:
                raise ContractViolation(f"AP {k}: channels outside 1..{self.num_channels}")
        pos = np.array([ap.position for ap in self.aps], dtype=float)
        d = _pairwise_distances(pos)
        off = ~np.eye(len(self.aps), dtype=bool)
        if np.any(d[off] <= 0):
            raise ContractViolation("two APs share a position")
        d.setflags(write=False)
        object.__setattr__(self, "dist", d)

    @property
    def n(self) -> int:
        return len(self.aps)

    @cached_property
    def powers(self) -> np.ndarray:
        return _ro(np.array([ap.tx_power for ap in self.aps]))

    @cached_property
    def active_probs(self) -> np.ndarray:
        return _ro(np.array([ap.active_prob for ap in self.aps]))

    @cached_property
    def signal(self) -> np.ndarray:
        """Received desired-signal power P_n d_n^-alpha per user."""
        d = np.array([ap.rx_distance for ap in self.aps])
        return _ro(self.powers * d ** (-self.pathloss_exp))

    @cached_property
    def gain(self) -> np.ndarray:
        """``gain[i, n]`` = P_i d_in^-alpha, the interference i causes at n; zero diagonal."""
        with np.errstate(divide="ignore"):
            g = self.powers[:, None] * self.dist ** (-self.pathloss_exp)
        np.fill_diagonal(g, 0.0)
        return _ro(g)

    @cached_property
    def pair_weight(self) -> np.ndarray:
        """``pair_weight[i, n]`` = P_i P_n d_in^-alpha (symmetric, zero diagonal)."""
        return _ro(self.gain * self.powers[None, :])

    @cached_property
    def availability(self) -> np.ndarray:
        """Boolean N x M mask, column m-1 for channel m."""
        mask = np.zeros((self.n, self.num_channels), dtype=bool)
        for ap in self.aps:
            mask[ap.id, np.asarray(ap.channels) - 1] = True
        return _ro(mask)

    def channels(self, n: int) -> tuple[int, ...]:
        return self.aps[n].channels

    def with_active_probs(self, probs: float | Sequence[float]) -> "Network":
        """Copy of the network with activity probabilities replaced."""
        if np.isscalar(probs):
            probs = [float(probs)] * self.n
        if len(probs) != self.n:
            raise ContractViolation(f"expected {self.n} active probabilities, got {len(probs)}")
        aps = [replace(ap, active_prob=float(p)) for ap, p in zip(self.aps, probs)]
        return replace(self, aps=tuple(aps))


def _ro(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GenerationParams:
    area_m: float = 500.0
    num_channels: int = 5
    bandwidth_hz: float = 6e6
    noise_dbm: float = -100.0
    pathloss_exp: float = 4.0
    rx_distance_m: float = 20.0
    vacancy_prob: float = 0.7
    active_prob: float = 0.8
    power_menu_mw: tuple[float, ...] = DEFAULT_POWER_MENU_MW


def generate_random_network(n_aps: int, seed: int, params: GenerationParams | None = None) -> Network:
    """Draw a random topology: uniform positions, i.i.d. channel vacancy, menu powers.

    An AP whose vacancy draw leaves it with no channel is redrawn until it has one.
    """
    p = params or GenerationParams()
    if n_aps < 1:
        raise ContractViolation("n_aps must be at least 1")
    if not 0 < p.vacancy_prob <= 1:
        raise ContractViolation("vacancy probability must lie in (0, 1]")
    if not p.power_menu_mw:
        raise ContractViolation("power menu is empty")
    rng = np.random.default_rng(seed)
    positions = rng.uniform(0.0, p.area_m, size=(n_aps, 2))
    aps = []
    for k in range(n_aps):
        while True:
            vacant = rng.random(p.num_channels) < p.vacancy_prob
            if vacant.any():
                break
        power_mw = p.power_menu_mw[rng.integers(len(p.power_menu_mw))]
        aps.append(
            AccessPoint(
                id=k,
                position=tuple(positions[k]),
                tx_power=power_mw * 1e-3,
                channels=tuple(int(c) + 1 for c in np.flatnonzero(vacant)),
                active_prob=p.active_prob,
                rx_distance=p.rx_distance_m,
            )
        )
    return Network(
        aps=tuple(aps),
        num_channels=p.num_channels,
        bandwidth_hz=p.bandwidth_hz,
        noise_watts=dbm_to_watts(p.noise_dbm),
        pathloss_exp=p.pathloss_exp,
    )


# -- serialization -----------------------------------------------------------


def network_to_dict(net: Network) -> dict:
    return {
        "num_channels": net.num_channels,
        "bandwidth_hz": net.bandwidth_hz,
        "noise_dbm": round(float(watts_to_dbm(net.noise_watts)), 9),
        "pathloss_exp": net.pathloss_exp,
        "aps": [
            {
                "id": ap.id + 1,
                "x_m": ap.position[0],
                "y_m": ap.position[1],
                "power_mw": round(ap.tx_power * 1e3, 9),
                "channels": list(ap.channels),
                "active_prob": ap.active_prob,
                "rx_distance_m": ap.rx_distance,
            }
            for ap in net.aps
        ],
    }


def network_from_dict(doc: dict) -> Network:
    try:
        records = sorted(doc["aps"], key=lambda r: int(r["id"]))
        aps = tuple(
            AccessPoint(
                id=int(r["id"]) - 1,
                position=(float(r["x_m"]), float(r["y_m"])),
                tx_power=float(r["power_mw"]) * 1e-3,
                channels=tuple(int(c) for c in r["channels"]),
                active_prob=float(r.get("active_prob", 1.0)),
                rx_distance=float(r["rx_distance_m"]),
            )
            for r in records
        )
        return Network(
            aps=aps,
            num_channels=int(doc["num_channels"]),
            bandwidth_hz=float(doc["bandwidth_hz"]),
            noise_watts=dbm_to_watts(float(doc["noise_dbm"])),
            pathloss_exp=float(doc["pathloss_exp"]),
        )
    except KeyError as exc:
        raise ContractViolation(f"network document is missing field {exc}") from None


def save_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2) + "\n")


def load_network(path: str | Path) -> Network:
    return network_from_dict(json.loads(Path(path).read_text()))


def fixture_fig2() -> Network:
    """The 8-AP convergence/throughput fixture (all users active with prob 0.8).

    AP 1-4 channel sets and AP 1's 350 mW power are the published values; the
    rest of the layout is a repo constant kept in ``data/fig2_network.json``.
    """
    text = resources.files("tvws").joinpath("data/fig2_network.json").read_text()
    return network_from_dict(json.loads(text))


# -- activity model ----------------------------------------------------------


def state_probability(net: Network, b: Iterable[int]) -> float:
    """Probability that exactly the users in ``b`` are active."""
    members = set(b)
    if not members <= set(range(net.n)):
        raise ContractViolation(f"active set {sorted(members)} has unknown users")
    lam = net.active_probs
    p = 1.0
    for k in range(net.n):
        p *= lam[k] if k in members else 1.0 - lam[k]
    return p


def sample_active_set(net: Network, rng: np.random.Generator) -> ActiveSet:
    draws = rng.random(net.n)
    return frozenset(np.flatnonzero(draws < net.active_probs).tolist())


def state_matrix(n: int) -> np.ndarray:
    """All 2^n activity patterns as a (2^n, n) 0/1 float matrix; row k is the binary of k."""
    k = np.arange(2**n, dtype=np.int64)
    return ((k[:, None] >> np.arange(n)) & 1).astype(float)


def state_probabilities(net: Network, states: np.ndarray | None = None) -> np.ndarray:
    """mu(B) for every row of ``states`` (all 2^N states by default)."""
    s = state_matrix(net.n) if states is None else states
    lam = net.active_probs
    return np.prod(np.where(s > 0, lam, 1.0 - lam), axis=1)
