"""Distributed stochastic learning automata (linear reward-inaction) for channel selection.

Each user keeps a probability vector over its own available channels. In every
slot the active users sample a channel, all of them transmit simultaneously,
and each active user reinforces its chosen channel in proportion to the
throughput it obtained relative to its interference-free throughput. Idle
users leave their vectors untouched.

Randomness: a master seed spawns two independent streams, one for activity and
one for channel draws. Every slot consumes exactly N uniforms from each
stream whatever happens, so slot k's draws do not depend on the run length.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import game_core as gc
from .errors import ContractViolation
from .net_model import Network

CONVERGED_PROB = 0.99
_CHUNK = 4096


@dataclass
class MixedStrategyTable:
    """Per-user channel probabilities stored densely as an N x M matrix.

    Column m-1 holds the probability of channel m; unavailable channels stay 0.
    """

    q: np.ndarray
    availability: np.ndarray
    step_size: float = 0.1
    slot: int = 1

    def row(self, n: int) -> np.ndarray:
        """User n's probabilities over its own channel list (ascending)."""
        return self.q[n, self.availability[n]]

    def copy(self) -> "MixedStrategyTable":
        return MixedStrategyTable(self.q.copy(), self.availability, self.step_size, self.slot)

    def converged(self, threshold: float = CONVERGED_PROB) -> bool:
        return bool(np.all(self.q.max(axis=1) > threshold))

    def argmax_profile(self) -> tuple[int, ...]:
        # np.argmax returns the first maximum, i.e. the lowest channel on ties
        return tuple(int(c) + 1 for c in np.argmax(self.q, axis=1))


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    active: frozenset
    choices: dict
    raw_throughput: dict
    normalized: dict


@dataclass
class LearningResult:
    table: MixedStrategyTable
    final_profile: tuple[int, ...]
    converged_slot: int | None
    records: list[SlotRecord] = field(default_factory=list)
    history: np.ndarray | None = None


def _check_step(step_size: float) -> None:
    if not 0 < step_size < 1:
        raise ContractViolation(f"step size must lie in (0, 1), got {step_size}")


def init_uniform(net: Network, step_size: float = 0.1) -> MixedStrategyTable:
    _check_step(step_size)
    avail = net.availability
    counts = avail.sum(axis=1, keepdims=True)
    q = np.where(avail, 1.0 / counts, 0.0)
    return MixedStrategyTable(q=q, availability=avail, step_size=step_size, slot=1)


def normalized_payoff(net: Network, b, prof, n: int) -> float:
    r = gc.throughput(net, b, prof, n) / gc.max_throughput(net)[n]
    return float(min(max(r, 0.0), 1.0))


def _apply_update(q: np.ndarray, chosen_col: int, step: float, r: float) -> None:
    br = step * r
    qc = q[chosen_col]
    q -= br * q
    q[chosen_col] = qc + br * (1.0 - qc)


def sla_update(table: MixedStrategyTable, n: int, chosen: int, r: float) -> np.ndarray:
    """Reinforce ``chosen`` for user n in place; returns the new row over n's channels."""
    if not 0.0 <= r <= 1.0:
        raise ContractViolation(f"normalized payoff must lie in [0, 1], got {r}")
    if not (1 <= chosen <= table.q.shape[1]) or not table.availability[n, chosen - 1]:
        raise ContractViolation(f"channel {chosen} is not available to user {n}")
    _apply_update(table.q[n], chosen - 1, table.step_size, r)
    return table.row(n)


def _streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    act, pick = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(act), np.random.default_rng(pick)


def _draw_blocks(seed: int, iterations: int, n: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    act_rng, pick_rng = _streams(seed)
    left = iterations
    while left > 0:
        k = min(left, _CHUNK)
        yield act_rng.random((k, n)), pick_rng.random((k, n))
        left -= k


def _interference(same: np.ndarray, gain: np.ndarray) -> np.ndarray:
    """Sum over interferers i of gain[i, n] where same[..., i, n]; fixed order so
    single and batched runs agree bit for bit."""
    total = np.zeros(same.shape[:-2] + same.shape[-1:])
    for i in range(gain.shape[0]):
        total += np.where(same[..., i, :], gain[i], 0.0)
    return total


def _pick_columns(q: np.ndarray, u: np.ndarray, last_col: np.ndarray) -> np.ndarray:
    cum = np.cumsum(q, axis=-1)
    x = u * cum[..., -1]
    cols = np.sum(cum <= x[..., None], axis=-1)
    # float edge: u * total can round up to total
    return np.minimum(cols, last_col)


def run_learning(
    net: Network,
    iterations: int,
    step_size: float = 0.1,
    seed: int = 0,
    record: bool = False,
    keep_history: bool = False,
    activity: Iterator[np.ndarray] | None = None,
    payoff_override: float | None = None,
) -> LearningResult:
    """Run the learning algorithm for ``iterations`` slots.

    ``activity`` optionally replaces the sampled activity with an explicit
    per-slot boolean mask stream, and ``payoff_override`` pins every
    normalized payoff to a constant; both exist for rigged-input tests.
    """
    if iterations < 1:
        raise ContractViolation("iterations must be at least 1")
    table = init_uniform(net, step_size)
    n_users = net.n
    lam = net.active_probs
    gain, signal = net.gain, net.signal
    rmax = gc.max_throughput(net)
    last_col = (net.num_channels - 1 - np.argmax(net.availability[:, ::-1], axis=1))
    history = [table.q.copy()] if keep_history else None
    records: list[SlotRecord] = []
    converged_slot = None
    k = 0
    for act_u, pick_u in _draw_blocks(seed, iterations, n_users):
        for row in range(len(act_u)):
            k += 1
            active = next(activity) if activity is not None else act_u[row] < lam
            cols = _pick_columns(table.q, pick_u[row], last_col)
            same = (cols[:, None] == cols[None, :]) & active[:, None] & active[None, :]
            interference = _interference(same, gain)
            rate = gc.rate(net.bandwidth_hz, signal / (interference + net.noise_watts))
            r = np.clip(rate / rmax, 0.0, 1.0)
            if payoff_override is not None:
                r[:] = payoff_override
            idx = np.flatnonzero(active)
            for n in idx:
                _apply_update(table.q[n], cols[n], step_size, r[n])
            table.slot = k + 1
            if record:
                records.append(
                    SlotRecord(
                        slot=k,
                        active=frozenset(idx.tolist()),
                        choices={int(n): int(cols[n]) + 1 for n in idx},
                        raw_throughput={int(n): float(rate[n]) for n in idx},
                        normalized={int(n): float(r[n]) for n in idx},
                    )
                )
            if keep_history:
                history.append(table.q.copy())
            if converged_slot is None and table.converged():
                converged_slot = k
    return LearningResult(
        table=table,
        final_profile=table.argmax_profile(),
        converged_slot=converged_slot,
        records=records,
        history=np.array(history) if keep_history else None,
    )


def run_learning_batch(
    net: Network, iterations: int, step_size: float, seeds: Sequence[int]
) -> list[LearningResult]:
    """Many independent runs advanced in lockstep; identical to calling
    :func:`run_learning` once per seed, only faster."""
    if iterations < 1:
        raise ContractViolation("iterations must be at least 1")
    _check_step(step_size)
    runs = len(seeds)
    n_users, m = net.n, net.num_channels
    base = init_uniform(net, step_size)
    q = np.repeat(base.q[None], runs, axis=0)
    lam = net.active_probs
    gain, signal = net.gain, net.signal
    rmax = gc.max_throughput(net)
    last_col = (m - 1 - np.argmax(net.availability[:, ::-1], axis=1))
    gens = [_draw_blocks(s, iterations, n_users) for s in seeds]
    converged_slot = np.full(runs, -1)
    ar = np.arange(runs)[:, None]
    au = np.arange(n_users)[None, :]
    k = 0
    while k < iterations:
        blocks = [next(g) for g in gens]
        act_all = np.stack([b[0] for b in blocks], axis=1)  # (T, R, N)
        pick_all = np.stack([b[1] for b in blocks], axis=1)
        for t in range(act_all.shape[0]):
            k += 1
            active = act_all[t] < lam
            cols = _pick_columns(q, pick_all[t], last_col)
            same = (cols[:, :, None] == cols[:, None, :]) & active[:, :, None] & active[:, None, :]
            interference = _interference(same, gain)
            rate = gc.rate(net.bandwidth_hz, signal / (interference + net.noise_watts))
            br = step_size * np.clip(rate / rmax, 0.0, 1.0) * active
            qc = q[ar, au, cols]
            q -= br[:, :, None] * q
            q[ar, au, cols] = qc + br * (1.0 - qc)
            done = np.all(q.max(axis=2) > CONVERGED_PROB, axis=1) & (converged_slot < 0)
            converged_slot[done] = k
    out = []
    for j in range(runs):
        table = MixedStrategyTable(q[j], net.availability, step_size, iterations + 1)
        out.append(
            LearningResult(
                table=table,
                final_profile=table.argmax_profile(),
                converged_slot=int(converged_slot[j]) if converged_slot[j] >= 0 else None,
            )
        )
    return out
