"""Experiment orchestration: scenario configs, trial drivers, aggregation and output files.

Config files are YAML documents::

    schema_version: 1
    name: fig4
    network: {source: fixture}          # or {source: file, path: ...}
                                        # or {source: random, topologies: 100, params: {...}}
    lambda: 0.8                         # number, per-user list or "scenario1".."scenario6"
    sweep: {kind: lambda, values: [0.1, 0.2]}   # kind: lambda | scenario | n_aps
    methods: [optimal, best_response, learning]
    trials: 200                         # learning runs per topology and sweep point
    br_trials: 500                      # best-response runs per topology and sweep point
    iterations: 2000
    step_size: 0.1
    expectation: {mode: auto, samples: 100000}
    seed: 0
    output: {stem: fig4, formats: [csv, json]}
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import equilibrium as eq
from . import game_core as gc
from . import learning
from .errors import CapacityError, ContractViolation
from .net_model import GenerationParams, Network, fixture_fig2, generate_random_network, load_network

SCHEMA_VERSION = 1
METHODS = ("optimal", "best_response", "learning")

SCENARIOS = {
    1: (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8),
    2: (0.3, 0.3, 0.3, 0.6, 0.6, 0.9, 0.9, 0.9),
    3: (0.3, 0.4, 0.5, 0.5, 0.5, 0.6, 0.7, 0.8),
    4: (0.4, 0.4, 0.4, 0.6, 0.6, 0.6, 0.6, 0.6),
    5: (0.3, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.7),
    6: (0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.6, 0.7),
}

RECORD_COLUMNS = (
    "method",
    "sweep_value",
    "topology",
    "trial",
    "seed",
    "expected_throughput_bps",
    "normalized_throughput",
    "rounds_or_slots",
)


def scenario_probs(name: str | int) -> tuple[float, ...]:
    key = name
    if isinstance(name, str):
        key = name.lower().removeprefix("scenario").strip()
    try:
        return SCENARIOS[int(key)]
    except (KeyError, ValueError):
        raise ContractViolation(f"unknown scenario {name!r}; expected scenario1..scenario6") from None


# -- config ------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    kind: str = "sweep"
    network: dict = field(default_factory=lambda: {"source": "fixture"})
    lambda_override: Any = None
    sweep: dict | None = None
    methods: tuple[str, ...] = METHODS
    trials: int = 200
    br_trials: int = 500
    iterations: int = 2000
    step_size: float = 0.1
    expectation: dict = field(default_factory=lambda: {"mode": "auto", "samples": 100_000})
    seed: int = 0
    output: dict = field(default_factory=lambda: {"formats": ["csv"]})

    def __post_init__(self):
        self.methods = tuple(self.methods)
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ContractViolation(f"unknown methods {sorted(bad)}")
        if self.trials < 1 or self.br_trials < 1:
            raise ContractViolation("trial counts must be at least 1")
        if self.iterations < 1:
            raise ContractViolation("iterations must be at least 1")
        if self.kind not in ("sweep", "convergence"):
            raise ContractViolation(f"unknown experiment kind {self.kind!r}")
        src = self.network.get("source", "fixture")
        if src not in ("fixture", "file", "random"):
            raise ContractViolation(f"unknown network source {src!r}")
        if src == "file" and "path" not in self.network:
            raise ContractViolation("network source 'file' needs a path")
        if self.sweep:
            kind = self.sweep.get("kind")
            values = self.sweep.get("values", [])
            if kind == "lambda" and not all(0 < float(v) <= 1 for v in values):
                raise ContractViolation("lambda sweep values must lie in (0, 1]")
            elif kind == "n_aps" and not all(int(v) >= 1 for v in values):
                raise ContractViolation("n_aps sweep values must be >= 1")
            elif kind == "scenario":
                for v in values:
                    scenario_probs(v)
            elif kind not in ("lambda", "n_aps", "scenario"):
                raise ContractViolation(f"unknown sweep kind {kind!r}")

    @property
    def stem(self) -> str:
        return self.output.get("stem", self.name)


def config_from_dict(doc: dict) -> ExperimentConfig:
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ContractViolation(f"unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    known = {f.name for f in fields(ExperimentConfig)}
    kwargs = {k: v for k, v in doc.items() if k in known}
    if "lambda" in doc:
        kwargs["lambda_override"] = doc["lambda"]
    return ExperimentConfig(**kwargs)


def load_config(path: str | Path) -> dict:
    """Raw YAML document; callers pick the keys their subcommand needs."""
    with open(path) as fh:
        doc = yaml.safe_load(fh) or {}
    if not isinstance(doc, dict):
        raise ContractViolation(f"{path}: config must be a mapping")
    return doc


def load_experiment(path: str | Path) -> ExperimentConfig:
    return config_from_dict(load_config(path))


# -- helpers -----------------------------------------------------------------


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def apply_lambda(net: Network, value) -> Network:
    if value is None:
        return net
    if isinstance(value, str):
        probs = scenario_probs(value)
        if len(probs) != net.n:
            raise ContractViolation(f"scenario {value} is defined for 8 users, network has {net.n}")
        return net.with_active_probs(probs)
    return net.with_active_probs(value)


def resolve_mode(net: Network, expectation: dict, seed: int = 0) -> gc.Mode:
    kind = expectation.get("mode", "auto")
    if kind == "auto":
        kind = "exact" if net.n <= gc.MAX_EXACT_USERS else "factored"
    if kind == "monte_carlo":
        return gc.monte_carlo(int(expectation.get("samples", 100_000)), seed)
    return gc.Mode(kind)


def network_from_spec(spec: dict, base_dir: Path | None = None, n_aps: int | None = None, topology: int = 0,
                      seed: int = 0) -> Network:
    src = spec.get("source", "fixture")
    if src == "fixture":
        return fixture_fig2()
    if src == "file":
        path = Path(spec["path"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_network(path)
    params = GenerationParams(**{k: (tuple(v) if isinstance(v, list) else v)
                                 for k, v in spec.get("params", {}).items()})
    n = int(n_aps if n_aps is not None else spec.get("n_aps", 8))
    return generate_random_network(n, derive_seed(seed, n, topology), params)


# -- records -----------------------------------------------------------------


@dataclass(frozen=True)
class RunRecord:
    method: str
    sweep_value: Any
    topology: int
    trial: int
    seed: int
    expected_throughput_bps: float
    normalized_throughput: float | None
    rounds_or_slots: int


@dataclass
class ExperimentResult:
    records: list[RunRecord]
    summary: list[dict]
    summary_columns: tuple[str, ...]


def _sweep_points(cfg: ExperimentConfig) -> tuple[str, list]:
    if not cfg.sweep:
        return "lambda", [cfg.lambda_override]
    kind = cfg.sweep["kind"]
    values = list(cfg.sweep["values"])
    return kind, values


def _method_code(method: str) -> int:
    return METHODS.index(method)


def run_point(cfg: ExperimentConfig, net: Network, point: int, topology: int, sweep_value) -> tuple[list[RunRecord], dict]:
    """All requested methods on one network; returns records and raw method values."""
    mode = resolve_mode(net, cfg.expectation, derive_seed(cfg.seed, point, topology, 99))
    records: list[RunRecord] = []
    out: dict[str, Any] = {}
    if "optimal" in cfg.methods:
        try:
            _, opt = eq.exhaustive_optimal(net, mode)
        except CapacityError as exc:
            raise CapacityError(f"sweep point {sweep_value!r}: {exc}") from None
        out["optimal"] = opt
        records.append(RunRecord("optimal", sweep_value, topology, 0, 0, opt, 1.0, 0))
    if "best_response" in cfg.methods:
        br_vals = []
        br_mode = gc.FACTORED if mode.kind == "exact" else mode
        for t in range(cfg.br_trials):
            s = derive_seed(cfg.seed, point, topology, _method_code("best_response"), t)
            rng = np.random.default_rng(s)
            trace = eq.best_response_dynamics(net, eq.random_profile(net, rng), seed=s, mode=br_mode)
            if not trace.converged:
                raise RuntimeError(f"best response did not converge (sweep {sweep_value!r}, seed {s})")
            val = gc.expected_network_throughput(net, trace.final, mode)
            br_vals.append(val)
            records.append(RunRecord("best_response", sweep_value, topology, t, s, val, None, trace.rounds))
        out["best_ne"], out["worst_ne"] = max(br_vals), min(br_vals)
    if "learning" in cfg.methods:
        seeds = [derive_seed(cfg.seed, point, topology, _method_code("learning"), t) for t in range(cfg.trials)]
        runs = learning.run_learning_batch(net, cfg.iterations, cfg.step_size, seeds)
        vals = []
        for t, (s, r) in enumerate(zip(seeds, runs)):
            val = gc.expected_network_throughput(net, r.final_profile, mode)
            vals.append(val)
            slots = r.converged_slot if r.converged_slot is not None else cfg.iterations
            records.append(RunRecord("learning", sweep_value, topology, t, s, val, None, slots))
        out["learning"] = vals
        out["learning_converged"] = float(np.mean([r.converged_slot is not None for r in runs]))
    out["interference_free"] = float(np.sum(net.active_probs * gc.max_throughput(net)))
    ref = out.get("optimal", out.get("best_ne"))
    if ref:
        records = [
            r if r.method == "optimal" else RunRecord(**{**asdict(r), "normalized_throughput": r.expected_throughput_bps / ref})
            for r in records
        ]
    return records, out


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return float(np.mean(xs)) if xs else None


def run_experiment(cfg: ExperimentConfig, base_dir: Path | None = None) -> ExperimentResult:
    """Run every sweep point and aggregate a per-point summary row.

    Summary columns: ``<sweep kind>, optimal, best_ne, worst_ne, learning_mean,
    learning_std`` plus ``learning_converged`` (share of runs whose rows all
    exceeded 0.99), ``learning_vs_best_ne`` (mean over topologies of learning
    mean / best NE) and ``learning_vs_interference_free`` (learning mean over
    sum of lam_n * R_n^max). Values are averaged over topologies for random
    networks.
    """
    kind, values = _sweep_points(cfg)
    topologies = int(cfg.network.get("topologies", 1)) if cfg.network.get("source") == "random" else 1
    records: list[RunRecord] = []
    summary = []
    for point, value in enumerate(values):
        per_topo = []
        for topo in range(topologies):
            n_aps = int(value) if kind == "n_aps" else None
            net = network_from_spec(cfg.network, base_dir, n_aps=n_aps, topology=topo, seed=cfg.seed)
            if kind == "lambda" and value is not None:
                net = apply_lambda(net, float(value))
            elif kind == "scenario":
                net = apply_lambda(net, f"scenario{value}" if not str(value).startswith("scenario") else value)
            else:
                net = apply_lambda(net, cfg.lambda_override)
            recs, out = run_point(cfg, net, point, topo, value)
            records.extend(recs)
            per_topo.append(out)
        row: dict[str, Any] = {kind: value}
        row["optimal"] = _mean([o.get("optimal") for o in per_topo])
        row["best_ne"] = _mean([o.get("best_ne") for o in per_topo])
        row["worst_ne"] = _mean([o.get("worst_ne") for o in per_topo])
        learn = [np.mean(o["learning"]) for o in per_topo if "learning" in o]
        row["learning_mean"] = _mean(learn)
        if topologies == 1 and per_topo[0].get("learning"):
            row["learning_std"] = float(np.std(per_topo[0]["learning"]))
        else:
            row["learning_std"] = float(np.std(learn)) if learn else None
        row["learning_converged"] = _mean([o.get("learning_converged") for o in per_topo])
        row["learning_vs_best_ne"] = _mean(
            [np.mean(o["learning"]) / o["best_ne"] for o in per_topo if "learning" in o and "best_ne" in o]
        )
        row["learning_vs_interference_free"] = _mean(
            [np.mean(o["learning"]) / o["interference_free"] for o in per_topo if "learning" in o]
        )
        summary.append(row)
    columns = (kind, "optimal", "best_ne", "worst_ne", "learning_mean", "learning_std",
               "learning_converged", "learning_vs_best_ne", "learning_vs_interference_free")
    return ExperimentResult(records, summary, columns)


def trace_rows(net: Network, result: "learning.LearningResult") -> tuple[list[str], list[list]]:
    """Per-slot, per-user learning trace; requires ``record`` and ``keep_history``.

    Columns ``slot,user,active,chosen_channel,r,q_1..q_K`` with K the largest
    channel-set size; user n's probabilities (over its own channels, ascending)
    fill the first |A_n| columns, the rest are blank. Users are 1-based.
    """
    width = max(len(ap.channels) for ap in net.aps)
    header = ["slot", "user", "active", "chosen_channel", "r"] + [f"q_{j + 1}" for j in range(width)]
    rows = []
    for rec in result.records:
        q = result.history[rec.slot]
        for n in range(net.n):
            probs = [float(x) for x in q[n, net.availability[n]]]
            active = n in rec.active
            rows.append(
                [rec.slot, n + 1, int(active), rec.choices.get(n, ""), rec.normalized.get(n, "")]
                + probs + [""] * (width - len(probs))
            )
    return header, rows


def write_rows(path: str | Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    try:
        path.write_text(buf.getvalue())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def run_convergence(cfg: ExperimentConfig, base_dir: Path | None = None):
    """Single seeded learning run with the full per-slot trace (the convergence plot)."""
    net = apply_lambda(network_from_spec(cfg.network, base_dir, seed=cfg.seed), cfg.lambda_override)
    result = learning.run_learning(net, cfg.iterations, cfg.step_size, seed=cfg.seed, record=True, keep_history=True)
    return net, result


# -- OPG verification --------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    kind: str
    user: int
    old_channel: int
    new_channel: int
    active: tuple[int, ...] | None
    profile: tuple[int, ...]
    d_utility: float
    d_potential: float


@dataclass
class OpgReport:
    checked: int = 0
    skipped: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


SIGN_TOL = 1e-15
FACTOR_TOL = 1e-12


def tolerant_sign(delta: np.ndarray, scale: np.ndarray, tol: float = SIGN_TOL) -> np.ndarray:
    """Sign of ``delta`` with anything below ``tol * scale`` counted as zero."""
    s = np.sign(delta)
    s[np.abs(delta) <= tol * scale] = 0
    return s


def _sample_deviations(net: Network, count: int, rng: np.random.Generator):
    users = [n for n in range(net.n) if len(net.aps[n].channels) > 1]
    if not users:
        return None
    profiles = np.empty((count, net.n), dtype=np.int64)
    for n, ap in enumerate(net.aps):
        profiles[:, n] = rng.choice(ap.channels, size=count)
    who = rng.choice(users, size=count)
    alt = profiles.copy()
    for k in range(count):
        n = who[k]
        options = [c for c in net.aps[n].channels if c != profiles[k, n]]
        alt[k, n] = options[rng.integers(len(options))]
    return profiles, alt, who


def verify_opg(net: Network, deviations: int, seed: int, robust: bool = False, chunk: int = 2000) -> OpgReport:
    """Sample unilateral deviations and check the potential-game identities.

    State-based (default): for each sampled (active set, profile, user,
    alternative channel) the signs of the utility, weighted-interference and
    potential changes must agree and the potential change must be exactly
    twice the weighted-interference change. ``robust=True`` checks the
    expected-utility / expected-potential sign agreement with exact
    enumeration instead. Violations are collected, never raised.
    """
    if deviations < 1:
        raise ContractViolation("deviations must be at least 1")
    rng = np.random.default_rng(seed)
    report = OpgReport()
    sampled = _sample_deviations(net, deviations, rng)
    if sampled is None:
        report.skipped = deviations
        return report
    profiles, alt, who = sampled
    if not robust:
        states = (rng.random((deviations, net.n)) < net.active_probs).astype(float)
        states[np.arange(deviations), who] = 1.0
    for lo in range(0, deviations, chunk):
        sl = slice(lo, lo + chunk)
        k = np.arange(len(who[sl]))
        n = who[sl]
        if robust:
            w0, p0 = gc.batch_expected(net, profiles[sl])
            w1, p1 = gc.batch_expected(net, alt[sl])
            du = w1[k, n] - w0[k, n]
            dp = p1 - p0
            su = tolerant_sign(du, np.maximum(abs(w0[k, n]), abs(w1[k, n])))
            sp = tolerant_sign(dp, np.maximum(abs(p0), abs(p1)))
            bad = np.flatnonzero(su != sp)
            for j in bad:
                report.violations.append(
                    Violation("robust_sign", int(n[j]), int(profiles[lo + j, n[j]]), int(alt[lo + j, n[j]]), None,
                              tuple(int(x) for x in profiles[lo + j]), float(du[j]), float(dp[j]))
                )
        else:
            st = states[sl]
            r0, v0, f0 = gc.batch_state_eval(net, profiles[sl], st)
            r1, v1, f1 = gc.batch_state_eval(net, alt[sl], st)
            du, dv, dp = r1[k, n] - r0[k, n], v1[k, n] - v0[k, n], f1 - f0
            su = tolerant_sign(du, np.maximum(abs(r0[k, n]), abs(r1[k, n])))
            sv = tolerant_sign(dv, np.maximum(abs(v0[k, n]), abs(v1[k, n])))
            pscale = np.maximum(abs(f0), abs(f1))
            sp = tolerant_sign(dp, pscale)
            factor_bad = np.abs(dp - 2.0 * dv) > FACTOR_TOL * np.maximum(pscale, np.abs(dp))
            for j in np.flatnonzero((su != sp) | (sv != sp) | factor_bad):
                kind = "factor_of_two" if factor_bad[j] and su[j] == sp[j] else "state_sign"
                report.violations.append(
                    Violation(kind, int(n[j]), int(profiles[lo + j, n[j]]), int(alt[lo + j, n[j]]),
                              tuple(int(i) for i in np.flatnonzero(st[j])),
                              tuple(int(x) for x in profiles[lo + j]), float(du[j]), float(dp[j]))
                )
        report.checked += len(k)
    return report


# -- output ------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else str(v)
    return str(v)


def _csv_text(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def emit_outputs(
    records: Sequence[RunRecord],
    summary: Sequence[dict],
    formats: Sequence[str],
    directory: str | Path,
    stem: str,
    summary_columns: Sequence[str] | None = None,
) -> list[Path]:
    """Write ``<stem>_records.csv`` / ``<stem>_summary.csv`` and/or ``<stem>.json``.

    Records are ordered by (sweep point, method, topology, trial) as produced.
    """
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {directory}: {exc}") from exc
    rec_rows = [{k: _jsonable(v) for k, v in asdict(r).items()} for r in records]
    if summary_columns is None:
        summary_columns = list(summary[0].keys()) if summary else []
    sum_rows = [{c: _jsonable(row.get(c)) for c in summary_columns} for row in summary]
    written = []
    for fmt in formats:
        if fmt == "csv":
            targets = {
                directory / f"{stem}_records.csv": _csv_text(RECORD_COLUMNS, rec_rows),
                directory / f"{stem}_summary.csv": _csv_text(summary_columns, sum_rows),
            }
        elif fmt == "json":
            doc = {"record_columns": list(RECORD_COLUMNS), "summary_columns": list(summary_columns),
                   "records": rec_rows, "summary": sum_rows}
            targets = {directory / f"{stem}.json": json.dumps(doc, indent=1) + "\n"}
        else:
            raise ContractViolation(f"unknown output format {fmt!r}")
        for path, text in targets.items():
            try:
                path.write_text(text)
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc}") from exc
            written.append(path)
    return written
