"""``simcli`` command line entry point.

Exit codes: 0 success, 1 operational error (bad input, I/O, capacity),
2 when ``verify`` finds an invariant violation.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import click
import numpy as np

from . import equilibrium as eq
from . import game_core as gc
from . import harness
from . import learning
from .errors import CapacityError, ContractViolation
from .net_model import GenerationParams, Network, fixture_fig2, generate_random_network, load_network, save_network

EXIT_VIOLATION = 2


class ViolationFound(Exception):
    pass


def _config(path: str | None) -> tuple[dict, Path | None]:
    if path is None:
        return {}, None
    return harness.load_config(path), Path(path).resolve().parent


def _network(doc: dict, base: Path | None, network_path: str | None) -> Network:
    if network_path:
        net = load_network(network_path)
    else:
        spec = doc.get("network", {"source": "fixture"})
        net = harness.network_from_spec(spec, base, seed=int(doc.get("seed", 0)))
    return harness.apply_lambda(net, doc.get("lambda"))


def _out(output: str | None, name: str) -> Path | None:
    return Path(output) / name if output else None


def _emit_text(text: str, path: Path | None) -> None:
    if path is None:
        click.echo(text, nl=False)
    else:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        click.echo(f"wrote {path}", err=True)


def _csv(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([harness._fmt(v) for v in r])
    return buf.getvalue()


def _parse_profile(text, net: Network) -> tuple[int, ...]:
    if text is None:
        return tuple(ap.channels[0] for ap in net.aps)
    if isinstance(text, str):
        text = [t for t in text.replace(",", " ").split() if t]
    return tuple(int(c) for c in text)


@click.group()
def cli():
    """Database-assisted spectrum access: games, learning and experiments."""


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--n-aps", type=int, default=None, help="Number of APs (default from config or 8).")
@click.option("--seed", type=int, default=None)
@click.option("--output", type=click.Path(), default=None, help="Output directory.")
def generate(config_path, n_aps, seed, output):
    """Draw a random topology and write it as a network JSON file."""
    doc, _ = _config(config_path)
    n = n_aps if n_aps is not None else int(doc.get("n_aps", 8))
    s = seed if seed is not None else int(doc.get("seed", 0))
    params = GenerationParams(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.get("params", {}).items()})
    net = generate_random_network(n, s, params)
    target = _out(output, doc.get("stem", f"network_n{n}_s{s}") + ".json")
    if target is None:
        import json

        from .net_model import network_to_dict

        click.echo(json.dumps(network_to_dict(net), indent=2))
    else:
        target.parent.mkdir(parents=True, exist_ok=True)
        save_network(net, target)
        click.echo(f"wrote {target}", err=True)


@cli.command("eval")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--network", "network_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--profile", default=None, help="Channels per user, e.g. '1,2,4,...'.")
@click.option("--active", default=None, help="1-based active users (default: all).")
@click.option("--output", type=click.Path(), default=None)
def eval_cmd(config_path, network_path, profile, active, output):
    """Print the per-user SINR/throughput/weighted interference breakdown as CSV."""
    doc, base = _config(config_path)
    net = _network(doc, base, network_path)
    prof = gc.check_profile(net, _parse_profile(profile or doc.get("profile"), net))
    act = active if active is not None else doc.get("active")
    if act is None:
        b = frozenset(range(net.n))
    else:
        b = frozenset(int(x) - 1 for x in (act.replace(",", " ").split() if isinstance(act, str) else act))
    rows = []
    for n in sorted(b):
        pb = gc.payoff_breakdown(net, b, prof, n)
        rows.append([n + 1, pb.channel, pb.sinr, pb.throughput_bps, pb.weighted_interference])
    _emit_text(_csv(["user", "channel", "sinr", "throughput_bps", "v_n"], rows), _out(output, "eval.csv"))


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--network", "network_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--iterations", type=int, default=None)
@click.option("--step-size", type=float, default=None, help="Learning step size (default 0.1).")
@click.option("--seed", type=int, default=None)
@click.option("--trace", "trace_path", type=click.Path(), default=None, help="Per-slot trace CSV.")
@click.option("--output", type=click.Path(), default=None)
def learn(config_path, network_path, iterations, step_size, seed, trace_path, output):
    """Run the distributed learning algorithm once and report the final strategies."""
    doc, base = _config(config_path)
    net = _network(doc, base, network_path)
    it = iterations if iterations is not None else int(doc.get("iterations", 2000))
    b = step_size if step_size is not None else float(doc.get("step_size", 0.1))
    s = seed if seed is not None else int(doc.get("seed", 0))
    want_trace = trace_path is not None
    result = learning.run_learning(net, it, b, seed=s, record=want_trace, keep_history=want_trace)
    if want_trace:
        header, rows = harness.trace_rows(net, result)
        harness.write_rows(trace_path, header, rows)
    width = max(len(ap.channels) for ap in net.aps)
    rows = []
    for n in range(net.n):
        probs = [float(x) for x in result.table.row(n)]
        rows.append([n + 1, result.final_profile[n]] + probs + [""] * (width - len(probs)))
    header = ["user", "final_channel"] + [f"q_{j + 1}" for j in range(width)]
    text = _csv(header, rows)
    text += f"# converged_slot={result.converged_slot if result.converged_slot is not None else ''}\n"
    _emit_text(text, _out(output, "learn.csv"))


def _br_table(net: Network, trials: int, seed: int, mode: gc.Mode, with_optimal: bool):
    rows, vals = [], []
    for t in range(trials):
        s = harness.derive_seed(seed, t)
        trace = eq.best_response_dynamics(net, eq.random_profile(net, np.random.default_rng(s)), seed=s)
        val = gc.expected_network_throughput(net, trace.final, mode)
        vals.append(val)
        rows.append([t, s, trace.rounds, int(trace.converged), val])
    opt = eq.exhaustive_optimal(net, mode)[1] if with_optimal else None
    return rows, max(vals), min(vals), opt


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--network", "network_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--trials", type=int, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--with-optimal/--no-optimal", default=True)
@click.option("--output", type=click.Path(), default=None)
def equilibrium(config_path, network_path, trials, seed, with_optimal, output):
    """Randomized best-response trials on the robust game; best/worst NE summary."""
    doc, base = _config(config_path)
    net = _network(doc, base, network_path)
    n_trials = trials if trials is not None else int(doc.get("br_trials", 500))
    s = seed if seed is not None else int(doc.get("seed", 0))
    mode = harness.resolve_mode(net, doc.get("expectation", {}), s)
    rows, best, worst, opt = _br_table(net, n_trials, s, mode, with_optimal)
    text = _csv(["trial", "seed", "rounds", "converged", "expected_throughput_bps"], rows)
    text += _csv(["best_ne", "worst_ne", "optimal"], [[best, worst, opt]])
    _emit_text(text, _out(output, "equilibrium.csv"))


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--network", "network_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", type=int, default=None)
@click.option("--output", type=click.Path(), default=None)
def optimal(config_path, network_path, seed, output):
    """Exhaustive search for the profile maximizing expected network throughput."""
    doc, base = _config(config_path)
    net = _network(doc, base, network_path)
    s = seed if seed is not None else int(doc.get("seed", 0))
    mode = harness.resolve_mode(net, doc.get("expectation", {}), s)
    prof, val = eq.exhaustive_optimal(net, mode)
    text = _csv(["profile", "expected_throughput_bps"], [[" ".join(map(str, prof)), val]])
    text += _csv(["best_ne", "worst_ne", "optimal"], [[None, None, val]])
    _emit_text(text, _out(output, "optimal.csv"))


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--seed", type=int, default=None, help="Override the config's master seed.")
@click.option("--output", type=click.Path(), default=".", show_default=True)
def experiment(config_path, seed, output):
    """Run a scenario config (configs/fig3.cfg ... fig6.cfg) and write plot-ready data."""
    doc, base = _config(config_path)
    if seed is not None:
        doc["seed"] = seed
    cfg = harness.config_from_dict(doc)
    if cfg.kind == "convergence":
        net, result = harness.run_convergence(cfg, base)
        header, rows = harness.trace_rows(net, result)
        path = harness.write_rows(Path(output) / f"{cfg.stem}_trace.csv", header, rows)
        click.echo(f"wrote {path}", err=True)
        return
    res = harness.run_experiment(cfg, base)
    formats = cfg.output.get("formats", ["csv"])
    for path in harness.emit_outputs(res.records, res.summary, formats, output, cfg.stem, res.summary_columns):
        click.echo(f"wrote {path}", err=True)


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--network", "network_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--deviations", type=int, default=None)
@click.option("--robust/--state-based", default=None, help="Check the robust game instead of the state-based one.")
@click.option("--seed", type=int, default=None)
@click.option("--output", type=click.Path(), default=None)
def verify(config_path, network_path, deviations, robust, seed, output):
    """Sample unilateral deviations and check the ordinal-potential identities."""
    doc, base = _config(config_path)
    net = _network(doc, base, network_path)
    count = deviations if deviations is not None else int(doc.get("deviations", 10_000))
    rob = robust if robust is not None else bool(doc.get("robust", False))
    s = seed if seed is not None else int(doc.get("seed", 0))
    report = harness.verify_opg(net, count, s, robust=rob)
    rows = [
        [v.kind, v.user + 1, v.old_channel, v.new_channel,
         " ".join(str(i + 1) for i in v.active) if v.active is not None else "",
         " ".join(map(str, v.profile)), v.d_utility, v.d_potential]
        for v in report.violations
    ]
    text = _csv(["kind", "user", "old_channel", "new_channel", "active", "profile", "d_utility", "d_potential"], rows)
    text += f"# checked={report.checked} skipped={report.skipped} violations={len(report.violations)}\n"
    _emit_text(text, _out(output, "verify.csv"))
    if report.violations:
        raise ViolationFound(f"{len(report.violations)} violation(s) in {report.checked} deviations")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, prog_name="simcli", standalone_mode=False)
    except ViolationFound as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_VIOLATION
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.Abort:
        return 1
    except (ContractViolation, CapacityError, OSError, ValueError, KeyError, RuntimeError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
