"""Command-line front end: run scenarios, generate them, attack traces.

Exit codes: 0 success, 2 input/configuration error, 3 numerical failure.
Set GRIDPRIV_LOG to control log verbosity.
"""

import functools
import json
import logging
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import schemes
from .adversary import KnowledgeSet, naive_readout, observer_attack
from .equilibrium import solve_kkt
from .errors import ConfigurationError, DivergenceError, GridPrivError
from .scenario import (
    RandomScenarioSpec,
    ScenarioError,
    build_scenario,
    gen_scenario,
    load_scenario,
    load_scenario_dict,
    save_scenario,
)
from .sim import Trajectory, marginal_costs, simulate, steady_state_metrics

log = logging.getLogger("gridpriv")


def _atomic_write(path, text):
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _write_json(path, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DivergenceError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(3)
        except (ScenarioError, GridPrivError, FileNotFoundError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(2)
    return wrapper


@click.group()
def main():
    logging.basicConfig(level=os.environ.get("GRIDPRIV_LOG", "WARNING").upper())


def _run_one(scenario, out_dir):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    traj = simulate(scenario)
    tmp = out_dir / "trajectory.csv.tmp"
    traj.to_csv(tmp)
    os.replace(tmp, out_dir / "trajectory.csv")

    p_load_final = scenario.devices.p_load.copy()
    for d in scenario.disturbances:
        p_load_final[d.unit] += d.delta
    kkt = solve_kkt(scenario.devices, p_load_final)
    window = max(scenario.dt * scenario.record_stride, 0.1 * scenario.t_end)
    metrics = steady_state_metrics(traj, window, devices=scenario.devices)
    metrics["lambda"] = kkt.lam
    metrics["scheme"] = scenario.scheme.kind
    _write_json(out_dir / "metrics.json", metrics)
    _write_json(out_dir / "equilibrium.json", {
        "lambda": kkt.lam,
        "p_c_star": -kkt.lam,
        "p_M_star": kkt.p_M_star.tolist(),
        "d_c_star": kkt.d_c_star.tolist(),
        "total_cost": kkt.total_cost,
    })
    return traj, metrics


@main.command("run")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.option("--out", "out_dir", default="out", type=click.Path(), help="output directory")
@click.option("--seed", type=int, default=None, help="override the scenario seed")
@click.option("--dt", type=float, default=None, help="override the time step")
@_handle_errors
def run_cmd(scenario_path, out_dir, seed, dt):
    """Simulate one scenario; write trajectory.csv, metrics.json, equilibrium.json."""
    scenario = load_scenario(scenario_path, seed=seed, dt=dt)
    _, metrics = _run_one(scenario, out_dir)
    click.echo(json.dumps(metrics, sort_keys=True))


@main.command("gen-scenario")
@click.argument("out_path", type=click.Path())
@click.option("--buses", default=10, type=int)
@click.option("--units-min", default=3, type=int)
@click.option("--units-max", default=5, type=int)
@click.option("--q-min", default=50.0, type=float)
@click.option("--q-max", default=250.0, type=float)
@click.option("--comm-style", default="tree", type=click.Choice(["tree", "random"]))
@click.option("--edge-prob", default=0.1, type=float)
@click.option("--magnitude", default=0.2, type=float, help="disturbance size, pu")
@click.option("--scheme", "scheme_kind", default=schemes.PRIVACY_PRESERVING,
              type=click.Choice(list(schemes.SCHEME_KINDS)))
@click.option("--t-end", default=60.0, type=float)
@click.option("--seed", default=0, type=int)
@_handle_errors
def gen_scenario_cmd(out_path, buses, units_min, units_max, q_min, q_max, comm_style,
                     edge_prob, magnitude, scheme_kind, t_end, seed):
    """Emit a random, valid scenario file (deterministic per seed)."""
    spec = RandomScenarioSpec(
        bus_count=buses, units_per_bus=(units_min, units_max), q_range=(q_min, q_max),
        comm_style=comm_style, edge_prob=edge_prob, disturbance_magnitude=magnitude,
        scheme_kind=scheme_kind, t_end=t_end, seed=seed,
    )
    save_scenario(gen_scenario(spec), out_path)
    click.echo(out_path)


@main.command("attack")
@click.argument("trajectory_path", type=click.Path(exists=True))
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True),
              help="scenario file supplying the dynamics the adversary knows")
@click.option("--knowledge", "knowledge_path", default=None, type=click.Path(exists=True),
              help="JSON: {channels: 'all'|[unit indices], deriv: 'central'|'forward'}")
@click.option("--baseline", "baseline_path", default=None, type=click.Path(exists=True),
              help="paired trace for the rmse ratio")
@click.option("--out", "out_path", default="attack_report.json", type=click.Path())
@_handle_errors
def attack_cmd(trajectory_path, scenario_path, knowledge_path, baseline_path, out_path):
    """Run the observer attack and origin detection on a recorded trace."""
    scenario = load_scenario(scenario_path)
    traj = Trajectory.from_csv(trajectory_path)
    n_units = scenario.devices.n_units
    if traj.p_c.shape[1] != n_units or traj.s_tilde.shape[1] != n_units:
        raise ConfigurationError(
            "trajectory columns do not match the scenario's unit count "
            f"(got {traj.p_c.shape[1]} pc / {traj.s_tilde.shape[1]} s_tilde columns)"
        )
    kdoc = json.loads(Path(knowledge_path).read_text()) if knowledge_path else {}
    channels = kdoc.get("channels", "all")
    if isinstance(channels, list):
        channels = [int(c) for c in channels]
    knowledge = KnowledgeSet(observed_channels=channels)
    deriv = kdoc.get("deriv", "central")

    dist_time = scenario.disturbances[0].time if scenario.disturbances else None
    report = observer_attack(traj, scenario.comm, scenario.scheme, knowledge,
                             deriv=deriv, disturbance_time=dist_time)
    doc = report.to_dict()
    doc["scenario"] = str(scenario_path)
    if dist_time is not None:
        doc["disturbed_units"] = [d.unit for d in scenario.disturbances]
    if baseline_path:
        base = Trajectory.from_csv(baseline_path)
        base_report = observer_attack(base, scenario.comm, scenario.scheme, knowledge,
                                      deriv=deriv)
        doc["baseline_rmse_transient"] = base_report.rmse_transient
        doc["rmse_ratio_vs_baseline"] = (
            report.rmse_transient / base_report.rmse_transient
            if base_report.rmse_transient > 0 else None
        )
    _write_json(out_path, doc)
    click.echo(json.dumps({"rmse_transient": doc["rmse_transient"],
                           "rmse_steady": doc["rmse_steady"]}, sort_keys=True))


@main.command("compare")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.option("--schemes", "scheme_list", default=",".join(schemes.SCHEME_KINDS),
              help="comma-separated scheme kinds")
@click.option("--out", "out_dir", default="compare_out", type=click.Path())
@click.option("--seed", type=int, default=None)
@click.option("--dt", type=float, default=None)
@_handle_errors
def compare_cmd(scenario_path, scheme_list, out_dir, seed, dt):
    """Run one scenario under several schemes and emit side-by-side outputs."""
    doc = load_scenario_dict(scenario_path)
    kinds = [k.strip() for k in scheme_list.split(",") if k.strip()]
    for kind in kinds:
        if kind not in schemes.SCHEME_KINDS:
            raise ConfigurationError(f"unknown scheme kind {kind!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    results = {}
    all_metrics = {}
    for kind in kinds:
        variant = json.loads(json.dumps(doc))
        variant["scheme"]["kind"] = kind
        scenario = build_scenario(variant, seed=seed, dt=dt)
        traj, metrics = _run_one(scenario, out_dir / kind)
        results[kind] = (scenario, traj)
        all_metrics[kind] = metrics
        log.info("scheme %s: settle=%s spread=%.3g", kind,
                 metrics["settle_time"], metrics["p_c_spread_end"])

    settle = {k: all_metrics[k]["settle_time"] for k in kinds}
    all_metrics["settle_time_ordering"] = sorted(
        (k for k in kinds if settle[k] is not None), key=lambda k: settle[k]
    )
    _write_json(out_dir / "metrics.json", all_metrics)
    _emit_figure_data(out_dir, kinds, results)
    click.echo(str(out_dir / "metrics.json"))


def _emit_figure_data(out_dir, kinds, results):
    """Plot-ready CSVs mirroring the frequency / marginal-cost /
    communicated-signal / inferred-demand views."""
    first_scenario, first_traj = next(iter(results.values()))
    dist = first_scenario.disturbances
    watch_bus = int(first_scenario.devices.bus[dist[0].unit]) if dist else 0

    times = first_traj.times
    freq = [times] + [results[k][1].omega[:, watch_bus] / (2.0 * np.pi) for k in kinds]
    _write_csv(out_dir / "fig_frequency.csv",
               ["t"] + [f"freq_hz_bus{watch_bus}_{k}" for k in kinds], np.column_stack(freq))

    for kind in kinds:
        scenario, traj = results[kind]
        mc = marginal_costs(traj, scenario.devices)
        _write_csv(out_dir / f"fig_marginal_costs_{kind}.csv",
                   ["t"] + [f"mc_{u}" for u in range(mc.shape[1])],
                   np.column_stack([traj.times, mc]))
        leaked = naive_readout(traj, kind)
        wire = leaked if leaked is not None else traj.p_c
        label = "s_tilde" if leaked is not None else "pc"
        _write_csv(out_dir / f"fig_communicated_{kind}.csv",
                   ["t"] + [f"{label}_{u}" for u in range(wire.shape[1])],
                   np.column_stack([traj.times, wire]))

    inferred = {}
    for kind in (schemes.EXTENDED_PRIMAL_DUAL, schemes.PRIVACY_PRESERVING):
        if kind in results:
            scenario, traj = results[kind]
            report = observer_attack(traj, scenario.comm, scenario.scheme, KnowledgeSet())
            inferred[kind] = (traj, report)
    if inferred:
        kind0, (traj0, _) = next(iter(inferred.items()))
        cols, blocks = ["t"], [traj0.times]
        show = list(range(min(3, traj0.s_tilde.shape[1])))
        for u in show:
            cols.append(f"true_{u}")
            blocks.append(traj0.s_tilde[:, u])
        for kind, (traj, report) in inferred.items():
            for u in show:
                cols.append(f"inferred_{kind}_{u}")
                blocks.append(report.s_hat[:, u])
        _write_csv(out_dir / "fig_inferred_demand.csv", cols, np.column_stack(blocks))


def _write_csv(path, header, data):
    lines = [",".join(header)]
    for row in np.atleast_2d(data):
        lines.append(",".join(repr(float(v)) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


@main.command("check-design")
@click.argument("scenario_path", type=click.Path(exists=True))
@click.option("--out", "out_path", default=None, type=click.Path())
@_handle_errors
def check_design_cmd(scenario_path, out_path):
    """Evaluate the privacy design condition for every unit of a scenario."""
    scenario = load_scenario(scenario_path)
    if scenario.scheme.privacy is None:
        raise ConfigurationError("scenario has no privacy parameters")
    feasible, eigenvalues, d_over_n = schemes.design_condition_report(
        scenario.devices, scenario.model, scenario.scheme.privacy
    )
    doc = {
        "all_feasible": bool(feasible.all()),
        "units": [
            {"unit": int(u), "feasible": bool(feasible[u]),
             "eigenvalues": [float(e) for e in eigenvalues[u]],
             "d_over_n": float(d_over_n[u])}
            for u in range(len(feasible))
        ],
    }
    if out_path:
        _write_json(out_path, doc)
    click.echo(json.dumps({"all_feasible": doc["all_feasible"]}))


if __name__ == "__main__":
    main()
