"""Scenario files: strict JSON schema, loading, saving and random generation.

A scenario file fully describes one closed-loop experiment: the electrical
network, the prosumption units, the communication graph, the controller
configuration, the integration settings and the load disturbances. Unknown
keys are rejected so that typos fail loudly.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import schemes
from .devices import DeviceSet, design_optimal_gains
from .errors import ConfigurationError, InfeasibilityError
from .network import NetworkModel
from .schemes import CommGraph, PrivacyParams, SchemeConfig, max_feasible_beta
from .sim import Disturbance, Scenario

KIND_ALIASES = {"generator": True, "load": False}


class ScenarioError(ConfigurationError):
    """Schema violation; carries the JSON path of the offending entry."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


def _check_keys(obj, path, required, optional=()):
    if not isinstance(obj, dict):
        raise ScenarioError(path, "expected an object")
    for key in required:
        if key not in obj:
            raise ScenarioError(f"{path}.{key}", "missing required key")
    for key in obj:
        if key not in required and key not in optional:
            raise ScenarioError(f"{path}.{key}", "unknown key")


def _floats(value, length, path):
    if np.isscalar(value):
        return np.full(length, float(value))
    arr = np.asarray(value, dtype=float)
    if arr.shape != (length,):
        raise ScenarioError(path, f"expected scalar or list of length {length}")
    return arr


def load_scenario_dict(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from exc


def build_scenario(doc, seed=None, dt=None):
    """Validate a scenario document and construct the runnable Scenario."""
    _check_keys(doc, "$", ("network", "devices", "comm", "scheme", "sim"), ("disturbances",))

    net = doc["network"]
    _check_keys(net, "$.network", ("buses", "lines", "inertia", "damping"))
    n_bus = int(net["buses"])
    lines, b = [], []
    for k, line in enumerate(net["lines"]):
        _check_keys(line, f"$.network.lines[{k}]", ("from", "to", "b"))
        lines.append((int(line["from"]), int(line["to"])))
        b.append(float(line["b"]))
    try:
        model = NetworkModel(n_bus, tuple(lines), np.array(b),
                             _floats(net["inertia"], n_bus, "$.network.inertia"),
                             _floats(net["damping"], n_bus, "$.network.damping"))
    except ConfigurationError as exc:
        raise ScenarioError("$.network", str(exc)) from exc

    units = doc["devices"]
    if not isinstance(units, list) or not units:
        raise ScenarioError("$.devices", "expected a non-empty list")
    bus, is_gen, tau, q, p_l, split = [], [], [], [], [], []
    for k, unit in enumerate(units):
        upath = f"$.devices[{k}]"
        _check_keys(unit, upath, ("bus", "kind", "q", "p_l"), ("tau", "droop_split"))
        if unit["kind"] not in KIND_ALIASES:
            raise ScenarioError(f"{upath}.kind", "must be 'generator' or 'load'")
        gen = KIND_ALIASES[unit["kind"]]
        if gen and "tau" not in unit:
            raise ScenarioError(f"{upath}.tau", "required for generators")
        bus.append(int(unit["bus"]))
        is_gen.append(gen)
        tau.append(float(unit.get("tau", 1.0)))
        q.append(float(unit["q"]))
        p_l.append(float(unit["p_l"]))
        split.append(float(unit.get("droop_split", 0.5)))
    q = np.array(q)
    is_gen = np.array(is_gen)
    try:
        m, h = design_optimal_gains(q, is_gen, np.array(split))
        devices = DeviceSet(np.array(bus), is_gen, np.array(tau), m,
                            h, q, np.array(p_l), bus_count=n_bus)
    except ConfigurationError as exc:
        raise ScenarioError("$.devices", str(exc)) from exc
    n_units = devices.n_units

    comm_doc = doc["comm"]
    _check_keys(comm_doc, "$.comm", ("edges", "gamma_psi"))
    edges = []
    for k, e in enumerate(comm_doc["edges"]):
        if not (isinstance(e, list) and len(e) == 2):
            raise ScenarioError(f"$.comm.edges[{k}]", "expected [from, to]")
        edges.append((int(e[0]), int(e[1])))
    try:
        comm = CommGraph(n_units, tuple(edges))
    except ConfigurationError as exc:
        raise ScenarioError("$.comm", str(exc)) from exc
    gamma_psi_units = _floats(comm_doc["gamma_psi"], comm.edge_count, "$.comm.gamma_psi")

    sch = doc["scheme"]
    _check_keys(sch, "$.scheme", ("kind", "gamma"), ("integral_gain", "privacy"))
    kind = sch["kind"]
    if kind not in schemes.SCHEME_KINDS:
        raise ScenarioError("$.scheme.kind", f"must be one of {list(schemes.SCHEME_KINDS)}")

    sim_doc = doc["sim"]
    _check_keys(sim_doc, "$.sim", ("t_end", "dt", "seed"), ("record_stride",))
    run_seed = int(sim_doc["seed"]) if seed is None else int(seed)
    run_dt = float(sim_doc["dt"]) if dt is None else float(dt)

    privacy = None
    if "privacy" in sch:
        pv = sch["privacy"]
        _check_keys(pv, "$.scheme.privacy", ("beta", "beta_hat"), ("xi_max", "safety"))
        gamma_probe = _floats(sch["gamma"], n_units, "$.scheme.gamma")
        try:
            privacy = PrivacyParams(
                beta=_floats(pv["beta"], n_units, "$.scheme.privacy.beta"),
                beta_hat=_floats(pv["beta_hat"], n_units, "$.scheme.privacy.beta_hat"),
                xi_max=float(pv.get("xi_max", 10.0 * float(np.max(gamma_probe)))),
                safety=float(pv.get("safety", 0.999)),
                seed=run_seed,
            )
        except ConfigurationError as exc:
            raise ScenarioError("$.scheme.privacy", str(exc)) from exc
    elif kind == schemes.PRIVACY_PRESERVING:
        raise ScenarioError("$.scheme.privacy", "required for the privacy_preserving scheme")

    if kind == schemes.PRIMAL_DUAL:
        # bus-level controller: per-unit time constants aggregate to bus means,
        # the communication graph mirrors the electrical topology
        gamma_units = _floats(sch["gamma"], n_units, "$.scheme.gamma")
        sums = np.zeros(n_bus)
        np.add.at(sums, devices.bus, gamma_units)
        gamma = sums / devices.units_per_bus()
        gamma_psi = _floats(float(np.mean(gamma_psi_units)), model.line_count, "$.comm.gamma_psi")
    else:
        gamma = _floats(sch["gamma"], n_units, "$.scheme.gamma")
        gamma_psi = gamma_psi_units
    try:
        scheme = SchemeConfig(kind=kind, gamma=gamma, gamma_psi=gamma_psi,
                              integral_gain=float(sch.get("integral_gain", 1.0)),
                              privacy=privacy)
    except ConfigurationError as exc:
        raise ScenarioError("$.scheme", str(exc)) from exc

    disturbances = []
    for k, d in enumerate(doc.get("disturbances", [])):
        dpath = f"$.disturbances[{k}]"
        _check_keys(d, dpath, ("t", "unit", "delta"))
        disturbances.append(Disturbance(float(d["t"]), int(d["unit"]), float(d["delta"])))

    try:
        return Scenario(model=model, devices=devices, comm=comm, scheme=scheme,
                        disturbances=tuple(disturbances),
                        t_end=float(sim_doc["t_end"]), dt=run_dt, seed=run_seed,
                        record_stride=int(sim_doc.get("record_stride", 1)))
    except ConfigurationError as exc:
        raise ScenarioError("$", str(exc)) from exc


def load_scenario(path, seed=None, dt=None):
    return build_scenario(load_scenario_dict(path), seed=seed, dt=dt)


def save_scenario(doc, path):
    """Canonical, byte-stable serialization."""
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class RandomScenarioSpec:
    """Knobs for synthetic scenario generation."""

    bus_count: int = 10
    units_per_bus: tuple = (3, 5)  # inclusive integer range
    q_range: tuple = (50.0, 250.0)
    comm_style: str = "tree"  # "tree" or "random"
    edge_prob: float = 0.1
    disturbance_magnitude: float = 0.2
    disturbance_time: float = 1.0
    scheme_kind: str = schemes.PRIVACY_PRESERVING
    t_end: float = 60.0
    dt: float = 0.01
    record_stride: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.q_range[0] <= 0 or self.q_range[1] < self.q_range[0]:
            raise ConfigurationError("q_range must be positive and ordered")
        if self.comm_style not in ("tree", "random"):
            raise ConfigurationError("comm_style must be 'tree' or 'random'")


def _random_tree_edges(n, rng):
    return [(int(rng.integers(0, i)), i) for i in range(1, n)]


def gen_scenario(spec):
    """Deterministic random scenario document for a given seed.

    Privacy bounds are chosen to pass the design condition: the gain-rate
    bound is half the unit damping and the noise bound sits at 80% of the
    feasibility boundary.
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.bus_count
    lines = _random_tree_edges(n, rng)
    present = {frozenset(e) for e in lines}
    for _ in range(max(0, n // 3)):
        i, j = sorted(rng.integers(0, n, 2).tolist())
        if i != j and frozenset((i, j)) not in present:
            lines.append((i, j))
            present.add(frozenset((i, j)))
    network = {
        "buses": n,
        "lines": [{"from": i, "to": j, "b": round(float(rng.uniform(3.0, 10.0)), 6)}
                  for i, j in lines],
        "inertia": [round(float(v), 6) for v in rng.uniform(2.0, 5.0, n)],
        "damping": [round(float(v), 6) for v in rng.uniform(0.5, 1.5, n)],
    }

    units = []
    for bus in range(n):
        count = int(rng.integers(spec.units_per_bus[0], spec.units_per_bus[1] + 1))
        for k in range(count):
            gen = bool(rng.random() < 0.5) or (bus == 0 and k == 0)
            unit = {"bus": bus, "kind": "generator" if gen else "load",
                    "q": round(float(rng.uniform(*spec.q_range)), 6), "p_l": 0.0}
            if gen:
                unit["tau"] = round(float(rng.uniform(0.5, 2.0)), 6)
            units.append(unit)
    n_units = len(units)

    comm_edges = _random_tree_edges(n_units, rng)
    if spec.comm_style == "random":
        present = {frozenset(e) for e in comm_edges}
        for i in range(n_units):
            for j in range(i + 1, n_units):
                if frozenset((i, j)) not in present and rng.random() < spec.edge_prob:
                    comm_edges.append((i, j))
                    present.add(frozenset((i, j)))

    gamma = [round(float(v), 6) for v in rng.uniform(0.02, 0.05, n_units)]
    gamma_psi = [round(float(v), 6) for v in rng.uniform(0.02, 0.05, len(comm_edges))]

    q = np.array([u["q"] for u in units])
    is_gen = np.array([u["kind"] == "generator" for u in units])
    bus_of = np.array([u["bus"] for u in units])
    _, h = design_optimal_gains(q, is_gen)
    per_bus = np.bincount(bus_of, minlength=n)
    d_over_n = np.array(network["damping"])[bus_of] / per_bus[bus_of]
    beta_hat = 0.5 * h
    for attempt in range(100):
        boundary = max_feasible_beta(h, d_over_n, beta_hat)
        if np.all(boundary > 0):
            break
        beta_hat = beta_hat / 2.0
    else:
        raise InfeasibilityError("could not find feasible privacy bounds")
    beta = 0.8 * boundary

    disturbed = int(rng.integers(0, n_units))
    doc = {
        "network": network,
        "devices": units,
        "comm": {"edges": [[i, j] for i, j in comm_edges], "gamma_psi": gamma_psi},
        "scheme": {
            "kind": spec.scheme_kind,
            "gamma": gamma,
            # only used when the document is rerun with the integral scheme;
            # the aggregate frequency-restoration rate is roughly
            # K * sum(1/q^2) / sum(D), so solve for a rate of 0.25/s
            "integral_gain": round(
                0.25 * float(np.sum(network["damping"])) / float(np.sum(1.0 / q**2)), 6),
            "privacy": {
                "beta": [round(float(v), 9) for v in beta],
                "beta_hat": [round(float(v), 9) for v in beta_hat],
                "xi_max": round(10.0 * max(gamma), 6),
                "safety": 0.999,
            },
        },
        "sim": {"t_end": spec.t_end, "dt": spec.dt, "seed": spec.seed,
                "record_stride": spec.record_stride},
        "disturbances": [{"t": spec.disturbance_time, "unit": disturbed,
                          "delta": spec.disturbance_magnitude}],
    }
    build_scenario(doc)  # generated documents must always validate
    return doc
