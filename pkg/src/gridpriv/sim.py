"""Closed-loop simulation: plant + devices + controller, fixed-step RK4.

The stacked state is [eta, omega, x, p_c, psi]. Privacy signals are
refreshed once per step and held constant across the four internal
stages; they are inputs, not integrated states. Disturbances are step
changes of the uncontrollable load, snapped to step boundaries.
"""

import csv
import re
from dataclasses import dataclass, field

import numpy as np

from .devices import DeviceState, device_outputs, device_rhs
from .equilibrium import build_equilibrium, lyapunov_value, solve_kkt
from .errors import ConfigurationError, DivergenceError
from .network import PlantState, swing_rhs
from .schemes import (
    EXTENDED_PRIMAL_DUAL,
    INTEGRAL,
    PRIMAL_DUAL,
    PRIVACY_PRESERVING,
    CommGraph,
    SchemeState,
    design_condition_report,
    refresh_privacy_signals,
    scheme_rhs,
)

SETTLE_THRESHOLD = 2.0 * np.pi * 0.01  # 0.01 Hz in rad/s


@dataclass(frozen=True)
class Disturbance:
    time: float
    unit: int
    delta: float  # added to the unit's uncontrollable load, pu


@dataclass
class Scenario:
    model: object
    devices: object
    comm: CommGraph | None
    scheme: object
    disturbances: tuple = ()
    t_end: float = 60.0
    dt: float = 0.01
    seed: int = 0
    record_stride: int = 1

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < self.dt:
            raise ConfigurationError("need dt > 0 and t_end >= dt")
        if self.record_stride < 1:
            raise ConfigurationError("record_stride must be >= 1")
        for d in self.disturbances:
            if not 0 <= d.unit < self.devices.n_units:
                raise ConfigurationError(f"disturbance unit {d.unit} out of range")


@dataclass
class Trajectory:
    """Time-indexed record of all plant, controller and privacy signals."""

    times: np.ndarray
    omega: np.ndarray  # (T, |N|)
    eta: np.ndarray  # (T, |E|)
    x: np.ndarray  # (T, n_gen)
    p_c: np.ndarray  # (T, n_controllers)
    psi: np.ndarray  # (T, n_comm_edges)
    xi: np.ndarray  # (T, n_units)
    n_f: np.ndarray  # (T, n_units)
    n_d: np.ndarray  # (T, n_units)
    s_tilde: np.ndarray  # (T, n_units)
    p_M: np.ndarray  # (T, n_gen)
    d_c: np.ndarray  # (T, n_loads)
    u: np.ndarray  # (T, n_units)
    pc_dot: np.ndarray  # (T, n_controllers)
    lyapunov: np.ndarray | None = None  # (T,) for unit-level consensus schemes
    scheme_kind: str = EXTENDED_PRIMAL_DUAL
    equilibrium: object = None  # reference used for the Lyapunov column
    meta: dict = field(default_factory=dict)

    @property
    def dt(self):
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def to_csv(self, path):
        """Wide CSV, one row per recorded sample. repr round-trips floats."""
        cols = ["t"]
        blocks = [self.times[:, None], self.omega, self.p_c, self.psi, self.x,
                  self.s_tilde, self.xi, self.n_f]
        cols += [f"omega_{j}" for j in range(self.omega.shape[1])]
        cols += [f"pc_{u}" for u in range(self.p_c.shape[1])]
        cols += [f"psi_{e}" for e in range(self.psi.shape[1])]
        cols += [f"x_{g}" for g in range(self.x.shape[1])]
        cols += [f"s_tilde_{u}" for u in range(self.s_tilde.shape[1])]
        cols += [f"xi_{u}" for u in range(self.xi.shape[1])]
        cols += [f"nf_{u}" for u in range(self.n_f.shape[1])]
        if self.lyapunov is not None:
            cols.append("lyapunov")
            blocks.append(self.lyapunov[:, None])
        data = np.hstack(blocks)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(cols)
            for row in data:
                writer.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path):
        """Rebuild the recorded signals available in a CSV trace."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = np.array([[float(v) for v in row] for row in reader])
        def block(prefix):
            idx = [k for k, c in enumerate(header) if re.fullmatch(rf"{prefix}_\d+", c)]
            return data[:, idx]
        times = data[:, header.index("t")]
        omega, p_c, psi, x = block("omega"), block("pc"), block("psi"), block("x")
        s_tilde, xi, n_f = block("s_tilde"), block("xi"), block("nf")
        lyap = data[:, header.index("lyapunov")] if "lyapunov" in header else None
        empty = np.zeros((len(times), 0))
        return cls(times=times, omega=omega, eta=empty, x=x, p_c=p_c, psi=psi,
                   xi=xi, n_f=n_f, n_d=empty, s_tilde=s_tilde,
                   p_M=empty, d_c=empty, u=empty, pc_dot=empty, lyapunov=lyap)


def bus_comm_graph(model):
    """Bus-level communication graph mirroring the electrical topology."""
    return CommGraph(model.bus_count, model.lines)


def _initial_state(scenario, kkt):
    """Pre-disturbance equilibrium of the chosen scheme."""
    model, devices, cfg = scenario.model, scenario.devices, scenario.scheme
    if cfg.kind in (EXTENDED_PRIMAL_DUAL, PRIVACY_PRESERVING):
        eq = build_equilibrium(model, devices, scenario.comm, kkt)
        return eq.eta_star, eq.x_star, eq.p_c_star, eq.psi_star
    eq = build_equilibrium(model, devices, None, kkt)
    if cfg.kind == INTEGRAL:
        return eq.eta_star, eq.x_star, eq.p_c_star, np.zeros(0)
    # primal_dual: bus-level commands and consensus states
    graph = bus_comm_graph(model)
    zeta_star = devices.bus_sum(eq.s_tilde_star)
    psi0, _, _, _ = np.linalg.lstsq(graph.incidence, zeta_star, rcond=None)
    return eq.eta_star, eq.x_star, np.full(model.bus_count, -kkt.lam), psi0


def simulate(scenario):
    """Integrate the closed loop and record a full trajectory."""
    model, devices, cfg = scenario.model, scenario.devices, scenario.scheme
    n_units = devices.n_units
    unit_level = cfg.kind in (EXTENDED_PRIMAL_DUAL, PRIVACY_PRESERVING)
    if unit_level:
        if scenario.comm is None or scenario.comm.node_count != n_units:
            raise ConfigurationError("unit-level scheme needs a communication node per unit")
        graph = scenario.comm
    elif cfg.kind == PRIMAL_DUAL:
        graph = bus_comm_graph(model)
    else:
        graph = None
    if cfg.kind == PRIVACY_PRESERVING:
        feasible, _, _ = design_condition_report(devices, model, cfg.privacy)
        if not feasible.all():
            bad = np.flatnonzero(~feasible).tolist()
            raise ConfigurationError(f"design condition violated for units {bad}")

    kkt0 = solve_kkt(devices)
    eta0, x0, pc0, psi0 = _initial_state(scenario, kkt0)
    n_ctrl = pc0.shape[0]
    n_edges = psi0.shape[0]

    # Lyapunov reference: the equilibrium reached after all load steps
    eq_ref = None
    if unit_level:
        p_load_final = devices.p_load.copy()
        for d in scenario.disturbances:
            p_load_final[d.unit] += d.delta
        eq_ref = build_equilibrium(
            model, devices, scenario.comm, solve_kkt(devices, p_load_final), p_load_final
        )

    # state layout
    nE, nN, nG = model.line_count, model.bus_count, devices.n_generators
    ofs = np.cumsum([0, nE, nN, nG, n_ctrl, n_edges])
    y = np.concatenate([eta0, np.zeros(nN), x0, pc0, psi0])

    rng = np.random.default_rng(scenario.seed)
    xi = np.zeros(n_units)
    n_f = np.zeros(n_units)
    if cfg.kind == PRIVACY_PRESERVING:
        priv = cfg.privacy
        xi = rng.uniform(0.0, priv.xi_max / 10.0, n_units)
        xi[priv.beta_hat == 0.0] = 0.0  # degenerate units stay at the plain scheme

    p_load = devices.p_load.copy()
    pending = sorted(scenario.disturbances, key=lambda d: d.time)

    def full_rhs(yv):
        eta = yv[ofs[0]:ofs[1]]
        omega = yv[ofs[1]:ofs[2]]
        x = yv[ofs[2]:ofs[3]]
        p_c = yv[ofs[3]:ofs[4]]
        psi = yv[ofs[4]:ofs[5]]
        u = p_c[devices.bus] if cfg.kind == PRIMAL_DUAL else p_c
        p_M, d_c, s_tilde, net = device_outputs(devices, DeviceState(x), u, omega, p_load)
        eta_dot, omega_dot = swing_rhs(model, PlantState(eta, omega), net)
        x_dot = device_rhs(devices, DeviceState(x), u, omega)
        zeta = devices.bus_sum(s_tilde) if cfg.kind == PRIMAL_DUAL else None
        sr = scheme_rhs(cfg, graph, SchemeState(p_c, psi, xi, n_f), devices,
                        s_tilde, omega, zeta)
        dy = np.concatenate([eta_dot, omega_dot, x_dot, sr.pc_dot, sr.psi_dot])
        return dy, (p_M, d_c, s_tilde, u, sr)

    dt = scenario.dt
    n_steps = int(round(scenario.t_end / dt))
    rec = {k: [] for k in ("t", "omega", "eta", "x", "p_c", "psi", "xi", "n_f",
                           "n_d", "s_tilde", "p_M", "d_c", "u", "pc_dot", "lyap")}

    def record(t, yv, signals):
        p_M, d_c, s_tilde, u, sr = signals
        rec["t"].append(t)
        rec["eta"].append(yv[ofs[0]:ofs[1]].copy())
        rec["omega"].append(yv[ofs[1]:ofs[2]].copy())
        rec["x"].append(yv[ofs[2]:ofs[3]].copy())
        rec["p_c"].append(yv[ofs[3]:ofs[4]].copy())
        rec["psi"].append(yv[ofs[4]:ofs[5]].copy())
        rec["xi"].append(xi.copy())
        rec["n_f"].append(n_f.copy())
        rec["n_d"].append(sr.n_d.copy())
        rec["s_tilde"].append(s_tilde.copy())
        rec["p_M"].append(p_M.copy())
        rec["d_c"].append(d_c.copy())
        rec["u"].append(u.copy())
        rec["pc_dot"].append(sr.pc_dot.copy())
        if unit_level:
            v, _ = lyapunov_value(model, devices, scenario.comm, cfg, eq_ref,
                                  yv[ofs[0]:ofs[1]], yv[ofs[1]:ofs[2]],
                                  yv[ofs[2]:ofs[3]], yv[ofs[3]:ofs[4]],
                                  yv[ofs[4]:ofs[5]], xi)
            rec["lyap"].append(v)

    for k in range(n_steps + 1):
        t = k * dt
        while pending and pending[0].time <= t + 1e-12:
            d = pending.pop(0)
            p_load[d.unit] += d.delta
        if cfg.kind == PRIVACY_PRESERVING:
            omega_now = y[ofs[1]:ofs[2]]
            xi, n_f = refresh_privacy_signals(cfg.privacy, xi, devices.bus,
                                              omega_now, dt, rng)
        k1, signals = full_rhs(y)
        if k % scenario.record_stride == 0 or k == n_steps:
            record(t, y, signals)
        if k == n_steps:
            break
        k2, _ = full_rhs(y + 0.5 * dt * k1)
        k3, _ = full_rhs(y + 0.5 * dt * k2)
        k4, _ = full_rhs(y + dt * k3)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(y).all():
            raise DivergenceError((k + 1) * dt)

    lyap = np.array(rec["lyap"]) if unit_level else None
    return Trajectory(
        times=np.array(rec["t"]),
        omega=np.array(rec["omega"]), eta=np.array(rec["eta"]),
        x=np.array(rec["x"]).reshape(len(rec["t"]), nG),
        p_c=np.array(rec["p_c"]), psi=np.array(rec["psi"]).reshape(len(rec["t"]), n_edges),
        xi=np.array(rec["xi"]), n_f=np.array(rec["n_f"]), n_d=np.array(rec["n_d"]),
        s_tilde=np.array(rec["s_tilde"]),
        p_M=np.array(rec["p_M"]).reshape(len(rec["t"]), nG),
        d_c=np.array(rec["d_c"]).reshape(len(rec["t"]), n_units - nG),
        u=np.array(rec["u"]), pc_dot=np.array(rec["pc_dot"]),
        lyapunov=lyap, scheme_kind=cfg.kind, equilibrium=eq_ref,
        meta={"lambda": kkt0.lam, "seed": scenario.seed, "dt": dt},
    )


def steady_state_metrics(traj, window, devices=None, settle_threshold=SETTLE_THRESHOLD):
    """Terminal-window summary of a trajectory.

    Per-unit quantities are averaged over the final window before taking
    spreads, which makes the numbers robust to privacy noise. Marginal
    cost per unit is q times the magnitude of its prosumption; it needs
    the device set to be supplied.
    """
    times = traj.times
    span = times[-1] - times[0]
    if window <= 0 or window > span:
        raise ConfigurationError(f"window must lie in (0, {span:.6g}]")
    sel = times >= times[-1] - window
    omega_w = traj.omega[sel]
    max_abs_omega_end = float(np.abs(omega_w).max())

    over = np.abs(traj.omega).max(axis=1) >= settle_threshold
    if over.any():
        last = np.flatnonzero(over)[-1]
        settle_time = float(times[last + 1]) if last + 1 < len(times) else None
    else:
        settle_time = float(times[0])

    pc_mean = traj.p_c[sel].mean(axis=0)
    p_c_spread_end = float(pc_mean.max() - pc_mean.min())
    metrics = {
        "max_abs_omega_end": max_abs_omega_end,
        "settle_time": settle_time,
        "settle_threshold": float(settle_threshold),
        "p_c_spread_end": p_c_spread_end,
        "p_c_mean_end": float(pc_mean.mean()),
    }
    if devices is not None:
        mc = marginal_costs(traj, devices)[sel].mean(axis=0)
        metrics["marginal_cost_spread_end"] = float(mc.max() - mc.min())
        metrics["marginal_cost_mean_end"] = float(mc.mean())
    return metrics


def marginal_costs(traj, devices):
    """Per-sample, per-unit marginal cost q * |prosumption|."""
    out = np.empty((len(traj.times), devices.n_units))
    out[:, devices.gen_index] = np.abs(traj.p_M) * devices.cost_q[devices.gen_index]
    out[:, devices.load_index] = np.abs(traj.d_c) * devices.cost_q[devices.load_index]
    return out
