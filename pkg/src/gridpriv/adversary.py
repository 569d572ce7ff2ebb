"""Eavesdropper models and the model-inversion observer attack.

A naive eavesdropper only reads what is on the wire; with the bus-level
scheme that is the prosumption itself. An informed eavesdropper knows the
controller dynamics and reconstructs the prosumption from the power
command trajectories: it integrates the consensus states from the
observed commands and inverts the command dynamics,
s_hat = gamma * pc_dot + H psi_hat. The privacy scheme defeats this
because the true dynamics carry the unknown signal n.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError
from .schemes import PRIMAL_DUAL

FORWARD_DIFF = "forward"
CENTRAL_DIFF = "central"
EXACT_DERIV = "exact"


@dataclass
class KnowledgeSet:
    """What the adversary sees and believes.

    observed_channels: "all", ("neighbors_of", unit) or an explicit list
    of unit indices whose power command signal is intercepted.
    model_params holds the (gamma, gamma_psi, incidence) the adversary
    believes; pass the true values for the strongest attack.
    """

    observed_channels: object = "all"
    knows_dynamics: bool = True
    knows_noise_steady_state: bool = False
    gamma: np.ndarray | None = None
    gamma_psi: np.ndarray | None = None
    incidence: np.ndarray | None = None

    def observed_mask(self, n_units, comm_edges=None):
        mask = np.zeros(n_units, dtype=bool)
        if self.observed_channels == "all":
            mask[:] = True
        elif isinstance(self.observed_channels, tuple) and self.observed_channels[0] == "neighbors_of":
            unit = self.observed_channels[1]
            mask[unit] = True
            for i, j in comm_edges or ():
                if i == unit:
                    mask[j] = True
                elif j == unit:
                    mask[i] = True
        else:
            mask[list(self.observed_channels)] = True
        return mask


@dataclass
class AttackReport:
    s_hat: np.ndarray  # (T, n_targets) estimated prosumption
    target_units: np.ndarray
    rmse_transient: float
    rmse_steady: float
    origin_ranking: list | None = None
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "target_units": [int(u) for u in self.target_units],
            "rmse_transient": self.rmse_transient,
            "rmse_steady": self.rmse_steady,
            "origin_ranking": self.origin_ranking,
            "warnings": list(self.warnings),
        }


def naive_readout(traj, scheme_kind=None):
    """Prosumption values visible to an eavesdropper without model knowledge.

    The bus-level scheme requires the units to transmit their prosumption
    toward the bus controller, so the full per-unit profile leaks. The
    unit-level schemes only put power commands on the wire.
    """
    kind = scheme_kind or traj.scheme_kind
    if kind == PRIMAL_DUAL:
        return traj.s_tilde
    return None


def observer_attack(traj, comm, cfg, knowledge, deriv=CENTRAL_DIFF, psi0_guess=None,
                    target_units=None, transient_window=None, disturbance_time=None):
    """Reconstruct prosumption from power command trajectories.

    deriv selects the command-derivative estimate: finite differences on
    the recorded samples, or the trajectory's stored derivatives for the
    idealized adversary. In the idealized case the consensus states are
    taken as exactly integrated (the stored ones); otherwise they are
    trapezoid-integrated from psi0_guess. When psi0_guess is omitted the
    first recorded consensus sample is used (the trace starts at a known
    steady state); without it the estimate carries a constant bias.
    """
    if not knowledge.knows_dynamics:
        raise ConfigurationError("observer attack requires knowledge of the dynamics")
    times = traj.times
    dt = traj.dt
    p_c = traj.p_c
    n_units = p_c.shape[1]
    gamma = np.asarray(knowledge.gamma if knowledge.gamma is not None else cfg.gamma, dtype=float)
    gamma_psi = np.asarray(
        knowledge.gamma_psi if knowledge.gamma_psi is not None else cfg.gamma_psi, dtype=float
    )
    H = knowledge.incidence if knowledge.incidence is not None else comm.incidence

    warnings_out = []
    mask = knowledge.observed_mask(n_units, comm.edges if comm is not None else None)
    pc_obs = np.where(mask[None, :], p_c, 0.0)
    if not mask.all():
        warnings_out.append(
            "partial knowledge: unobserved channels "
            f"{np.flatnonzero(~mask).tolist()} zero-filled"
        )

    if deriv == EXACT_DERIV:
        if traj.pc_dot.shape[1] != n_units:
            raise ConfigurationError("trajectory carries no stored derivatives")
        pc_dot = traj.pc_dot
        psi_hat = traj.psi
    else:
        pc_dot = _finite_difference(pc_obs, dt, deriv)
        if psi0_guess is None and traj.psi.shape[1] == H.shape[1]:
            psi0_guess = traj.psi[0]
        psi_hat = _integrate_psi(pc_obs, H, gamma_psi, dt, psi0_guess)

    s_hat_full = gamma * pc_dot + psi_hat @ H.T

    if target_units is None:
        targets = np.arange(n_units)
    else:
        targets = np.asarray(target_units, dtype=int)
        touched = np.abs(H[targets]).sum(axis=0) > 0
        ends = {e for k in np.flatnonzero(touched) for e in comm.edges[k]}
        if ends and not mask[list(ends)].all():
            warnings_out.append("channels incident to a target unit are unobserved")
    s_hat = s_hat_full[:, targets]
    err = s_hat - traj.s_tilde[:, targets]

    if transient_window is not None:
        lo, hi = transient_window
        sel = (times >= lo) & (times <= hi)
    else:
        sel = np.ones(len(times), dtype=bool)
    rmse_transient = float(np.sqrt(np.mean(err[sel] ** 2)))
    tail = times >= times[-1] - max(dt, 0.05 * (times[-1] - times[0]))
    rmse_steady = float(np.sqrt(np.mean(err[tail].mean(axis=0) ** 2)))

    ranking = None
    if disturbance_time is not None:
        ranking, _ = origin_detection(traj, disturbance_time)
    return AttackReport(s_hat=s_hat, target_units=targets,
                        rmse_transient=rmse_transient, rmse_steady=rmse_steady,
                        origin_ranking=ranking, warnings=warnings_out)


def _finite_difference(signal, dt, kind):
    out = np.empty_like(signal)
    if kind == FORWARD_DIFF:
        out[:-1] = (signal[1:] - signal[:-1]) / dt
        out[-1] = out[-2]
    elif kind == CENTRAL_DIFF:
        out[1:-1] = (signal[2:] - signal[:-2]) / (2.0 * dt)
        out[0] = (signal[1] - signal[0]) / dt
        out[-1] = (signal[-1] - signal[-2]) / dt
    else:
        raise ConfigurationError(f"unknown derivative estimator {kind!r}")
    return out


def _integrate_psi(p_c, H, gamma_psi, dt, psi0=None):
    """Trapezoid integration of the consensus dynamics from observed commands."""
    rhs = (p_c @ H) / gamma_psi
    psi = np.empty_like(rhs)
    psi[0] = np.zeros(H.shape[1]) if psi0 is None else np.asarray(psi0, dtype=float)
    increments = 0.5 * dt * (rhs[1:] + rhs[:-1])
    psi[1:] = psi[0] + np.cumsum(increments, axis=0)
    return psi


def origin_detection(traj, disturbance_time, window=2.0):
    """Rank units by power command activity right after a disturbance.

    Activity is the summed |command increment| over a short slice at the
    start of the window (1/40 of it, at least three samples). The disturbed
    unit's command derivative jumps with the load step while the others
    only move through the continuous consensus states, so the early slice
    separates them; later the consensus motion washes the contrast out.
    The truly disturbed unit ranks first unless noise masks it.
    """
    times = traj.times
    if disturbance_time < times[0] or disturbance_time > times[-1]:
        raise ConfigurationError("disturbance_time outside the trajectory")
    if disturbance_time + window > times[-1] + 1e-12:
        raise ConfigurationError("window exceeds the trajectory")
    dt = traj.dt
    early = max(3.0 * dt, 0.025 * window)
    sel = (times >= disturbance_time) & (times <= disturbance_time + early)
    pc = traj.p_c[sel]
    energy = np.abs(np.diff(pc, axis=0)).sum(axis=0)
    ranking = np.argsort(-energy, kind="stable").tolist()
    return ranking, energy
