"""Optimal dispatch, closed-loop equilibria and Lyapunov evaluation.

The dispatch problem minimizes the total quadratic prosumption cost
subject to generation-demand balance. Its KKT conditions have a closed
form: all marginal costs equal |lambda| at the optimum. The full
closed-loop equilibrium extends the dispatch point with angles, internal
generator states and consensus states.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InfeasibilityError
from .network import dc_power_flow
from .schemes import EXTENDED_PRIMAL_DUAL, PRIVACY_PRESERVING


@dataclass
class EquilibriumSolution:
    """Dispatch optimum plus (optionally) the network-dependent fields."""

    lam: float  # balance-constraint multiplier
    p_M_star: np.ndarray  # per generator
    d_c_star: np.ndarray  # per load
    total_cost: float
    p_c_star: np.ndarray | None = None  # per unit, common value -lam
    x_star: np.ndarray | None = None  # per generator
    eta_star: np.ndarray | None = None  # per line
    psi_star: np.ndarray | None = None  # per communication edge
    s_tilde_star: np.ndarray | None = None  # per unit


def solve_kkt(devices, p_load=None):
    """Closed-form solution of the dispatch problem.

    Stationarity gives q*p_M = -lambda for generators and q*d_c = lambda
    for loads; the balance constraint then fixes
    lambda = -(sum p_load) / (sum 1/q).
    """
    p_load = devices.p_load if p_load is None else np.asarray(p_load, dtype=float)
    inv_q = 1.0 / devices.cost_q
    lam = -p_load.sum() / inv_q.sum()
    p_M_star = -lam * inv_q[devices.gen_index]
    d_c_star = lam * inv_q[devices.load_index]
    total_cost = 0.5 * (
        devices.cost_q[devices.gen_index] @ p_M_star**2
        + devices.cost_q[devices.load_index] @ d_c_star**2
    )
    return EquilibriumSolution(lam=float(lam), p_M_star=p_M_star, d_c_star=d_c_star,
                               total_cost=float(total_cost))


def build_equilibrium(model, devices, comm, kkt, p_load=None, residual_tol=1e-9):
    """Complete a dispatch optimum into a closed-loop equilibrium.

    The power commands synchronize at -lambda, frequency deviations vanish,
    angles follow from a DC power flow of the optimal injections and the
    consensus states solve the incidence system for the equilibrium
    prosumption (minimum-norm choice on cyclic graphs).
    """
    p_load = devices.p_load if p_load is None else np.asarray(p_load, dtype=float)
    gains_lhs = devices.cost_q * (devices.droop_m + devices.damping_h)
    if not np.allclose(gains_lhs, 1.0, atol=1e-9):
        warnings.warn(
            "device gains do not satisfy the optimality conditions; the closed-loop "
            "equilibrium will differ from the dispatch optimum",
            stacklevel=2,
        )
    n_units = devices.n_units
    gi, li = devices.gen_index, devices.load_index
    p_c_star = np.full(n_units, -kkt.lam)
    x_star = devices.droop_m[gi] * p_c_star[gi]
    s_tilde_star = np.empty(n_units)
    s_tilde_star[gi] = -kkt.p_M_star
    s_tilde_star[li] = kkt.d_c_star
    s_tilde_star = s_tilde_star + p_load
    total = s_tilde_star.sum()
    if abs(total) > residual_tol * (1.0 + np.abs(s_tilde_star).sum()):
        raise InfeasibilityError(f"equilibrium prosumption does not balance (sum {total:.3e})")
    injection = np.zeros(devices.bus_count)
    np.add.at(injection, devices.bus[gi], kkt.p_M_star)
    np.add.at(injection, devices.bus[li], -kkt.d_c_star)
    np.add.at(injection, devices.bus, -p_load)
    _, eta_star = dc_power_flow(model, injection, balance_tol=max(residual_tol, 1e-9))
    if comm is not None:
        if comm.node_count != n_units:
            raise ConfigurationError("communication graph must have one node per unit")
        psi_star, _, _, _ = np.linalg.lstsq(comm.incidence, s_tilde_star, rcond=None)
        residual = np.abs(comm.incidence @ psi_star - s_tilde_star).max()
        if residual > residual_tol:
            raise InfeasibilityError(f"consensus equilibrium residual {residual:.3e}")
    else:
        psi_star = None
    return EquilibriumSolution(
        lam=kkt.lam, p_M_star=kkt.p_M_star, d_c_star=kkt.d_c_star,
        total_cost=kkt.total_cost, p_c_star=p_c_star, x_star=x_star,
        eta_star=eta_star, psi_star=psi_star, s_tilde_star=s_tilde_star,
    )


def lyapunov_value(model, devices, comm, cfg, eq, eta, omega, x, p_c, psi, xi=None):
    """Energy-like certificate value at a state, relative to an equilibrium.

    Returns (total, components). Defined for the unit-level consensus
    schemes only; the privacy scheme uses the xi-augmented command term.
    """
    if cfg.kind not in (EXTENDED_PRIMAL_DUAL, PRIVACY_PRESERVING):
        raise ConfigurationError(f"no Lyapunov certificate for scheme kind {cfg.kind!r}")
    if eq.p_c_star is None or eq.eta_star is None or eq.psi_star is None:
        raise ConfigurationError("equilibrium is incomplete")
    d_omega = np.asarray(omega, dtype=float)  # omega* = 0
    d_eta = np.asarray(eta, dtype=float) - eq.eta_star
    d_pc = np.asarray(p_c, dtype=float) - eq.p_c_star
    d_psi = np.asarray(psi, dtype=float) - eq.psi_star
    d_x = np.asarray(x, dtype=float) - eq.x_star
    gi = devices.gen_index
    v_f = 0.5 * model.inertia @ d_omega**2
    v_p = 0.5 * model.susceptance @ d_eta**2
    weight = cfg.gamma
    if cfg.kind == PRIVACY_PRESERVING:
        if xi is None:
            raise ConfigurationError("privacy scheme Lyapunov value requires xi")
        weight = cfg.gamma + np.asarray(xi, dtype=float)
    v_c = 0.5 * weight @ d_pc**2
    v_psi = 0.5 * cfg.gamma_psi @ d_psi**2
    v_m = (devices.tau[gi] / (2.0 * devices.droop_m[gi])) @ d_x**2
    components = {"V_F": float(v_f), "V_P": float(v_p), "V_C": float(v_c),
                  "V_psi": float(v_psi), "V_M": float(v_m)}
    return float(v_f + v_p + v_c + v_psi + v_m), components
