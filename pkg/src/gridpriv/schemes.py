"""Secondary frequency controllers and the privacy-signal machinery.

Four controllers are supported:

* integral: each unit integrates its local frequency with gain inversely
  proportional to its cost coefficient;
* primal_dual: one controller per bus, consensus over a bus-level
  communication graph, driven by the bus prosumption total;
* extended_primal_dual: one controller per unit, consensus over a
  unit-level communication graph, driven by the unit prosumption;
* privacy_preserving: extended_primal_dual plus a privacy signal
  n = n_d + n_f, where n_d modulates the controller speed through a
  non-negative gain xi and n_f is frequency-bounded noise.

n_d = -xi * pc_dot makes the command derivative implicit; it is resolved
exactly by folding xi into the left-hand side time constant, so
(gamma + xi) * pc_dot = s_tilde - H psi + n_f.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InfeasibilityError

INTEGRAL = "integral"
PRIMAL_DUAL = "primal_dual"
EXTENDED_PRIMAL_DUAL = "extended_primal_dual"
PRIVACY_PRESERVING = "privacy_preserving"

SCHEME_KINDS = (INTEGRAL, PRIMAL_DUAL, EXTENDED_PRIMAL_DUAL, PRIVACY_PRESERVING)

# Controllers that keep one state per unit and communicate power commands.
UNIT_CONSENSUS_KINDS = (EXTENDED_PRIMAL_DUAL, PRIVACY_PRESERVING)


@dataclass(frozen=True)
class CommGraph:
    """Directed communication graph with its node-edge incidence matrix."""

    node_count: int
    edges: tuple  # (i, j) node-index pairs
    incidence: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(i), int(j)) for i, j in self.edges))
        n, e = self.node_count, len(self.edges)
        H = np.zeros((n, e))
        adj = [[] for _ in range(n)]
        for k, (i, j) in enumerate(self.edges):
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise ConfigurationError(f"bad communication edge ({i},{j})")
            H[i, k] = 1.0
            H[j, k] = -1.0
            adj[i].append(j)
            adj[j].append(i)
        if n > 1:
            seen = {0}
            stack = [0]
            while stack:
                for k in adj[stack.pop()]:
                    if k not in seen:
                        seen.add(k)
                        stack.append(k)
            if len(seen) != n:
                raise ConfigurationError("communication graph is not connected")
        object.__setattr__(self, "incidence", H)

    @property
    def edge_count(self):
        return len(self.edges)


@dataclass(frozen=True)
class PrivacyParams:
    """Bounds and sampling parameters for the privacy signal.

    beta bounds |n_f| relative to the local |omega|; beta_hat bounds the
    per-time rate of change of xi. safety < 1 keeps the sampled values
    strictly inside the open bounds. xi is capped at xi_max so the
    effective time constants stay bounded.
    """

    beta: np.ndarray  # per unit, >= 0
    beta_hat: np.ndarray  # per unit, >= 0
    xi_max: float
    safety: float = 0.999
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "beta_hat", np.asarray(self.beta_hat, dtype=float))
        if np.any(self.beta < 0) or np.any(self.beta_hat < 0):
            raise ConfigurationError("beta and beta_hat must be non-negative")
        if not 0.0 < self.safety < 1.0:
            raise ConfigurationError("safety must lie in (0, 1)")
        if self.xi_max < 0:
            raise ConfigurationError("xi_max must be non-negative")


@dataclass(frozen=True)
class SchemeConfig:
    """Controller kind, time constants and optional privacy parameters.

    gamma is per controller (per unit, or per bus for the bus-level
    scheme); gamma_psi is per communication edge.
    """

    kind: str
    gamma: np.ndarray
    gamma_psi: np.ndarray
    integral_gain: float = 1.0
    privacy: PrivacyParams | None = None

    def __post_init__(self):
        if self.kind not in SCHEME_KINDS:
            raise ConfigurationError(f"unknown scheme kind {self.kind!r}")
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "gamma_psi", np.asarray(self.gamma_psi, dtype=float))
        if np.any(self.gamma <= 0) or np.any(self.gamma_psi <= 0):
            raise ConfigurationError("time constants must be strictly positive")
        if self.kind == INTEGRAL and self.integral_gain <= 0:
            raise ConfigurationError("integral_gain must be strictly positive")
        if self.kind == PRIVACY_PRESERVING and self.privacy is None:
            raise ConfigurationError("privacy_preserving scheme requires privacy parameters")


@dataclass
class SchemeState:
    """Mutable controller state advanced by the integrator."""

    p_c: np.ndarray  # power commands (per unit, or per bus for primal_dual)
    psi: np.ndarray  # per communication edge
    xi: np.ndarray  # per unit, >= 0 (zeros unless privacy_preserving)
    n_f_held: np.ndarray  # per unit, held constant over the current step

    def __post_init__(self):
        self.p_c = np.asarray(self.p_c, dtype=float)
        self.psi = np.asarray(self.psi, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)
        self.n_f_held = np.asarray(self.n_f_held, dtype=float)


@dataclass
class SchemeRhs:
    psi_dot: np.ndarray
    pc_dot: np.ndarray
    u: np.ndarray  # per-unit input to the devices
    n_d: np.ndarray  # realized speed-modulation signal, for logging


def scheme_rhs(cfg, graph, state, devices, s_tilde, omega, zeta=None):
    """Controller derivatives and the resulting device input.

    s_tilde is the per-unit prosumption vector, omega the per-bus
    frequency. zeta (bus prosumption totals) is required for the
    bus-level primal_dual scheme only.
    """
    omega = np.asarray(omega, dtype=float)
    n_units = devices.n_units
    if cfg.kind == INTEGRAL:
        _expect(state.p_c, n_units, "p_c")
        pc_dot = -(cfg.integral_gain / devices.cost_q) * omega[devices.bus]
        return SchemeRhs(np.zeros(0), pc_dot, state.p_c, np.zeros(n_units))
    H = graph.incidence
    if cfg.kind == PRIMAL_DUAL:
        if zeta is None:
            raise ConfigurationError("primal_dual scheme requires zeta")
        _expect(state.p_c, graph.node_count, "p_c")
        _expect(state.psi, graph.edge_count, "psi")
        psi_dot = (H.T @ state.p_c) / cfg.gamma_psi
        pc_dot = (np.asarray(zeta, dtype=float) - H @ state.psi) / cfg.gamma
        return SchemeRhs(psi_dot, pc_dot, state.p_c[devices.bus], np.zeros(n_units))
    # unit-level consensus schemes share one code path; extended_primal_dual
    # is the xi = 0, n_f = 0 special case of privacy_preserving
    if graph.node_count != n_units:
        raise ConfigurationError("unit-level scheme needs a communication node per unit")
    _expect(state.p_c, n_units, "p_c")
    _expect(state.psi, graph.edge_count, "psi")
    _expect(state.xi, n_units, "xi")
    effective = cfg.gamma + state.xi
    if np.any(effective <= 0):
        raise ConfigurationError("gamma + xi must stay strictly positive")
    psi_dot = (H.T @ state.p_c) / cfg.gamma_psi
    pc_dot = (np.asarray(s_tilde, dtype=float) - H @ state.psi + state.n_f_held) / effective
    n_d = -state.xi * pc_dot
    return SchemeRhs(psi_dot, pc_dot, state.p_c, n_d)


def _expect(arr, length, name):
    if arr.shape != (length,):
        raise ConfigurationError(f"{name} has shape {arr.shape}, expected ({length},)")


def refresh_privacy_signals(params, xi, unit_bus, omega, dt, rng):
    """Draw the next privacy-gain increment and noise sample.

    xi takes a uniform step bounded by safety*beta_hat*dt and is clamped
    to [0, xi_max]; n_f is uniform within safety*beta*|omega| at the
    unit's bus. Both are held constant until the next refresh.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    omega = np.asarray(omega, dtype=float)
    n = xi.shape[0]
    delta = rng.uniform(-1.0, 1.0, n) * (params.safety * params.beta_hat * dt)
    xi_new = np.clip(xi + delta, 0.0, params.xi_max)
    n_f = rng.uniform(-1.0, 1.0, n) * (params.safety * params.beta * np.abs(omega[unit_bus]))
    return xi_new, n_f + 0.0  # normalizes -0.0 so degenerate runs match the plain scheme bit-for-bit


def check_design_condition(h, d_over_n, beta, beta_hat):
    """Per-unit negative-semidefiniteness test of the 2x2 design matrix.

    d_over_n is the unit's bus damping divided by the number of active
    units at that bus. Returns (feasible, eigenvalues) with eigenvalues of
    shape (n, 2); the test itself uses the closed-form diagonal/determinant
    characterization.
    """
    h, d_over_n, beta, beta_hat = np.broadcast_arrays(
        *(np.asarray(v, dtype=float) for v in (h, d_over_n, beta, beta_hat))
    )
    a11 = -h - d_over_n
    a22 = -h + beta_hat / 2.0
    off = h + beta / 2.0
    det = a11 * a22 - off * off
    feasible = (a11 <= 0) & (a22 <= 0) & (det >= 0)
    mid = (a11 + a22) / 2.0
    rad = np.sqrt(((a11 - a22) / 2.0) ** 2 + off * off)
    eigenvalues = np.stack([mid - rad, mid + rad], axis=-1)
    return feasible, eigenvalues


def max_feasible_beta(h, d_over_n, beta_hat):
    """Largest noise bound beta admitted by the design condition.

    Solves det = 0 of the 2x2 design matrix for beta. Requires
    beta_hat < 2h, otherwise the lower-right entry is non-negative and no
    beta is admissible.
    """
    h = np.asarray(h, dtype=float)
    d_over_n = np.asarray(d_over_n, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)
    if np.any(beta_hat >= 2.0 * h):
        raise InfeasibilityError("beta_hat must be smaller than 2h")
    return 2.0 * (np.sqrt((h + d_over_n) * (h - beta_hat / 2.0)) - h)


def design_condition_report(devices, model, privacy):
    """Evaluate the design condition for every unit of a device set."""
    per_bus = devices.units_per_bus()
    d_over_n = model.damping[devices.bus] / per_bus[devices.bus]
    feasible, eigenvalues = check_design_condition(
        devices.damping_h, d_over_n, privacy.beta, privacy.beta_hat
    )
    return feasible, eigenvalues, d_over_n
