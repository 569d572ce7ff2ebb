"""Generation and controllable-demand units.

Each unit lives at a bus and is either a generator (first-order lag plus
droop) or a controllable load (static droop). Units carry a quadratic cost
coefficient and an attached uncontrollable load. The flat unit ordering is
fixed at construction and defines the stacking of all per-unit vectors.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

GENERATOR = "generator"
LOAD = "load"


@dataclass(frozen=True)
class DeviceSet:
    """Flat, ordered collection of prosumption units.

    Arrays are indexed by the global unit ordering. tau and droop_m are
    meaningful for generators only (ignored entries for loads).
    """

    bus: np.ndarray  # bus index per unit
    is_generator: np.ndarray  # bool per unit
    tau: np.ndarray  # s, > 0 for generators
    droop_m: np.ndarray  # > 0 for generators
    damping_h: np.ndarray  # > 0
    cost_q: np.ndarray  # > 0
    p_load: np.ndarray  # baseline uncontrollable demand, pu
    bus_count: int
    gen_index: np.ndarray = field(init=False, repr=False)
    load_index: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        for name in ("bus", "is_generator", "tau", "droop_m", "damping_h", "cost_q", "p_load"):
            arr = np.asarray(getattr(self, name))
            object.__setattr__(self, name, arr if name in ("bus", "is_generator") else arr.astype(float))
        object.__setattr__(self, "bus", self.bus.astype(int))
        object.__setattr__(self, "is_generator", self.is_generator.astype(bool))
        n = self.bus.shape[0]
        if n == 0:
            raise ConfigurationError("at least one unit is required")
        for name in ("is_generator", "tau", "droop_m", "damping_h", "cost_q", "p_load"):
            if getattr(self, name).shape != (n,):
                raise ConfigurationError(f"{name} length must match unit count {n}")
        if np.any(self.bus < 0) or np.any(self.bus >= self.bus_count):
            raise ConfigurationError("unit bus index out of range")
        if np.any(self.damping_h <= 0) or np.any(self.cost_q <= 0):
            raise ConfigurationError("damping_h and cost_q must be strictly positive")
        gens = self.is_generator
        if np.any(self.tau[gens] <= 0) or np.any(self.droop_m[gens] <= 0):
            raise ConfigurationError("tau and droop_m must be strictly positive for generators")
        object.__setattr__(self, "gen_index", np.flatnonzero(gens))
        object.__setattr__(self, "load_index", np.flatnonzero(~gens))

    @property
    def n_units(self):
        return self.bus.shape[0]

    @property
    def n_generators(self):
        return self.gen_index.shape[0]

    def units_per_bus(self):
        """Number of active units attached to each bus."""
        return np.bincount(self.bus, minlength=self.bus_count)

    def bus_sum(self, per_unit):
        """Sum a per-unit quantity over the units at each bus."""
        out = np.zeros(self.bus_count)
        np.add.at(out, self.bus, per_unit)
        return out


@dataclass
class DeviceState:
    """Internal generation states, one per generator unit."""

    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)


def device_outputs(devices, dstate, u, omega, p_load=None):
    """Evaluate unit outputs at the current inputs.

    Returns (p_M per generator, d_c per load, s_tilde per unit,
    net_injection per bus). p_load overrides the baseline uncontrollable
    demand when given (used for disturbances).
    """
    u = np.asarray(u, dtype=float)
    omega = np.asarray(omega, dtype=float)
    p_load = devices.p_load if p_load is None else np.asarray(p_load, dtype=float)
    if u.shape != (devices.n_units,) or omega.shape != (devices.bus_count,):
        raise ConfigurationError("u must be per unit and omega per bus")
    if dstate.x.shape != (devices.n_generators,):
        raise ConfigurationError("device state length must match generator count")
    drive = u - omega[devices.bus]
    gi, li = devices.gen_index, devices.load_index
    p_M = dstate.x + devices.damping_h[gi] * drive[gi]
    d_c = -devices.damping_h[li] * drive[li]
    s_tilde = np.empty(devices.n_units)
    s_tilde[gi] = -p_M
    s_tilde[li] = d_c
    s_tilde = s_tilde + p_load
    net_injection = np.zeros(devices.bus_count)
    np.add.at(net_injection, devices.bus[gi], p_M)
    np.add.at(net_injection, devices.bus[li], -d_c)
    np.add.at(net_injection, devices.bus, -p_load)
    return p_M, d_c, s_tilde, net_injection


def device_rhs(devices, dstate, u, omega):
    """First-order lag dynamics of the generator internal states."""
    u = np.asarray(u, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if u.shape != (devices.n_units,) or omega.shape != (devices.bus_count,):
        raise ConfigurationError("u must be per unit and omega per bus")
    gi = devices.gen_index
    drive = u[gi] - omega[devices.bus[gi]]
    return (-dstate.x + devices.droop_m[gi] * drive) / devices.tau[gi]


def design_optimal_gains(cost_q, is_generator, droop_split=0.5):
    """Gains that make the closed-loop steady state cost-optimal.

    For loads q*h = 1; for generators q*(m + h) = 1 with the droop share
    of the total gain set by droop_split. The split does not affect
    optimality, only the transient.
    """
    cost_q = np.asarray(cost_q, dtype=float)
    is_generator = np.asarray(is_generator, dtype=bool)
    droop_split = np.asarray(droop_split, dtype=float)
    if np.any(droop_split <= 0.0) or np.any(droop_split >= 1.0):
        raise ConfigurationError("droop_split must lie in (0, 1)")
    h = np.where(is_generator, droop_split / cost_q, 1.0 / cost_q)
    m = np.where(is_generator, (1.0 - droop_split) / cost_q, 0.0)
    return m, h
