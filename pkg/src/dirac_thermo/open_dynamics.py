"""Open simple systems: matter ports and heat sources.

The mechanical part is solved exactly as in the closed case.  The matter
content ``N`` is an extra thermodynamic state with ``Ṅ = Σ_a J^a``, and Ṡ
follows from the entropy balance including the port and source terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .dynamics import Trajectory, _ClosedSystem, _evaluate, _run, energy
from .errors import ModelDomainError
from .model import ThermoModel, temperature

__all__ = [
    "Port", "HeatSource", "OpenModel", "open_rhs", "internal_entropy_production",
    "external_power_decomposition", "open_simulate", "linear_port", "linear_source",
]


@dataclass(frozen=True)
class Port:
    """Matter port; every evaluator has signature ``(t, q, v, S, N) -> float``."""

    chemical_potential: Callable
    temperature: Callable
    matter_flux: Callable
    entropy_flux: Callable


@dataclass(frozen=True)
class HeatSource:
    temperature: Callable
    entropy_flux: Callable


@dataclass(frozen=True)
class OpenModel:
    """A closed model family ``frozen(N)`` parameterized by the matter content.

    ``dL_dN(q, v, S, N)`` supplies the remaining partial derivative; the
    system's chemical potential is ``−∂L/∂N``.
    """

    frozen: Callable[[float], ThermoModel]
    dL_dN: Callable
    ports: tuple = ()
    heat_sources: tuple = ()
    name: str = "open"
    metadata: dict = field(default_factory=dict, compare=False, repr=False)

    def base(self, N: float) -> ThermoModel:
        return self.frozen(N)

    def chemical_potential(self, q, v, S, N) -> float:
        return -float(self.dL_dN(q, v, S, N))


def linear_port(model_mu: Callable, model_T: Callable, mu_a: float, T_a: float,
                lam: float, sigma: float) -> Port:
    """Port with ``J = λ(μ^a − μ)`` and ``J_S = σ(T^a − T)``.

    ``model_mu`` and ``model_T`` evaluate the system's own potentials.
    """
    if lam < 0 or sigma < 0:
        raise ValueError("port conductances must be nonnegative")
    if not T_a > 0:
        raise ValueError("port temperature must be positive")
    return Port(
        chemical_potential=lambda t, q, v, S, N: mu_a,
        temperature=lambda t, q, v, S, N: T_a,
        matter_flux=lambda t, q, v, S, N: lam * (mu_a - model_mu(q, v, S, N)),
        entropy_flux=lambda t, q, v, S, N: sigma * (T_a - model_T(q, v, S, N)),
    )


def linear_source(model_T: Callable, T_b: float, kappa: float) -> HeatSource:
    """Heat source with ``J_S = κ(T^b − T)``."""
    if kappa < 0:
        raise ValueError("heat conductance must be nonnegative")
    if not T_b > 0:
        raise ValueError("source temperature must be positive")
    return HeatSource(
        temperature=lambda t, q, v, S, N: T_b,
        entropy_flux=lambda t, q, v, S, N: kappa * (T_b - model_T(q, v, S, N)),
    )


def _port_values(om: OpenModel, t, q, v, S, N):
    ports = []
    for port in om.ports:
        Ta = float(port.temperature(t, q, v, S, N))
        if not Ta > 0:
            raise ModelDomainError(f"port temperature {Ta:g} is not positive")
        ports.append((float(port.matter_flux(t, q, v, S, N)), float(port.chemical_potential(t, q, v, S, N)),
                      float(port.entropy_flux(t, q, v, S, N)), Ta))
    sources = []
    for src in om.heat_sources:
        Tb = float(src.temperature(t, q, v, S, N))
        if not Tb > 0:
            raise ModelDomainError(f"source temperature {Tb:g} is not positive")
        sources.append((float(src.entropy_flux(t, q, v, S, N)), Tb))
    return ports, sources


def _thermal(om: OpenModel, model: ThermoModel, t, q, v, S, N):
    """Return ``(Ṡ, Ṅ)``."""
    temperature(model, q, v, S)
    dLdS = float(model.dL_dS(q, v, S))
    dLdN = float(om.dL_dN(q, v, S, N))
    ports, sources = _port_values(om, t, q, v, S, N)
    Ndot = sum(J for J, _, _, _ in ports)
    carried = sum(JS for _, _, JS, _ in ports) + sum(JS for JS, _ in sources)
    port_work = sum(J * (dLdN + mua) + JS * (dLdS + Ta) for J, mua, JS, Ta in ports)
    source_work = sum(JS * (dLdS + Tb) for JS, Tb in sources)
    fv = float(model.F_fr(q, v, S) @ v)
    Sdot = carried + (fv - port_work - source_work) / dLdS
    return Sdot, Ndot


def _entropy_source(om: OpenModel, model: ThermoModel, t, q, v, S, N) -> float:
    """Port and source terms of ``∂L/∂S Ṡ = <F^fr, q̇> + source``."""
    dLdS = float(model.dL_dS(q, v, S))
    dLdN = float(om.dL_dN(q, v, S, N))
    ports, sources = _port_values(om, t, q, v, S, N)
    carried = sum(JS for _, _, JS, _ in ports) + sum(JS for JS, _ in sources)
    port_work = sum(J * (dLdN + mua) + JS * (dLdS + Ta) for J, mua, JS, Ta in ports)
    source_work = sum(JS * (dLdS + Tb) for JS, Tb in sources)
    return dLdS * carried - port_work - source_work


class _OpenSystem(_ClosedSystem):
    n_extra = 1
    power_names = ("P_W", "P_H", "P_M")

    def __init__(self, om: OpenModel, N_ref: float):
        super().__init__(om.frozen(N_ref))
        self.om = om

    def model_at(self, extras) -> ThermoModel:
        return self.om.frozen(extras[0])

    def thermal_rates(self, model, t, q, v, S, extras):
        Sdot, Ndot = _thermal(self.om, model, t, q, v, S, extras[0])
        return Sdot, np.array([Ndot])

    def entropy_source(self, model, t, q, v, S, extras) -> float:
        return _entropy_source(self.om, model, t, q, v, S, extras[0])

    def powers(self, model, t, q, v, S, extras):
        d = _powers(self.om, model, t, q, v, S, extras[0])
        return np.array([d["P_W"], d["P_H"], d["P_M"]])


def _powers(om: OpenModel, model: ThermoModel, t, q, v, S, N) -> dict:
    ports, sources = _port_values(om, t, q, v, S, N)
    return {
        "P_W": float(model.F_ext(t, q, v, S) @ v),
        "P_H": sum(JS * Tb for JS, Tb in sources),
        "P_M": sum(J * mua + JS * Ta for J, mua, JS, Ta in ports),
    }


def open_rhs(om: OpenModel, q, v, S, N, *, t: float = 0.0):
    """Return ``(v̇, μ, Ṅ, Ṡ)`` at a state."""
    system = _OpenSystem(om, N)
    y = np.concatenate([np.asarray(q, dtype=float), np.asarray(v, dtype=float), [S, N], np.zeros(3)])
    _, ydot, mu, _ = _evaluate(system, t, y)
    n = system.n
    return ydot[n:2 * n], mu, float(ydot[2 * n + 1]), float(ydot[2 * n])


def internal_entropy_production(om: OpenModel, q, v, S, N, *, t: float = 0.0) -> float:
    """Friction, mixing and heating contributions to the entropy rate."""
    model = om.frozen(N)
    T = temperature(model, q, v, S)
    mu = om.chemical_potential(q, v, S, N)
    ports, sources = _port_values(om, t, q, v, S, N)
    friction = -float(model.F_fr(q, v, S) @ v) / T
    mixing = sum(J * (mua - mu) + JS * (Ta - T) for J, mua, JS, Ta in ports) / T
    heating = sum(JS * (Tb - T) for JS, Tb in sources) / T
    return friction + mixing + heating


def external_power_decomposition(om: OpenModel, q, v, S, N, *, t: float = 0.0) -> dict:
    """``{P_W, P_H, P_M}``: work, heat and matter power supplied from outside."""
    return _powers(om, om.frozen(N), t, np.asarray(q, dtype=float), np.asarray(v, dtype=float), S, N)


def _open_extra(system: _OpenSystem, t, y, ydot):
    q, v, S, x, _ = system.unpack(y)
    N = float(x[0])
    model = system.model_at(x)
    P = _powers(system.om, model, t, q, v, S, N)
    return {
        "N": N,
        "I": internal_entropy_production(system.om, q, v, S, N, t=t),
        "P_W": P["P_W"],
        "P_H": P["P_H"],
        "P_M": P["P_M"],
        "p_time": -energy(model, q, v, S),
    }


def open_simulate(om: OpenModel, initial, t_span, dt: float, *, scheme: str = "rk4",
                  projection: bool = True) -> Trajectory:
    """Integrate from ``initial = (q, v, S, N)``; adds the open-system columns."""
    q0, v0, S0, N0 = initial
    y0 = np.concatenate([np.asarray(q0, dtype=float).ravel(), np.asarray(v0, dtype=float).ravel(),
                         [float(S0), float(N0)], np.zeros(3)])
    return _run(_OpenSystem(om, float(N0)), y0, t_span, dt, scheme, projection, extra_fn=_open_extra)
