"""Built-in models: crank-driven piston with ideal gas, LCR circuit, open piston.

Closures used for the abstract internal energies:

* ideal gas ``U(S, V, N) = U0 (N/N0)^{5/3} (V0/V)^{2/3} exp(2/(3R) (S/N − S0/N0))``
  with ``U0 = 3/2 N0 R T0``, so ``T = 2U/(3NR)`` and pressure ``2U/(3V)``;
* circuit heat reservoir ``U_int(S) = c_R T0 exp((S − S0)/c_R)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Union

import numpy as np

from .errors import DerivativeMismatchError, ModelDomainError
from .model import ThermoModel, _rel_err, verify_derivatives
from .open_dynamics import OpenModel, linear_port, linear_source

R_GAS = 8.314462618

__all__ = [
    "R_GAS", "Drive", "IdealGasParams", "PistonCylinderParams", "GasPistonParams",
    "LCRParams", "PortParams", "SourceParams", "OpenPistonParams",
    "gas_energy", "gas_temperature", "gas_pressure", "gas_chemical_potential",
    "piston_alpha", "piston_alpha_prime", "build_piston_cylinder", "build_gas_piston",
    "build_lcr", "build_open_piston", "default_open_params", "BuiltinSpec", "BUILTINS",
    "get_builtin", "LCR_KCL",
]


@dataclass(frozen=True)
class Drive:
    """Time signal ``offset + amplitude sin(omega t + phase)``."""

    offset: float = 0.0
    amplitude: float = 0.0
    omega: float = 0.0
    phase: float = 0.0

    def __call__(self, t: float) -> float:
        if self.amplitude == 0.0:
            return self.offset
        return self.offset + self.amplitude * math.sin(self.omega * t + self.phase)


SignalLike = Union[float, Drive, Callable]


def _signal(x: SignalLike) -> Callable:
    if callable(x):
        return x
    return Drive(offset=float(x))


# -- ideal gas -----------------------------------------------------------------


@dataclass(frozen=True)
class IdealGasParams:
    """Reference state ``(N0, S0, V0, T0)`` of a monatomic ideal gas."""

    N0: float = 0.01
    S0: float = 0.0
    V0: float = 5e-3
    T0: float = 300.0
    R: float = R_GAS

    def validate(self):
        for key in ("N0", "V0", "T0", "R"):
            if not getattr(self, key) > 0:
                raise ValueError(f"gas.{key} must be positive")


def gas_energy(S, V, N, gas: IdealGasParams) -> float:
    U0 = 1.5 * gas.N0 * gas.R * gas.T0
    return (U0 * (N / gas.N0) ** (5.0 / 3.0) * (gas.V0 / V) ** (2.0 / 3.0)
            * math.exp(2.0 / (3.0 * gas.R) * (S / N - gas.S0 / gas.N0)))


def gas_temperature(S, V, N, gas: IdealGasParams) -> float:
    """``∂U/∂S``."""
    return 2.0 * gas_energy(S, V, N, gas) / (3.0 * N * gas.R)


def gas_pressure(S, V, N, gas: IdealGasParams) -> float:
    """``−∂U/∂V``."""
    return 2.0 * gas_energy(S, V, N, gas) / (3.0 * V)


def gas_chemical_potential(S, V, N, gas: IdealGasParams) -> float:
    """``∂U/∂N``."""
    U = gas_energy(S, V, N, gas)
    return 5.0 * U / (3.0 * N) - 2.0 * S * U / (3.0 * gas.R * N * N)


def _check_volume(V):
    if not V > 0:
        raise ModelDomainError(f"gas volume {V:.6g} is not positive")


# -- crank-driven piston -----------------------------------------------------------


@dataclass(frozen=True)
class PistonCylinderParams:
    """Piston of mass ``M`` driven through links ``a < b`` by a shaft of mass ``m``."""

    M: float = 1.0
    m: float = 2.0
    a: float = 0.1
    b: float = 0.3
    A: float = 0.01
    r: float = 0.5
    g: float = 9.81
    T_ext: SignalLike = 0.0
    gas: IdealGasParams = field(default_factory=IdealGasParams)

    def validate(self):
        for key in ("M", "m", "a", "A"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        if not self.b > self.a:
            raise ValueError(f"link lengths must satisfy b > a (got a={self.a}, b={self.b})")
        if self.r < 0:
            raise ValueError("r must be nonnegative")
        self.gas.validate()


def piston_alpha(phi, a, b):
    """Crank coefficient in the rolling constraint ``dq + α(φ) dφ = 0``."""
    s, c = math.sin(phi), math.cos(phi)
    k = a / b
    return a * s * (1.0 + k * c / math.sqrt(1.0 - k * k * s * s))


def piston_alpha_prime(phi, a, b):
    """``dα/dφ``."""
    s, c = math.sin(phi), math.cos(phi)
    k = a / b
    D = math.sqrt(1.0 - k * k * s * s)
    return a * c + a * k * ((c * c - s * s) / D + k * k * s * s * c * c / D ** 3)


def build_piston_cylinder(params: PistonCylinderParams | None = None, *, check: bool = True) -> ThermoModel:
    """Two-dof model ``(q, φ)`` with one rolling constraint.

    Friction acts on the piston slot, the external torque on the shaft slot.
    """
    P = PistonCylinderParams() if params is None else params
    P.validate()
    gas, A = P.gas, P.A
    N = gas.N0
    torque = _signal(P.T_ext)
    Ia = P.m * P.a * P.a
    mga = P.m * P.g * P.a

    def lagrangian(q, v, S):
        V = A * q[0]
        _check_volume(V)
        return 0.5 * P.M * v[0] ** 2 + 0.5 * Ia * v[1] ** 2 - gas_energy(S, V, N, gas) - mga * math.sin(q[1])

    def dL_dq(q, v, S):
        V = A * q[0]
        _check_volume(V)
        return np.array([gas_pressure(S, V, N, gas) * A, -mga * math.cos(q[1])])

    def dL_dv(q, v, S):
        return np.array([P.M * v[0], Ia * v[1]])

    def dL_dS(q, v, S):
        V = A * q[0]
        _check_volume(V)
        return -gas_temperature(S, V, N, gas)

    def d2L_dv2(q, v, S):
        return np.diag([P.M, Ia])

    model = ThermoModel(
        n=2,
        lagrangian=lagrangian,
        dL_dq=dL_dq,
        dL_dv=dL_dv,
        dL_dS=dL_dS,
        d2L_dv2=d2L_dv2,
        friction_force=lambda q, v, S: np.array([-P.r * v[0], 0.0]),
        external_force=lambda t, q, v, S: np.array([0.0, torque(t)]),
        m=1,
        constraint_forms=lambda q: np.array([[1.0, piston_alpha(q[1], P.a, P.b)]]),
        constraint_rate=lambda q, v: np.array([[0.0, piston_alpha_prime(q[1], P.a, P.b) * v[1]]]),
        d2L_dvdq=lambda q, v, S: np.zeros((2, 2)),
        d2L_dvdS=lambda q, v, S: np.zeros(2),
        name="piston_cylinder",
        metadata={"params": P},
    )
    if check:
        verify_derivatives(model, np.array([gas.V0 / A, 0.4]), np.array([-0.1, 0.1 / piston_alpha(0.4, P.a, P.b)]),
                           gas.S0)
    return model


# -- one-dof gas piston (closed and open) ------------------------------------------


@dataclass(frozen=True)
class GasPistonParams:
    """Piston of mass ``M`` on a gas column, held by a linear spring."""

    M: float = 5.0
    A: float = 0.01
    r: float = 2.0
    k_spring: float = 500.0
    q_rest: float = 0.0
    F_ext: SignalLike = 0.0
    gas: IdealGasParams = field(default_factory=lambda: IdealGasParams(N0=0.05))

    def validate(self):
        for key in ("M", "A"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        if self.r < 0:
            raise ValueError("r must be nonnegative")
        if self.k_spring < 0:
            raise ValueError("k_spring must be nonnegative")
        self.gas.validate()


def _gas_piston_model(P: GasPistonParams, N: float) -> ThermoModel:
    gas, A = P.gas, P.A
    force = _signal(P.F_ext)

    def lagrangian(q, v, S):
        V = A * q[0]
        _check_volume(V)
        return (0.5 * P.M * v[0] ** 2 - gas_energy(S, V, N, gas)
                - 0.5 * P.k_spring * (q[0] - P.q_rest) ** 2)

    def dL_dq(q, v, S):
        V = A * q[0]
        _check_volume(V)
        return np.array([gas_pressure(S, V, N, gas) * A - P.k_spring * (q[0] - P.q_rest)])

    def dL_dS(q, v, S):
        V = A * q[0]
        _check_volume(V)
        return -gas_temperature(S, V, N, gas)

    return ThermoModel(
        n=1,
        lagrangian=lagrangian,
        dL_dq=dL_dq,
        dL_dv=lambda q, v, S: np.array([P.M * v[0]]),
        dL_dS=dL_dS,
        d2L_dv2=lambda q, v, S: np.array([[P.M]]),
        friction_force=lambda q, v, S: np.array([-P.r * v[0]]),
        external_force=lambda t, q, v, S: np.array([force(t)]),
        d2L_dvdq=lambda q, v, S: np.zeros((1, 1)),
        d2L_dvdS=lambda q, v, S: np.zeros(1),
        name="gas_piston",
        metadata={"params": P, "N": N},
    )


def build_gas_piston(params: GasPistonParams | None = None, *, check: bool = True) -> ThermoModel:
    """Closed one-dof piston; the closed limit of :func:`build_open_piston`."""
    P = GasPistonParams() if params is None else params
    P.validate()
    model = _gas_piston_model(P, P.gas.N0)
    if check:
        verify_derivatives(model, np.array([P.gas.V0 / P.A]), np.array([0.3]), P.gas.S0)
    return model


@dataclass(frozen=True)
class PortParams:
    mu: float
    T: float
    lam: float = 0.0
    sigma: float = 0.0


@dataclass(frozen=True)
class SourceParams:
    T: float
    kappa: float = 0.0


@dataclass(frozen=True)
class OpenPistonParams:
    piston: GasPistonParams = field(default_factory=GasPistonParams)
    ports: tuple = ()
    sources: tuple = ()

    def validate(self):
        self.piston.validate()
        for i, pp in enumerate(self.ports):
            if pp.lam < 0 or pp.sigma < 0:
                raise ValueError(f"ports[{i}]: conductances must be nonnegative")
            if not pp.T > 0:
                raise ValueError(f"ports[{i}].T must be positive")
        for i, sp in enumerate(self.sources):
            if sp.kappa < 0:
                raise ValueError(f"sources[{i}].kappa must be nonnegative")
            if not sp.T > 0:
                raise ValueError(f"sources[{i}].T must be positive")


def default_open_params() -> OpenPistonParams:
    gas = IdealGasParams(N0=0.05)
    mu_ref = gas_chemical_potential(gas.S0, gas.V0, gas.N0, gas)
    return OpenPistonParams(
        piston=GasPistonParams(gas=gas),
        ports=(PortParams(mu=mu_ref + 100.0, T=350.0, lam=1e-6, sigma=1e-4),),
        sources=(SourceParams(T=400.0, kappa=2e-4),),
    )


def build_open_piston(params: OpenPistonParams | None = None, *, check: bool = True) -> OpenModel:
    """One-dof piston whose gas exchanges matter through ports and heat with sources.

    All fluxes follow linear laws in the potential differences.
    """
    P = default_open_params() if params is None else params
    P.validate()
    gas, A = P.piston.gas, P.piston.A

    def temp(q, v, S, N):
        return gas_temperature(S, A * q[0], N, gas)

    def chem(q, v, S, N):
        return gas_chemical_potential(S, A * q[0], N, gas)

    om = OpenModel(
        frozen=lambda N: _gas_piston_model(P.piston, N),
        dL_dN=lambda q, v, S, N: -chem(q, v, S, N),
        ports=tuple(linear_port(chem, temp, pp.mu, pp.T, pp.lam, pp.sigma) for pp in P.ports),
        heat_sources=tuple(linear_source(temp, sp.T, sp.kappa) for sp in P.sources),
        name="open_piston",
        metadata={"params": P},
    )
    if check:
        q0, v0 = np.array([gas.V0 / A]), np.array([0.3])
        verify_derivatives(om.frozen(gas.N0), q0, v0, gas.S0)
        _verify_dL_dN(om, q0, v0, gas.S0, gas.N0)
    return om


def _verify_dL_dN(om: OpenModel, q, v, S, N, h: float = 1e-5, threshold: float = 1e-4) -> float:
    step = h * max(1.0, abs(N))
    fd = (om.frozen(N + step).lagrangian(q, v, S) - om.frozen(N - step).lagrangian(q, v, S)) / (2 * step)
    err = _rel_err(om.dL_dN(q, v, S, N), fd)
    if err > threshold:
        raise DerivativeMismatchError(f"{om.name}: dL_dN disagrees with FD (rel err {err:.3g})")
    return err


# -- LCR circuit -------------------------------------------------------------------

#: Kirchhoff current law rows on branch currents ``(f_L, f_C, f_V, f_R)``
LCR_KCL = np.array([[-1.0, 0.0, 1.0, 0.0], [0.0, -1.0, 1.0, -1.0]])


@dataclass(frozen=True)
class LCRParams:
    L_ind: float = 0.1
    C: float = 0.1
    R: float = 1.0
    V: SignalLike = 0.0
    c_R: float = 1.0
    T0: float = 1.0
    S0: float = 0.0

    def validate(self):
        for key in ("L_ind", "C", "R", "c_R", "T0"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")


def build_lcr(params: LCRParams | None = None, *, check: bool = True) -> ThermoModel:
    """Series LCR loop in branch charges ``(q_L, q_C, q_V, q_R)``.

    Only the inductor carries inertia, so the resistor current is fixed
    algebraically by the capacitor voltage.  The source acts on the ``q_V``
    slot, the resistor friction on the ``q_R`` slot.
    """
    P = LCRParams() if params is None else params
    P.validate()
    volt = _signal(P.V)

    def u_int(S):
        return P.c_R * P.T0 * math.exp((S - P.S0) / P.c_R)

    model = ThermoModel(
        n=4,
        lagrangian=lambda q, v, S: 0.5 * P.L_ind * v[0] ** 2 - q[1] ** 2 / (2 * P.C) - u_int(S),
        dL_dq=lambda q, v, S: np.array([0.0, -q[1] / P.C, 0.0, 0.0]),
        dL_dv=lambda q, v, S: np.array([P.L_ind * v[0], 0.0, 0.0, 0.0]),
        dL_dS=lambda q, v, S: -P.T0 * math.exp((S - P.S0) / P.c_R),
        d2L_dv2=lambda q, v, S: np.diag([P.L_ind, 0.0, 0.0, 0.0]),
        friction_force=lambda q, v, S: np.array([0.0, 0.0, 0.0, -P.R * v[3]]),
        external_force=lambda t, q, v, S: np.array([0.0, 0.0, volt(t), 0.0]),
        m=2,
        constraint_forms=lambda q: LCR_KCL,
        constraint_rate=lambda q, v: np.zeros((2, 4)),
        d2L_dvdq=lambda q, v, S: np.zeros((4, 4)),
        d2L_dvdS=lambda q, v, S: np.zeros(4),
        name="lcr",
        metadata={"params": P},
    )
    if check:
        verify_derivatives(model, np.array([0.0, 0.05, 0.0, 0.0]), np.array([1.0, 0.5, 1.0, 0.5]), P.S0)
    return model


# -- registry ------------------------------------------------------------------------


@dataclass(frozen=True)
class BuiltinSpec:
    """Builder, parameter type and default initial state of a built-in model."""

    name: str
    params_type: type
    build: Callable
    default_params: Callable
    initial: Callable  # params -> dict(q=..., v=..., S=..., [N=...])
    sample: Callable  # (params, rng) -> (q, v, S[, N]) admissible random state
    is_open: bool = False
    description: str = ""


def _piston_initial(P: PistonCylinderParams):
    return {"q": [P.gas.V0 / P.A, 0.6], "v": [0.0, 0.0], "S": P.gas.S0}


def _piston_sample(P: PistonCylinderParams, rng):
    phi = rng.uniform(-1.2, 1.2)
    q = np.array([P.gas.V0 / P.A * rng.uniform(0.7, 1.3), phi])
    vphi = rng.normal()
    v = np.array([-piston_alpha(phi, P.a, P.b) * vphi, vphi])
    return q, v, P.gas.S0 + rng.normal() * 1e-3


def _lcr_initial(P: LCRParams):
    return {"q": [0.0, 0.05, 0.0, 0.0], "v": [1.0, 0.5, 1.0, 0.5], "S": P.S0}


def _lcr_sample(P: LCRParams, rng):
    q = rng.normal(size=4) * 0.1
    a, c = rng.normal(size=2)
    v = np.array([a, a - c, a, c])
    return q, v, P.S0 + rng.normal() * 0.1


def _open_initial(P: OpenPistonParams):
    g = P.piston.gas
    return {"q": [g.V0 / P.piston.A], "v": [0.0], "S": g.S0, "N": g.N0}


def _open_sample(P: OpenPistonParams, rng):
    g = P.piston.gas
    q = np.array([g.V0 / P.piston.A * rng.uniform(0.7, 1.3)])
    return q, rng.normal(size=1), g.S0 + rng.normal() * 1e-3, g.N0 * rng.uniform(0.8, 1.2)


BUILTINS = {
    "piston_cylinder": BuiltinSpec("piston_cylinder", PistonCylinderParams, build_piston_cylinder,
                                   PistonCylinderParams, _piston_initial, _piston_sample,
                                   description="crank-driven piston with ideal gas (n=2, m=1)"),
    "lcr": BuiltinSpec("lcr", LCRParams, build_lcr, LCRParams, _lcr_initial, _lcr_sample,
                       description="LCR loop with resistor heating (n=4, m=2)"),
    "open_piston": BuiltinSpec("open_piston", OpenPistonParams, build_open_piston, default_open_params,
                               _open_initial, _open_sample, is_open=True,
                               description="gas piston with matter ports and heat sources (n=1)"),
}


def get_builtin(name: str) -> BuiltinSpec:
    try:
        return BUILTINS[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; available: {sorted(BUILTINS)}") from None


def with_params(params, **changes):
    """``dataclasses.replace`` re-exported for configs and tests."""
    return replace(params, **changes)


def param_fields(cls) -> list:
    return [f.name for f in fields(cls)]
