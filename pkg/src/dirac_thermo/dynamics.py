"""Closed-system evolution: KKT assembly, time stepping and Dirac diagnostics.

The mechanical equations are index-reduced: ``ω(q) v = 0`` is differentiated
once and enforced together with the momentum balance in a saddle-point solve

    [[M, -ωᵀ], [ω, 0]] (v̇, μ) = (f, -ω̇ v).

Ṡ does not depend on v̇ and is evaluated first, so the ``∂²L/∂v∂S Ṡ`` part of
ṗ is folded into ``f`` exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import linalg
from .errors import (
    DiracThermoError,
    KKTSingularError,
    NewtonConvergenceError,
)
from .model import (
    ConstraintFrame,
    PontryaginPoint,
    ThermoModel,
    _fd_jacobian,
    applied_force,
    complete_velocity,
    constraint_frame,
    constraint_matrix,
    entropy_rate,
    inverse_legendre,
    partial_legendre,
    temperature,
    variational_constraint,
)

__all__ = [
    "entropy_rate", "GeneralizedEnergy", "StepReport", "Trajectory", "TangentPoint",
    "CotangentPoint", "assemble_kkt", "solve_kkt", "step", "simulate",
    "dirac_residual", "dirac_differential", "cotangent_residual",
    "energy_balance_report", "pontryagin_dirac", "cotangent_dirac",
    "structure_residual", "trajectory_residuals", "energy",
]

KKT_COND_MAX = 1e12
MAX_HALVINGS = 3
SCHEMES = ("rk4", "implicit_midpoint")
#: failures that trigger step halving and, if persistent, a partial trajectory
STEP_ERRORS = (DiracThermoError, ArithmeticError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class TangentPoint:
    q: np.ndarray
    S: float
    v: np.ndarray
    W: float


@dataclass(frozen=True)
class CotangentPoint:
    q: np.ndarray
    S: float
    p: np.ndarray
    lam: float = 0.0


@dataclass(frozen=True)
class GeneralizedEnergy:
    """``ℰ = <p, v> + Λ W − L(q, v, S)`` on the Pontryagin bundle."""

    model: ThermoModel

    def __call__(self, x: PontryaginPoint) -> float:
        return float(x.p @ x.v + x.lam * x.W - self.model.lagrangian(x.q, x.v, x.S))

    def differential(self, x: PontryaginPoint) -> np.ndarray:
        """``dℰ`` ordered as ``(q, S, v, W, p, Λ)``."""
        md = self.model
        return np.concatenate([
            -np.asarray(md.dL_dq(x.q, x.v, x.S), dtype=float),
            [-float(md.dL_dS(x.q, x.v, x.S))],
            x.p - np.asarray(md.dL_dv(x.q, x.v, x.S), dtype=float),
            [x.lam],
            x.v,
            [x.W],
        ])


def energy(model: ThermoModel, q, v, S) -> float:
    """Physical energy ``<∂L/∂v, v> − L``."""
    return float(partial_legendre(model, q, v, S) @ v - model.lagrangian(q, v, S))


@dataclass
class StepReport:
    newton_iters: int = 0
    kkt_condition_estimate: float = 0.0
    accepted: bool = True
    substeps: int = 1


# -- KKT -------------------------------------------------------------------


def _kkt_system(model: ThermoModel, t, q, v, S, Sdot, frame: ConstraintFrame):
    n, m = model.n, model.m
    Z = frame.massless
    M = frame.M + Z @ Z.T if Z.shape[1] else frame.M
    K = np.zeros((n + m, n + m))
    K[:n, :n] = M
    K[:n, n:] = -frame.omega.T
    K[n:, :n] = frame.omega
    rhs = np.empty(n + m)
    rhs[:n] = applied_force(model, t, q, v, S, Sdot)
    rhs[n:] = -model.omega_rate(q, v) @ v
    return K, rhs


def assemble_kkt(model: ThermoModel, q, v, S, *, t: float = 0.0, Sdot: Optional[float] = None):
    """Saddle-point matrix and right-hand side for ``(v̇, μ)``.

    Massless admissible directions are regularized by adding ``Z Zᵀ`` to the
    mass block, which selects the solution with no acceleration along them.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    Sdot = entropy_rate(model, q, v, S) if Sdot is None else Sdot
    return _kkt_system(model, t, q, v, S, Sdot, constraint_frame(model, q, v, S))


def _solve(K, rhs):
    cond = float(np.linalg.cond(K))
    if not cond < KKT_COND_MAX:
        raise KKTSingularError(f"KKT condition estimate {cond:.3g} exceeds {KKT_COND_MAX:g}")
    return np.linalg.solve(K, rhs), cond


def solve_kkt(model: ThermoModel, q, v, S, *, t: float = 0.0, Sdot: Optional[float] = None):
    """Return ``(v̇, μ, condition_estimate)``."""
    K, rhs = assemble_kkt(model, q, v, S, t=t, Sdot=Sdot)
    x, cond = _solve(K, rhs)
    return x[:model.n], x[model.n:], cond


# -- integrated systems ----------------------------------------------------


class _ClosedSystem:
    """Adapter giving the integrator a uniform view of closed and open models.

    The state vector is ``[q, v, S, extras, work]``; ``extras`` are further
    thermodynamic states (matter content for open systems) and ``work`` holds
    running integrals of the external powers.
    """

    n_extra = 0
    power_names = ("P_W",)

    def __init__(self, model: ThermoModel):
        self.model = model
        self.n = model.n
        self.m = model.m
        # last Jacobian of the massless force balance, reused across stages
        self.jac = None

    def model_at(self, extras) -> ThermoModel:
        return self.model

    def thermal_rates(self, model, t, q, v, S, extras):
        return entropy_rate(model, q, v, S), np.zeros(0)

    def powers(self, model, t, q, v, S, extras):
        return np.array([float(model.F_ext(t, q, v, S) @ v)])

    def entropy_source(self, model, t, q, v, S, extras) -> float:
        return 0.0

    @property
    def size(self):
        return 2 * self.n + 1 + self.n_extra + len(self.power_names)

    def unpack(self, y):
        n, k = self.n, self.n_extra
        return y[:n], y[n:2 * n], y[2 * n], y[2 * n + 1:2 * n + 1 + k], y[2 * n + 1 + k:]

    def sdot_fn(self, model, t, extras):
        return lambda q, v, S: self.thermal_rates(model, t, q, v, S, extras)[0]


def _evaluate(system: _ClosedSystem, t, y):
    """Complete the velocity, then return ``(y_completed, ẏ, μ, cond)``."""
    q, v, S, x, _ = system.unpack(y)
    model = system.model_at(x)
    frame = constraint_frame(model, q, v, S)
    if frame.degenerate:
        v, _, system.jac = complete_velocity(model, t, q, v, S, sdot_fn=system.sdot_fn(model, t, x),
                                             frame=frame, jacobian=system.jac)
        frame = replace(frame, M=np.asarray(model.d2L_dv2(q, v, S), dtype=float).reshape(system.n, system.n))
    Sdot, xdot = system.thermal_rates(model, t, q, v, S, x)
    K, rhs = _kkt_system(model, t, q, v, S, Sdot, frame)
    sol, cond = _solve(K, rhs)
    P = system.powers(model, t, q, v, S, x)
    ydot = np.concatenate([v, sol[:system.n], [Sdot], xdot, P])
    yc = y.copy()
    yc[system.n:2 * system.n] = v
    return yc, ydot, sol[system.n:], cond


def _finalize(system: _ClosedSystem, t, y, projection: bool):
    """Re-impose ``ω v = 0`` (metric projection) and the massless force balance."""
    q, v, S, x, _ = system.unpack(y)
    model = system.model_at(x)
    frame = constraint_frame(model, q, v, S)
    if projection and system.m:
        Z = frame.massless
        M = frame.M + Z @ Z.T if Z.shape[1] else frame.M
        w = frame.omega
        Minv_wT = np.linalg.solve(M, w.T)
        v = v - Minv_wT @ np.linalg.solve(w @ Minv_wT, w @ v)
    if frame.degenerate:
        v, _, system.jac = complete_velocity(model, t, q, v, S, sdot_fn=system.sdot_fn(model, t, x),
                                             frame=frame, jacobian=system.jac)
    out = y.copy()
    out[system.n:2 * system.n] = v
    return out


def _rk4(system, t, y, h):
    _, k1, _, c1 = _evaluate(system, t, y)
    _, k2, _, c2 = _evaluate(system, t + h / 2, y + (h / 2) * k1)
    _, k3, _, c3 = _evaluate(system, t + h / 2, y + (h / 2) * k2)
    _, k4, _, c4 = _evaluate(system, t + h, y + h * k3)
    y1 = y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
    return y1, StepReport(0, max(c1, c2, c3, c4))


def _midpoint(system, t, y, h, tol=1e-12, max_iter=30):
    """Implicit midpoint on the multiplier form; Newton with a FD Jacobian."""
    n, m, k = system.n, system.m, system.n_extra
    q0, v0, S0, x0, w0 = system.unpack(y)
    m0 = system.model_at(x0)
    p0 = partial_legendre(m0, q0, v0, S0)
    tm = t + h / 2

    def split(u):
        return u[:n], u[n:2 * n], u[2 * n], u[2 * n + 1:2 * n + 1 + k], u[2 * n + 1 + k:]

    def residual(u):
        q1, v1, S1, x1, mu = split(u)
        qm, vm, Sm, xm = (q0 + q1) / 2, (v0 + v1) / 2, (S0 + S1) / 2, (x0 + x1) / 2
        model = system.model_at(xm)
        m1 = system.model_at(x1)
        Sdot, xdot = system.thermal_rates(model, tm, qm, vm, Sm, xm)
        force = (np.asarray(model.dL_dq(qm, vm, Sm), dtype=float)
                 + model.F_fr(qm, vm, Sm) + model.F_ext(tm, qm, vm, Sm))
        return np.concatenate([
            q1 - q0 - h * vm,
            partial_legendre(m1, q1, v1, S1) - p0 - h * (force + model.omega(qm).T @ mu),
            m1.omega(q1) @ v1,
            [S1 - S0 - h * Sdot],
            x1 - x0 - h * xdot,
        ])

    _, ydot, mu0, _ = _evaluate(system, t, y)
    q_, v_, S_, x_, _ = system.unpack(y + h * ydot)
    u = np.concatenate([q_, v_, [S_], x_, mu0])
    scale = 1.0 + float(np.max(np.abs(u)))
    cond = 0.0
    for it in range(1, max_iter + 1):
        r = residual(u)
        J = _fd_jacobian(residual, u)
        cond = float(np.linalg.cond(J))
        if not cond < KKT_COND_MAX:
            raise KKTSingularError(f"midpoint Jacobian condition {cond:.3g}")
        du = np.linalg.solve(J, -r)
        u = u + du
        if np.max(np.abs(du)) <= tol * scale:
            break
    else:
        raise NewtonConvergenceError(f"implicit midpoint did not converge in {max_iter} iterations")
    q1, v1, S1, x1, _ = split(u)
    qm, vm, Sm, xm = (q0 + q1) / 2, (v0 + v1) / 2, (S0 + S1) / 2, (x0 + x1) / 2
    P = system.powers(system.model_at(xm), tm, qm, vm, Sm, xm)
    return np.concatenate([q1, v1, [S1], x1, w0 + h * P]), StepReport(it, cond)


def _advance(system, t, y, h, scheme, projection):
    """One step with up to ``MAX_HALVINGS`` halvings on failure."""
    stepper = _rk4 if scheme == "rk4" else _midpoint
    last = None
    for level in range(MAX_HALVINGS + 1):
        parts = 2 ** level
        hs = h / parts
        try:
            yy = y
            iters, cond = 0, 0.0
            for j in range(parts):
                # overflow shows up as a non-finite state and is handled below
                with np.errstate(over="ignore", invalid="ignore"):
                    yy, rep = stepper(system, t + j * hs, yy, hs)
                if not np.all(np.isfinite(yy)):
                    raise FloatingPointError("non-finite state")
                yy = _finalize(system, t + (j + 1) * hs, yy, projection)
                iters += rep.newton_iters
                cond = max(cond, rep.kkt_condition_estimate)
            return yy, StepReport(iters, cond, True, parts)
        except STEP_ERRORS as exc:
            last = exc
    raise last


# -- trajectories ------------------------------------------------------------


@dataclass
class Trajectory:
    """Time series of states, multipliers and diagnostics.

    ``work`` holds running integrals of the external powers named in
    ``power_names``; ``extra`` holds open-system columns.
    """

    n: int
    m: int
    times: np.ndarray
    q: np.ndarray
    v: np.ndarray
    S: np.ndarray
    p: np.ndarray
    mu: np.ndarray
    energy: np.ndarray
    Sdot: np.ndarray
    constraint_residual: np.ndarray
    dirac_residual: np.ndarray
    power_ext: np.ndarray
    work: np.ndarray
    vdot: np.ndarray = None
    power_names: tuple = ("P_W",)
    reports: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    failed: bool = False
    message: str = ""

    @property
    def W(self) -> np.ndarray:
        return self.Sdot

    @property
    def states(self) -> list:
        return [PontryaginPoint(self.q[k], float(self.S[k]), self.v[k], float(self.Sdot[k]),
                                self.p[k], 0.0) for k in range(len(self.times))]

    @property
    def entropy(self) -> np.ndarray:
        return self.S

    def columns(self):
        n, m = self.n, self.m
        names = (["t"] + [f"q_{i + 1}" for i in range(n)] + [f"v_{i + 1}" for i in range(n)]
                 + ["S"] + [f"p_{i + 1}" for i in range(n)] + [f"mu_{i + 1}" for i in range(m)]
                 + ["E", "Sdot", "dirac_residual", "power_ext"])
        data = [self.times[:, None], self.q, self.v, self.S[:, None], self.p, self.mu,
                self.energy[:, None], self.Sdot[:, None], self.dirac_residual[:, None],
                self.power_ext[:, None]]
        for key, col in self.extra.items():
            names.append(key)
            data.append(np.asarray(col)[:, None])
        return names, np.hstack(data)

    def to_csv(self, path) -> None:
        names, table = self.columns()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for row in table:
                writer.writerow([f"{x:.17g}" for x in row])


def _diagnostics(system: _ClosedSystem, t, y, ydot, mu):
    q, v, S, x, _ = system.unpack(y)
    model = system.model_at(x)
    n = system.n
    Sdot = ydot[2 * n]
    p = partial_legendre(model, q, v, S)
    vdot = ydot[n:2 * n]
    pdot = model.d2L_dv2(q, v, S) @ vdot + model.momentum_drift(q, v, S, Sdot)
    xp = PontryaginPoint(q, S, v, Sdot, p, 0.0)
    xd = PontryaginPoint(v, Sdot, vdot, 0.0, pdot, 0.0)
    return {
        "p": p,
        "vdot": vdot,
        "energy": energy(model, q, v, S),
        "Sdot": Sdot,
        "constraint": model.omega(q) @ v,
        "dirac": dirac_residual(model, xp, xd, mu, t=t,
                                entropy_source=system.entropy_source(model, t, q, v, S, x)),
        "power": float(model.F_ext(t, q, v, S) @ v),
    }


def _run(system: _ClosedSystem, y0, t_span, dt, scheme="rk4", projection=True, extra_fn=None):
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    t0, t1 = float(t_span[0]), float(t_span[1])
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t1 > t0:
        raise ValueError("t_span must be increasing")
    nsteps = max(1, math.ceil((t1 - t0) / dt - 1e-9))
    n, m = system.n, system.m

    y = _finalize(system, t0, np.asarray(y0, dtype=float), projection=False)
    rows, reports = [], []
    failed, message = False, ""
    t = t0
    for k in range(nsteps + 1):
        try:
            y, ydot, mu, _ = _evaluate(system, t, y)
        except STEP_ERRORS as exc:
            failed, message = True, f"t={t:.17g}: {exc}"
            break
        row = _diagnostics(system, t, y, ydot, mu)
        row.update(t=t, y=y.copy(), mu=mu)
        if extra_fn is not None:
            row.update(extra_fn(system, t, y, ydot))
        rows.append(row)
        if k == nsteps:
            break
        t_next = t0 + (k + 1) * dt if k + 1 < nsteps else t1
        try:
            y, rep = _advance(system, t, y, t_next - t, scheme, projection)
        except STEP_ERRORS as exc:
            failed, message = True, f"step from t={t:.17g} failed: {exc}"
            reports.append(StepReport(accepted=False))
            break
        reports.append(rep)
        t = t_next

    ys = np.array([r["y"] for r in rows]).reshape(len(rows), system.size)
    kw = 2 * n + 1 + system.n_extra
    extra = {}
    if extra_fn is not None:
        for key in rows[0] if rows else []:
            if key not in ("p", "vdot", "energy", "Sdot", "constraint", "dirac", "power", "t", "y", "mu"):
                extra[key] = np.array([r[key] for r in rows])
    return Trajectory(
        n=n, m=m,
        times=np.array([r["t"] for r in rows]),
        q=ys[:, :n], v=ys[:, n:2 * n], S=ys[:, 2 * n],
        p=np.array([r["p"] for r in rows]).reshape(len(rows), n),
        mu=np.array([r["mu"] for r in rows]).reshape(len(rows), m),
        energy=np.array([r["energy"] for r in rows]),
        Sdot=np.array([r["Sdot"] for r in rows]),
        constraint_residual=np.array([r["constraint"] for r in rows]).reshape(len(rows), m),
        dirac_residual=np.array([r["dirac"] for r in rows]),
        power_ext=np.array([r["power"] for r in rows]),
        work=ys[:, kw:],
        vdot=np.array([r["vdot"] for r in rows]).reshape(len(rows), n),
        power_names=system.power_names,
        reports=reports, extra=extra, failed=failed, message=message,
    )


def step(model: ThermoModel, state: PontryaginPoint, dt: float, *, t: float = 0.0,
         scheme: str = "rk4", projection: bool = True):
    """Advance ``state`` by ``dt``; returns ``(state, μ, StepReport)``."""
    system = _ClosedSystem(model)
    y = np.concatenate([state.q, state.v, [state.S], [0.0]])
    y1, rep = _advance(system, t, y, dt, scheme, projection)
    y1, ydot, mu, _ = _evaluate(system, t + dt, y1)
    q, v, S, _, _ = system.unpack(y1)
    new = PontryaginPoint(q.copy(), float(S), v.copy(), float(ydot[2 * model.n]),
                          partial_legendre(model, q, v, S), 0.0)
    return new, mu, rep


def simulate(model: ThermoModel, initial, t_span, dt: float, *, scheme: str = "rk4",
             projection: bool = True) -> Trajectory:
    """Integrate from ``initial = (q, v, S)``.

    On an unrecoverable step failure the trajectory up to the last accepted
    step is returned with ``failed`` set.
    """
    q0, v0, S0 = initial
    y0 = np.concatenate([np.asarray(q0, dtype=float).ravel(),
                         np.asarray(v0, dtype=float).ravel(), [float(S0)], [0.0]])
    return _run(_ClosedSystem(model), y0, t_span, dt, scheme, projection)


# -- Dirac diagnostics -------------------------------------------------------


def dirac_residual(model: ThermoModel, state: PontryaginPoint, state_dot: PontryaginPoint,
                   multipliers=None, *, t: float = 0.0, entropy_source: float = 0.0) -> float:
    """Max violation of the local Dirac conditions at ``state``.

    ``state_dot`` carries the rates ``(q̇, Ṡ, v̇, Ẇ, ṗ, Λ̇)``.  The force
    condition is tested against a basis of ``ker ω``; when multipliers are
    given it is tested against ``ωᵀμ`` componentwise instead.
    ``entropy_source`` is added to the right-hand side of the thermal
    condition ``∂L/∂S Ṡ = <F^fr, q̇>``; it is nonzero only for open systems.
    """
    x, xd = state, state_dot
    q, v, S = x.q, x.v, x.S
    dLdS = float(model.dL_dS(q, v, S))
    alpha = -np.asarray(model.dL_dq(q, v, S), dtype=float) - model.F_ext(t, q, v, S)
    script_t = -dLdS
    fr = model.F_fr(q, v, S)
    w = constraint_matrix(model, q)
    force = dLdS * (xd.p + alpha) + (xd.lam + script_t) * fr
    if multipliers is not None and model.m:
        g1 = force - dLdS * (w.T @ np.asarray(multipliers, dtype=float))
    else:
        g1 = linalg.null_space(w, ncols=model.n).T @ force
    groups = [
        g1,
        [dLdS * xd.S - float(fr @ xd.q) - entropy_source],
        x.p - np.asarray(model.dL_dv(q, v, S), dtype=float),
        [x.lam],
        v - xd.q,
        w @ xd.q,
        [x.W - xd.S],
    ]
    return max((float(np.max(np.abs(g), initial=0.0)) for g in groups), default=0.0)


def dirac_differential(model: ThermoModel, q, S, v, W):
    """``(base, covector)`` with base ``(q, S, ∂L/∂v, 0)`` and covector
    ``(−∂L/∂q, −∂L/∂S, v, W)``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    base = np.concatenate([q, [S], partial_legendre(model, q, v, S), [0.0]])
    cov = np.concatenate([-np.asarray(model.dL_dq(q, v, S), dtype=float),
                          [-float(model.dL_dS(q, v, S))], v, [W]])
    return base, cov


def cotangent_residual(model: ThermoModel, z: CotangentPoint, z_dot: CotangentPoint,
                       y: TangentPoint, *, t: float = 0.0) -> float:
    """Max violation of the cotangent-bundle form of the equations.

    Temperature and friction are evaluated at the velocity recovered from
    ``(q, p, S)`` by the inverse Legendre transform.
    """
    q, S, p = z.q, z.S, z.p
    vl = inverse_legendre(model, q, p, S, v0=y.v, t=t)
    T = -float(model.dL_dS(q, vl, S))
    fr = model.F_fr(q, vl, S)
    w = constraint_matrix(model, q)
    B = linalg.null_space(w, ncols=model.n)
    dLdq = np.asarray(model.dL_dq(q, vl, S), dtype=float)
    force = -T * (z_dot.p - dLdq - model.F_ext(t, q, vl, S)) + (z_dot.lam + T) * fr
    groups = [
        B.T @ force,
        [T * z_dot.S + float(fr @ z_dot.q)],
        z_dot.q - y.v,
        w @ z_dot.q,
        [y.W - z_dot.S],
        p - np.asarray(model.dL_dv(q, y.v, S), dtype=float),
        [z.lam],
    ]
    return max(float(np.max(np.abs(g), initial=0.0)) for g in groups)


def _split_form(k: int, extra: int = 0) -> linalg.PresymplecticForm:
    """``dq ∧ dp + dS ∧ dΛ`` on coordinates ``(q, S, [extra slots], p, Λ)``."""
    N = 2 * k + extra
    mat = np.zeros((N, N))
    for i in range(k):
        mat[i, k + extra + i] = 1.0
        mat[k + extra + i, i] = -1.0
    return linalg.PresymplecticForm(mat, atol=0.0)


def pontryagin_dirac(model: ThermoModel, x: PontryaginPoint) -> linalg.LinearDiracDescriptor:
    """Dirac structure induced on the Pontryagin bundle at ``x``.

    Coordinates ``(q, S, v, W, p, Λ)``; the distribution is the lift of
    ``C_V`` with the velocity and momentum slots unconstrained.
    """
    k = model.n + 1
    cv = variational_constraint(model, x.q, x.v, x.S).null_space.basis
    basis = np.zeros((3 * k, cv.shape[1] + 2 * k))
    basis[:k, :cv.shape[1]] = cv
    basis[k:, cv.shape[1]:] = np.eye(2 * k)
    delta = linalg.Subspace(3 * k, basis)
    return linalg.induced_dirac(delta, _split_form(k, extra=k))


def cotangent_dirac(model: ThermoModel, q, S, v) -> linalg.LinearDiracDescriptor:
    """Dirac structure induced on the cotangent bundle, coordinates ``(q, S, p, Λ)``."""
    k = model.n + 1
    cv = variational_constraint(model, q, v, S).null_space.basis
    basis = np.zeros((2 * k, cv.shape[1] + k))
    basis[:k, :cv.shape[1]] = cv
    basis[k:, cv.shape[1]:] = np.eye(k)
    return linalg.induced_dirac(linalg.Subspace(2 * k, basis), _split_form(k))


def structure_residual(model: ThermoModel, x: PontryaginPoint, x_dot: PontryaginPoint,
                       *, t: float = 0.0) -> float:
    """Distance of ``(ẋ, dℰ − ℱ^ext)`` from the induced Pontryagin Dirac structure.

    Independent of :func:`dirac_residual`: it uses only the linear algebra of
    the induced structure, not the hand-expanded conditions.
    """
    d = pontryagin_dirac(model, x)
    cov = GeneralizedEnergy(model).differential(x)
    cov[:model.n] -= model.F_ext(t, x.q, x.v, x.S)
    return linalg.membership_residual(d, np.concatenate([x_dot.as_vector(), cov]))


def trajectory_residuals(model: ThermoModel, traj: Trajectory) -> dict:
    """Cotangent-form and structure residuals at every stored point of a closed run."""
    cot, struct = [], []
    for k, t in enumerate(traj.times):
        q, v, S, Sdot = traj.q[k], traj.v[k], float(traj.S[k]), float(traj.Sdot[k])
        pdot = model.d2L_dv2(q, v, S) @ traj.vdot[k] + model.momentum_drift(q, v, S, Sdot)
        cot.append(cotangent_residual(model, CotangentPoint(q, S, traj.p[k]),
                                      CotangentPoint(v, Sdot, pdot), TangentPoint(q, S, v, Sdot), t=t))
        x = PontryaginPoint(q, S, v, Sdot, traj.p[k], 0.0)
        xd = PontryaginPoint(v, Sdot, traj.vdot[k], 0.0, pdot, 0.0)
        struct.append(structure_residual(model, x, xd, t=t))
    return {"cotangent": np.array(cot), "structure": np.array(struct)}


def energy_balance_report(model: ThermoModel, traj: Trajectory) -> dict:
    """Per-interval ``|ΔE − ∫ P dt|`` with the work integral carried by the integrator."""
    dE = np.diff(traj.energy)
    dW = np.diff(traj.work.sum(axis=1)) if traj.work.size else np.zeros_like(dE)
    series = np.abs(dE - dW)
    return {"max_defect": float(np.max(series, initial=0.0)), "series": series}
