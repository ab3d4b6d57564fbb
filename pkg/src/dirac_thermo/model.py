"""Simple adiabatically closed thermodynamic systems with mechanical constraints.

A :class:`ThermoModel` bundles a Lagrangian ``L(q, v, S)`` with its analytic
derivatives, a friction force, an external force and the constraint one-forms
``ω^r(q)`` (rows of an ``m × n`` matrix).  All evaluators must be pure.

Lagrangians whose velocity Hessian is only positive *semi*definite are
accepted.  Velocity directions that are admissible (``ω v = 0``) but carry no
inertia are then fixed algebraically by the force balance along them; this is
how the charge formulation of an RC branch works.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import linalg
from .errors import (
    ConstraintRankError,
    DerivativeMismatchError,
    LegendreInversionError,
    ModelDomainError,
)

Array = np.ndarray

#: finite-difference step for the constraint-form time derivative fallback
OMEGA_RATE_STEP = 1e-6
#: relative eigenvalue threshold below which an admissible direction is massless
MASSLESS_RTOL = 1e-10


@dataclass(frozen=True)
class ThermoModel:
    """Lagrangian, forces and constraints of a simple closed system.

    Evaluator signatures (``q``, ``v`` length-``n`` arrays, ``S`` float):

    * ``lagrangian(q, v, S) -> float``
    * ``dL_dq``, ``dL_dv`` ``(q, v, S) -> (n,)``; ``dL_dS(q, v, S) -> float``
    * ``d2L_dv2(q, v, S) -> (n, n)``
    * ``friction_force(q, v, S) -> (n,)``
    * ``external_force(t, q, v, S) -> (n,)`` (zero if omitted)
    * ``constraint_forms(q) -> (m, n)``; ``constraint_rate(q, v) -> (m, n)`` is
      ``d/dt ω(q(t))`` and is finite-differenced along ``v`` if omitted
    * ``d2L_dvdq(q, v, S) -> (n, n)`` with entry ``[i, j] = ∂²L/∂v_i∂q_j`` and
      ``d2L_dvdS(q, v, S) -> (n,)``; both finite-differenced if omitted
    """

    n: int
    lagrangian: Callable
    dL_dq: Callable
    dL_dv: Callable
    dL_dS: Callable
    d2L_dv2: Callable
    friction_force: Callable
    external_force: Optional[Callable] = None
    m: int = 0
    constraint_forms: Optional[Callable] = None
    constraint_rate: Optional[Callable] = None
    d2L_dvdq: Optional[Callable] = None
    d2L_dvdS: Optional[Callable] = None
    T_min: float = 1e-6
    name: str = "custom"
    metadata: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.n <= 0:
            raise ValueError("n must be positive")
        if self.m < 0:
            raise ValueError("m must be nonnegative")
        if self.m > 0:
            if self.constraint_forms is None:
                raise ValueError("m > 0 requires constraint_forms")
            if self.m >= self.n:
                raise ValueError(f"need m < n, got m={self.m}, n={self.n}")

    # -- evaluation helpers -------------------------------------------------

    def omega(self, q) -> Array:
        if self.m == 0:
            return np.zeros((0, self.n))
        w = np.asarray(self.constraint_forms(q), dtype=float).reshape(self.m, self.n)
        return w

    def omega_rate(self, q, v) -> Array:
        if self.m == 0:
            return np.zeros((0, self.n))
        if self.constraint_rate is not None:
            return np.asarray(self.constraint_rate(q, v), dtype=float).reshape(self.m, self.n)
        h = OMEGA_RATE_STEP
        return (self.omega(q + h * v) - self.omega(q - h * v)) / (2 * h)

    def F_ext(self, t, q, v, S) -> Array:
        if self.external_force is None:
            return np.zeros(self.n)
        return np.asarray(self.external_force(t, q, v, S), dtype=float)

    def F_fr(self, q, v, S) -> Array:
        return np.asarray(self.friction_force(q, v, S), dtype=float)

    def momentum_drift(self, q, v, S, Sdot) -> Array:
        """``(∂p/∂q) v + (∂p/∂S) Ṡ``: the part of ``ṗ`` not involving ``v̇``."""
        if self.d2L_dvdq is not None and self.d2L_dvdS is not None:
            return (np.asarray(self.d2L_dvdq(q, v, S)) @ v
                    + np.asarray(self.d2L_dvdS(q, v, S)) * Sdot)
        h = 1e-6 / max(1.0, float(np.max(np.abs(v), initial=0.0)), abs(Sdot))
        plus = np.asarray(self.dL_dv(q + h * v, v, S + h * Sdot), dtype=float)
        minus = np.asarray(self.dL_dv(q - h * v, v, S - h * Sdot), dtype=float)
        return (plus - minus) / (2 * h)


@dataclass(frozen=True)
class PontryaginPoint:
    """``(q, S, v, W, p, Λ)``; along solutions ``p = ∂L/∂v``, ``Λ = 0``, ``W = Ṡ``."""

    q: Array
    S: float
    v: Array
    W: float
    p: Array
    lam: float = 0.0

    def as_vector(self) -> Array:
        return np.concatenate([self.q, [self.S], self.v, [self.W], self.p, [self.lam]])

    @classmethod
    def from_vector(cls, x, n: int) -> "PontryaginPoint":
        x = np.asarray(x, dtype=float)
        return cls(x[:n], float(x[n]), x[n + 1:2 * n + 1], float(x[2 * n + 1]),
                   x[2 * n + 2:3 * n + 2], float(x[3 * n + 2]))


@dataclass(frozen=True)
class VariationalConstraintMatrix:
    """Rows acting on ``(δq, δS)``; the null space is ``C_V(q, S, v, W)``."""

    rows: Array

    @property
    def null_space(self) -> linalg.Subspace:
        k = self.rows.shape[1]
        return linalg.Subspace(k, linalg.null_space(self.rows, ncols=k))


@dataclass(frozen=True)
class ConstraintFrame:
    """Local splitting of velocity space at a state.

    ``admissible`` spans ``ker ω(q)``; ``massless`` spans the admissible
    directions on which the velocity Hessian vanishes.
    """

    M: Array
    omega: Array
    admissible: Array
    massless: Array

    @property
    def degenerate(self) -> bool:
        return self.massless.shape[1] > 0


@dataclass
class GradientReport:
    max_rel_err: dict

    @property
    def worst(self) -> float:
        return max(self.max_rel_err.values(), default=0.0)

    def passed(self, threshold: float) -> bool:
        return self.worst <= threshold


def temperature(model: ThermoModel, q, v, S) -> float:
    """``T = −∂L/∂S``, checked against the floor ``T_min``."""
    T = -float(model.dL_dS(q, v, S))
    if not T > model.T_min:
        raise ModelDomainError(f"temperature {T:.6g} not above floor {model.T_min:g}")
    return T


def entropy_rate(model: ThermoModel, q, v, S) -> float:
    """Ṡ from ``∂L/∂S Ṡ = <F^fr, v>``."""
    temperature(model, q, v, S)
    return float(model.F_fr(q, v, S) @ v) / float(model.dL_dS(q, v, S))


def constraint_matrix(model: ThermoModel, q) -> Array:
    w = model.omega(q)
    if model.m and linalg.rank(w) < model.m:
        raise ConstraintRankError(f"constraint forms have rank {linalg.rank(w)} < m={model.m}")
    return w


def constraint_frame(model: ThermoModel, q, v, S) -> ConstraintFrame:
    M = np.asarray(model.d2L_dv2(q, v, S), dtype=float).reshape(model.n, model.n)
    w = model.omega(q)
    if model.m:
        _, s, vh = np.linalg.svd(w)
        r = int(np.sum(s > linalg.RANK_RTOL * s[0])) if s[0] > 0 else 0
        if r < model.m:
            raise ConstraintRankError(f"constraint forms have rank {r} < m={model.m}")
        B = vh[r:].T
    else:
        B = np.eye(model.n)
    Mr = B.T @ M @ B
    lam, vecs = np.linalg.eigh(0.5 * (Mr + Mr.T))
    scale = max(float(np.max(np.abs(M), initial=0.0)), float(np.max(lam, initial=0.0)))
    light = lam <= MASSLESS_RTOL * scale if scale > 0 else np.ones_like(lam, dtype=bool)
    return ConstraintFrame(M, w, B, B @ vecs[:, light])


def applied_force(model: ThermoModel, t, q, v, S, Sdot) -> Array:
    """Right-hand side ``∂L/∂q + F^fr + F^ext − (∂p/∂q)v − (∂p/∂S)Ṡ``."""
    return (np.asarray(model.dL_dq(q, v, S), dtype=float)
            + model.F_fr(q, v, S)
            + model.F_ext(t, q, v, S)
            - model.momentum_drift(q, v, S, Sdot))


def _fd_jacobian(fun, x, h=1e-7) -> Array:
    x = np.asarray(x, dtype=float)
    f0 = np.atleast_1d(fun(x))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        step = h * max(1.0, abs(x[j]))
        e = np.zeros_like(x)
        e[j] = step
        J[:, j] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * step)
    return J


def complete_velocity(model: ThermoModel, t, q, v, S, *, sdot_fn=None,
                      frame: ConstraintFrame | None = None, jacobian=None,
                      tol: float = 1e-13, max_iter: int = 30):
    """Move ``v`` along massless admissible directions until the force balance
    along those directions holds.

    ``jacobian`` may carry the balance Jacobian from a nearby state; it is
    used for chord iterations and refreshed every third iteration.  Returns
    ``(v, iterations, jacobian)``; a no-op for models with no massless
    directions.
    """
    frame = constraint_frame(model, q, v, S) if frame is None else frame
    if not frame.degenerate:
        return v, 0, None
    Z = frame.massless
    sdot_fn = (lambda q_, v_, S_: entropy_rate(model, q_, v_, S_)) if sdot_fn is None else sdot_fn

    def residual(c):
        vc = v + Z @ c
        return Z.T @ applied_force(model, t, q, vc, S, sdot_fn(q, vc, S))

    c = np.zeros(Z.shape[1])
    vscale = 1.0 + float(np.linalg.norm(v))
    r = residual(c)
    J = jacobian if jacobian is not None and jacobian.shape == (Z.shape[1],) * 2 else None
    for it in range(1, max_iter + 1):
        # chord iteration: the balance is linear for the built-in circuits,
        # so one Jacobian usually serves until convergence
        if J is None or it % 3 == 0:
            J = _fd_jacobian(residual, c)
        try:
            dc = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError as exc:
            raise LegendreInversionError("massless force balance is singular") from exc
        c = c + dc
        if np.linalg.norm(dc) <= tol * vscale:
            return v + Z @ c, it, J
        r = residual(c)
    raise LegendreInversionError("massless velocity solve did not converge")


def variational_constraint(model: ThermoModel, q, v, S) -> VariationalConstraintMatrix:
    """Rows ``[ω^r(q) | 0]`` and ``[−F^fr | ∂L/∂S]``."""
    temperature(model, q, v, S)
    w = constraint_matrix(model, q)
    rows = np.zeros((model.m + 1, model.n + 1))
    rows[:model.m, :model.n] = w
    rows[model.m, :model.n] = -model.F_fr(q, v, S)
    rows[model.m, model.n] = float(model.dL_dS(q, v, S))
    return VariationalConstraintMatrix(rows)


def kinematic_residual(model: ThermoModel, q, v, S, Sdot) -> Array:
    """``(<ω^r, v>, ∂L/∂S Ṡ − <F^fr, v>)``; zero exactly on ``C_K``."""
    temperature(model, q, v, S)
    w = constraint_matrix(model, q)
    thermal = float(model.dL_dS(q, v, S)) * Sdot - float(model.F_fr(q, v, S) @ v)
    return np.concatenate([w @ v, [thermal]])


def annihilator_of_CV(model: ThermoModel, q, v, S) -> linalg.Subspace:
    return linalg.annihilator(variational_constraint(model, q, v, S).null_space)


def partial_legendre(model: ThermoModel, q, v, S) -> Array:
    return np.asarray(model.dL_dv(q, v, S), dtype=float)


def _is_spd(M) -> bool:
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def inverse_legendre(model: ThermoModel, q, p, S, *, v0=None, t: float = 0.0,
                     tol: float = 1e-10, max_iter: int = 50) -> Array:
    """Solve ``∂L/∂v(q, v, S) = p`` for ``v`` by Newton iteration.

    For a velocity Hessian that is only semidefinite, ``p`` does not fix
    ``v``; the missing equations are the constraints ``ω v = 0`` and the
    force balance along massless admissible directions, and the stacked
    system is solved by Gauss-Newton.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    n = model.n
    v = np.zeros(n) if v0 is None else np.array(v0, dtype=float)
    target = tol * (1.0 + float(np.linalg.norm(p)))
    M = np.asarray(model.d2L_dv2(q, v, S), dtype=float)
    if _is_spd(M):
        for _ in range(max_iter):
            r = partial_legendre(model, q, v, S) - p
            if np.linalg.norm(r) <= target:
                return v
            M = np.asarray(model.d2L_dv2(q, v, S), dtype=float)
            v = v - np.linalg.solve(M, r)
        if np.linalg.norm(partial_legendre(model, q, v, S) - p) <= target:
            return v
        raise LegendreInversionError(f"Newton did not converge in {max_iter} iterations")

    w = constraint_matrix(model, q)

    def stacked(vv):
        parts = [partial_legendre(model, q, vv, S) - p, w @ vv]
        Z = constraint_frame(model, q, vv, S).massless
        if Z.shape[1]:
            parts.append(Z.T @ applied_force(model, t, q, vv, S, entropy_rate(model, q, vv, S)))
        return np.concatenate(parts)

    for _ in range(max_iter):
        r = stacked(v)
        if np.linalg.norm(r) <= target:
            return v
        J = _fd_jacobian(stacked, v)
        if J.shape[0] < n or linalg.rank(J) < n:
            raise LegendreInversionError("momentum does not determine the velocity")
        v = v + np.linalg.lstsq(J, -r, rcond=None)[0]
    if np.linalg.norm(stacked(v)) <= target:
        return v
    raise LegendreInversionError(f"Gauss-Newton did not converge in {max_iter} iterations")


def _rel_err(analytic, fd) -> float:
    """``max|a − fd| / max(1, max|fd|)``: relative for large blocks, absolute for tiny ones."""
    analytic = np.atleast_1d(np.asarray(analytic, dtype=float))
    fd = np.atleast_1d(np.asarray(fd, dtype=float))
    diff = float(np.max(np.abs(analytic - fd), initial=0.0))
    return diff / max(1.0, float(np.max(np.abs(fd), initial=0.0)))


def gradient_check(model: ThermoModel, q, v, S, h: float = 1e-5) -> GradientReport:
    """Compare analytic derivatives against central differences."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    n = model.n
    eye = np.eye(n)
    L = model.lagrangian

    dq = [(L(q + h * eye[i], v, S) - L(q - h * eye[i], v, S)) / (2 * h) for i in range(n)]
    dv = [(L(q, v + h * eye[i], S) - L(q, v - h * eye[i], S)) / (2 * h) for i in range(n)]
    dS = (L(q, v, S + h) - L(q, v, S - h)) / (2 * h)
    hess = np.column_stack([
        (np.asarray(model.dL_dv(q, v + h * eye[j], S)) - np.asarray(model.dL_dv(q, v - h * eye[j], S)))
        / (2 * h) for j in range(n)])
    errs = {
        "dL_dq": _rel_err(model.dL_dq(q, v, S), dq),
        "dL_dv": _rel_err(model.dL_dv(q, v, S), dv),
        "dL_dS": _rel_err(model.dL_dS(q, v, S), dS),
        "d2L_dv2": _rel_err(model.d2L_dv2(q, v, S), hess),
    }
    if model.d2L_dvdq is not None:
        mixed = np.column_stack([
            (np.asarray(model.dL_dv(q + h * eye[j], v, S)) - np.asarray(model.dL_dv(q - h * eye[j], v, S)))
            / (2 * h) for j in range(n)])
        errs["d2L_dvdq"] = _rel_err(model.d2L_dvdq(q, v, S), mixed)
    if model.d2L_dvdS is not None:
        fd = (np.asarray(model.dL_dv(q, v, S + h)) - np.asarray(model.dL_dv(q, v, S - h))) / (2 * h)
        errs["d2L_dvdS"] = _rel_err(model.d2L_dvdS(q, v, S), fd)
    if model.m and model.constraint_rate is not None:
        fd = (model.omega(q + h * v) - model.omega(q - h * v)) / (2 * h)
        errs["constraint_rate"] = _rel_err(model.constraint_rate(q, v), fd)
    return GradientReport(errs)


def verify_derivatives(model: ThermoModel, q, v, S, h: float = 1e-5,
                       threshold: float = 1e-4) -> GradientReport:
    """:func:`gradient_check` that raises :class:`DerivativeMismatchError` on failure."""
    report = gradient_check(model, q, v, S, h)
    if not report.passed(threshold):
        bad = {k: e for k, e in report.max_rel_err.items() if e > threshold}
        raise DerivativeMismatchError(f"{model.name}: derivative blocks disagree with FD: {bad}")
    return report
