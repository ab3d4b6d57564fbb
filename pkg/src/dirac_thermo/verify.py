"""Runtime verification suite for built-in models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .config import DEFAULT_TOLERANCES
from .dynamics import (
    cotangent_dirac,
    energy_balance_report,
    pontryagin_dirac,
    simulate,
    trajectory_residuals,
)
from .errors import DiracThermoError
from .linalg import certify_dirac
from .model import PontryaginPoint, gradient_check
from .models import _verify_dL_dN, get_builtin
from .open_dynamics import _thermal, internal_entropy_production, open_simulate

N_STATES = 20
REFERENCE_SPAN = 0.1
REFERENCE_DT = 1e-3


@dataclass
class CheckRecord:
    name: str
    passed: bool
    worst_value: float
    tolerance: float


@dataclass
class VerificationReport:
    model: str
    seed: int
    checks: list = field(default_factory=list)

    @property
    def overall(self) -> bool:
        return all(c.passed for c in self.checks)

    def add(self, name, worst, tol, passed=None):
        worst = float(worst)
        ok = (worst <= tol) if passed is None else passed
        self.checks.append(CheckRecord(name, bool(ok and np.isfinite(worst)), worst, tol))

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "seed": self.seed,
            "overall": self.overall,
            "checks": [vars(c) for c in self.checks],
        }


def run_checks(name: str, params=None, *, seed: int = 42, tolerances: Optional[dict] = None,
               model_hook: Optional[Callable] = None) -> VerificationReport:
    """Dirac certification, gradient checks and a short reference run.

    ``model_hook`` maps the closed model (or the matter-frozen model of an open
    system) to the one actually checked; it exists for fault-injection tests.
    """
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    spec = get_builtin(name)
    params = spec.default_params() if params is None else params
    hook = model_hook or (lambda m: m)
    built = spec.build(params, check=False)
    report = VerificationReport(name, seed)
    rng = np.random.default_rng(seed)

    def closed_at(N=None):
        return hook(built.frozen(N) if spec.is_open else built)

    worst_pair, dims_ok, worst_grad = 0.0, True, 0.0
    for _ in range(N_STATES):
        state = spec.sample(params, rng)
        q, v, S = state[:3]
        model = closed_at(state[3] if spec.is_open else None)
        x = PontryaginPoint(q, S, v, 0.0, model.dL_dv(q, v, S), 0.0)
        for d in (pontryagin_dirac(model, x), cotangent_dirac(model, q, S, v)):
            cert = certify_dirac(d, tol["certify"])
            worst_pair = max(worst_pair, cert.max_pairing)
            dims_ok &= cert.dim_ok
        worst_grad = max(worst_grad, gradient_check(model, q, v, S).worst)
        if spec.is_open:
            worst_grad = max(worst_grad, _verify_dL_dN(built, q, v, S, state[3], threshold=np.inf))
    report.add("dirac_certification", worst_pair, tol["certify"], passed=dims_ok and worst_pair <= tol["certify"])
    report.add("gradient_check", worst_grad, tol["gradient"])

    init = spec.initial(params)
    try:
        if spec.is_open:
            _reference_open(report, built, init, tol, closed_at)
        else:
            _reference_closed(report, closed_at(), init, tol)
    except DiracThermoError as exc:
        report.add(f"reference_run ({exc})", np.inf, 0.0, passed=False)
    return report


def _reference_closed(report, model, init, tol):
    traj = simulate(model, (init["q"], init["v"], init["S"]), (0.0, REFERENCE_SPAN), REFERENCE_DT)
    report.add("reference_run_completed", 0.0 if not traj.failed else np.inf, 0.0, passed=not traj.failed)
    res = trajectory_residuals(model, traj)
    report.add("dirac_residual", np.max(traj.dirac_residual), tol["dirac"])
    report.add("cotangent_residual", np.max(res["cotangent"]), tol["cotangent"])
    report.add("structure_residual", np.max(res["structure"]), tol["dirac"])
    defect = energy_balance_report(model, traj)["max_defect"]
    report.add("energy_balance", defect / (1.0 + np.max(np.abs(traj.energy))), tol["energy_rel"])
    drops = -np.diff(traj.S)
    report.add("entropy_nondecreasing", np.max(drops, initial=0.0), tol["entropy_step"])
    report.add("constraint_residual", np.max(np.abs(traj.constraint_residual), initial=0.0), tol["constraint"])


def _reference_open(report, om, init, tol, closed_at):
    traj = open_simulate(om, (init["q"], init["v"], init["S"], init["N"]), (0.0, REFERENCE_SPAN), REFERENCE_DT)
    report.add("reference_run_completed", 0.0 if not traj.failed else np.inf, 0.0, passed=not traj.failed)
    report.add("dirac_residual", np.max(traj.dirac_residual), tol["dirac"])
    defect = energy_balance_report(None, traj)["max_defect"]
    report.add("energy_balance", defect / (1.0 + np.max(np.abs(traj.energy))), tol["energy_rel"])
    worst = 0.0
    for k, t in enumerate(traj.times):
        q, v, S, N = traj.q[k], traj.v[k], float(traj.S[k]), float(traj.extra["N"][k])
        Sdot, _ = _thermal(om, closed_at(N), t, q, v, S, N)
        carried = Sdot - internal_entropy_production(om, q, v, S, N, t=t)
        fluxes = sum(p.entropy_flux(t, q, v, S, N) for p in om.ports)
        fluxes += sum(s.entropy_flux(t, q, v, S, N) for s in om.heat_sources)
        worst = max(worst, abs(carried - fluxes) / max(1.0, abs(Sdot)))
    report.add("entropy_decomposition", worst, tol["decomposition"])
    report.add("internal_production_nonnegative", max(0.0, -np.min(traj.extra["I"])), tol["entropy_step"])
