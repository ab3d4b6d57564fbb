import dataclasses
import math

import numpy as np
import pytest

import lcr_oracle
from dirac_thermo.dynamics import simulate
from dirac_thermo.errors import ModelDomainError
from dirac_thermo.model import gradient_check
from dirac_thermo.models import (
    BUILTINS,
    LCR_KCL,
    Drive,
    GasPistonParams,
    IdealGasParams,
    LCRParams,
    OpenPistonParams,
    PistonCylinderParams,
    PortParams,
    SourceParams,
    _verify_dL_dN,
    build_lcr,
    build_open_piston,
    build_piston_cylinder,
    gas_chemical_potential,
    gas_energy,
    gas_pressure,
    gas_temperature,
    get_builtin,
    param_fields,
    piston_alpha,
    piston_alpha_prime,
)

LCR_INIT = ([0.0, 0.05, 0.0, 0.0], [1.0, 0.5, 1.0, 0.5], 0.0)


# -- piston geometry ------------------------------------------------------------------


def test_piston_alpha_values():
    assert piston_alpha(0.0, 1.0, 2.0) == 0.0
    assert piston_alpha(math.pi / 2, 1.0, 2.0) == pytest.approx(1.0, abs=1e-15)
    assert abs(piston_alpha(math.pi, 1.0, 2.0)) < 1e-15


def test_piston_alpha_prime_by_differences():
    for phi in np.linspace(-2.5, 2.5, 11):
        h = 1e-6
        fd = (piston_alpha(phi + h, 0.1, 0.3) - piston_alpha(phi - h, 0.1, 0.3)) / (2 * h)
        assert piston_alpha_prime(phi, 0.1, 0.3) == pytest.approx(fd, abs=1e-8)


def test_piston_constraint_at_zero_angle():
    md = build_piston_cylinder()
    assert np.array_equal(md.omega(np.array([0.5, 0.0])), [[1.0, 0.0]])


def test_piston_rejects_bad_links():
    with pytest.raises(ValueError, match="b > a"):
        build_piston_cylinder(PistonCylinderParams(a=0.3, b=0.1))


# -- gas closure ----------------------------------------------------------------------


def test_gas_reference_state():
    g = IdealGasParams()
    assert gas_temperature(g.S0, g.V0, g.N0, g) == pytest.approx(g.T0, rel=1e-14)
    U = gas_energy(g.S0, g.V0, g.N0, g)
    assert U == pytest.approx(1.5 * g.N0 * g.R * g.T0, rel=1e-14)
    assert gas_pressure(g.S0, g.V0, g.N0, g) == pytest.approx(2 * U / (3 * g.V0), rel=1e-14)


def test_gas_closure_consistency_at_random_states():
    g = IdealGasParams()
    rng = np.random.default_rng(11)
    h = 1e-6
    for _ in range(100):
        S = g.S0 + rng.normal() * 0.01
        V = g.V0 * rng.uniform(0.5, 1.5)
        N = g.N0 * rng.uniform(0.5, 1.5)
        dU_dS = (gas_energy(S + h, V, N, g) - gas_energy(S - h, V, N, g)) / (2 * h)
        dU_dV = (gas_energy(S, V + h * V, N, g) - gas_energy(S, V - h * V, N, g)) / (2 * h * V)
        dU_dN = (gas_energy(S, V, N + h * N, g) - gas_energy(S, V, N - h * N, g)) / (2 * h * N)
        assert dU_dS == pytest.approx(gas_temperature(S, V, N, g), rel=1e-6)
        assert -dU_dV == pytest.approx(gas_pressure(S, V, N, g), rel=1e-6)
        assert dU_dN == pytest.approx(gas_chemical_potential(S, V, N, g), rel=1e-6)


def test_gas_rejects_nonpositive_volume():
    md = build_piston_cylinder()
    # q = 0 gives zero gas volume
    with pytest.raises(ModelDomainError):
        md.lagrangian(np.array([0.0, 0.0]), np.zeros(2), 0.0)


def test_piston_pressure_force():
    P = PistonCylinderParams()
    md = build_piston_cylinder(P)
    q = np.array([0.4, 0.2])
    V = P.A * q[0]
    assert md.dL_dq(q, np.zeros(2), 0.0)[0] == pytest.approx(gas_pressure(0.0, V, P.gas.N0, P.gas) * P.A)
    assert -md.dL_dS(q, np.zeros(2), 0.0) == pytest.approx(gas_temperature(0.0, V, P.gas.N0, P.gas))


# -- LCR circuit -------------------------------------------------------------------------


def test_kcl_matrix_and_admissibility():
    assert np.array_equal(LCR_KCL, [[-1, 0, 1, 0], [0, -1, 1, -1]])
    md = build_lcr()
    w = md.omega(np.zeros(4))
    assert np.array_equal(w @ [1, 1, 1, 0], [0, 0])
    assert np.array_equal(w @ [1, 0, 0, 0], [-1, 0])


def test_lcr_current_relations_along_trajectory():
    md = build_lcr()
    traj = simulate(md, LCR_INIT, (0.0, 0.5), 1e-3)
    fL, fC, fV, fR = traj.v.T
    assert np.max(np.abs(fL - fV)) <= 1e-12
    assert np.max(np.abs(fC - (fL - fR))) <= 1e-12


def test_lcr_matches_sign_corrected_display():
    P = LCRParams()
    md = build_lcr(P)
    traj = simulate(md, LCR_INIT, (0.0, 1.0), 1e-3)
    q, v, S = LCR_INIT
    ref = lcr_oracle.rk4(P, lcr_oracle.initial(P, q, v, S), (0.0, 1.0), 1e-3, sign=-1)
    assert np.max(np.abs(lcr_oracle.engine_columns(traj) - ref)) <= 1e-8


def test_lcr_matches_sign_corrected_display_with_source():
    drive = Drive(offset=0.3, amplitude=0.5, omega=4.0)
    P = LCRParams(V=drive)
    md = build_lcr(P)
    traj = simulate(md, LCR_INIT, (0.0, 1.0), 1e-3)
    q, v, S = LCR_INIT
    ref = lcr_oracle.rk4(P, lcr_oracle.initial(P, q, v, S), (0.0, 1.0), 1e-3, sign=-1, volt=drive)
    assert np.max(np.abs(lcr_oracle.engine_columns(traj) - ref)) <= 1e-8


def test_displayed_inductor_law_violates_energy_balance():
    # with no source the circuit is adiabatically closed, so its energy must stay
    # constant; the displayed sign makes it grow
    P = LCRParams()
    q, v, S = LCR_INIT
    y0 = lcr_oracle.initial(P, q, v, S)
    verbatim = lcr_oracle.rk4(P, y0, (0.0, 1.0), 1e-3, sign=+1)
    corrected = lcr_oracle.rk4(P, y0, (0.0, 1.0), 1e-3, sign=-1)
    E_v, E_c = lcr_oracle.energy(P, verbatim), lcr_oracle.energy(P, corrected)
    assert np.max(np.abs(E_c - E_c[0])) <= 1e-8 * E_c[0]
    assert np.max(np.abs(E_v - E_v[0])) > 1.0


def test_lcr_energy_and_entropy():
    md = build_lcr()
    traj = simulate(md, LCR_INIT, (0.0, 1.0), 1e-3)
    assert np.max(np.abs(traj.energy - traj.energy[0])) <= 1e-8 * (1 + abs(traj.energy[0]))
    assert np.all(np.diff(traj.S) >= -1e-12)
    # resistor heating: T Ṡ = R f_R²
    P = LCRParams()
    T = P.T0 * np.exp((traj.S - P.S0) / P.c_R)
    assert np.allclose(T * traj.Sdot, P.R * traj.v[:, 3] ** 2, rtol=1e-12, atol=1e-15)


# -- open piston ---------------------------------------------------------------------------


def test_open_piston_dL_dN():
    om = build_open_piston()
    rng = np.random.default_rng(5)
    for _ in range(20):
        q = np.array([rng.uniform(0.3, 0.7)])
        assert _verify_dL_dN(om, q, rng.normal(size=1), rng.normal() * 0.01, 0.05 * rng.uniform(0.8, 1.2)) < 1e-6


def test_open_piston_validation():
    with pytest.raises(ValueError):
        build_open_piston(OpenPistonParams(ports=(PortParams(mu=0.0, T=300.0, lam=-1.0),)))
    with pytest.raises(ValueError):
        build_open_piston(OpenPistonParams(sources=(SourceParams(T=-1.0),)))
    with pytest.raises(ValueError):
        build_open_piston(OpenPistonParams(piston=GasPistonParams(M=0.0)))


def test_open_piston_closed_limit_matches_frozen_model():
    gp = GasPistonParams()
    om = build_open_piston(OpenPistonParams(piston=gp))
    assert om.ports == () and om.heat_sources == ()
    md = om.frozen(gp.gas.N0)
    assert md.n == 1 and md.m == 0


# -- registry and gradient checks ---------------------------------------------------------


def test_registry():
    assert set(BUILTINS) == {"piston_cylinder", "lcr", "open_piston"}
    assert get_builtin("lcr").build is build_lcr
    with pytest.raises(KeyError):
        get_builtin("nope")
    assert "R" in param_fields(LCRParams)


@pytest.mark.parametrize("name", sorted(BUILTINS))
def test_gradient_checks_at_random_states(name):
    spec = BUILTINS[name]
    params = spec.default_params()
    built = spec.build(params)
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        state = spec.sample(params, rng)
        q, v, S = state[:3]
        md = built.frozen(state[3]) if spec.is_open else built
        worst = max(worst, gradient_check(md, q, v, S).worst)
        if spec.is_open:
            worst = max(worst, _verify_dL_dN(built, q, v, S, state[3], threshold=np.inf))
    assert worst <= 1e-6


def test_lcr_validation():
    for key in ("L_ind", "C", "R", "c_R", "T0"):
        with pytest.raises(ValueError, match=key):
            build_lcr(dataclasses.replace(LCRParams(), **{key: 0.0}))
