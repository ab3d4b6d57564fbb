import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import toy_model
from dirac_thermo.errors import (
    ConstraintRankError,
    DerivativeMismatchError,
    LegendreInversionError,
    ModelDomainError,
)
from dirac_thermo.linalg import Subspace, same_subspace
from dirac_thermo.model import (
    PontryaginPoint,
    ThermoModel,
    annihilator_of_CV,
    complete_velocity,
    constraint_frame,
    entropy_rate,
    gradient_check,
    inverse_legendre,
    kinematic_residual,
    partial_legendre,
    temperature,
    variational_constraint,
    verify_derivatives,
)
from dirac_thermo.models import BUILTINS, LCRParams, build_lcr

Q1, V1 = np.zeros(1), np.zeros(1)


def bisect(f, lo, hi, tol=1e-15):
    flo = f(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if (f(mid) > 0) == (flo > 0):
            lo, flo = mid, f(mid)
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- construction -------------------------------------------------------------------


def test_model_rejects_bad_sizes():
    base = dict(lagrangian=None, dL_dq=None, dL_dv=None, dL_dS=None, d2L_dv2=None, friction_force=None)
    with pytest.raises(ValueError):
        ThermoModel(n=0, **base)
    with pytest.raises(ValueError):
        ThermoModel(n=2, m=2, constraint_forms=lambda q: np.eye(2), **base)
    with pytest.raises(ValueError):
        ThermoModel(n=2, m=1, **base)


def test_pontryagin_point_round_trip():
    x = PontryaginPoint(np.array([1.0, 2.0]), 3.0, np.array([4.0, 5.0]), 6.0, np.array([7.0, 8.0]), 9.0)
    y = PontryaginPoint.from_vector(x.as_vector(), 2)
    assert np.array_equal(x.as_vector(), y.as_vector())


# -- variational constraint ----------------------------------------------------------


def test_variational_constraint_without_friction():
    md = toy_model(T=10.0)
    vc = variational_constraint(md, Q1, np.array([2.0]), 0.0)
    assert np.array_equal(vc.rows, [[0.0, -10.0]])
    assert same_subspace(vc.null_space, Subspace.span([1.0, 0.0]))


def test_variational_constraint_with_friction():
    md = toy_model(r=1.0, T=10.0)
    vc = variational_constraint(md, Q1, np.array([2.0]), 0.0)
    assert np.allclose(vc.rows, [[2.0, -10.0]])
    # δS = 0.2 δq
    assert same_subspace(vc.null_space, Subspace.span([5.0, 1.0]))


def test_variational_constraint_with_mechanical_constraint():
    md = toy_model(n=2, T=7.0, omega=[[1.0, -1.0]])
    vc = variational_constraint(md, np.zeros(2), np.zeros(2), 0.0)
    assert np.allclose(vc.rows, [[1, -1, 0], [0, 0, -7]])
    assert same_subspace(vc.null_space, Subspace.span([1.0, 1.0, 0.0]))


def test_temperature_floor():
    md = toy_model(T=0.0)
    with pytest.raises(ModelDomainError):
        temperature(md, Q1, V1, 0.0)
    with pytest.raises(ModelDomainError):
        variational_constraint(md, Q1, V1, 0.0)


def test_rank_deficient_constraints():
    md = toy_model(n=3, omega=[[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    with pytest.raises(ConstraintRankError):
        variational_constraint(md, np.zeros(3), np.zeros(3), 0.0)


# -- kinematic residual ------------------------------------------------------------------


def test_kinematic_residual_rest():
    md = toy_model(r=0.3)
    assert np.array_equal(kinematic_residual(md, Q1, V1, 0.0, 0.0), [0.0])


def test_kinematic_residual_on_constraint():
    md = toy_model(r=0.5, T=100.0)
    res = kinematic_residual(md, Q1, np.array([2.0]), 0.0, 0.02)
    assert abs(res[0]) < 1e-14


def test_kinematic_residual_mechanical_violation():
    md = toy_model(n=2, omega=[[1.0, -1.0]])
    res = kinematic_residual(md, np.zeros(2), np.array([1.0, 2.0]), 0.0, 0.0)
    assert res[0] == -1.0


# -- annihilator of C_V ------------------------------------------------------------------


def test_annihilator_without_friction():
    ann = annihilator_of_CV(toy_model(), Q1, np.array([1.0]), 0.0)
    assert same_subspace(ann, Subspace.span([0.0, 1.0]))


def test_annihilator_with_constraint():
    md = toy_model(n=2, omega=[[1.0, 0.0]])
    ann = annihilator_of_CV(md, np.zeros(2), np.zeros(2), 0.0)
    assert same_subspace(ann, Subspace.span(np.array([[1.0, 0, 0], [0, 0, 1.0]]).T))


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 3), st.floats(-3, 3), st.floats(1, 500))
def test_annihilator_kills_variations(r, v, T):
    md = toy_model(r=r, T=T)
    vc = variational_constraint(md, Q1, np.array([v]), 0.0)
    ann = annihilator_of_CV(md, Q1, np.array([v]), 0.0)
    assert ann.dim + vc.null_space.dim == 2
    assert np.max(np.abs(ann.basis.T @ vc.null_space.basis), initial=0.0) < 1e-12


# -- Legendre transform -----------------------------------------------------------------


def test_partial_legendre_linear_momentum():
    assert partial_legendre(toy_model(mass=1.5), Q1, np.array([2.0]), 0.0)[0] == 3.0
    assert partial_legendre(toy_model(mass=1.5), Q1, V1, 0.0)[0] == 0.0


def test_partial_legendre_lcr():
    md = build_lcr(LCRParams(L_ind=0.5))
    p = partial_legendre(md, np.zeros(4), np.array([2.0, 0.0, 0.0, 0.0]), 0.0)
    assert np.array_equal(p, [1.0, 0.0, 0.0, 0.0])


def test_inverse_legendre_quadratic():
    v = inverse_legendre(toy_model(mass=2.0), Q1, np.array([4.0]), 0.0)
    assert v[0] == pytest.approx(2.0, abs=1e-12)


def test_inverse_legendre_quartic_against_bisection():
    md = toy_model(quartic=1.0)
    v = inverse_legendre(md, Q1, np.array([2.0]), 0.0)
    oracle = bisect(lambda x: x + x ** 3 - 2.0, 0.0, 2.0)
    assert v[0] == pytest.approx(oracle, abs=1e-10)
    assert v[0] == pytest.approx(1.0, abs=1e-12)
    # L = ½v² + ½v⁴, so p = v + 2v³
    v = inverse_legendre(toy_model(quartic=2.0), Q1, np.array([2.0]), 0.0)
    oracle = bisect(lambda x: x + 2 * x ** 3 - 2.0, 0.0, 2.0)
    assert v[0] == pytest.approx(oracle, abs=1e-10)
    assert v[0] == pytest.approx(0.83511, abs=5e-5)


def test_inverse_legendre_failure():
    with pytest.raises(LegendreInversionError):
        inverse_legendre(toy_model(quartic=1.0), Q1, np.array([1e6]), 0.0, max_iter=2)


@pytest.mark.parametrize("name", ["piston_cylinder", "lcr"])
def test_inverse_legendre_round_trip_builtins(name):
    spec = BUILTINS[name]
    params = spec.default_params()
    md = spec.build(params)
    rng = np.random.default_rng(7)
    for _ in range(10):
        q, v, S = spec.sample(params, rng)
        if constraint_frame(md, q, v, S).degenerate:
            v, _, _ = complete_velocity(md, 0.0, q, v, S)
        p = partial_legendre(md, q, v, S)
        back = inverse_legendre(md, q, p, S, v0=v + 0.05)
        assert np.max(np.abs(back - v)) < 1e-8


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 5), st.floats(0.1, 3), st.floats(0, 2))
def test_inverse_legendre_property(v, mass, quartic):
    md = toy_model(mass=mass, quartic=quartic)
    p = partial_legendre(md, Q1, np.array([v]), 0.0)
    assert inverse_legendre(md, Q1, p, 0.0)[0] == pytest.approx(v, abs=1e-8)


# -- gradient checks ---------------------------------------------------------------------


def test_gradient_check_simple():
    rep = gradient_check(toy_model(), Q1, np.array([1.0]), 0.0)
    assert rep.max_rel_err["dL_dv"] <= 1e-8
    assert rep.passed(1e-8)


def test_gradient_check_planted_fault():
    md = toy_model(stiffness=3.0)
    bad = dataclasses.replace(md, dL_dq=lambda q, v, S: 2 * md.dL_dq(q, v, S))
    rep = gradient_check(bad, np.array([1.5]), np.array([1.0]), 0.0)
    assert rep.max_rel_err["dL_dq"] == pytest.approx(1.0, rel=1e-6)
    with pytest.raises(DerivativeMismatchError):
        verify_derivatives(bad, np.array([1.5]), np.array([1.0]), 0.0)


def test_gradient_check_piston_generic_state():
    spec = BUILTINS["piston_cylinder"]
    md = spec.build(spec.default_params())
    rep = gradient_check(md, np.array([0.45, 0.3]), np.array([-0.02, 0.7]), 0.01)
    assert rep.passed(1e-6), rep.max_rel_err


# -- entropy rate ---------------------------------------------------------------------------


def test_entropy_rate_values():
    assert entropy_rate(toy_model(r=0.5, T=100.0), Q1, V1, 0.0) == 0.0
    assert entropy_rate(toy_model(r=0.5, T=100.0), Q1, np.array([2.0]), 0.0) == pytest.approx(0.02, abs=1e-15)
    assert entropy_rate(toy_model(r=0.0), Q1, np.array([5.0]), 0.0) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 10), st.floats(-10, 10), st.floats(1e-3, 1e3))
def test_entropy_rate_nonnegative_for_dissipative_friction(r, v, T):
    assert entropy_rate(toy_model(r=r, T=T), Q1, np.array([v]), 0.0) >= 0.0


# -- massless directions -----------------------------------------------------------------


def test_lcr_frame_has_one_massless_direction():
    md = build_lcr()
    frame = constraint_frame(md, np.zeros(4), np.zeros(4), 0.0)
    assert frame.degenerate
    assert frame.massless.shape[1] == 1
    z = frame.massless[:, 0]
    assert np.allclose(md.omega(np.zeros(4)) @ z, 0.0)
    # spanned by (0, -1, 0, 1): resistor and capacitor currents trade off
    assert abs(abs(z @ np.array([0.0, -1.0, 0.0, 1.0])) / np.sqrt(2) - 1.0) < 1e-12


def test_complete_velocity_enforces_resistor_law():
    P = LCRParams()
    md = build_lcr(P)
    q = np.array([0.0, 0.2, 0.0, 0.0])
    v, _, _ = complete_velocity(md, 0.0, q, np.array([1.0, 1.0, 1.0, 0.0]), 0.0)
    assert v[3] * P.R == pytest.approx(q[1] / P.C, abs=1e-12)
    assert np.allclose(md.omega(q) @ v, 0.0, atol=1e-14)
