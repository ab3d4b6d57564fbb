import numpy as np

from dirac_thermo.model import ThermoModel


def toy_model(n=1, mass=1.0, r=0.0, T=100.0, omega=None, force=None, stiffness=0.0, quartic=0.0):
    """``L = ½ mass |v|² + ¼ quartic Σv⁴ − ½ stiffness |q|² − T S`` with friction ``−r v``.

    ``T`` is constant because the entropy enters linearly.  ``omega`` is a
    constant ``(m, n)`` constraint matrix, ``force`` a constant covector.
    """
    w = None if omega is None else np.atleast_2d(np.asarray(omega, dtype=float))
    f = None if force is None else np.asarray(force, dtype=float)
    return ThermoModel(
        n=n,
        lagrangian=lambda q, v, S: (0.5 * mass * v @ v + 0.25 * quartic * np.sum(v ** 4)
                                    - 0.5 * stiffness * q @ q - T * S),
        dL_dq=lambda q, v, S: -stiffness * np.asarray(q, dtype=float),
        dL_dv=lambda q, v, S: mass * np.asarray(v, dtype=float) + quartic * np.asarray(v) ** 3,
        dL_dS=lambda q, v, S: -T,
        d2L_dv2=lambda q, v, S: np.diag(mass + 3 * quartic * np.asarray(v, dtype=float) ** 2),
        friction_force=lambda q, v, S: -r * np.asarray(v, dtype=float),
        external_force=None if f is None else (lambda t, q, v, S: f),
        m=0 if w is None else w.shape[0],
        constraint_forms=None if w is None else (lambda q: w),
        name="toy",
    )


#: one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
