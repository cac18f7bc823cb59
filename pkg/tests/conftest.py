import numpy as np
import pytest

from hiercon.hierarchy import assemble, fig1, random_spec

FIG1_X0 = np.array([0.3, 0.8, 0.6, 0.9, 0.7, 0.2])
FIG1_A = np.array([0.8, 0.7, 1.5, 1.0, 0.8, 1.2])


@pytest.fixture(scope="session")
def fig1_m():
    return assemble(fig1())


def random_specs(count, seed=42, **kwargs):
    rng = np.random.default_rng(seed)
    return [random_spec(rng, **kwargs) for _ in range(count)]


@pytest.fixture(scope="session")
def case_runs():
    """Default-option simulations of the four delay cases, keyed by case number."""
    from hiercon.dde_sim import SimOptions, integrate
    from hiercon.delay import effective_delays
    from hiercon.powershare import FIG1_CASES

    runs = {}
    for case, d in FIG1_CASES.items():
        spec = fig1(d)
        opts = SimOptions(t_end=60.0, tol=1e-3) if case == 1 else SimOptions(t_end=120.0)
        runs[case] = integrate(assemble(spec), effective_delays(spec), FIG1_X0, opts)
    return runs


ACCEPTANCE = {}


def record(criterion, ok, detail):
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[criterion]
        terminalreporter.write_line(f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}")
