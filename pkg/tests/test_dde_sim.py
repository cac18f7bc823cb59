import dataclasses
import math

import numpy as np
import pytest

from hiercon.dde_sim import (
    CONVERGED, CRITICAL_OSCILLATION, DIVERGING, INCONCLUSIVE, SimOptions, Trajectory, classify,
    conservation_series, expm_oracle, integrate,
)
from hiercon.delay import STABLE, effective_delays, rightmost_root, stability_verdict
from hiercon.errors import DomainError
from hiercon.hierarchy import assemble, fig1, random_spec
from hiercon.powershare import FIG1_CASES
from hiercon.spectral import consensus_value, layer_spectrum, nonzero, spectral_report
from conftest import FIG1_A, FIG1_X0

C = 3.4 / 6


# expm oracle

def test_expm_identity_at_zero(fig1_m):
    np.testing.assert_array_equal(expm_oracle(fig1_m.total, FIG1_X0, 0.0), FIG1_X0)


def test_expm_scalar():
    for t in (0.1, 1.0, 5.0):
        assert expm_oracle(np.array([[2.0]]), [1.0], t)[0] == pytest.approx(math.exp(-2 * t), rel=1e-14)


def test_expm_long_time(fig1_m):
    np.testing.assert_allclose(expm_oracle(fig1_m.total, FIG1_X0, 200.0), C, atol=1e-8)


def test_expm_negative_time(fig1_m):
    with pytest.raises(DomainError):
        expm_oracle(fig1_m.total, FIG1_X0, -1.0)


# integrate

def test_zero_delay_matches_expm(fig1_m):
    traj = integrate(fig1_m, [0.0, 0.0], FIG1_X0, SimOptions(t_end=20.0, stride=50))
    for t, x in zip(traj.times, traj.states):
        np.testing.assert_allclose(x, expm_oracle(fig1_m.total, FIG1_X0, t), atol=1e-6, rtol=0)
    oracle_cons = np.array([FIG1_A @ expm_oracle(fig1_m.total, FIG1_X0, t) for t in traj.times])
    np.testing.assert_allclose(traj.conservation, oracle_cons, atol=1e-9, rtol=0)


def test_equilibrium_is_fixed(fig1_m):
    x0 = np.full(6, 0.42)
    spec = fig1(FIG1_CASES[2])
    traj = integrate(assemble(spec), effective_delays(spec), x0, SimOptions(t_end=10.0))
    assert np.max(np.abs(traj.states - 0.42)) < 1e-13
    assert conservation_series(traj) < 1e-13


def test_gating_before_first_activation(fig1_m):
    # with layers 2 and 3 removed the run must be bit-identical until t = D2
    d = FIG1_CASES[1]
    D = effective_delays(fig1(d))
    m = assemble(fig1(d))
    only_l1 = dataclasses.replace(m, effective=[m.effective[0]] + [np.zeros_like(E) for E in m.effective[1:]])
    opts = SimOptions(t_end=3.0, stride=10)
    a = integrate(m, D, FIG1_X0, opts)
    b = integrate(only_l1, D, FIG1_X0, opts)
    before = a.times < D[0]
    np.testing.assert_array_equal(a.states[before], b.states[before])
    assert np.max(np.abs(a.states[~before] - b.states[~before])) > 1e-6


def test_gating_matches_layer1_exponential(fig1_m):
    D = effective_delays(fig1(FIG1_CASES[1]))
    traj = integrate(fig1_m, D, FIG1_X0, SimOptions(t_end=0.85, stride=10))
    for t, x in zip(traj.times, traj.states):
        assert t < D[0]
        np.testing.assert_allclose(x, expm_oracle(fig1_m.effective[0], FIG1_X0, t), atol=1e-11, rtol=0)


def test_step_halving_case1(case_runs):
    spec = fig1(FIG1_CASES[1])
    fine = integrate(assemble(spec), effective_delays(spec), FIG1_X0, SimOptions(t_end=60.0, step=5e-4, stride=200))
    coarse = case_runs[1]
    assert fine.times[-1] == pytest.approx(coarse.times[-1])
    assert np.max(np.abs(fine.final - coarse.final)) < 1e-5


def test_align_activation_close_to_default(case_runs):
    spec = fig1(FIG1_CASES[1])
    aligned = integrate(assemble(spec), effective_delays(spec), FIG1_X0,
                        SimOptions(t_end=60.0, tol=1e-3, align_activation=True))
    assert np.max(np.abs(aligned.final - case_runs[1].final)) < 1e-5
    assert aligned.classification.kind == CONVERGED


def test_samples_uniform(case_runs):
    t = case_runs[1].times
    assert np.all(np.diff(t) > 0)
    np.testing.assert_allclose(np.diff(t), t[1] - t[0], rtol=1e-9)


@pytest.mark.parametrize("case", [1, 2, 3, 4])
def test_conservation_delay_cases(case_runs, case):
    traj = case_runs[case]
    assert conservation_series(traj) < 1e-6
    assert conservation_series(traj, np.diag(FIG1_A)) < 1e-6
    assert traj.conservation[0] == pytest.approx(3.4, abs=1e-15)


def test_case1_converged(case_runs):
    cls = case_runs[1].classification
    assert cls.kind == CONVERGED
    assert cls.value == pytest.approx(0.566667, abs=1e-3)
    assert np.max(np.abs(case_runs[1].final - cls.value)) <= 1e-3


@pytest.mark.parametrize("case", [2, 3, 4])
def test_critical_cases_oscillate(case_runs, case):
    cls = case_runs[case].classification
    assert cls.kind == CRITICAL_OSCILLATION
    assert 0.8 <= cls.amplitude_last / cls.amplitude_prev <= 1.2


def test_default_step():
    assert SimOptions().resolve_step([]) == 1e-3
    assert SimOptions().resolve_step([0.0, 0.02]) == pytest.approx(4e-4)
    assert SimOptions(step=0.01).resolve_step([0.02]) == 0.01


@pytest.mark.parametrize("kwargs", [dict(t_end=0.0), dict(step=-1.0), dict(stride=0), dict(step=2.0)])
def test_bad_options(fig1_m, kwargs):
    with pytest.raises(DomainError):
        integrate(fig1_m, [1.0, 1.5], FIG1_X0, SimOptions(**kwargs))


def test_bad_inputs(fig1_m):
    with pytest.raises(DomainError):
        integrate(fig1_m, [1.0], FIG1_X0)
    with pytest.raises(DomainError):
        integrate(fig1_m, [1.0, 2.0], FIG1_X0[:5])
    with pytest.raises(DomainError):
        integrate(fig1_m, [-1.0, 2.0], FIG1_X0)


# classification on synthetic trajectories

def synthetic(fn, t_end=100.0, dt=0.1, delays=(1.0,), overflow=False):
    t = np.arange(0, t_end + dt / 2, dt)
    x = np.stack([fn(t), -fn(t)], axis=1)
    return Trajectory(t, x, x.sum(axis=1), dt, np.array(delays), 0.0, overflow)


def test_classify_converged():
    cls = classify(synthetic(lambda t: np.exp(-t)))
    assert cls.kind == CONVERGED and cls.value == 0.0


def test_classify_oscillation():
    cls = classify(synthetic(lambda t: 0.1 * np.sin(t)))
    assert cls.kind == CRITICAL_OSCILLATION


def test_classify_growth():
    assert classify(synthetic(lambda t: 1e-3 * np.exp(0.2 * t) * np.sin(t))).kind == DIVERGING


def test_classify_overflow():
    assert classify(synthetic(lambda t: t, overflow=True)).kind == DIVERGING


def test_classify_slow_decay_inconclusive():
    assert classify(synthetic(lambda t: np.exp(-0.02 * t) * np.sin(t))).kind == INCONCLUSIVE


def test_classify_short_horizon():
    cls = classify(synthetic(lambda t: np.exp(-t), t_end=10.0, delays=(3.0,)))
    assert cls.kind == INCONCLUSIVE


def test_classify_window_shorter_than_period():
    cls = classify(synthetic(lambda t: np.sin(t)), binding_lambda=0.01)
    assert cls.kind == INCONCLUSIVE


def test_conservation_needs_two_samples():
    traj = synthetic(lambda t: t, t_end=0.0)
    with pytest.raises(DomainError):
        conservation_series(traj)


# properties over random hierarchies

def _decay_horizon(spec, m):
    D = effective_delays(spec)
    rates = []
    for l in range(1, m.M + 1):
        T = 0.0 if l == 1 else float(D[l - 2])
        rates += [-rightmost_root(T, lam).real for lam in nonzero(layer_spectrum(m, l))]
    return 20.0 / min(rates)


def _stable_cases(count=6, horizon_cap=120.0):
    rng = np.random.default_rng(3)
    out = []
    while len(out) < count:
        spec = random_spec(rng, max_layers=3, max_nodes=10, max_delay=0.6)
        if spec.M < 2 or spec.n_physical < 2:
            continue
        m = assemble(spec)
        rep = stability_verdict(spec, spectral_report(m))
        if rep.verdict != STABLE or any(b.margin <= 0.1 * b.bound for b in rep.layers):
            continue
        t_end = _decay_horizon(spec, m)
        if t_end <= horizon_cap:
            out.append((spec, m, t_end))
    return out


@pytest.mark.parametrize("spec, m, t_end", _stable_cases())
def test_stable_specs_converge(spec, m, t_end):
    rng = np.random.default_rng(abs(hash(spec.physical_weights)) % 2**32)
    x0 = rng.uniform(0, 1, m.N)
    D = effective_delays(spec)
    h = min(0.01, float(D[D > 0].min()) / 4) if np.any(D > 0) else 0.01
    traj = integrate(m, D, x0, SimOptions(t_end=max(t_end, 4 * D.max()), step=h, tol=1e-3))
    c = consensus_value(m, x0)[1]
    assert traj.classification.kind == CONVERGED
    assert np.max(np.abs(traj.final - c)) <= 1e-3


def _unstable_cases(count=4):
    rng = np.random.default_rng(5)
    out = []
    while len(out) < count:
        spec = random_spec(rng, max_layers=3, max_nodes=10, max_delay=1.0)
        if spec.M < 2 or spec.n_physical < 2:
            continue
        rep = stability_verdict(spec, spectral_report(assemble(spec)))
        if any(b.margin < -0.1 * b.bound for b in rep.layers):
            growth = max(b.rightmost_root.real for b in rep.layers if b.rightmost_root is not None)
            out.append((spec, max(4 * float(effective_delays(spec).max()), 15.0 / growth)))
    return out


@pytest.mark.parametrize("spec, t_end", _unstable_cases())
def test_unstable_specs_grow(spec, t_end):
    m = assemble(spec)
    x0 = np.linspace(0, 1, m.N)
    D = effective_delays(spec)
    traj = integrate(m, D, x0, SimOptions(t_end=t_end, step=min(0.01, float(D[D > 0].min()) / 4)))
    assert traj.classification.kind in (DIVERGING, CRITICAL_OSCILLATION)
    c = traj.consensus
    e = np.max(np.abs(traj.states - c), axis=1)
    span = 0.2 * traj.times[-1]
    first = e[traj.times <= span]
    last = e[traj.times >= traj.times[-1] - span]
    assert np.ptp(last) > np.ptp(first)
