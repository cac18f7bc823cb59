"""Fixed-step integration of the delayed hierarchy dynamics.

    x'(t) = -L1 x(t) - sum_{l>=2} L_l x(t - D_l)

Each delayed term is switched off (exactly zero) until ``t >= D_l``: before
that no information has completed the round trip through layer ``l``.
Integration is classical RK4 on a uniform grid; delayed states between grid
points come from cubic Hermite interpolation of the stored states and
derivatives.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import expm

from .errors import DomainError
from .hierarchy import LayerMatrices

log = logging.getLogger(__name__)

CONVERGED = "Converged"
CRITICAL_OSCILLATION = "CriticalOscillation"
DIVERGING = "Diverging"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class SimOptions:
    """Integration and classification settings. ``step=None`` picks the default."""

    t_end: float = 60.0
    step: Optional[float] = None
    stride: int = 100
    tol: float = 1e-4
    window: float = 0.2
    align_activation: bool = False

    def resolve_step(self, delays) -> float:
        if self.step is not None:
            return float(self.step)
        positive = [d for d in delays if d > 0]
        h = 1e-3
        if positive:
            h = min(h, min(positive) / 50.0)
        return h


@dataclass
class Classification:
    kind: str
    value: Optional[float] = None
    amplitude_last: float = float("nan")
    amplitude_prev: float = float("nan")
    detail: str = ""

    def __str__(self) -> str:
        if self.kind == CONVERGED:
            return f"{CONVERGED}({self.value:.6g})"
        return self.kind

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "value": self.value,
            "amplitude_last": _finite_or_none(self.amplitude_last),
            "amplitude_prev": _finite_or_none(self.amplitude_prev),
            "detail": self.detail,
        }


def _finite_or_none(v):
    return float(v) if v is not None and math.isfinite(v) else None


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    conservation: np.ndarray
    step: float
    delays: np.ndarray
    consensus: float
    overflow: bool = False
    classification: Optional[Classification] = None
    meta: dict = field(default_factory=dict)

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


class _History:
    """Grid states and derivatives, read back by Hermite interpolation."""

    def __init__(self, n_steps: int, dim: int, h: float):
        self.h = h
        # row n packs [x_n, f_n] so two consecutive rows ravel without copying
        self.packed = np.zeros((n_steps + 2, 2 * dim))
        self.flat = self.packed.reshape(-1)
        self.x = self.packed[:, :dim]
        self.f = self.packed[:, dim:]

    def at(self, t: float) -> np.ndarray:
        """Interpolated state at ``t >= 0`` (must not lie past the stored grid)."""
        pos = t / self.h
        j = int(math.floor(pos))
        theta = pos - j
        if theta > 1.0 - 1e-12:
            j, theta = j + 1, 0.0
        a0, a1, b0, b1 = _hermite(theta)
        h = self.h
        return a0 * self.x[j] + a1 * self.x[j + 1] + h * (b0 * self.f[j] + b1 * self.f[j + 1])


def _hermite(theta: float):
    t2 = theta * theta
    t3 = t2 * theta
    return (2 * t3 - 3 * t2 + 1, -2 * t3 + 3 * t2, t3 - 2 * t2 + theta, t3 - t2)


def _stage_offsets(D: float, h: float):
    """For stage fractions 0, 1/2, 1: grid-index offset and Hermite weights.

    The delayed time of stage ``c`` in step ``n`` is ``(n - o) h + theta h``
    with ``o`` and ``theta`` independent of ``n``.
    """
    m = math.floor(D / h)
    r = D - m * h
    if r > h * (1 - 1e-12):
        m, r = m + 1, 0.0
    if r < 1e-12 * h:
        r = 0.0
    out = []
    for c in (0.0, 0.5, 1.0):
        u = c * h - r
        o = m
        if u < 0:
            u += h
            o += 1
        elif u >= h:
            u -= h
            o -= 1
        out.append((o, _hermite(u / h)))
    return out


def integrate(m: LayerMatrices, delays, x0, opts: SimOptions = SimOptions()) -> Trajectory:
    """Integrate the delayed closed loop from ``x0`` up to ``opts.t_end``.

    ``delays`` are the round-trip delays ``D_2 .. D_M``. On overflow the run
    stops early and the trajectory is classified Diverging.
    """
    x0 = np.asarray(x0, dtype=float)
    N = m.N
    if x0.shape != (N,):
        raise DomainError(f"initial state has shape {x0.shape}, expected ({N},)")
    D = np.asarray(delays, dtype=float).reshape(-1)
    if D.size != m.M - 1:
        raise DomainError(f"expected {m.M - 1} delays, got {D.size}")
    if np.any(D < 0):
        raise DomainError("delays must be nonnegative")
    if not opts.t_end > 0:
        raise DomainError("t_end must be positive")
    h = opts.resolve_step(D)
    if not h > 0:
        raise DomainError("step must be positive")
    positive = D[D > 0]
    if positive.size and h > positive.min():
        raise DomainError(f"step {h} exceeds the smallest positive delay {positive.min()}")
    if opts.stride < 1:
        raise DomainError("stride must be >= 1")

    n_steps = int(round(opts.t_end / h))
    L1 = m.effective[0]
    # delay-free layers fold into the instantaneous matrix
    A = L1 + sum((m.effective[l + 1] for l in range(D.size) if D[l] == 0), np.zeros_like(L1))
    delayed = [(float(D[l]), m.effective[l + 1]) for l in range(D.size) if D[l] > 0]

    a_weights = np.diag(m.K)
    w = a_weights / a_weights.sum()
    hist = _History(n_steps, N, h)

    # Propagate one RK4 step as x+ = P x + Q1 g1 + Q2 g2 + Q4 g4 where g_c is
    # the summed delayed feedback at stage fraction c (k2 and k3 share g2).
    I = np.eye(N)
    Ah = h * A
    P = I - Ah + Ah @ Ah / 2 - Ah @ Ah @ Ah / 6 + Ah @ Ah @ Ah @ Ah / 24
    Q1 = -(h / 6) * (I - Ah + Ah @ Ah / 2 - Ah @ Ah @ Ah / 4)
    Q2 = -(h / 6) * (4 * I - 2 * Ah + Ah @ Ah / 2)
    Q4 = -(h / 6) * I

    # Hermite weights act on the raveled rows [x_j, f_j, x_j+1, f_j+1]
    plans = []
    for d, Ld in delayed:
        stages = []
        for o, (a0, a1, b0, b1) in _stage_offsets(d, h):
            stages.append((o, np.hstack([a0 * Ld, h * b0 * Ld, a1 * Ld, h * b1 * Ld])))
        plans.append(stages)

    splits = {}
    if opts.align_activation:
        for d, _ in delayed:
            n = int(math.floor(d / h))
            if abs(d - n * h) > 1e-12 * h and n < n_steps:
                splits.setdefault(n, []).append(d)

    row = 2 * N

    def feedback(n: int, c: int) -> np.ndarray:
        g = np.zeros(N)
        for stages in plans:
            o, W = stages[c]
            j = n - o
            if j >= 0:
                g += W @ hist.flat[j * row:(j + 2) * row]
        return g

    def rhs_at(t: float, x: np.ndarray, left: bool = False) -> np.ndarray:
        out = -A @ x
        for d, Ld in delayed:
            if t > d or (t == d and not left):
                out -= Ld @ hist.at(t - d)
        return out

    # Once every delayed term is active all history reads are fixed-offset
    # gathers, so stages 2-4 collapse into one matrix acting on one gather.
    Q = {1: Q2, 2: Q4}
    gather_late = np.concatenate(
        [np.arange(-st[c][0] * row, (2 - st[c][0]) * row) for st in plans for c in (1, 2)]
        or [np.zeros(0, dtype=int)]).astype(np.intp)
    G_late = np.hstack([Q[c] @ st[c][1] for st in plans for c in (1, 2)] or [np.zeros((N, 0))])
    gather_first = np.concatenate(
        [np.arange(-st[0][0] * row, (2 - st[0][0]) * row) for st in plans] or [np.zeros(0, dtype=int)]
    ).astype(np.intp)
    G_first = np.hstack([st[0][1] for st in plans] or [np.zeros((N, 0))])
    fast_from = max([st[c][0] for st in plans for c in range(3)], default=0)
    negA = -A
    flat = hist.flat

    n_samples = n_steps // opts.stride + 1
    times = np.empty(n_samples)
    states = np.empty((n_samples, N))
    cons = np.empty(n_samples)

    x = x0.copy()
    hist.x[0] = x
    g1 = feedback(0, 0)
    hist.f[0] = negA @ x - g1
    times[0], states[0], cons[0] = 0.0, x, a_weights @ x
    k = 1
    overflow = False
    last_n = 0
    if not plans:
        # delay-free: the RK4 step is the fixed linear map P, so jump a whole stride at once
        P_stride = np.linalg.matrix_power(P, opts.stride)
        for k in range(1, n_samples):
            x = P_stride @ x
            if not x.dot(x) < 1e300:
                overflow = True
                log.warning("state overflow near t=%.6g; stopping", k * opts.stride * h)
                break
            times[k], states[k], cons[k] = k * opts.stride * h, x, a_weights @ x
            last_n = k * opts.stride
        else:
            k = n_samples
        n_steps = 0
    for n in range(n_steps):
        if n in splits:
            x = _split_step(rhs_at, n * h, h, x, sorted(splits[n]))
        elif n >= fast_from and plans:
            x = P @ x + Q1 @ g1 + G_late @ flat.take(gather_late + n * row)
        else:
            x = P @ x + Q1 @ g1 + Q2 @ feedback(n, 1) + Q4 @ feedback(n, 2)
        if not x.dot(x) < 1e300:
            overflow = True
            log.warning("state overflow near t=%.6g; stopping", (n + 1) * h)
            break
        if n + 1 >= fast_from and plans:
            g1 = G_first @ flat.take(gather_first + (n + 1) * row)
        else:
            g1 = feedback(n + 1, 0)
        packed = hist.packed[n + 1]
        packed[:N] = x
        packed[N:] = negA @ x - g1
        last_n = n + 1
        if (n + 1) % opts.stride == 0:
            times[k], states[k], cons[k] = (n + 1) * h, x, a_weights @ x
            k += 1
    traj = Trajectory(
        times=times[:k], states=states[:k], conservation=cons[:k], step=h, delays=D,
        consensus=float(w @ x0), overflow=overflow,
        meta={"steps": last_n, "stride": opts.stride, "align_activation": opts.align_activation},
    )
    traj.classification = classify(traj, opts)
    return traj


def _split_step(rhs_at, t0: float, h: float, x: np.ndarray, cuts) -> np.ndarray:
    """One RK4 step broken at activation instants inside ``(t0, t0 + h)``."""
    points = [t0] + [c for c in cuts if t0 < c < t0 + h] + [t0 + h]
    for a, b in zip(points[:-1], points[1:]):
        dt = b - a
        k1 = rhs_at(a, x)
        k2 = rhs_at(a + dt / 2, x + dt / 2 * k1)
        k3 = rhs_at(a + dt / 2, x + dt / 2 * k2)
        # an interior end point is an activation instant: use the left limit
        k4 = rhs_at(b, x + dt * k3, left=b < t0 + h)
        x = x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def _window(traj: Trajectory, lo: float, hi: float) -> np.ndarray:
    mask = (traj.times >= lo) & (traj.times <= hi)
    return traj.states[mask]


def classify(traj: Trajectory, opts: SimOptions = SimOptions(), binding_lambda: Optional[float] = None) -> Classification:
    """Label a trajectory by comparing its last two windows.

    The deviation ``e(t) = max_i |x_i(t) - c|`` is measured against the
    predicted consensus ``c``. Converged if ``e <= tol`` over the last window;
    Diverging on overflow or if the peak deviation grows more than tenfold
    between the preceding and the last window; CriticalOscillation if the
    peak-to-peak range of ``e`` in the last window is within [0.8, 1.2] of
    the preceding window's and exceeds ``tol``; otherwise Inconclusive.
    """
    c = traj.consensus
    if traj.overflow:
        return Classification(DIVERGING, detail="state overflow")
    t_end = traj.times[-1]
    span = opts.window * t_end
    if traj.delays.size and t_end < 4 * float(np.max(traj.delays)):
        return Classification(INCONCLUSIVE, detail="horizon shorter than 4 x largest delay")
    if binding_lambda and binding_lambda > 0 and span < 2 * math.pi / binding_lambda:
        return Classification(INCONCLUSIVE, detail="window shorter than one oscillation period")
    last = np.max(np.abs(_window(traj, t_end - span, t_end) - c), axis=1)
    prev = np.max(np.abs(_window(traj, t_end - 2 * span, t_end - span) - c), axis=1)
    if last.size < 2 or prev.size < 2:
        return Classification(INCONCLUSIVE, detail="too few samples per window")
    p2p_last = float(last.max() - last.min())
    p2p_prev = float(prev.max() - prev.min())
    if last.max() <= opts.tol:
        return Classification(CONVERGED, c, p2p_last, p2p_prev)
    if last.max() > 10 * prev.max():
        return Classification(DIVERGING, None, p2p_last, p2p_prev, "deviation grew more than tenfold")
    if p2p_last > opts.tol and p2p_prev > 0 and 0.8 <= p2p_last / p2p_prev <= 1.2:
        return Classification(CRITICAL_OSCILLATION, None, p2p_last, p2p_prev)
    return Classification(INCONCLUSIVE, None, p2p_last, p2p_prev)


def conservation_series(traj: Trajectory, K=None) -> float:
    """Largest drift of the weighted total ``1'K x(t)`` from its initial value."""
    if traj.times.size < 2:
        raise DomainError("need at least two samples")
    if K is None:
        series = traj.conservation
    else:
        a = np.diag(K) if np.ndim(K) == 2 else np.asarray(K, dtype=float)
        series = traj.states @ a
    return float(np.max(np.abs(series - series[0])))


def expm_oracle(L: np.ndarray, x0, t: float) -> np.ndarray:
    """Delay-free reference solution ``exp(-L t) x0``."""
    if t < 0:
        raise DomainError("t must be nonnegative")
    return expm(-np.asarray(L, dtype=float) * t) @ np.asarray(x0, dtype=float)
