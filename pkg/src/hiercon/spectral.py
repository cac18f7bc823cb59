"""Spectra of the layer matrices and the delay-free consensus value.

The nonzero spectrum of the total matrix ``L`` is the union of the nonzero
spectra of the per-layer matrices ``K^(l) L_D^(l)``, plus a single zero.
Each per-layer matrix is similar to the symmetric ``K^1/2 L_D K^1/2``, so
its eigenvalues are real and can be found with a symmetric solver; the full
matrix ``L`` is not symmetric and goes through a general solver instead.
"""
from __future__ import annotations

import cmath
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError
from .hierarchy import HierarchySpec, LayerMatrices, assemble, random_collecting
from .linalg import general_eigvals, jacobi_eigvalsh

ZERO_TOL = 1e-9
MATCH_REL_TOL = 1e-7


def layer_spectrum(m: LayerMatrices, l: int) -> np.ndarray:
    """Ascending eigenvalues of ``K^(l) L_D^(l)`` for 1-based layer ``l``."""
    if not 1 <= l <= m.M:
        raise DomainError(f"layer {l} outside 1..{m.M}")
    k = np.sqrt(np.diag(m.inv_weights[l - 1]))
    Z = k[:, None] * m.laplacians[l - 1] * k[None, :]
    return jacobi_eigvalsh(Z)


def full_spectrum(L: np.ndarray) -> np.ndarray:
    """All eigenvalues of ``L`` sorted by (real, imag)."""
    w = general_eigvals(L)
    return w[np.lexsort((w.imag, w.real))]


def nonzero(values, tol: float = ZERO_TOL) -> np.ndarray:
    values = np.asarray(values)
    return values[np.abs(values) >= tol]


@dataclass
class MultisetMatch:
    ok: bool
    worst: float
    tol: float
    left: np.ndarray
    right: np.ndarray
    reason: str = ""


def match_multisets(a, b, tol: float) -> MultisetMatch:
    """Greedy nearest-neighbour pairing of two complex multisets.

    Elements of ``a`` are visited in (real, imag) order and each takes the
    closest unused element of ``b``. ``worst`` is the largest pairing distance.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    a = a[np.lexsort((a.imag, a.real))]
    b = b[np.lexsort((b.imag, b.real))]
    if a.size != b.size:
        return MultisetMatch(False, float("inf"), tol, a, b, f"sizes differ: {a.size} vs {b.size}")
    used = np.zeros(b.size, dtype=bool)
    worst = 0.0
    for z in a:
        d = np.where(used, np.inf, np.abs(b - z))
        k = int(np.argmin(d))
        used[k] = True
        worst = max(worst, float(d[k]))
    ok = worst <= tol
    return MultisetMatch(ok, worst, tol, a, b, "" if ok else f"worst pairing distance {worst:.3e} > {tol:.3e}")


@dataclass
class UnionCheck:
    ok: bool
    zero_count: int
    match: MultisetMatch
    predicted: np.ndarray
    actual: np.ndarray


def _union_tol(*spectra) -> float:
    radius = max((float(np.max(np.abs(s))) for s in spectra if len(s)), default=0.0)
    return MATCH_REL_TOL * max(1.0, radius)


def union_check(m: LayerMatrices) -> UnionCheck:
    """Compare the spectrum of ``L`` with {0} plus the per-layer nonzero spectra."""
    parts = [np.zeros(1)]
    for l in range(1, m.M + 1):
        parts.append(nonzero(layer_spectrum(m, l)))
    predicted = np.concatenate(parts).astype(complex)
    actual = full_spectrum(m.total)
    zeros = int(np.sum(np.abs(actual) < ZERO_TOL))
    match = match_multisets(predicted, actual, _union_tol(predicted, actual))
    return UnionCheck(match.ok and zeros == 1, zeros, match, predicted, actual)


def scaled_union_check(m: LayerMatrices, scales) -> UnionCheck:
    """Same as :func:`union_check` for ``sum_l s_l L^(l)`` with nonzero ``s_l``."""
    scales = [complex(s) for s in scales]
    if len(scales) != m.M:
        raise DomainError(f"expected {m.M} scale factors, got {len(scales)}")
    if any(s == 0 for s in scales):
        raise DomainError("scale factors must be nonzero")
    parts = [np.zeros(1, dtype=complex)]
    for l, s in enumerate(scales, start=1):
        parts.append(s * nonzero(layer_spectrum(m, l)))
    predicted = np.concatenate(parts)
    Ls = sum(s * E for s, E in zip(scales, m.effective))
    actual = full_spectrum(Ls)
    zeros = int(np.sum(np.abs(actual) < ZERO_TOL))
    match = match_multisets(predicted, actual, _union_tol(predicted, actual))
    return UnionCheck(match.ok and zeros == 1, zeros, match, predicted, actual)


def consensus_weights(m: LayerMatrices) -> np.ndarray:
    a = np.diag(m.K)
    return a / a.sum()


def consensus_value(m: LayerMatrices, x0):
    """Weights ``w = K1 / 1'K1`` and the delay-free consensus ``w'x0``."""
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (m.N,):
        raise DomainError(f"initial state has shape {x0.shape}, expected ({m.N},)")
    w = consensus_weights(m)
    return w, float(w @ x0)


@dataclass
class CInvarianceResult:
    ok: bool
    trials: int
    worst_layer: float
    worst_total: float
    failures: list = field(default_factory=list)


def c_invariance_check(spec: HierarchySpec, trials: int, rng=None, rel_tol: float = 1e-8) -> CInvarianceResult:
    """Redraw every collecting row ``trials`` times and compare spectra.

    For each redraw the nonzero spectrum of each effective layer matrix
    ``L^(l)`` (general solver) must equal the baseline per-layer spectrum,
    and the full spectrum of ``L`` must match the baseline multiset.
    """
    if trials < 1:
        raise DomainError("trials must be >= 1")
    rng = np.random.default_rng(42) if rng is None else rng
    base = assemble(spec)
    if base.M == 1:
        return CInvarianceResult(True, trials, 0.0, 0.0)
    base_layers = [layer_spectrum(base, l) for l in range(1, base.M + 1)]
    base_total = full_spectrum(base.total)
    base_w = consensus_weights(base)
    worst_layer = worst_total = 0.0
    failures = []
    for t in range(trials):
        m = assemble(random_collecting(spec, rng))
        for l, ref in enumerate(base_layers, start=1):
            got = nonzero(full_spectrum(m.effective[l - 1]))
            want = nonzero(ref)
            tol = rel_tol * max(1.0, float(np.max(np.abs(want), initial=0.0)))
            res = match_multisets(want, got, tol)
            worst_layer = max(worst_layer, res.worst)
            if not res.ok:
                failures.append((t, l, res.reason))
        tol = rel_tol * max(1.0, float(np.max(np.abs(base_total))))
        res = match_multisets(base_total, full_spectrum(m.total), tol)
        worst_total = max(worst_total, res.worst)
        if not res.ok:
            failures.append((t, "total", res.reason))
        if not np.array_equal(consensus_weights(m), base_w):
            failures.append((t, "weights", "consensus weights changed"))
    return CInvarianceResult(not failures, trials, worst_layer, worst_total, failures)


@dataclass
class SpectralReport:
    layer_eigenvalues: list
    lambda_max: list
    full: np.ndarray
    zero_count: int
    consensus_weights: np.ndarray
    union_ok: bool
    consensus_value: float = None

    def to_json(self) -> dict:
        out = {
            "layer_eigenvalues": [[float(v) for v in ev] for ev in self.layer_eigenvalues],
            "lambda_max": [float(v) for v in self.lambda_max],
            "full_spectrum": [[float(z.real), float(z.imag)] for z in self.full],
            "zero_count": self.zero_count,
            "union_check": "pass" if self.union_ok else "fail",
            "consensus_weights": [float(v) for v in self.consensus_weights],
        }
        if self.consensus_value is not None:
            out["consensus_value"] = self.consensus_value
        return out


def spectral_report(m: LayerMatrices, x0=None) -> SpectralReport:
    layers = [layer_spectrum(m, l) for l in range(1, m.M + 1)]
    lam_max = [max(float(ev[-1]), 0.0) for ev in layers]
    check = union_check(m)
    c = consensus_value(m, x0)[1] if x0 is not None else None
    return SpectralReport(layers, lam_max, check.actual, check.zero_count, consensus_weights(m), check.ok, c)


def unit_phases(*angles) -> tuple:
    """``exp(-i * angle)`` for each angle; convenience for scaled checks."""
    return tuple(cmath.exp(-1j * a) for a in angles)
