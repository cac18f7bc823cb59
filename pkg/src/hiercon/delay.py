"""Interlayer-delay stability analysis.

With hop delays ``d_1 .. d_{M-1}``, layer ``l >= 2`` feeds back through a
round trip of ``D_l = 2 (d_1 + ... + d_{l-1})`` seconds, and the
characteristic equation splits into one quasi-polynomial
``s exp(D_l s) + lambda = 0`` per nonzero eigenvalue of that layer. Such an
equation has all roots in the open left half-plane iff
``D_l < pi / (2 lambda)``, so the hierarchy reaches consensus iff
``d_1 + ... + d_{l-1} < pi / (4 lambda_max^(l))`` for every ``l >= 2``.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError
from .hierarchy import HierarchySpec
from .lambertw import lambertw

CRITICAL_TOL = 1e-12

STABLE = "Stable"
CRITICAL = "Critical"
UNSTABLE = "Unstable"


def effective_delays(spec: HierarchySpec) -> np.ndarray:
    """Round-trip delays ``D_2 .. D_M`` (empty for a single layer)."""
    return 2.0 * np.cumsum(np.asarray(spec.hop_delays, dtype=float))


def critical_delay(lam: float) -> float:
    """Largest round-trip delay ``pi / (2 lam)`` keeping ``s e^{Ts} + lam`` stable."""
    if not lam > 0:
        raise DomainError(f"eigenvalue must be positive, got {lam}")
    return math.pi / (2.0 * lam)


def residual_system(sigma: float, omega: float, T: float, lam: float):
    """Real and imaginary parts of ``s e^{Ts} + lam`` at ``s = sigma + i omega``."""
    g = math.exp(sigma * T)
    c, s = math.cos(omega * T), math.sin(omega * T)
    return (sigma * g * c - omega * g * s + lam, sigma * g * s + omega * g * c)


def rightmost_root(T: float, lam: float) -> complex:
    """Root of ``s e^{Ts} + lam = 0`` with the largest real part.

    Substituting ``w = Ts`` gives ``w e^w = -lam T``; the principal Lambert-W
    branch yields the rightmost root. For ``T = 0`` the single root ``-lam``
    is returned. The returned root has ``Im >= 0``; its conjugate is also a
    root.
    """
    if not (T >= 0 and lam > 0):
        raise DomainError(f"need T >= 0 and lam > 0, got T={T}, lam={lam}")
    if T == 0:
        return complex(-lam)
    s = lambertw(-lam * T, 0) / T
    if abs(s * cmath.exp(T * s) + lam) > 1e-10 * lam:
        raise NumericalError(f"Lambert-W root fails residual check at T={T}, lam={lam}")
    return complex(s.real, abs(s.imag))


def newton_root(T: float, lam: float, sigma0: float, omega0: float, tol: float = 1e-14, max_iter: int = 100):
    """Solve the two real residual equations by Newton's method.

    Returns ``(sigma, omega)`` or ``None`` if the iteration does not converge.
    Works directly on the real residual pair, independently of Lambert W.
    """
    x = np.array([sigma0, omega0], dtype=float)
    for _ in range(max_iter):
        sigma, omega = x
        g = math.exp(sigma * T)
        c, s = math.cos(omega * T), math.sin(omega * T)
        r = np.array(residual_system(sigma, omega, T, lam))
        # partial derivatives of (r1, r2) w.r.t. (sigma, omega)
        a = g * (c + sigma * T * c - omega * T * s)
        b = g * (-sigma * T * s - s - omega * T * c)
        J = np.array([[a, b], [-b, a]])
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            return None
        x = x - step
        if not np.all(np.isfinite(x)):
            return None
        if np.max(np.abs(step)) <= tol * max(1.0, np.max(np.abs(x))):
            sigma, omega = x
            if max(abs(v) for v in residual_system(sigma, omega, T, lam)) <= 1e-10 * lam:
                return float(sigma), float(omega)
            return None
    return None


@dataclass
class LayerBound:
    layer: int
    lambda_max: float
    cumulative_delay: float
    effective_delay: float
    bound: float
    margin: float
    rightmost_root: complex = None

    def to_json(self) -> dict:
        root = self.rightmost_root
        return {
            "layer": self.layer,
            "lambda_max": self.lambda_max,
            "cumulative_delay": self.cumulative_delay,
            "effective_delay": self.effective_delay,
            "bound": None if math.isinf(self.bound) else self.bound,
            "margin": None if math.isinf(self.margin) else self.margin,
            "rightmost_root": None if root is None else [root.real, root.imag],
        }


@dataclass
class DelayStabilityReport:
    effective_delays: np.ndarray
    layers: list = field(default_factory=list)
    verdict: str = STABLE
    binding_layers: list = field(default_factory=list)

    @property
    def binding_layer(self):
        return self.binding_layers[0] if self.binding_layers else None

    def to_json(self) -> dict:
        return {
            "effective_delays": [float(d) for d in self.effective_delays],
            "layers": [b.to_json() for b in self.layers],
            "verdict": self.verdict,
            "binding_layer": self.binding_layer,
            "binding_layers": list(self.binding_layers),
        }


def stability_verdict(spec: HierarchySpec, lambda_max, tol: float = CRITICAL_TOL) -> DelayStabilityReport:
    """Check every layer's delay bound.

    ``lambda_max`` is either a SpectralReport or the per-layer list of
    largest eigenvalues (layer 1 first). Layers whose largest eigenvalue is
    zero impose no constraint.
    """
    lam = list(getattr(lambda_max, "lambda_max", lambda_max))
    if len(lam) != spec.M:
        raise DomainError(f"expected {spec.M} eigenvalues, got {len(lam)}")
    D = effective_delays(spec)
    cumulative = np.cumsum(np.asarray(spec.hop_delays, dtype=float))
    report = DelayStabilityReport(D)
    for l in range(2, spec.M + 1):
        lm = float(lam[l - 1])
        cum = float(cumulative[l - 2])
        if lm <= 0:
            report.layers.append(LayerBound(l, lm, cum, float(D[l - 2]), math.inf, math.inf))
            continue
        bound = math.pi / (4.0 * lm)
        report.layers.append(LayerBound(l, lm, cum, float(D[l - 2]), bound, bound - cum,
                                        rightmost_root(float(D[l - 2]), lm)))
    unstable = [b.layer for b in report.layers if b.margin < -tol]
    critical = [b.layer for b in report.layers if abs(b.margin) <= tol]
    if unstable:
        report.verdict, report.binding_layers = UNSTABLE, unstable
    elif critical:
        report.verdict, report.binding_layers = CRITICAL, critical
    else:
        finite = [b for b in report.layers if math.isfinite(b.margin)]
        report.binding_layers = [min(finite, key=lambda b: b.margin).layer] if finite else []
    return report
