"""Complex Lambert W function, any branch, by Halley iteration."""
from __future__ import annotations

import cmath
import math

from .errors import NumericalError

_INV_E = math.exp(-1.0)


def _initial_guess(z: complex, k: int) -> complex:
    if k == 0:
        if abs(z + _INV_E) <= 0.3:
            # branch-point expansion in p = sqrt(2(ez + 1))
            p = cmath.sqrt(2.0 * (math.e * z + 1.0))
            return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p ** 3
        if abs(z) <= 0.3:
            return z - z * z + 1.5 * z ** 3
        if z.real >= -0.4 and abs(z) <= 3.0:
            return cmath.log(1.0 + z)
    if k == -1 and abs(z + _INV_E) <= 0.3 and z.imag >= 0:
        p = cmath.sqrt(2.0 * (math.e * z + 1.0))
        return -1.0 - p - p * p / 3.0
    if z == 0:
        return complex(-math.inf)
    L1 = cmath.log(z) + 2j * math.pi * k
    return L1 - cmath.log(L1)


def lambertw(z, k: int = 0, tol: float = 1e-15, max_iter: int = 100) -> complex:
    """Return ``W_k(z)``, the solution ``w`` of ``w e^w = z`` on branch ``k``.

    Branch cuts follow the usual convention: for real ``z < -1/e`` (taken
    with a +0 imaginary part) the principal branch has ``0 < Im W < pi``.
    """
    z = complex(z)
    if z == 0:
        if k == 0:
            return 0j
        raise ValueError("W_k(0) is -inf for k != 0")
    if cmath.isinf(z) or cmath.isnan(z):
        raise ValueError(f"lambertw undefined for z = {z}")
    if k == 0 and abs(z + _INV_E) < 1e-15:
        return complex(-1.0)
    w = _initial_guess(z, k)
    for _ in range(max_iter):
        ew = cmath.exp(w)
        f = w * ew - z
        wp1 = w + 1.0
        if f == 0 or wp1 == 0:
            return w
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= tol * (1.0 + abs(w)):
            return w
    # near the branch point Halley stalls once the residual hits rounding level
    if abs(w * cmath.exp(w) - z) <= 1e-14 * abs(z):
        return w
    raise NumericalError(f"Halley iteration for W_{k}({z}) did not converge in {max_iter} steps")
