"""Generator power sharing on top of the hierarchy model.

Each physical node is a generator with capacity ``p_max``; its state is the
output ratio ``x_i = p_i / p_max_i`` and its physical weight is ``p_max_i``,
so the weighted total ``1'K x`` is the fleet's total output.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError
from .hierarchy import HierarchySpec, assemble, fig1
from .spectral import layer_spectrum

BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class GeneratorFleet:
    p_max: tuple
    p_init: tuple
    demand: Optional[float] = None

    @property
    def total_demand(self) -> float:
        return math.fsum(self.p_init) if self.demand is None else float(self.demand)

    def check(self) -> None:
        if len(self.p_max) != len(self.p_init):
            raise DomainError(f"{len(self.p_max)} capacities but {len(self.p_init)} initial outputs")
        for i, (cap, p) in enumerate(zip(self.p_max, self.p_init), start=1):
            if not (math.isfinite(cap) and cap > 0):
                raise DomainError(f"generator {i}: capacity {cap} must be positive")
            if not 0 <= p <= cap:
                raise DomainError(f"generator {i}: initial output {p} outside [0, {cap}]")
        deficit = self.total_demand - math.fsum(self.p_init)
        if abs(deficit) > BALANCE_TOL:
            raise DomainError(f"fleet is not balanced: demand exceeds supply by {deficit:.12g} MW")


def build_scenario(fleet: GeneratorFleet, topology: HierarchySpec):
    """Attach ``fleet`` to ``topology``; returns ``(spec, x0)``."""
    fleet.check()
    if topology.n_physical and topology.n_physical != len(fleet.p_max):
        raise DomainError(f"topology has {topology.n_physical} physical nodes, fleet has {len(fleet.p_max)}")
    spec = HierarchySpec(topology.layers, tuple(float(p) for p in fleet.p_max), topology.hop_delays)
    x0 = np.asarray(fleet.p_init, dtype=float) / np.asarray(fleet.p_max, dtype=float)
    return spec, x0


@dataclass
class PowerReport:
    final_ratio: np.ndarray
    final_powers: np.ndarray
    balance_max_dev: float
    verdict: str

    def to_json(self) -> dict:
        return {
            "final_ratio": [float(v) for v in self.final_ratio],
            "final_powers": [float(v) for v in self.final_powers],
            "balance_max_dev": self.balance_max_dev,
            "verdict": self.verdict,
        }


def power_report(traj, fleet: GeneratorFleet) -> PowerReport:
    """Final ratios and powers plus the worst supply-demand mismatch over time."""
    cap = np.asarray(fleet.p_max, dtype=float)
    powers = traj.states * cap
    balance = float(np.max(np.abs(powers.sum(axis=1) - fleet.total_demand)))
    verdict = str(traj.classification) if traj.classification is not None else "unclassified"
    return PowerReport(traj.final.copy(), powers[-1], balance, verdict)


FIG1_P_MAX = (0.8, 0.7, 1.5, 1.0, 0.8, 1.2)
FIG1_P_INIT = (0.24, 0.56, 0.9, 0.9, 0.56, 0.24)
FIG1_DEMAND = 3.4

FIG1_CASES = {
    1: (math.pi / 7, math.pi / 9),
    2: (math.pi / 6, math.pi / 6),
    3: (3 * math.pi / 16, math.pi / 12),
    4: (3 * math.pi / 16, 7 * math.pi / 48),
}


def fig1_fleet() -> GeneratorFleet:
    return GeneratorFleet(FIG1_P_MAX, FIG1_P_INIT, FIG1_DEMAND)


def verify_fig1(spec: HierarchySpec = None, tol: float = 1e-12) -> tuple:
    """Check the reconstructed topology against the published eigenvalues.

    Returns ``(lambda_max_2, lambda_max_3)``; raises AssertionError if either
    is off by more than ``tol``.
    """
    m = assemble(spec or fig1())
    lam2 = float(layer_spectrum(m, 2)[-1])
    lam3 = float(layer_spectrum(m, 3)[-1])
    if abs(lam2 - 4.0 / 3.0) > tol or abs(lam3 - 0.75) > tol:
        raise AssertionError(f"fig1 reconstruction gives lambda_max = ({lam2!r}, {lam3!r})")
    return lam2, lam3
