"""Consensus analysis and simulation for layered multi-agent hierarchies."""
from .hierarchy import (
    GroupSpec,
    HierarchySpec,
    LayerMatrices,
    LayerSpec,
    assemble,
    block_structure_check,
    fig1,
    group_laplacian,
    physical_numbers,
    physical_weights_all,
    validate,
)
from .spectral import (
    c_invariance_check,
    consensus_value,
    full_spectrum,
    layer_spectrum,
    scaled_union_check,
    spectral_report,
    union_check,
)
from .delay import critical_delay, effective_delays, residual_system, rightmost_root, stability_verdict
from .dde_sim import SimOptions, Trajectory, classify, conservation_series, expm_oracle, integrate
from .powershare import GeneratorFleet, build_scenario, power_report

__version__ = "0.1.0"
