from .decomposition import clements_decompose
from .layout import (
    IDEAL_TRANSMISSIVITY,
    MeshLayout,
    MZINode,
    gauge_directions,
    input_phase_gauge,
    standard_layout,
)
from .transfer import (
    TWO_PI,
    batch_unitaries,
    canonical_phases,
    coupler_matrix,
    mesh_unitary,
    mzi_blocks,
    mzi_transfer,
    propagate,
    transfer_jacobian,
)
