"""
Unitary -> phase decomposition for the rectangular mesh by successive nulling.

Even passes null entries from the right with inverse MZIs, odd passes from the
left with MZIs; the left-hand MZIs are then moved through the remaining
diagonal, whose phases end up on the output phase screen.
"""
import logging

import numpy as np

from ..core import Unitary
from ..errors import DecompositionError, ValidationError
from .layout import MeshLayout
from .transfer import canonical_phases, mzi_blocks

logger = logging.getLogger(__name__)


def _ideal_block(phi: float, theta: float) -> np.ndarray:
    return mzi_blocks(phi, theta, 0.5, 0.5)


def _null_from_right(v: np.ndarray, row: int, col: int) -> tuple:
    """Zeroes v[row, col] by v <- v . T^-1 acting on columns (col, col + 1)."""
    a, b = v[row, col], v[row, col + 1]
    theta = 2 * np.arctan2(abs(b), abs(a))
    phi = np.angle(a) - np.angle(b) - np.pi
    v[:, col:col + 2] = v[:, col:col + 2] @ _ideal_block(phi, theta).conj().T
    return col, phi, theta


def _null_from_left(v: np.ndarray, row: int, col: int) -> tuple:
    """Zeroes v[row, col] by v <- T . v acting on rows (row - 1, row)."""
    u, w = v[row - 1, col], v[row, col]
    theta = 2 * np.arctan2(abs(u), abs(w))
    phi = np.angle(w) - np.angle(u)
    v[row - 1:row + 1, :] = _ideal_block(phi, theta) @ v[row - 1:row + 1, :]
    return row - 1, phi, theta


def _commute_through_diagonal(phi: float, theta: float, d_top: complex, d_bottom: complex) -> tuple:
    """Rewrites T(phi, theta)^-1 . diag(d_top, d_bottom) as diag(d_top', d_bottom') . T(phi', theta')."""
    b = _ideal_block(phi, theta).conj().T @ np.diag([d_top, d_bottom])
    s, c = abs(b[0, 0]), abs(b[0, 1])
    norm = np.hypot(s, c)
    s, c = s / norm, c / norm
    theta_new = 2 * np.arctan2(s, c)
    g = 1j * np.exp(0.5j * theta_new)

    if c > 0:
        top = b[0, 1] / (g * c)
        phi_new = float(np.angle(b[0, 0] / (top * g))) if s > 0 else 0.0
    else:
        phi_new = 0.0
        top = b[0, 0] / (g * s)
    if s >= c:
        bottom = -b[1, 1] / (g * s)
    else:
        bottom = b[1, 0] / (g * np.exp(1j * phi_new) * c)
    return phi_new, theta_new, top / abs(top), bottom / abs(bottom)


def _place_on_layout(layout: MeshLayout, sequence: list, screen: np.ndarray) -> np.ndarray:
    """Assigns MZIs, given in optical order, to the earliest free node of matching parity."""
    slots = {(node.layer, node.top_mode): i for i, node in enumerate(layout.nodes)}
    next_layer = np.zeros(layout.n_modes, dtype=int)
    filled = np.zeros(layout.n_nodes, dtype=bool)
    phases = np.zeros(layout.n_heaters)

    for top, phi, theta in sequence:
        layer = max(next_layer[top], next_layer[top + 1])
        if (layer - top) % 2:
            layer += 1
        index = slots.get((layer, top))
        if index is None or filled[index]:
            raise DecompositionError(f"No free mesh node for an MZI on modes ({top}, {top + 1})")
        node = layout.nodes[index]
        phases[node.phi_heater], phases[node.theta_heater] = phi, theta
        filled[index] = True
        next_layer[top] = next_layer[top + 1] = layer + 1

    for index in np.flatnonzero(~filled):
        # theta = phi = pi is the identity setting of an ideal MZI
        node = layout.nodes[index]
        phases[node.phi_heater] = phases[node.theta_heater] = np.pi
    phases[list(layout.screen_heaters)] = screen
    return canonical_phases(phases)


def clements_decompose(target, layout: MeshLayout) -> np.ndarray:
    """
    Phases (one per heater, canonical in [0, 2pi)) with
    mesh_unitary(layout, phases) == target.
    """
    if not isinstance(target, Unitary):
        target = Unitary(target)
    n = layout.n_modes
    if target.n_modes != n:
        raise ValidationError(f"Target is {target.n_modes}x{target.n_modes}, layout has {n} modes")
    if not layout.is_ideal():
        raise ValidationError("Decomposition requires ideal (t = 0.5) couplers")
    if not layout.has_output_phase_screen:
        raise ValidationError("Decomposition requires an output phase screen")

    v = np.array(target.data)
    right_ops, left_ops = [], []
    for i in range(n - 1):
        if i % 2 == 0:
            for j in range(i + 1):
                right_ops.append(_null_from_right(v, n - 1 - j, i - j))
        else:
            for j in range(i + 1):
                left_ops.append(_null_from_left(v, n + j - i - 1, j))

    diagonal = np.diag(v).copy()
    sequence = list(right_ops)
    for top, phi, theta in reversed(left_ops):
        phi_new, theta_new, d_top, d_bottom = _commute_through_diagonal(
            phi, theta, diagonal[top], diagonal[top + 1])
        diagonal[top], diagonal[top + 1] = d_top, d_bottom
        sequence.append((top, phi_new, theta_new))

    logger.debug(f"Decomposed {n}x{n} unitary into {len(sequence)} MZIs")
    return _place_on_layout(layout, sequence, np.angle(diagonal))
