"""
MZI transfer matrices and mesh composition.

Convention: T = C(t2) . P(theta) . C(t1) . P_ext(phi) with the symmetric coupler
C(t) = [[sqrt(t), i sqrt(1-t)], [i sqrt(1-t), sqrt(t)]]; both phases sit on the
top arm. With ideal couplers |T_00|^2 = sin^2(theta / 2).
"""
import numpy as np

from ..core import ComplexMatrix, Unitary
from ..errors import ValidationError
from .layout import MeshLayout

TWO_PI = 2 * np.pi


def canonical_phases(phases) -> np.ndarray:
    """Floored modulo into [0, 2pi)."""
    wrapped = np.mod(np.asarray(phases, dtype=float), TWO_PI)
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


def _check_transmissivity(*values):
    for t in values:
        if np.any(~np.isfinite(t)) or np.any((np.asarray(t) < 0) | (np.asarray(t) > 1)):
            raise ValidationError(f"Coupler transmissivity {t} outside [0, 1]")


def coupler_matrix(t: float) -> np.ndarray:
    _check_transmissivity(t)
    a, b = np.sqrt(t), np.sqrt(1 - t)
    return np.array([[a, 1j * b], [1j * b, a]])


def mzi_blocks(phi, theta, t1, t2) -> np.ndarray:
    """Vectorized MZI transfer: phases of shape (B,) give blocks of shape (B, 2, 2)."""
    e = np.exp(1j * np.asarray(phi, dtype=float))
    f = np.exp(1j * np.asarray(theta, dtype=float))
    a1, b1 = np.sqrt(t1), np.sqrt(1 - t1)
    a2, b2 = np.sqrt(t2), np.sqrt(1 - t2)
    out = np.empty(np.shape(e) + (2, 2), dtype=complex)
    out[..., 0, 0] = e * (a1 * a2 * f - b1 * b2)
    out[..., 0, 1] = 1j * (a2 * b1 * f + a1 * b2)
    out[..., 1, 0] = 1j * e * (a1 * b2 * f + a2 * b1)
    out[..., 1, 1] = a1 * a2 - b1 * b2 * f
    return out


def mzi_transfer(phi: float, theta: float, t1: float = 0.5, t2: float = 0.5) -> ComplexMatrix:
    _check_transmissivity(t1, t2)
    return ComplexMatrix(mzi_blocks(phi, theta, t1, t2))


def _batched_phases(layout: MeshLayout, phases) -> tuple:
    phases = np.asarray(phases, dtype=float)
    squeeze = phases.ndim == 1
    phases = np.atleast_2d(phases)
    if phases.shape[-1] != layout.n_heaters:
        raise ValidationError(f"Expected {layout.n_heaters} phases, got {phases.shape[-1]}")
    if not np.all(np.isfinite(phases)):
        raise ValidationError("Phases must be finite")
    return phases, squeeze


def propagate(layout: MeshLayout, phases, state: np.ndarray | None = None) -> np.ndarray:
    """
    Applies the mesh to `state` of shape (B, n, m) for phases of shape (B, H).
    Without a state the full transfer matrices (B, n, n) are returned.
    """
    phases, _ = _batched_phases(layout, phases)
    batch, n = phases.shape[0], layout.n_modes
    if state is None:
        state = np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n))
    state = np.array(state, dtype=complex)

    for node in layout.nodes:
        k = node.top_mode
        block = mzi_blocks(phases[:, node.phi_heater], phases[:, node.theta_heater], node.t1, node.t2)
        state[:, k:k + 2, :] = block @ state[:, k:k + 2, :]
    if layout.has_output_phase_screen:
        screen = phases[:, layout.screen_heaters.start:layout.screen_heaters.stop]
        state *= np.exp(1j * screen)[:, :, None]
    return state


def batch_unitaries(layout: MeshLayout, phases) -> np.ndarray:
    return propagate(layout, phases)


def mesh_unitary(layout: MeshLayout, phases) -> Unitary:
    phases, squeeze = _batched_phases(layout, phases)
    if not squeeze:
        raise ValidationError("mesh_unitary takes a single phase vector; use batch_unitaries")
    return Unitary(propagate(layout, phases)[0])


def transfer_jacobian(layout: MeshLayout, phases):
    """
    Transfer matrices and their derivatives by forward/adjoint accumulation.

    Returns U (B, n, n), dU/dphase (B, n, n, H) and dU/dt (B, n, n, 2 * n_nodes)
    where coupler column 2i is t1 and 2i+1 is t2 of node i.
    """
    phases, _ = _batched_phases(layout, phases)
    batch, n, n_heaters = phases.shape[0], layout.n_modes, layout.n_heaters

    # Elementary operations in optical order: ("phase", heater, mode) or ("coupler", column, mode, t).
    ops = []
    for i, node in enumerate(layout.nodes):
        k = node.top_mode
        ops += [("phase", node.phi_heater, k), ("coupler", 2 * i, k, node.t1),
                ("phase", node.theta_heater, k), ("coupler", 2 * i + 1, k, node.t2)]
    for mode, h in enumerate(layout.screen_heaters):
        ops.append(("phase", h, mode))

    forward = np.array(np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n)))
    saved = []
    for op in ops:
        k = op[2]
        if op[0] == "phase":
            forward[:, k, :] *= np.exp(1j * phases[:, op[1]])[:, None]
            saved.append(forward[:, k, :].copy())
        else:
            saved.append(forward[:, k:k + 2, :].copy())
            forward[:, k:k + 2, :] = coupler_matrix(op[3]) @ forward[:, k:k + 2, :]

    d_phase = np.zeros((batch, n, n, n_heaters), dtype=complex)
    d_coupler = np.zeros((batch, n, n, layout.n_couplers), dtype=complex)
    suffix = np.array(np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n)))
    for op, rows in zip(reversed(ops), reversed(saved)):
        k = op[2]
        if op[0] == "phase":
            d_phase[..., op[1]] = 1j * suffix[:, :, k, None] * rows[:, None, :]
            suffix[:, :, k] *= np.exp(1j * phases[:, op[1]])[:, None]
        else:
            t = op[3]
            a, b = np.sqrt(t), np.sqrt(1 - t)
            d_c = np.array([[0.5 / a, -0.5j / b], [-0.5j / b, 0.5 / a]])
            d_coupler[..., op[1]] = suffix[:, :, k:k + 2] @ d_c @ rows
            suffix[:, :, k:k + 2] = suffix[:, :, k:k + 2] @ coupler_matrix(t)
    return forward, d_phase, d_coupler
