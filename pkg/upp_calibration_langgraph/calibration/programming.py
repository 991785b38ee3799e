"""Programming target unitaries through a fitted model."""
import logging
from dataclasses import dataclass

import numpy as np

from ..core import Unitary
from ..errors import LayoutMismatchError
from ..mesh import MeshLayout, canonical_phases, clements_decompose, propagate, transfer_jacobian
from ..thermal import phases_from_powers, powers_for_phases, wrapped_phase_error
from .model import CalibrationModel
from .optimizer import LevenbergMarquardt

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ProgramPlan:
    phases: np.ndarray
    powers: np.ndarray
    phase_residual: float
    model_error: float


def _as_unitary(target) -> Unitary:
    return target if isinstance(target, Unitary) else Unitary(target)


def refine_phases(layout: MeshLayout, target, phases, max_iterations: int = 100) -> tuple:
    """
    Phase-only refinement on imperfect couplers: minimizes
    ||U(phases) diag(exp(i beta)) - target||_F^2 with free input phases beta.

    Returns (phases, Frobenius error).
    """
    t = _as_unitary(target).data
    n, h = layout.n_modes, layout.n_heaters

    def split(x):
        return x[:h], x[h:]

    def residual_and_jacobian(x):
        phases_x, beta = split(x)
        u, du, _ = transfer_jacobian(layout, phases_x[None, :])
        u, du = u[0], du[0]
        d = np.exp(1j * beta)
        r = u * d[None, :] - t
        jac = np.zeros((n, n, h + n), dtype=complex)
        jac[..., :h] = du * d[None, :, None]
        for k in range(n):
            jac[:, k, h + k] = 1j * u[:, k] * d[k]
        return r, jac.reshape(n * n, -1)

    def loss(x, rows=None):
        phases_x, beta = split(x)
        u = propagate(layout, phases_x[None, :])
        r = u[0] * np.exp(1j * beta)[None, :] - t
        return float(np.sum(np.abs(r) ** 2))

    def normal_equations(x, rows=None):
        r, jac = residual_and_jacobian(x)
        jac_real = np.concatenate([jac.real, jac.imag])
        r_real = np.concatenate([r.real.ravel(), r.imag.ravel()])
        return jac_real.T @ jac_real, jac_real.T @ r_real, float(r_real @ r_real)

    optimizer = LevenbergMarquardt(normal_equations, loss, max_iterations=max_iterations, atol=1e-26, rtol=1e-14)
    result = optimizer.minimize(np.concatenate([np.asarray(phases, dtype=float), np.zeros(n)]))
    return canonical_phases(split(result.x)[0]), float(np.sqrt(result.loss))


def plan_unitary(model: CalibrationModel, target) -> ProgramPlan:
    """Target phases by decomposition (plus refinement on fitted couplers) and the powers that set them."""
    target = _as_unitary(target)
    if target.n_modes != model.n_modes:
        raise LayoutMismatchError(f"Target is {target.n_modes}x{target.n_modes}, model has {model.n_modes} modes")
    phases = clements_decompose(target, model.layout.ideal())
    model_error = 0.0
    if not model.layout.is_ideal():
        phases, model_error = refine_phases(model.layout, target, phases)
    powers = powers_for_phases(model.thermal, phases)
    residual = float(np.max(wrapped_phase_error(phases_from_powers(model.thermal, powers), phases)))
    return ProgramPlan(phases, powers, residual, model_error)


def program_unitary(model: CalibrationModel, target) -> np.ndarray:
    return plan_unitary(model, target).powers
