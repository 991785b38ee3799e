"""
Levenberg-Marquardt least squares in normal-equation form.

The caller supplies `normal_equations(x, rows) -> (JtJ, Jtr, loss)` and
`loss(x, rows)`, where `rows` selects a subset of independent residual blocks
(None means all of them). Accepted steps strictly decrease the loss on the
rows they were computed for.
"""
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, lstsq, solve

from ..core import make_rng
from ..errors import FitDivergenceError, ValidationError

logger = logging.getLogger(__name__)


@dataclass
class OptimizerResult:
    x: np.ndarray
    loss: float
    iterations: int
    converged: bool
    message: str
    trace: list = field(default_factory=list)


class LevenbergMarquardt:
    """
    exitcodes (`message`):
      converged      relative loss decrease below rtol, loss below atol, or no
                     acceptable step left while the gradient is below gtol
      stalled        damping grew past max_damping with the gradient above gtol
      iterations     iteration cap reached

    Only `converged` sets `converged=True`.
    """

    def __init__(self, normal_equations, loss, project=None, damping: float = 1e-3,
                 damping_up: float = 10.0, damping_down: float = 0.3, max_damping: float = 1e10,
                 diag_floor: float = 1e-9, max_iterations: int = 100, atol: float = 1e-24,
                 rtol: float = 1e-10, gtol: float = 1e-8, divergence_window: int = 10,
                 n_rows: int | None = None, minibatch: int | None = None, monitor_rows=None, seed: int = 0):
        if damping <= 0 or damping_up <= 1 or not 0 < damping_down < 1:
            raise ValidationError("Invalid damping schedule")
        if minibatch is not None and (n_rows is None or minibatch < 1):
            raise ValidationError("Minibatch mode needs n_rows and a positive batch size")
        self.normal_equations = normal_equations
        self.loss = loss
        self.project = project or (lambda x: x)
        self.damping = damping
        self.damping_up = damping_up
        self.damping_down = damping_down
        self.max_damping = max_damping
        self.diag_floor = diag_floor
        self.max_iterations = max_iterations
        self.atol = atol
        self.rtol = rtol
        self.gtol = gtol
        self.divergence_window = divergence_window
        self.n_rows = n_rows
        self.minibatch = minibatch
        self.monitor_rows = monitor_rows
        self._rng = make_rng(seed, stream=4)

    def _rows(self):
        if self.minibatch is None or self.minibatch >= self.n_rows:
            return None
        return np.sort(self._rng.choice(self.n_rows, size=self.minibatch, replace=False))

    def _step(self, jtj, jtr, damping):
        diag = np.diag(jtj).copy()
        diag = np.maximum(diag, self.diag_floor * max(diag.max(initial=0.0), 1.0))
        a = jtj + damping * np.diag(diag)
        try:
            return solve(a, -jtr, assume_a="pos")
        except (LinAlgError, ValueError):
            return lstsq(a, -jtr)[0]

    def minimize(self, x0) -> OptimizerResult:
        x = self.project(np.array(x0, dtype=float))
        damping = self.damping
        monitored = self.loss(x, self.monitor_rows)
        trace = [monitored]
        increases = 0
        message, converged, iteration = "iterations", False, 0

        for iteration in range(1, self.max_iterations + 1):
            rows = self._rows()
            jtj, jtr, current = self.normal_equations(x, rows)
            if not np.isfinite(current):
                raise FitDivergenceError("Loss is not finite", trace)
            if current <= self.atol:
                message, converged = "converged", True
                break

            while True:
                candidate = self.project(x + self._step(jtj, jtr, damping))
                trial = self.loss(candidate, rows)
                if np.isfinite(trial) and trial < current:
                    damping = max(damping * self.damping_down, 1e-12)
                    break
                damping *= self.damping_up
                if damping > self.max_damping:
                    break
            if damping > self.max_damping:
                # projected gradient: bound-active components pushing outward do not count
                gradient = float(np.max(np.abs(x - self.project(x - jtr)), initial=0.0))
                converged = gradient <= self.gtol * max(current, 1.0)
                message = "converged" if converged else "stalled"
                logger.debug(f"LM out of steps at iteration {iteration}, loss {current:.6e}, gradient {gradient:.3e}")
                break

            x = candidate
            new_monitored = self.loss(x, self.monitor_rows) if rows is not None else trial
            increases = increases + 1 if new_monitored > monitored else 0
            trace.append(new_monitored)
            if increases >= self.divergence_window:
                raise FitDivergenceError(
                    f"Monitored loss rose over {increases} consecutive accepted steps", trace)
            decrease = (monitored - new_monitored) / max(monitored, 1e-300)
            monitored = new_monitored
            logger.debug(f"LM iteration {iteration}: loss {monitored:.6e}, damping {damping:.1e}")
            if rows is None and (0 <= decrease < self.rtol or monitored <= self.atol):
                message, converged = "converged", True
                break

        return OptimizerResult(x, float(monitored), iteration, converged, message, trace)
