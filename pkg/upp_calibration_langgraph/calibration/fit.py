"""
Fitting the circuit model to amplitude measurements.

Parameters: static phase theta0 and self-heating slope s = 2 pi / p2pi per
heater, t1/t2 per node, and one crosstalk coefficient per (heater, window
neighbour). The loss is the sum of squared amplitude (or intensity) residuals
over all records; gradients come from transfer_jacobian.

Heaters whose phase is a pure gauge of an amplitude-only measurement (the
output screen and the external heaters of the first layer) keep their
initial parameters.

The static phases make the loss multimodal. fit_model first searches for the
right basin on a record subset: each start alternates grid sweeps of the
static phases with short LM runs, and starts are redrawn until one reaches
`accept_rms`. The full LM then runs from the best start.
"""
import logging
from dataclasses import asdict, dataclass

import numpy as np

from ..core import RNG_ALGORITHM, make_rng
from ..errors import InsufficientDataError, LayoutMismatchError, ValidationError
from ..mesh import MeshLayout, batch_unitaries, transfer_jacobian
from ..thermal import DEFAULT_MAX_POWER_MW, DEFAULT_P2PI_MW, ThermalModel, crosstalk_window
from .model import CalibrationModel
from .optimizer import LevenbergMarquardt
from .training import split_records

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
AMPLITUDE_FLOOR = 1e-12
COUPLER_BOUNDS = (1e-3, 1 - 1e-3)
MIN_SLOPE = 1e-4
RESIDUAL_MODES = ("amplitude", "intensity")
JACOBIAN_BUDGET = 2_000_000


@dataclass(frozen=True)
class FitHyperparameters:
    max_iterations: int = 50
    rtol: float = 1e-10
    atol: float = 1e-20
    gtol: float = 1e-8
    damping: float = 1e-3
    residual_mode: str = "amplitude"
    fit_couplers: bool = True
    fit_p2pi: bool = True
    fit_crosstalk: bool = True
    window: int | None = None
    sweep_passes: int = 4
    sweep_grid: int = 16
    sweep_records: int = 128
    starts: int = 12
    start_iterations: int = 40
    accept_rms: float = 0.02
    validation_fraction: float = 0.1
    minibatch: int | None = None
    min_data_ratio: float = 3.0
    max_power: float = DEFAULT_MAX_POWER_MW
    seed: int = 0

    def __post_init__(self):
        if self.residual_mode not in RESIDUAL_MODES:
            raise ValidationError(f"residual_mode must be one of {RESIDUAL_MODES}")
        if self.max_iterations < 1 or self.sweep_passes < 0 or self.sweep_grid < 2 or self.sweep_records < 1:
            raise ValidationError("Iteration, sweep and record counts out of range")
        if self.starts < 1 or self.start_iterations < 1 or self.accept_rms < 0:
            raise ValidationError("Multi-start settings out of range")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValidationError("validation_fraction must lie in [0, 1)")
        if self.min_data_ratio < 0:
            raise ValidationError("min_data_ratio must be >= 0")

    def to_json(self) -> dict:
        return asdict(self)


class CalibrationProblem:
    """Residuals and normal equations of the model fit over a fixed set of records."""

    def __init__(self, layout: MeshLayout, records: list, hyper: FitHyperparameters,
                 initial: ThermalModel | None = None, initial_couplers=None):
        self.layout = layout
        self.hyper = hyper
        self.n = layout.n_modes
        self.h = layout.n_heaters
        self.n_nodes = layout.n_nodes
        self.powers, self.amplitudes = _stack_records(layout, records)

        window = self.n if hyper.window is None else hyper.window
        if initial is not None:
            self.index = initial.xtalk_index
        else:
            self.index = crosstalk_window(self.h, min(window, self.h - 1))
        self.w = self.index.shape[1]

        sizes = [self.h, 2 * self.n_nodes, self.h, self.h * self.w]
        self.offsets = np.concatenate([[0], np.cumsum(sizes)])

        gauge = np.zeros(self.h, dtype=bool)
        gauge[layout.gauge_heaters()] = True
        self.gauge = gauge
        active = ~gauge
        free = [np.flatnonzero(active),
                self.offsets[1] + np.arange(2 * self.n_nodes) if hyper.fit_couplers else [],
                self.offsets[2] + np.flatnonzero(active) if hyper.fit_p2pi else [],
                (self.offsets[3] + np.flatnonzero(np.repeat(active, self.w))) if hyper.fit_crosstalk else []]
        self.free = np.concatenate([np.asarray(f, dtype=int) for f in free])
        self.base = self.pack(initial or ThermalModel.ideal(self.h, DEFAULT_P2PI_MW, 0, hyper.max_power),
                              layout.couplers() if initial_couplers is None else initial_couplers)

    @property
    def n_records(self) -> int:
        return self.powers.shape[0]

    @property
    def n_free(self) -> int:
        return self.free.size

    def pack(self, thermal: ThermalModel, couplers) -> np.ndarray:
        z = np.zeros(self.offsets[-1])
        z[:self.h] = thermal.theta0
        z[self.offsets[1]:self.offsets[2]] = np.asarray(couplers, dtype=float).ravel()
        z[self.offsets[2]:self.offsets[3]] = thermal.slopes
        if thermal.window == self.w:
            z[self.offsets[3]:] = thermal.xtalk.ravel()
        return z

    def full(self, y) -> np.ndarray:
        z = self.base.copy()
        z[self.free] = y
        return z

    def initial_vector(self) -> np.ndarray:
        return self.base[self.free].copy()

    def split(self, z) -> tuple:
        o = self.offsets
        return (z[:o[1]], z[o[1]:o[2]].reshape(self.n_nodes, 2),
                z[o[2]:o[3]], z[o[3]:].reshape(self.h, self.w))

    def project(self, y) -> np.ndarray:
        z = self.full(y)
        o = self.offsets
        z[o[1]:o[2]] = np.clip(z[o[1]:o[2]], *COUPLER_BOUNDS)
        z[o[2]:o[3]] = np.maximum(z[o[2]:o[3]], MIN_SLOPE)
        slopes = z[o[2]:o[3]]
        bound = 0.999 * slopes[self.index]
        z[o[3]:] = np.clip(z[o[3]:].reshape(self.h, self.w), 0.0, bound).ravel()
        return z[self.free]

    def layout_for(self, z) -> MeshLayout:
        return self.layout.with_couplers(self.split(z)[1])

    def thermal_for(self, z) -> ThermalModel:
        theta0, _, slopes, xtalk = self.split(z)
        return ThermalModel(np.mod(theta0, TWO_PI), TWO_PI / slopes, self.index, xtalk, self.hyper.max_power)

    def phases(self, z, powers) -> np.ndarray:
        theta0, _, slopes, xtalk = self.split(z)
        phases = theta0 + powers * slopes
        if self.w:
            phases = phases + np.einsum("bhw,hw->bh", powers[:, self.index], xtalk)
        return phases

    def _rows(self, rows):
        return np.arange(self.n_records) if rows is None else np.asarray(rows, dtype=int)

    def _chunks(self, rows):
        size = max(1, int(JACOBIAN_BUDGET // (self.n * self.n * (self.h + 2 * self.n_nodes))))
        for start in range(0, rows.size, size):
            yield rows[start:start + size]

    def _observable(self, u: np.ndarray) -> np.ndarray:
        a = np.abs(u)
        return a if self.hyper.residual_mode == "amplitude" else a ** 2

    def _measured(self, rows) -> np.ndarray:
        a = self.amplitudes[rows]
        return a if self.hyper.residual_mode == "amplitude" else a ** 2

    def residuals(self, y, rows=None) -> np.ndarray:
        z = self.full(y)
        rows = self._rows(rows)
        layout = self.layout_for(z)
        out = []
        for chunk in self._chunks(rows):
            u = batch_unitaries(layout, self.phases(z, self.powers[chunk]))
            out.append((self._observable(u) - self._measured(chunk)).reshape(-1))
        return np.concatenate(out) if out else np.zeros(0)

    def loss(self, y, rows=None) -> float:
        r = self.residuals(y, rows)
        return float(r @ r)

    def _jacobian_chunk(self, z, layout, chunk) -> tuple:
        powers = self.powers[chunk]
        u, du_phase, du_coupler = transfer_jacobian(layout, self.phases(z, powers))
        a = np.abs(u)
        if self.hyper.residual_mode == "amplitude":
            weight = np.conj(u) / np.maximum(a, AMPLITUDE_FLOOR)
            r = a - self.amplitudes[chunk]
        else:
            weight = 2 * np.conj(u)
            r = a ** 2 - self.amplitudes[chunk] ** 2
        b, m = len(chunk), self.n * self.n
        d_phase = np.real(weight[..., None] * du_phase).reshape(b, m, self.h)
        d_coupler = np.real(weight[..., None] * du_coupler).reshape(b, m, 2 * self.n_nodes)

        # d phase_h / d(parameters): theta0 -> 1, slope -> P_h, xtalk(h, w) -> P_index(h, w)
        d_slope = d_phase * powers[:, None, :]
        d_xtalk = (d_phase[..., None] * powers[:, self.index][:, None, :, :]).reshape(b, m, self.h * self.w)
        jac = np.concatenate([d_phase, d_coupler, d_slope, d_xtalk], axis=2)[..., self.free]
        return jac.reshape(b * m, -1), r.reshape(-1)

    def jacobian(self, y, rows=None) -> np.ndarray:
        z = self.full(y)
        layout = self.layout_for(z)
        return np.concatenate([self._jacobian_chunk(z, layout, c)[0] for c in self._chunks(self._rows(rows))])

    def normal_equations(self, y, rows=None) -> tuple:
        z = self.full(y)
        layout = self.layout_for(z)
        jtj = np.zeros((self.n_free, self.n_free))
        jtr = np.zeros(self.n_free)
        loss = 0.0
        for chunk in self._chunks(self._rows(rows)):
            jac, r = self._jacobian_chunk(z, layout, chunk)
            jtj += jac.T @ jac
            jtr += jac.T @ r
            loss += float(r @ r)
        return jtj, jtr, loss

    @property
    def static_phase_slots(self) -> np.ndarray:
        """Positions of the free theta0 entries inside the free vector."""
        return np.flatnonzero(self.free < self.h)

    def sweep_static_phases(self, y, passes: int, grid: int, rows=None) -> tuple:
        """
        Per-heater grid search over theta0, keeping the current value as a
        candidate. Passes repeat until one no longer lowers the loss.

        Returns (y, loss on `rows`).
        """
        z = self.full(y)
        rows = self._rows(rows)
        powers = self.powers[rows]
        measured = self._measured(rows)
        layout = self.layout_for(z)
        values = TWO_PI * np.arange(grid) / grid
        heaters = np.flatnonzero(~self.gauge)
        base = self.phases(z, powers)
        loss = float(np.sum((self._observable(batch_unitaries(layout, base)) - measured) ** 2))

        for sweep in range(passes):
            previous = loss
            for h in heaters:
                candidates = np.concatenate([[z[h]], values])
                trial = np.repeat(base[None], candidates.size, axis=0)
                trial[:, :, h] += (candidates - z[h])[:, None]
                u = batch_unitaries(layout, trial.reshape(-1, self.h))
                err = (self._observable(u).reshape(candidates.size, *measured.shape) - measured[None]) ** 2
                sse = err.reshape(candidates.size, -1).sum(axis=1)
                best = int(np.argmin(sse))
                base[:, h] += candidates[best] - z[h]
                z[h] = candidates[best]
                loss = float(sse[best])
            logger.debug(f"Static-phase sweep {sweep + 1}/{passes}: subset loss {loss:.6e}")
            if loss >= previous * (1 - 1e-9):
                break
        return z[self.free], loss

    def descend(self, y, rows=None, rounds: int = 3) -> tuple:
        """
        Alternates static-phase sweeps with LM on `rows` until a sweep no
        longer improves on the LM end point. Returns (y, loss on `rows`).
        """
        hyper = self.hyper
        rows = self._rows(rows)
        loss = self.loss(y, rows)
        for round_ in range(rounds):
            if hyper.sweep_passes:
                y, swept = self.sweep_static_phases(y, hyper.sweep_passes, hyper.sweep_grid, rows)
                if round_ and swept >= loss * (1 - 1e-9):
                    break
            elif round_:
                break
            optimizer = LevenbergMarquardt(lambda x, _=None: self.normal_equations(x, rows),
                                           lambda x, _=None: self.loss(x, rows), self.project,
                                           damping=hyper.damping, max_iterations=hyper.start_iterations,
                                           atol=hyper.atol, rtol=hyper.rtol, gtol=hyper.gtol)
            result = optimizer.minimize(y)
            y, loss = result.x, result.loss
        return y, loss


def search_starts(problem: CalibrationProblem, y0, audit=None) -> np.ndarray:
    """
    Multi-start search for the basin of the global fit on a record subset.

    Start 0 is `y0`. Odd starts redraw a quarter of the best start's static
    phases, even starts redraw all of them. The search stops at the first
    start whose subset RMS is at most accept_rms; otherwise the best start
    wins.
    """
    hyper = problem.hyper
    rng = make_rng(hyper.seed, stream=5)
    rows = np.sort(rng.choice(problem.n_records, size=min(hyper.sweep_records, problem.n_records), replace=False))
    slots = problem.static_phase_slots
    best_y, best_rms = np.asarray(y0, dtype=float), np.inf

    for start in range(hyper.starts):
        y = np.array(best_y if start % 2 else y0, dtype=float)
        if start:
            redraw = np.ones(slots.size, dtype=bool) if start % 2 == 0 else rng.random(slots.size) < 0.25
            y[slots[redraw]] = rng.uniform(0.0, TWO_PI, int(redraw.sum()))
        y, loss = problem.descend(y, rows)
        rms = float(np.sqrt(loss / (rows.size * problem.n * problem.n)))
        logger.debug(f"Start {start}: subset RMS {rms:.3e}")
        if rms < best_rms:
            best_y, best_rms = y, rms
        if best_rms <= hyper.accept_rms:
            break

    summary = f"{start + 1} start(s) on {rows.size} records, best subset RMS {best_rms:.3e}"
    logger.info(f"Basin search: {summary}")
    if audit is not None:
        audit.log_step("fit", "basin search", summary)
        if best_rms > hyper.accept_rms:
            audit.highlight_anomaly("fit", f"no start reached RMS {hyper.accept_rms:g}; {summary}")
    return best_y


def _stack_records(layout: MeshLayout, records: list) -> tuple:
    if not records:
        raise InsufficientDataError("No measurement records to fit")
    powers = np.array([r.powers for r in records], dtype=float)
    amplitudes = np.array([r.amplitudes for r in records], dtype=float)
    if powers.shape[1:] != (layout.n_heaters,) or amplitudes.shape[1:] != (layout.n_modes, layout.n_modes):
        raise LayoutMismatchError(
            f"Records carry {powers.shape[1:]} powers and {amplitudes.shape[1:]} amplitudes; layout needs "
            f"({layout.n_heaters},) and ({layout.n_modes}, {layout.n_modes})")
    return powers, amplitudes


def fit_model(layout: MeshLayout, records: list, hyper: FitHyperparameters | None = None,
              p2pi_init: dict | None = None, initial: CalibrationModel | None = None,
              audit=None) -> CalibrationModel:
    """
    Fits the circuit model on a training split of `records` and reports the
    amplitude RMS on the held-out split.
    """
    hyper = hyper or FitHyperparameters()
    if not records:
        raise InsufficientDataError("No measurement records to fit")
    train, validation = split_records(records, hyper.validation_fraction, hyper.seed)

    if initial is not None:
        if initial.layout.layout_hash() != layout.layout_hash():
            raise LayoutMismatchError("Initial model belongs to another mesh topology")
        thermal, couplers = initial.thermal, initial.layout.couplers()
    else:
        slopes_p2pi = np.full(layout.n_heaters, DEFAULT_P2PI_MW)
        for heater, p2pi in (p2pi_init or {}).items():
            slopes_p2pi[int(heater)] = float(p2pi)
        window = layout.n_modes if hyper.window is None else hyper.window
        index = crosstalk_window(layout.n_heaters, min(window, layout.n_heaters - 1))
        thermal = ThermalModel(np.zeros(layout.n_heaters), slopes_p2pi, index, np.zeros(index.shape),
                               hyper.max_power)
        couplers = None

    problem = CalibrationProblem(layout, train, hyper, thermal, couplers)
    residual_count = problem.n_records * layout.n_modes ** 2
    if residual_count < hyper.min_data_ratio * problem.n_free:
        raise InsufficientDataError(
            f"{problem.n_records} training records give {residual_count} residuals; "
            f"{hyper.min_data_ratio:g} x {problem.n_free} free parameters are required")
    logger.info(f"Fitting {problem.n_free} free parameters on {problem.n_records} records "
                f"({len(validation)} held out)")

    y = problem.initial_vector()
    if initial is None:
        y = search_starts(problem, y, audit)

    optimizer = LevenbergMarquardt(problem.normal_equations, problem.loss, problem.project,
                                   damping=hyper.damping, max_iterations=hyper.max_iterations,
                                   atol=hyper.atol, rtol=hyper.rtol, gtol=hyper.gtol,
                                   n_rows=problem.n_records, minibatch=hyper.minibatch, seed=hyper.seed)
    result = optimizer.minimize(y)
    if not result.converged and audit is not None:
        audit.highlight_anomaly("fit", f"optimizer stopped ({result.message}) after {result.iterations} "
                                       f"iterations without converging, loss {result.loss:.6e}")

    z = problem.full(result.x)
    fitted_layout = problem.layout_for(z)
    thermal = problem.thermal_for(z)
    model = CalibrationModel(fitted_layout, thermal)
    train_rms = model.amplitude_rms(train)
    validation_rms = model.amplitude_rms(validation) if validation else None

    metadata = {"loss_trace": [float(v) for v in result.trace],
                "final_loss": result.loss,
                "iterations": result.iterations,
                "converged": result.converged,
                "stop_reason": result.message,
                "train_records": problem.n_records,
                "validation_records": len(validation),
                "train_rms": train_rms,
                "validation_rms": validation_rms,
                "free_parameters": int(problem.n_free),
                "hyperparameters": hyper.to_json(),
                "rng_algorithm": RNG_ALGORITHM}
    logger.info(f"Fit finished ({result.message}) after {result.iterations} iterations: "
                f"train RMS {train_rms:.3e}, validation RMS {validation_rms}")
    return CalibrationModel(fitted_layout, thermal, metadata)
