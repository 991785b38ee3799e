"""
Power-to-phase model of the thermo-optic heaters and its inverse.

theta_i = theta0_i + (2 pi / p2pi_i) P_i + sum_{j != i} c_ij P_j

Phase is linear in dissipated power; crosstalk coefficients live on a window
of W heater-index neighbours per heater.
"""
import logging
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import splu

from ..errors import InfeasiblePowerError, ValidationError

logger = logging.getLogger(__name__)

TWO_PI = 2 * np.pi
DEFAULT_P2PI_MW = 46.0
DEFAULT_MAX_POWER_MW = 60.0
DRIFT_RATE_PER_HOUR = 5e-5
PHASE_TOLERANCE_RAD = 1e-9


def crosstalk_window(n_heaters: int, window: int) -> np.ndarray:
    """(n_heaters, window) indices of the nearest heaters by index, self excluded."""
    if window < 0 or window > n_heaters - 1:
        raise ValidationError(f"Crosstalk window {window} invalid for {n_heaters} heaters")
    rows = []
    for i in range(n_heaters):
        lo = min(max(i - window // 2, 0), n_heaters - window - 1)
        rows.append([j for j in range(lo, lo + window + 1) if j != i])
    return np.array(rows, dtype=int).reshape(n_heaters, window)


@dataclass(frozen=True, eq=False)
class ThermalModel:
    theta0: np.ndarray
    p2pi: np.ndarray
    xtalk_index: np.ndarray
    xtalk: np.ndarray
    max_power: float = DEFAULT_MAX_POWER_MW

    def __post_init__(self):
        theta0 = np.array(self.theta0, dtype=float)
        p2pi = np.array(self.p2pi, dtype=float)
        index = np.array(self.xtalk_index, dtype=int).reshape(theta0.size, -1)
        xtalk = np.array(self.xtalk, dtype=float).reshape(index.shape)
        if p2pi.shape != theta0.shape or theta0.ndim != 1:
            raise ValidationError("theta0 and p2pi must be vectors of equal length")
        if not (np.all(np.isfinite(theta0)) and np.all(np.isfinite(p2pi)) and np.all(np.isfinite(xtalk))):
            raise ValidationError("Thermal parameters must be finite")
        if np.any(p2pi <= 0):
            raise ValidationError("p2pi must be positive for every heater")
        if index.size and (np.any(index < 0) or np.any(index >= theta0.size)
                           or np.any(index == np.arange(theta0.size)[:, None])):
            raise ValidationError("Crosstalk indices must address other heaters")
        if index.size and np.any(np.abs(xtalk) > TWO_PI / p2pi[index] + 1e-12):
            raise ValidationError("Crosstalk must be weaker than self-heating")
        if not self.max_power > 0:
            raise ValidationError("max_power must be positive")
        for name, value in (("theta0", theta0), ("p2pi", p2pi), ("xtalk_index", index), ("xtalk", xtalk)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "max_power", float(self.max_power))

    @classmethod
    def ideal(cls, n_heaters: int, p2pi: float = DEFAULT_P2PI_MW, window: int = 0,
              max_power: float = DEFAULT_MAX_POWER_MW) -> "ThermalModel":
        index = crosstalk_window(n_heaters, window)
        return cls(np.zeros(n_heaters), np.full(n_heaters, float(p2pi)), index,
                   np.zeros(index.shape), max_power)

    @property
    def n_heaters(self) -> int:
        return self.theta0.size

    @property
    def window(self) -> int:
        return self.xtalk_index.shape[1]

    @property
    def slopes(self) -> np.ndarray:
        """Self-heating phase per milliwatt, 2 pi / p2pi."""
        return TWO_PI / self.p2pi

    def crosstalk_matrix(self) -> sparse.csr_matrix:
        rows = np.repeat(np.arange(self.n_heaters), self.window)
        return sparse.csr_matrix((self.xtalk.ravel(), (rows, self.xtalk_index.ravel())),
                                 shape=(self.n_heaters, self.n_heaters))

    def response_matrix(self) -> sparse.csc_matrix:
        return (sparse.diags(self.slopes) + self.crosstalk_matrix()).tocsc()

    @cached_property
    def _response_lu(self):
        return splu(self.response_matrix())

    def drifted(self, hours: float, rate: float = DRIFT_RATE_PER_HOUR) -> "ThermalModel":
        """Heater resistance drift: p2pi(t) = p2pi (1 + r t)."""
        return replace(self, p2pi=self.p2pi * (1 + rate * hours))

    def with_parameters(self, theta0=None, p2pi=None, xtalk=None) -> "ThermalModel":
        return replace(self,
                       theta0=self.theta0 if theta0 is None else theta0,
                       p2pi=self.p2pi if p2pi is None else p2pi,
                       xtalk=self.xtalk if xtalk is None else xtalk)

    def to_json(self) -> dict:
        triplets = [[int(i), int(j), float(c)]
                    for i in range(self.n_heaters)
                    for j, c in zip(self.xtalk_index[i], self.xtalk[i])]
        return {"n_heaters": self.n_heaters, "theta0": self.theta0.tolist(),
                "p2pi_mw": self.p2pi.tolist(), "xtalk": triplets, "max_power_mw": self.max_power}

    @classmethod
    def from_json(cls, payload: dict) -> "ThermalModel":
        try:
            n = int(payload["n_heaters"])
            rows = [[] for _ in range(n)]
            for i, j, c in payload["xtalk"]:
                rows[int(i)].append((int(j), float(c)))
            window = len(rows[0]) if n else 0
            if any(len(row) != window for row in rows):
                raise ValidationError("Every heater needs the same number of crosstalk terms")
            rows = [sorted(row) for row in rows]
            index = np.array([[j for j, _ in row] for row in rows], dtype=int).reshape(n, window)
            xtalk = np.array([[c for _, c in row] for row in rows], dtype=float).reshape(n, window)
            return cls(payload["theta0"], payload["p2pi_mw"], index, xtalk,
                       payload.get("max_power_mw", DEFAULT_MAX_POWER_MW))
        except (KeyError, TypeError, IndexError) as e:
            raise ValidationError(f"Malformed thermal model document: {e}") from e


def _check_powers(model: ThermalModel, powers) -> np.ndarray:
    powers = np.asarray(powers, dtype=float)
    if powers.shape[-1] != model.n_heaters:
        raise ValidationError(f"Expected {model.n_heaters} powers, got {powers.shape[-1]}")
    if not np.all(np.isfinite(powers)):
        raise ValidationError("Powers must be finite")
    if np.any(powers < 0):
        raise ValidationError("Heater power cannot be negative")
    return powers


def phases_from_powers(model: ThermalModel, powers) -> np.ndarray:
    """Applied phase per heater; accepts (H,) or a batch (B, H) of power vectors."""
    powers = _check_powers(model, powers)
    batch = np.atleast_2d(powers)
    phases = model.theta0 + batch * model.slopes
    if model.window:
        phases = phases + model.crosstalk_matrix().dot(batch.T).T
    return phases[0] if powers.ndim == 1 else phases


def powers_for_phases(model: ThermalModel, target, max_rounds: int | None = None) -> np.ndarray:
    """
    Nonnegative powers whose phases equal `target` modulo 2 pi.

    Starts from the smallest wrap of every heater; with crosstalk the linear
    system is re-solved after adding 2 pi to heaters that came out negative.
    """
    target = np.asarray(target, dtype=float)
    if target.shape != (model.n_heaters,):
        raise ValidationError(f"Expected {model.n_heaters} target phases, got shape {target.shape}")
    if not np.all(np.isfinite(target)):
        raise ValidationError("Target phases must be finite")

    base = np.mod(target - model.theta0, TWO_PI)
    if not model.window or not np.any(model.xtalk):
        powers = base / model.slopes
    else:
        rounds = 4 * model.n_heaters if max_rounds is None else max_rounds
        wraps = np.zeros(model.n_heaters)
        for _ in range(rounds):
            powers = model._response_lu.solve(base + TWO_PI * wraps)
            negative = powers < -1e-12
            if not negative.any():
                break
            wraps[negative] += 1
        else:
            raise InfeasiblePowerError("Wrap search did not reach nonnegative powers",
                                       np.flatnonzero(negative))
    powers = np.clip(powers, 0.0, None)

    over = np.flatnonzero(powers > model.max_power * (1 + 1e-12))
    if over.size:
        raise InfeasiblePowerError(f"Required power exceeds {model.max_power} mW", over)
    return powers


def total_power(powers) -> float:
    powers = np.asarray(powers, dtype=float)
    if np.any(powers < 0):
        raise ValidationError("Heater power cannot be negative")
    return float(powers.sum())


def wrapped_phase_error(applied, target) -> np.ndarray:
    """|applied - target| folded onto [0, pi]."""
    diff = np.mod(np.asarray(applied) - np.asarray(target) + np.pi, TWO_PI) - np.pi
    return np.abs(diff)
