"""Figures of merit: amplitude fidelity, extinction ratio and dB conversions."""
from dataclasses import dataclass

import numpy as np

from ..errors import ValidationError

EXTINCTION_CEILING_DB = 60.0
POWER_BUDGET_REFERENCE_MW = 10_000.0


def normalize_columns(amplitudes) -> np.ndarray:
    m = np.asarray(amplitudes, dtype=float)
    if m.ndim != 2:
        raise ValidationError(f"Expected a 2-D amplitude matrix, got shape {m.shape}")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ValidationError("Amplitudes must be finite and nonnegative")
    norms = np.linalg.norm(m, axis=0)
    if np.any(norms == 0):
        raise ValidationError("Amplitude matrix has an all-zero column")
    return m / norms


def amplitude_fidelity(target, measured) -> float:
    """F = (1/N) sum_ij T_ij M_ij over column-normalized amplitude matrices."""
    t, m = np.asarray(target, dtype=float), np.asarray(measured, dtype=float)
    if t.shape != m.shape:
        raise ValidationError(f"Shape mismatch: {t.shape} vs {m.shape}")
    f = float(np.sum(normalize_columns(t) * normalize_columns(m)) / t.shape[1])
    return min(max(f, 0.0), 1.0)


def extinction_ratio_db(distribution, target_port: int) -> float:
    p = np.asarray(distribution, dtype=float).ravel()
    if p.size == 0:
        raise ValidationError("Empty distribution")
    if np.any(p < 0):
        raise ValidationError("Distribution must be nonnegative")
    if not 0 <= target_port < p.size:
        raise ValidationError(f"Port {target_port} outside 0..{p.size - 1}")
    others = np.delete(p, target_port)
    worst = others.max() if others.size else 0.0
    if p[target_port] <= 0:
        return -EXTINCTION_CEILING_DB
    if worst <= p[target_port] * 10 ** (-EXTINCTION_CEILING_DB / 10):
        return EXTINCTION_CEILING_DB
    return float(min(10 * np.log10(p[target_port] / worst), EXTINCTION_CEILING_DB))


def db_from_transmission(t) -> float:
    t = float(t)
    if not t > 0:
        raise ValidationError(f"Transmission must be positive, got {t}")
    return -10 * np.log10(t)


def transmission_from_db(db) -> float:
    return float(10 ** (-float(db) / 10))


@dataclass(frozen=True)
class FidelityReport:
    values: tuple
    mean: float
    min: float
    max: float
    std: float

    @classmethod
    def from_values(cls, values) -> "FidelityReport":
        v = np.asarray(list(values), dtype=float)
        if v.size == 0:
            raise ValidationError("No fidelity values to report")
        if np.any((v < 0) | (v > 1)):
            raise ValidationError("Fidelities must lie in [0, 1]")
        return cls(tuple(v.tolist()), float(v.mean()), float(v.min()), float(v.max()), float(v.std()))

    def to_dict(self) -> dict:
        return {"count": len(self.values), "mean": self.mean, "min": self.min,
                "max": self.max, "std": self.std}


METRICS = {"amplitude_overlap": amplitude_fidelity}


def get_metric(name: str = "amplitude_overlap"):
    try:
        return METRICS[name]
    except KeyError:
        raise ValidationError(f"Unknown metric '{name}'; available: {sorted(METRICS)}") from None
