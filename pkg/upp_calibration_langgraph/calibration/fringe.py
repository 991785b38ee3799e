"""
Interference fringe fitting for a single heater.

I(P) = A + B cos(2 pi P / p2pi + phi0), which is the MZI sin^2 / cos^2 law
written in power. A coarse period grid, solved for offset and quadratures of
every candidate at once through batched 3x3 normal equations, gives the
starting point; scipy's curve_fit refines all four parameters.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit

from ..errors import DegenerateScanError, ValidationError
from ..thermal import DEFAULT_MAX_POWER_MW

logger = logging.getLogger(__name__)

MIN_SAMPLES = 8
MIN_VISIBILITY = 0.05
PERIOD_GRID_POINTS = 600


@dataclass(frozen=True, eq=False)
class FringeScan:
    heater: int
    powers: np.ndarray
    intensities: np.ndarray
    max_power: float = DEFAULT_MAX_POWER_MW

    def __post_init__(self):
        powers = np.asarray(self.powers, dtype=float).ravel()
        intensities = np.asarray(self.intensities, dtype=float).ravel()
        if powers.size != intensities.size:
            raise ValidationError("Scan powers and intensities differ in length")
        if powers.size < MIN_SAMPLES:
            raise ValidationError(f"A fringe scan needs at least {MIN_SAMPLES} samples, got {powers.size}")
        if not (np.all(np.isfinite(powers)) and np.all(np.isfinite(intensities))):
            raise ValidationError("Scan samples must be finite")
        if np.any(powers < 0) or np.any(powers > self.max_power):
            raise ValidationError(f"Scan powers must lie in [0, {self.max_power}] mW")
        order = np.argsort(powers, kind="stable")
        object.__setattr__(self, "powers", powers[order])
        object.__setattr__(self, "intensities", intensities[order])

    @property
    def span(self) -> float:
        return float(self.powers[-1] - self.powers[0])


@dataclass(frozen=True)
class FringeFit:
    heater: int
    p2pi: float
    phase_offset: float
    offset: float
    amplitude: float
    visibility: float
    residual_rms: float

    def predict(self, powers) -> np.ndarray:
        return _fringe(np.asarray(powers, dtype=float), self.offset, self.amplitude, self.p2pi, self.phase_offset)

    def peak_power(self, max_power: float = DEFAULT_MAX_POWER_MW) -> float:
        """Power of the intensity maximum, taken within the first period."""
        power = float(np.mod(-self.phase_offset, 2 * np.pi) * self.p2pi / (2 * np.pi))
        if power > max_power:
            logger.warning(f"Heater {self.heater}: fringe peak at {power:.2f} mW beyond {max_power} mW, clipping")
            power = float(max_power)
        return power

    def to_json(self) -> dict:
        return {"heater": self.heater, "p2pi_mw": self.p2pi, "phase_offset": self.phase_offset,
                "offset": self.offset, "amplitude": self.amplitude,
                "visibility": self.visibility, "residual_rms": self.residual_rms}


def _fringe(p, offset, amplitude, p2pi, phi0):
    return offset + amplitude * np.cos(2 * np.pi * p / p2pi + phi0)


def _linear_fits(powers, intensities, periods) -> tuple:
    """Least-squares (offset, cos, sin) coefficients and SSE for every candidate period."""
    k = 2 * np.pi / np.asarray(periods, dtype=float)[:, None]
    design = np.stack([np.ones_like(k * powers), np.cos(k * powers), np.sin(k * powers)], axis=-1)
    gram = np.einsum("csi,csj->cij", design, design)
    rhs = np.einsum("csi,s->ci", design, intensities)
    try:
        coef = np.linalg.solve(gram, rhs[..., None])[..., 0]
    except np.linalg.LinAlgError:
        coef = np.einsum("cis,s->ci", np.linalg.pinv(design), intensities)
    residual = intensities[None, :] - np.einsum("csi,ci->cs", design, coef)
    return coef, np.einsum("cs,cs->c", residual, residual)


def fit_fringe(scan: FringeScan) -> FringeFit:
    p, y = scan.powers, scan.intensities
    spacing = np.median(np.diff(p)) if p.size > 1 else 0.0
    span = scan.span
    if span <= 0:
        raise DegenerateScanError(f"Heater {scan.heater}: scan spans no power range", scan.heater)

    # Periods between four sample spacings and twice the span.
    candidates = np.geomspace(max(4 * spacing, span / 50), 2 * span, PERIOD_GRID_POINTS)
    coefs, sse = _linear_fits(p, y, candidates)
    best = int(np.argmin(sse))
    offset, a_cos, a_sin = coefs[best]
    amplitude = float(np.hypot(a_cos, a_sin))
    if offset <= 0 or amplitude / offset < MIN_VISIBILITY:
        raise DegenerateScanError(f"Heater {scan.heater}: visibility below {MIN_VISIBILITY}", scan.heater)

    start = [offset, amplitude, candidates[best], np.arctan2(-a_sin, a_cos)]
    try:
        popt, _ = curve_fit(_fringe, p, y, p0=start, xtol=1e-12, ftol=1e-12, maxfev=4000)
    except RuntimeError as e:
        raise DegenerateScanError(f"Heater {scan.heater}: fringe refinement failed: {e}", scan.heater) from e

    offset, amplitude, p2pi, phi0 = (float(v) for v in popt)
    if amplitude < 0:
        amplitude, phi0 = -amplitude, phi0 + np.pi
    if p2pi < 0:
        p2pi, phi0 = -p2pi, -phi0
    visibility = amplitude / offset if offset > 0 else 0.0
    if visibility < MIN_VISIBILITY:
        raise DegenerateScanError(f"Heater {scan.heater}: visibility {visibility:.3f} below {MIN_VISIBILITY}",
                                  scan.heater)
    if p2pi > span * (1 + 1e-6) or best == PERIOD_GRID_POINTS - 1:
        raise DegenerateScanError(f"Heater {scan.heater}: period {p2pi:.2f} mW not bracketed by a "
                                  f"{span:.2f} mW scan", scan.heater)

    residual = y - _fringe(p, offset, amplitude, p2pi, phi0)
    fit = FringeFit(scan.heater, p2pi, float(np.mod(phi0, 2 * np.pi)), offset, amplitude,
                    float(min(visibility, 1.0)), float(np.sqrt(np.mean(residual ** 2))))
    logger.debug(f"Heater {scan.heater}: p2pi={fit.p2pi:.4f} mW, visibility={fit.visibility:.3f}")
    return fit
