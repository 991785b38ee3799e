"""
Long-run heater stability trace.

A heater is held at a fixed power while the drift clock runs. At every time
step the heater's fringe is rescanned and refitted, which tracks the 2 pi
power and hence the phase the held power produces.
"""
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from ..errors import ValidationError
from .fringe import FringeScan, fit_fringe

logger = logging.getLogger(__name__)

STABILITY_COLUMNS = ("time_h", "p2pi_mw", "phase_pi", "drift_pct", "intensity")


@dataclass(frozen=True, eq=False)
class StabilityTrace:
    heater: int
    power_mw: float
    frame: pd.DataFrame

    @property
    def drift_pct_per_hour(self) -> float:
        """Least-squares slope of the 2 pi power drift."""
        if len(self.frame) < 2:
            return 0.0
        return float(np.polyfit(self.frame["time_h"], self.frame["drift_pct"], 1)[0])

    def to_json(self) -> dict:
        return {"heater": self.heater, "power_mw": self.power_mw,
                "hours": float(self.frame["time_h"].iloc[-1]),
                "phase_pi_start": float(self.frame["phase_pi"].iloc[0]),
                "drift_pct_total": float(self.frame["drift_pct"].iloc[-1]),
                "drift_pct_per_hour": self.drift_pct_per_hour}


def stability_trace(device, heater: int, input_port: int, output_port: int, power_mw: float = 57.0,
                    hours: float = 12.0, interval_hours: float = 0.5, n_samples: int = 64) -> StabilityTrace:
    if not 0 <= heater < device.n_heaters:
        raise ValidationError(f"Heater {heater} outside 0..{device.n_heaters - 1}")
    if not 0 < power_mw <= device.max_power:
        raise ValidationError(f"Hold power {power_mw} mW outside (0, {device.max_power}]")
    if hours <= 0 or interval_hours <= 0:
        raise ValidationError("Trace duration and interval must be positive")

    steps = int(np.floor(hours / interval_hours + 1e-9))
    grid = np.linspace(0.0, device.max_power, n_samples)
    scan = np.zeros((n_samples, device.n_heaters))
    scan[:, heater] = grid
    held = np.zeros(device.n_heaters)
    held[heater] = power_mw

    rows = []
    for step in range(steps + 1):
        if step:
            device.advance_clock(interval_hours)
        signal = device.port_powers(input_port, scan)[:, output_port]
        fit = fit_fringe(FringeScan(heater, grid, signal, device.max_power))
        rows.append((device.clock_hours, fit.p2pi, 2 * power_mw / fit.p2pi,
                     float(device.port_powers(input_port, held)[output_port])))

    frame = pd.DataFrame(rows, columns=["time_h", "p2pi_mw", "phase_pi", "intensity"])
    frame.insert(3, "drift_pct", 100 * (frame["p2pi_mw"] / frame["p2pi_mw"].iloc[0] - 1))
    trace = StabilityTrace(heater, float(power_mw), frame[list(STABILITY_COLUMNS)])
    logger.info(f"Heater {heater} held at {power_mw} mW for {frame['time_h'].iloc[-1]:.2f} h: "
                f"{trace.drift_pct_per_hour:.5f} %/h drift in the 2 pi power")
    return trace
