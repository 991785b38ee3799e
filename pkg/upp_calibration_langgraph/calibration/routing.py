"""Coordinate-ascent routing of one input port to one output port."""
import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import DegenerateScanError, ValidationError
from ..mesh import MeshLayout
from ..metrics import extinction_ratio_db
from .fringe import FringeScan, fit_fringe

logger = logging.getLogger(__name__)


@dataclass
class RoutingResult:
    powers: np.ndarray
    extinction_db: float
    transmission: float
    passes: int
    converged: bool
    fits: dict = field(default_factory=dict)
    warning: str | None = None

    def to_json(self) -> dict:
        return {"powers_mw": self.powers.tolist(), "extinction_db": self.extinction_db,
                "transmission": self.transmission, "passes": self.passes,
                "converged": self.converged, "warning": self.warning,
                "fits": [self.fits[h].to_json() for h in sorted(self.fits)]}


def route_nodes(layout: MeshLayout, input_port: int, output_port: int) -> list:
    """Indices of nodes lying on some optical path from input_port to output_port, in optical order."""
    for port in (input_port, output_port):
        if not 0 <= port < layout.n_modes:
            raise ValidationError(f"Port {port} outside 0..{layout.n_modes - 1}")
    lit = np.zeros(layout.n_modes, dtype=bool)
    lit[input_port] = True
    forward = []
    for node in layout.nodes:
        k = node.top_mode
        touched = lit[k] or lit[k + 1]
        forward.append(touched)
        if touched:
            lit[k] = lit[k + 1] = True

    seen = np.zeros(layout.n_modes, dtype=bool)
    seen[output_port] = True
    backward = [False] * layout.n_nodes
    for i in reversed(range(layout.n_nodes)):
        k = layout.nodes[i].top_mode
        if seen[k] or seen[k + 1]:
            backward[i] = True
            seen[k] = seen[k + 1] = True
    return [i for i in range(layout.n_nodes) if forward[i] and backward[i]]


def _target_power_db(device, input_port, output_port, powers) -> float:
    power = device.port_powers(input_port, powers)[output_port]
    return float(10 * np.log10(max(power, 1e-300)))


def optimize_routing(device, input_port: int, output_port: int, n_samples: int = 30,
                     max_passes: int = 10, tol_db: float = 0.01, initial_powers=None,
                     audit=None) -> RoutingResult:
    """
    Scans the internal heater of every MZI on the route, fits its fringe at
    the output port and parks it at the fringe maximum. Passes repeat until
    the target-port power improves by less than tol_db.
    """
    if n_samples < 8:
        raise ValidationError("Routing scans need at least 8 samples")
    layout = device.layout
    nodes = route_nodes(layout, input_port, output_port)
    powers = np.zeros(layout.n_heaters) if initial_powers is None else np.array(initial_powers, dtype=float)
    grid = np.linspace(0.0, device.max_power, n_samples)
    fits = {}

    previous = _target_power_db(device, input_port, output_port, powers)
    converged, passes = False, 0
    for passes in range(1, max_passes + 1):
        skipped = 0
        for i in nodes:
            heater = layout.nodes[i].theta_heater
            batch = np.repeat(powers[None, :], n_samples, axis=0)
            batch[:, heater] = grid
            signal = device.port_powers(input_port, batch)[:, output_port]
            try:
                fit = fit_fringe(FringeScan(heater, grid, signal, device.max_power))
            except DegenerateScanError:
                # no light through this MZI yet; retried next pass
                skipped += 1
                continue
            fits[heater] = fit
            candidate = powers.copy()
            candidate[heater] = fit.peak_power(device.max_power)
            best_scanned = int(np.argmax(signal))
            if device.port_powers(input_port, candidate)[output_port] >= signal[best_scanned]:
                powers = candidate
            else:
                powers[heater] = grid[best_scanned]

        current = _target_power_db(device, input_port, output_port, powers)
        logger.info(f"Routing {input_port}->{output_port} pass {passes}: target power {current:.3f} dB, "
                    f"{skipped} flat scans skipped")
        if abs(current - previous) < tol_db:
            converged = True
            break
        previous = current

    distribution = device.measure_output_distribution(input_port, powers)
    extinction = extinction_ratio_db(distribution.probabilities, output_port)
    warning = None if converged else f"Routing did not converge within {max_passes} passes"
    if warning:
        logger.warning(warning)
        if audit is not None:
            audit.highlight_anomaly("routing", warning)
    return RoutingResult(powers, extinction, float(distribution.probabilities[output_port]),
                         passes, converged, fits, warning)
