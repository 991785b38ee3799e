"""
Rectangular MZI mesh topology.

Nodes are ordered layer by layer, top to bottom inside a layer, which is also
the optical order used by every evaluator. Node i owns heaters 2i (external
phase, top input arm) and 2i+1 (internal phase, top arm); the output phase
screen heaters follow, one per mode.
"""
import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from ..errors import ValidationError

IDEAL_TRANSMISSIVITY = 0.5


@dataclass(frozen=True)
class MZINode:
    layer: int
    top_mode: int
    phi_heater: int
    theta_heater: int
    t1: float = IDEAL_TRANSMISSIVITY
    t2: float = IDEAL_TRANSMISSIVITY

    def to_json(self) -> dict:
        return {"layer": self.layer, "top_mode": self.top_mode,
                "phi_heater": self.phi_heater, "theta_heater": self.theta_heater,
                "t1": self.t1, "t2": self.t2}


@dataclass(frozen=True)
class MeshLayout:
    n_modes: int
    nodes: tuple
    has_output_phase_screen: bool = True

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        if self.n_modes < 2:
            raise ValidationError(f"A mesh needs at least 2 modes, got {self.n_modes}")
        seen = set()
        for node in self.nodes:
            if not 0 <= node.top_mode <= self.n_modes - 2:
                raise ValidationError(f"Node top_mode {node.top_mode} out of range")
            for t in (node.t1, node.t2):
                if not 0.0 <= t <= 1.0 or not np.isfinite(t):
                    raise ValidationError(f"Coupler transmissivity {t} outside [0, 1]")
            for mode in (node.top_mode, node.top_mode + 1):
                if (node.layer, mode) in seen:
                    raise ValidationError(f"Layer {node.layer} uses mode {mode} twice")
                seen.add((node.layer, mode))
        heaters = sorted([n.phi_heater for n in self.nodes] + [n.theta_heater for n in self.nodes]
                         + list(self.screen_heaters))
        if heaters != list(range(self.n_heaters)):
            raise ValidationError("Heater indices must cover 0..n_heaters-1 exactly once")

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_couplers(self) -> int:
        return 2 * self.n_nodes

    @property
    def n_heaters(self) -> int:
        return 2 * self.n_nodes + (self.n_modes if self.has_output_phase_screen else 0)

    @property
    def n_layers(self) -> int:
        return 1 + max((n.layer for n in self.nodes), default=-1)

    @property
    def screen_heaters(self) -> range:
        if not self.has_output_phase_screen:
            return range(0)
        return range(2 * self.n_nodes, 2 * self.n_nodes + self.n_modes)

    def couplers(self) -> np.ndarray:
        """(n_nodes, 2) array of (t1, t2)."""
        return np.array([[n.t1, n.t2] for n in self.nodes], dtype=float).reshape(-1, 2)

    def with_couplers(self, couplers) -> "MeshLayout":
        couplers = np.asarray(couplers, dtype=float).reshape(self.n_nodes, 2)
        nodes = tuple(replace(node, t1=float(t[0]), t2=float(t[1]))
                      for node, t in zip(self.nodes, couplers))
        return replace(self, nodes=nodes)

    def ideal(self) -> "MeshLayout":
        return self.with_couplers(np.full((self.n_nodes, 2), IDEAL_TRANSMISSIVITY))

    def is_ideal(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.couplers() - IDEAL_TRANSMISSIVITY) <= tol))

    def layers(self) -> list:
        """Node indices grouped by layer."""
        grouped = [[] for _ in range(self.n_layers)]
        for i, node in enumerate(self.nodes):
            grouped[node.layer].append(i)
        return grouped

    def gauge_heaters(self) -> list:
        """Heaters whose phase only moves an unobservable input or output phase."""
        first_layer = [n.phi_heater for n in self.nodes if n.layer == 0]
        return sorted(first_layer + list(self.screen_heaters))

    def layout_hash(self) -> str:
        """Hash of the topology only; coupler values differ between truth and fit."""
        topology = {"n_modes": self.n_modes, "screen": self.has_output_phase_screen,
                    "nodes": [[n.layer, n.top_mode, n.phi_heater, n.theta_heater] for n in self.nodes]}
        return hashlib.sha256(json.dumps(topology, sort_keys=True).encode()).hexdigest()[:16]

    def to_json(self) -> dict:
        return {"n_modes": self.n_modes,
                "has_output_phase_screen": self.has_output_phase_screen,
                "nodes": [n.to_json() for n in self.nodes],
                "layout_hash": self.layout_hash()}

    @classmethod
    def from_json(cls, payload: dict) -> "MeshLayout":
        try:
            nodes = tuple(MZINode(**node) for node in payload["nodes"])
            return cls(int(payload["n_modes"]), nodes, bool(payload.get("has_output_phase_screen", True)))
        except (KeyError, TypeError) as e:
            raise ValidationError(f"Malformed layout document: {e}") from e


def standard_layout(n: int) -> MeshLayout:
    """Universal rectangular mesh: n layers alternating between even and odd mode pairs."""
    if n < 2:
        raise ValidationError(f"A mesh needs at least 2 modes, got {n}")
    nodes = []
    for layer in range(n):
        for top in range(layer % 2, n - 1, 2):
            i = len(nodes)
            nodes.append(MZINode(layer=layer, top_mode=top, phi_heater=2 * i, theta_heater=2 * i + 1))
    return MeshLayout(n, tuple(nodes), has_output_phase_screen=True)


def input_phase_gauge(layout: MeshLayout, mode: int) -> np.ndarray:
    """
    Heater shift that reproduces a unit phase on input `mode`:
    mesh_unitary(theta + delta) == mesh_unitary(theta) @ diag(exp(1j * e_mode)).

    The phase on a node's inputs splits into a common part, which passes to
    both outputs, and a top-minus-bottom part absorbed by the external heater.
    """
    if not layout.has_output_phase_screen:
        raise ValidationError("Input-phase gauges need an output phase screen")
    if not 0 <= mode < layout.n_modes:
        raise ValidationError(f"Mode {mode} out of range")
    carried = np.zeros(layout.n_modes)
    carried[mode] = 1.0
    delta = np.zeros(layout.n_heaters)
    for node in layout.nodes:
        k = node.top_mode
        delta[node.phi_heater] += carried[k] - carried[k + 1]
        carried[k] = carried[k + 1]
    delta[list(layout.screen_heaters)] += carried
    return delta


def gauge_directions(layout: MeshLayout) -> np.ndarray:
    """(2n, n_heaters) directions that leave every |U| unchanged (rank 2n-1: the global phase repeats)."""
    directions = [input_phase_gauge(layout, m) for m in range(layout.n_modes)]
    for h in layout.screen_heaters:
        e = np.zeros(layout.n_heaters)
        e[h] = 1.0
        directions.append(e)
    return np.array(directions)
