"""The fitted circuit model and its JSON file."""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DeviceFileError, LayoutMismatchError, ValidationError
from ..mesh import MeshLayout, batch_unitaries
from ..thermal import ThermalModel, phases_from_powers
from ..utils import SCHEMA_VERSION, read_json, write_json

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CalibrationModel:
    layout: MeshLayout
    thermal: ThermalModel
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.thermal.n_heaters != self.layout.n_heaters:
            raise LayoutMismatchError("Thermal model and layout disagree on the heater count")

    @property
    def n_modes(self) -> int:
        return self.layout.n_modes

    def layout_hash(self) -> str:
        return self.layout.layout_hash()

    def parameter_counts(self) -> dict:
        return {"static_phases": self.thermal.n_heaters,
                "coupler_ratios": self.layout.n_couplers,
                "crosstalk": int(self.thermal.xtalk.size),
                "p2pi": self.thermal.n_heaters}

    def predict_amplitudes(self, powers) -> np.ndarray:
        """|U| for one power vector (n, n) or a batch (B, n, n)."""
        powers = np.asarray(powers, dtype=float)
        u = batch_unitaries(self.layout, phases_from_powers(self.thermal, np.atleast_2d(powers)))
        return np.abs(u[0] if powers.ndim == 1 else u)

    def amplitude_rms(self, records: list) -> float:
        if not records:
            raise ValidationError("No records to evaluate")
        predicted = self.predict_amplitudes(np.array([r.powers for r in records]))
        measured = np.array([r.amplitudes for r in records])
        return float(np.sqrt(np.mean((predicted - measured) ** 2)))

    def to_json(self) -> dict:
        return {"schema_version": SCHEMA_VERSION,
                "layout_hash": self.layout_hash(),
                "layout": self.layout.to_json(),
                "thermal": self.thermal.to_json(),
                "parameter_counts": self.parameter_counts(),
                "metadata": self.metadata}

    @classmethod
    def from_json(cls, payload: dict) -> "CalibrationModel":
        if payload.get("schema_version") != SCHEMA_VERSION:
            raise DeviceFileError(f"Unsupported model schema version {payload.get('schema_version')}")
        try:
            layout = MeshLayout.from_json(payload["layout"])
            thermal = ThermalModel.from_json(payload["thermal"])
        except KeyError as e:
            raise DeviceFileError(f"Model document lacks {e}") from e
        if layout.layout_hash() != payload.get("layout_hash"):
            raise LayoutMismatchError("Model layout hash does not match its layout")
        return cls(layout, thermal, payload.get("metadata", {}))


def save_model(path, model: CalibrationModel) -> Path:
    return write_json(path, model.to_json())


def load_model(path, expected_hash: str | None = None) -> CalibrationModel:
    model = CalibrationModel.from_json(read_json(path))
    if expected_hash is not None and model.layout_hash() != expected_hash:
        raise LayoutMismatchError(f"{path}: model layout {model.layout_hash()} does not match device {expected_hash}")
    return model
