"""
Synthetic hardware: a processor with hidden ground-truth parameters.

Only what a lab can observe leaves this module: amplitude matrices, output
power distributions and absolute port powers. Complex phases of U never do.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..core import RNG_ALGORITHM, make_rng
from ..errors import DeviceFileError, LayoutMismatchError, NumericalError, ValidationError
from ..mesh import MeshLayout, batch_unitaries, propagate, standard_layout
from ..thermal import (
    DEFAULT_MAX_POWER_MW,
    DEFAULT_P2PI_MW,
    DRIFT_RATE_PER_HOUR,
    ThermalModel,
    crosstalk_window,
    phases_from_powers,
)
from ..utils import SCHEMA_VERSION, read_json, seal_payload, unseal_payload, write_json

logger = logging.getLogger(__name__)

MAX_NOISE_SIGMA = 0.2
TRUTH_STREAM, NOISE_STREAM = 0, 1
# one noise stream per measurement session, so commands never replay each other's noise
SESSION_STREAMS = {"lab": NOISE_STREAM, "characterize": 10, "fringe": 11, "route": 12, "trainset": 13,
                   "calibrate": 14, "program": 15, "evaluate": 16, "stability": 17}


@dataclass(frozen=True)
class ImperfectionConfig:
    coupler_delta: float = 0.05
    crosstalk_eps: float = 0.05
    p2pi_mean_mw: float = DEFAULT_P2PI_MW
    p2pi_sigma_mw: float = 2.0
    noise_sigma: float = 0.0
    input_loss_db: float = 0.0
    output_loss_db: float = 0.0
    pigtail_loss_db: float = 0.0
    input_loss_overrides: dict = field(default_factory=dict)
    output_loss_overrides: dict = field(default_factory=dict)
    random_static_phase: bool = True
    window: int | None = None
    max_power_mw: float = DEFAULT_MAX_POWER_MW
    drift_enabled: bool = False
    drift_rate_per_hour: float = DRIFT_RATE_PER_HOUR

    def __post_init__(self):
        if not 0.0 <= self.coupler_delta <= 0.5:
            raise ValidationError(f"coupler_delta {self.coupler_delta} outside [0, 0.5]")
        if not 0.0 <= self.crosstalk_eps <= 1.0:
            raise ValidationError(f"crosstalk_eps {self.crosstalk_eps} outside [0, 1]")
        if not self.p2pi_mean_mw > 0 or self.p2pi_sigma_mw < 0:
            raise ValidationError("p2pi mean must be positive and its sigma nonnegative")
        if not 0.0 <= self.noise_sigma <= MAX_NOISE_SIGMA:
            raise ValidationError(f"noise_sigma {self.noise_sigma} outside [0, {MAX_NOISE_SIGMA}]")
        losses = [self.input_loss_db, self.output_loss_db, self.pigtail_loss_db,
                  *self.input_loss_overrides.values(), *self.output_loss_overrides.values()]
        if any(not np.isfinite(v) or v < 0 for v in losses):
            raise ValidationError("Facet losses must be finite and >= 0 dB")
        if self.window is not None and self.window < 0:
            raise ValidationError("Crosstalk window must be >= 0")
        if not self.max_power_mw > 0:
            raise ValidationError("max_power_mw must be positive")

    def facet_losses(self, n: int) -> tuple:
        inputs = np.full(n, float(self.input_loss_db))
        outputs = np.full(n, float(self.output_loss_db))
        for overrides, target in ((self.input_loss_overrides, inputs), (self.output_loss_overrides, outputs)):
            for port, loss in overrides.items():
                if not 0 <= int(port) < n:
                    raise ValidationError(f"Loss override for port {port} outside 0..{n - 1}")
                target[int(port)] = float(loss)
        return inputs, outputs


@dataclass(frozen=True, eq=False)
class DeviceGroundTruth:
    layout: MeshLayout
    thermal: ThermalModel
    input_loss_db: np.ndarray
    output_loss_db: np.ndarray
    noise_sigma: float
    seed: int
    drift_rate_per_hour: float | None = None
    pigtail_loss_db: float = 0.0

    def __post_init__(self):
        n = self.layout.n_modes
        if self.thermal.n_heaters != self.layout.n_heaters:
            raise LayoutMismatchError("Thermal model and layout disagree on the heater count")
        for name in ("input_loss_db", "output_loss_db"):
            losses = np.array(getattr(self, name), dtype=float)
            if losses.shape != (n,) or np.any(losses < 0):
                raise ValidationError(f"{name} must hold {n} nonnegative values")
            losses.setflags(write=False)
            object.__setattr__(self, name, losses)
        if not 0.0 <= self.noise_sigma <= MAX_NOISE_SIGMA:
            raise ValidationError(f"noise_sigma {self.noise_sigma} outside [0, {MAX_NOISE_SIGMA}]")
        if not np.isfinite(self.pigtail_loss_db) or self.pigtail_loss_db < 0:
            raise ValidationError("pigtail_loss_db must be finite and >= 0 dB")

    def to_json(self) -> dict:
        return {"layout": self.layout.to_json(), "thermal": self.thermal.to_json(),
                "input_loss_db": self.input_loss_db.tolist(),
                "output_loss_db": self.output_loss_db.tolist(),
                "noise_sigma": self.noise_sigma, "seed": self.seed,
                "drift_rate_per_hour": self.drift_rate_per_hour,
                "pigtail_loss_db": self.pigtail_loss_db}

    @classmethod
    def from_json(cls, payload: dict) -> "DeviceGroundTruth":
        try:
            return cls(MeshLayout.from_json(payload["layout"]),
                       ThermalModel.from_json(payload["thermal"]),
                       payload["input_loss_db"], payload["output_loss_db"],
                       float(payload["noise_sigma"]), int(payload["seed"]),
                       payload.get("drift_rate_per_hour"), float(payload.get("pigtail_loss_db", 0.0)))
        except (KeyError, TypeError) as e:
            raise DeviceFileError(f"Malformed ground-truth section: {e}") from e


def synth_device(n: int, seed: int, config: ImperfectionConfig | None = None) -> DeviceGroundTruth:
    config = config or ImperfectionConfig()
    layout = standard_layout(n)
    rng = make_rng(seed, stream=TRUTH_STREAM)

    delta = config.coupler_delta
    layout = layout.with_couplers(rng.uniform(0.5 - delta, 0.5 + delta, size=(layout.n_nodes, 2)))

    h = layout.n_heaters
    theta0 = rng.uniform(0.0, 2 * np.pi, size=h) if config.random_static_phase else np.zeros(h)
    p2pi = rng.normal(config.p2pi_mean_mw, config.p2pi_sigma_mw, size=h)
    p2pi = np.clip(p2pi, 0.5 * config.p2pi_mean_mw, None)

    window = min(n if config.window is None else config.window, h - 1)
    index = crosstalk_window(h, window)
    # heating only raises neighbouring phases
    xtalk = rng.uniform(0.0, config.crosstalk_eps, size=index.shape) * 2 * np.pi / config.p2pi_mean_mw
    xtalk = np.minimum(xtalk, 2 * np.pi / p2pi[index])
    thermal = ThermalModel(theta0, p2pi, index, xtalk, config.max_power_mw)

    inputs, outputs = config.facet_losses(n)
    truth = DeviceGroundTruth(layout, thermal, inputs, outputs, float(config.noise_sigma), int(seed),
                              config.drift_rate_per_hour if config.drift_enabled else None,
                              float(config.pigtail_loss_db))
    logger.info(f"Synthesized device n={n} seed={seed}: {layout.n_nodes} MZIs, "
                f"{layout.n_couplers} couplers, {layout.n_heaters} heaters")
    return truth


@dataclass(frozen=True, eq=False)
class MeasurementRecord:
    seq: int
    powers: np.ndarray
    amplitudes: np.ndarray


@dataclass(frozen=True, eq=False)
class OutputDistribution:
    probabilities: np.ndarray
    transmission: float

    @property
    def loss_db(self) -> float:
        return float(-10 * np.log10(self.transmission))


@dataclass(frozen=True, eq=False)
class InsertionLossReport:
    """Insertion loss per input port of the packaged device, and of the bare chip before pigtailing."""
    per_port_db: np.ndarray
    average_db: float
    before_pigtail_db: np.ndarray | None = None

    @property
    def average_before_pigtail_db(self) -> float | None:
        return None if self.before_pigtail_db is None else float(self.before_pigtail_db.mean())

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"input_port": np.arange(self.per_port_db.size),
                              "insertion_loss_db": self.per_port_db})
        if self.before_pigtail_db is not None:
            frame.insert(1, "insertion_loss_before_pigtail_db", self.before_pigtail_db)
        return frame


class SimulatedProcessor:
    """
    The simulated lab. Owns the private ground truth, a noise stream, the
    sequence counter and the drift clock; exposes the nominal layout only.
    """

    def __init__(self, truth: DeviceGroundTruth, noise_seed: int | None = None, session: str = "lab"):
        if session not in SESSION_STREAMS:
            raise ValidationError(f"Unknown measurement session '{session}'")
        self._truth = truth
        self.layout = truth.layout.ideal()
        self.session = session
        self._rng = make_rng(truth.seed if noise_seed is None else noise_seed, stream=SESSION_STREAMS[session])
        self._in_t = 10 ** (-truth.input_loss_db / 10)
        self._pigtail_t = 10 ** (-truth.pigtail_loss_db / 10)
        self._out_t = 10 ** (-truth.output_loss_db / 10)
        self.seq = 0
        self.clock_hours = 0.0

    @property
    def n_modes(self) -> int:
        return self.layout.n_modes

    @property
    def n_heaters(self) -> int:
        return self.layout.n_heaters

    @property
    def max_power(self) -> float:
        return self._truth.thermal.max_power

    @property
    def noise_sigma(self) -> float:
        return self._truth.noise_sigma

    def advance_clock(self, hours: float):
        if hours < 0:
            raise ValidationError("The drift clock only runs forward")
        self.clock_hours += float(hours)

    def _thermal(self) -> ThermalModel:
        rate = self._truth.drift_rate_per_hour
        if rate is None or self.clock_hours == 0:
            return self._truth.thermal
        return self._truth.thermal.drifted(self.clock_hours, rate)

    def _check_powers(self, powers) -> np.ndarray:
        powers = np.atleast_2d(np.asarray(powers, dtype=float))
        if powers.ndim != 2 or powers.shape[1] != self.n_heaters:
            raise ValidationError(f"Expected power vectors of length {self.n_heaters}")
        if not np.all(np.isfinite(powers)) or np.any(powers < 0) or np.any(powers > self.max_power):
            raise ValidationError(f"Heater powers must lie in [0, {self.max_power}] mW")
        return powers

    def _noisy(self, amplitudes: np.ndarray) -> np.ndarray:
        if self.noise_sigma == 0:
            return amplitudes
        eta = self._rng.normal(0.0, self.noise_sigma, size=amplitudes.shape)
        return np.clip(amplitudes * (1 + eta), 0.0, None)

    def measure_batch(self, powers) -> list:
        powers = self._check_powers(powers)
        phases = phases_from_powers(self._thermal(), powers)
        amplitudes = self._noisy(np.abs(batch_unitaries(self._truth.layout, phases)))
        records = []
        for p, a in zip(powers, amplitudes):
            records.append(MeasurementRecord(self.seq, p.copy(), a))
            self.seq += 1
        return records

    def measure_amplitudes(self, powers) -> MeasurementRecord:
        powers = np.asarray(powers, dtype=float)
        if powers.ndim != 1:
            raise ValidationError("measure_amplitudes takes one power vector; use measure_batch")
        return self.measure_batch(powers)[0]

    def port_powers(self, input_port: int, powers, pigtailed: bool = True) -> np.ndarray:
        """
        Absolute output power per port (unit launch power) for one or many power
        vectors. `pigtailed=False` couples light into the bare chip facets.
        """
        self._check_port(input_port)
        single = np.asarray(powers).ndim == 1
        powers = self._check_powers(powers)
        phases = phases_from_powers(self._thermal(), powers)
        state = np.zeros((powers.shape[0], self.n_modes, 1), dtype=complex)
        state[:, input_port, 0] = 1.0
        column = np.abs(propagate(self._truth.layout, phases, state)[..., 0])
        measured = self._noisy(column) ** 2 * self._in_t[input_port] * self._out_t
        if pigtailed:
            measured = measured * self._pigtail_t
        return measured[0] if single else measured

    def measure_output_distribution(self, input_port: int, powers, pigtailed: bool = True) -> OutputDistribution:
        measured = self.port_powers(input_port, np.asarray(powers, dtype=float).reshape(-1), pigtailed)
        total = float(measured.sum())
        if total <= 0:
            raise NumericalError(f"No light detected from input {input_port}")
        return OutputDistribution(measured / total, total)

    def static_transformation(self) -> np.ndarray:
        """Normalized power distribution with all heaters off; column k is input k."""
        off = np.zeros(self.n_heaters)
        return np.stack([self.measure_output_distribution(k, off).probabilities
                         for k in range(self.n_modes)], axis=1)

    def insertion_loss_report(self) -> InsertionLossReport:
        off = np.zeros(self.n_heaters)

        def losses(pigtailed):
            return np.array([self.measure_output_distribution(k, off, pigtailed).loss_db
                             for k in range(self.n_modes)])

        before, after = losses(False), losses(True)
        return InsertionLossReport(after, float(after.mean()), before)

    def _check_port(self, port: int):
        if not 0 <= port < self.n_modes:
            raise ValidationError(f"Port {port} outside 0..{self.n_modes - 1}")


def records_to_frame(records: list) -> pd.DataFrame:
    if not records:
        raise ValidationError("No measurement records")
    n_heaters = records[0].powers.size
    n = records[0].amplitudes.shape[0]
    columns = (["seq"] + [f"P_{h}" for h in range(n_heaters)]
               + [f"A_{i}_{j}" for i in range(n) for j in range(n)])
    rows = [np.concatenate([[r.seq], r.powers, r.amplitudes.ravel()]) for r in records]
    frame = pd.DataFrame(rows, columns=columns)
    frame["seq"] = frame["seq"].astype(int)
    return frame


def frame_to_records(frame: pd.DataFrame) -> list:
    power_cols = [c for c in frame.columns if c.startswith("P_")]
    amp_cols = [c for c in frame.columns if c.startswith("A_")]
    n = int(round(np.sqrt(len(amp_cols))))
    if "seq" not in frame.columns or n * n != len(amp_cols) or not power_cols:
        raise DeviceFileError("Measurement log lacks seq, P_* or a square set of A_* columns")
    powers = frame[power_cols].to_numpy(dtype=float)
    amplitudes = frame[amp_cols].to_numpy(dtype=float).reshape(-1, n, n)
    return [MeasurementRecord(int(s), p, a) for s, p, a in zip(frame["seq"], powers, amplitudes)]


def write_measurement_log(path, records: list) -> Path:
    path = Path(path)
    records_to_frame(records).to_csv(path, index=False, float_format="%.12g")
    logger.info(f"Wrote {len(records)} measurement records to {path}")
    return path


def read_measurement_log(path) -> list:
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DeviceFileError(f"Cannot read measurement log {path}: {e}") from e
    return frame_to_records(frame)


def device_document(truth: DeviceGroundTruth) -> dict:
    nominal = truth.layout.ideal()
    return {"schema_version": SCHEMA_VERSION,
            "rng_algorithm": RNG_ALGORITHM,
            "n_modes": nominal.n_modes,
            "max_power_mw": truth.thermal.max_power,
            "layout": nominal.to_json(),
            "layout_hash": nominal.layout_hash(),
            "sealed": seal_payload(truth.to_json())}


def save_device(path, truth: DeviceGroundTruth) -> Path:
    return write_json(path, device_document(truth))


def read_device_public(path) -> dict:
    """Public part of a device file; the sealed section is dropped."""
    document = read_json(path)
    if document.get("schema_version") != SCHEMA_VERSION:
        raise DeviceFileError(f"{path}: unsupported schema version {document.get('schema_version')}")
    public = {k: v for k, v in document.items() if k != "sealed"}
    public["layout"] = MeshLayout.from_json(document["layout"])
    return public


def load_processor(path, noise_seed: int | None = None, session: str = "lab") -> SimulatedProcessor:
    document = read_json(path)
    if "sealed" not in document or document.get("schema_version") != SCHEMA_VERSION:
        raise DeviceFileError(f"{path}: not a device file of schema version {SCHEMA_VERSION}")
    truth = DeviceGroundTruth.from_json(unseal_payload(document["sealed"]))
    if truth.layout.layout_hash() != document.get("layout_hash"):
        raise LayoutMismatchError(f"{path}: public and sealed layouts disagree")
    return SimulatedProcessor(truth, noise_seed, session)
