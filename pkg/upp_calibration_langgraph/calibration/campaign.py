"""Programming campaigns over sets of target unitaries, and the target generators."""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from ..core import ComplexMatrix, Unitary, haar_random_unitary, make_rng
from ..errors import TwinError, ValidationError
from ..metrics import POWER_BUDGET_REFERENCE_MW, FidelityReport, get_metric
from ..thermal import total_power
from ..utils import read_json
from .programming import plan_unitary

logger = logging.getLogger(__name__)

FIDELITY_REFERENCE = 0.997
TARGET_KINDS = ("haar", "permutation", "phase-screen", "file")
CAMPAIGN_COLUMNS = ["target_id", "fidelity", "total_power_mw", "status", "phase_residual_rad"]


def haar_targets(n: int, count: int, seed: int) -> list:
    rng = make_rng(seed, stream=6)
    return [haar_random_unitary(n, rng) for _ in range(count)]


def permutation_targets(n: int, count: int, seed: int) -> list:
    rng = make_rng(seed, stream=7)
    return [Unitary(np.eye(n, dtype=complex)[:, rng.permutation(n)]) for _ in range(count)]


def phase_screen_targets(n: int, count: int, seed: int) -> list:
    rng = make_rng(seed, stream=8)
    return [Unitary(np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, n)))) for _ in range(count)]


def load_targets(path) -> list:
    """Targets file: {"targets": [matrix, ...]} with matrices in the {rows, cols, re, im} form."""
    document = read_json(path)
    entries = document.get("targets") if isinstance(document, dict) else document
    if not entries:
        raise ValidationError(f"{path}: no targets")
    return [Unitary(ComplexMatrix.from_json(entry).data) for entry in entries]


def make_targets(kind: str, n: int, count: int = 1, seed: int = 0, path=None) -> list:
    if kind == "file":
        if path is None:
            raise ValidationError("Target kind 'file' needs a path")
        targets = load_targets(path)
        if any(t.n_modes != n for t in targets):
            raise ValidationError(f"{path}: every target must be {n}x{n}")
        return targets
    if count < 1:
        raise ValidationError(f"Target count must be >= 1, got {count}")
    generators = {"haar": haar_targets, "permutation": permutation_targets,
                  "phase-screen": phase_screen_targets}
    if kind not in generators:
        raise ValidationError(f"Unknown target kind '{kind}'; choose from {TARGET_KINDS}")
    return generators[kind](n, count, seed)


@dataclass
class CampaignResult:
    rows: list
    fidelity: FidelityReport | None
    powers_mw: list = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=CAMPAIGN_COLUMNS)

    def summary(self) -> dict:
        failed = [r for r in self.rows if r["status"] != "ok"]
        residuals = [r["phase_residual_rad"] for r in self.rows if r["status"] == "ok"]
        power = np.asarray(self.powers_mw, dtype=float)
        return {"targets": len(self.rows),
                "failed": len(failed),
                "fidelity": self.fidelity.to_dict() if self.fidelity else None,
                "fidelity_reference": FIDELITY_REFERENCE,
                "power_mw": ({"mean": float(power.mean()), "min": float(power.min()), "max": float(power.max())}
                             if power.size else None),
                "power_reference_mw": POWER_BUDGET_REFERENCE_MW,
                "targets_under_power_reference": int(np.sum(power < POWER_BUDGET_REFERENCE_MW)),
                "max_phase_residual_rad": max(residuals) if residuals else None}

    def write_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False, float_format="%.12g")
        return path


def evaluate_campaign(model, device, targets: list, metric: str = "amplitude_overlap", audit=None) -> CampaignResult:
    """Programs each target, measures it on the device and scores it; failures are recorded per target."""
    if not targets:
        raise ValidationError("No targets to evaluate")
    score = get_metric(metric)
    rows, fidelities, powers_mw = [], [], []
    for target_id, target in enumerate(targets):
        try:
            plan = plan_unitary(model, target)
            record = device.measure_amplitudes(plan.powers)
            fidelity = score(np.abs(np.asarray(target)), record.amplitudes)
        except TwinError as e:
            logger.warning(f"Target {target_id} failed: {e}")
            if audit is not None:
                audit.highlight_anomaly("evaluate", f"target {target_id}: {type(e).__name__}: {e}")
            rows.append({"target_id": target_id, "fidelity": float("nan"), "total_power_mw": float("nan"),
                         "status": type(e).__name__, "phase_residual_rad": float("nan")})
            continue
        power = total_power(plan.powers)
        fidelities.append(fidelity)
        powers_mw.append(power)
        rows.append({"target_id": target_id, "fidelity": fidelity, "total_power_mw": power,
                     "status": "ok", "phase_residual_rad": plan.phase_residual})

    report = FidelityReport.from_values(fidelities) if fidelities else None
    if report is not None:
        logger.info(f"Campaign over {len(targets)} targets: mean fidelity {report.mean:.5f} "
                    f"(min {report.min:.5f}), mean power {np.mean(powers_mw):.1f} mW")
    return CampaignResult(rows, report, powers_mw)
