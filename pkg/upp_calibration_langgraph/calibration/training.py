"""Random-power measurement campaigns used as training data for the model fit."""
import logging

import numpy as np

from ..core import make_rng
from ..errors import ValidationError

logger = logging.getLogger(__name__)

DEFAULT_POWER_RANGE_MW = (0.0, 45.0)
BATCH_SIZE = 256


def generate_training_set(device, count: int, power_range=DEFAULT_POWER_RANGE_MW, seed: int = 0) -> list:
    """Every heater drawn uniformly in power_range for each of `count` records."""
    if count < 1:
        raise ValidationError(f"Training set size must be >= 1, got {count}")
    low, high = (float(v) for v in power_range)
    if low < 0 or high < low:
        raise ValidationError(f"Invalid power range [{low}, {high}] mW")
    if high > device.max_power:
        raise ValidationError(f"Power range upper bound {high} mW exceeds the device limit {device.max_power} mW")

    rng = make_rng(seed, stream=2)
    records = []
    for start in range(0, count, BATCH_SIZE):
        size = min(BATCH_SIZE, count - start)
        powers = rng.uniform(low, high, size=(size, device.n_heaters))
        records.extend(device.measure_batch(powers))
    logger.info(f"Acquired {count} training records over [{low}, {high}] mW")
    return records


def split_records(records: list, validation_fraction: float = 0.1, seed: int = 0) -> tuple:
    """Shuffled (train, validation) split; validation keeps at least one record when possible."""
    if not 0.0 <= validation_fraction < 1.0:
        raise ValidationError("validation_fraction must lie in [0, 1)")
    order = make_rng(seed, stream=3).permutation(len(records))
    n_val = int(round(validation_fraction * len(records)))
    if validation_fraction > 0 and len(records) > 1:
        n_val = max(n_val, 1)
    validation = [records[i] for i in sorted(order[:n_val])]
    train = [records[i] for i in sorted(order[n_val:])]
    return train, validation
