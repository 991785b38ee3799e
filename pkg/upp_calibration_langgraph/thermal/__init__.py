from .model import (
    DEFAULT_MAX_POWER_MW,
    DEFAULT_P2PI_MW,
    DRIFT_RATE_PER_HOUR,
    PHASE_TOLERANCE_RAD,
    ThermalModel,
    crosstalk_window,
    phases_from_powers,
    powers_for_phases,
    total_power,
    wrapped_phase_error,
)
