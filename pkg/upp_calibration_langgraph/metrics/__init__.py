from .figures import (
    EXTINCTION_CEILING_DB,
    METRICS,
    POWER_BUDGET_REFERENCE_MW,
    FidelityReport,
    amplitude_fidelity,
    db_from_transmission,
    extinction_ratio_db,
    get_metric,
    normalize_columns,
    transmission_from_db,
)
