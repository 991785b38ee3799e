from .campaign import (
    CAMPAIGN_COLUMNS,
    FIDELITY_REFERENCE,
    TARGET_KINDS,
    CampaignResult,
    evaluate_campaign,
    haar_targets,
    load_targets,
    make_targets,
    permutation_targets,
    phase_screen_targets,
)
from .fit import CalibrationProblem, FitHyperparameters, fit_model
from .fringe import FringeFit, FringeScan, fit_fringe
from .model import CalibrationModel, load_model, save_model
from .optimizer import LevenbergMarquardt, OptimizerResult
from .programming import ProgramPlan, plan_unitary, program_unitary, refine_phases
from .routing import RoutingResult, optimize_routing, route_nodes
from .stability import STABILITY_COLUMNS, StabilityTrace, stability_trace
from .training import DEFAULT_POWER_RANGE_MW, generate_training_set, split_records
