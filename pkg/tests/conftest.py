import numpy as np
import pytest

from upp_calibration_langgraph.device import ImperfectionConfig, SimulatedProcessor, synth_device


@pytest.fixture
def ideal_config():
    return ImperfectionConfig(coupler_delta=0.0, crosstalk_eps=0.0, p2pi_sigma_mw=0.0, noise_sigma=0.0)


@pytest.fixture
def ideal_device(ideal_config):
    def make(n, seed=0):
        truth = synth_device(n, seed, ideal_config)
        return truth, SimulatedProcessor(truth)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
