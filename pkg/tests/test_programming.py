import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from upp_calibration_langgraph.audit import AuditTrail
from upp_calibration_langgraph.calibration import (
    CAMPAIGN_COLUMNS,
    FIDELITY_REFERENCE,
    CalibrationModel,
    evaluate_campaign,
    load_targets,
    make_targets,
    plan_unitary,
    program_unitary,
    refine_phases,
)
from upp_calibration_langgraph.core import haar_random_unitary, identity_unitary, make_rng
from upp_calibration_langgraph.device import ImperfectionConfig, SimulatedProcessor, synth_device
from upp_calibration_langgraph.errors import InfeasiblePowerError, LayoutMismatchError, ValidationError
from upp_calibration_langgraph.mesh import clements_decompose, mesh_unitary, standard_layout
from upp_calibration_langgraph.metrics import amplitude_fidelity
from upp_calibration_langgraph.thermal import ThermalModel, phases_from_powers


def ideal_model(n, max_power=60.0):
    layout = standard_layout(n)
    return CalibrationModel(layout, ThermalModel.ideal(layout.n_heaters, max_power=max_power))


def truth_model(truth):
    return CalibrationModel(truth.layout, truth.thermal)


class TestPlan:
    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_ideal_model_realizes_target(self, n):
        model = ideal_model(n)
        rng = make_rng(3, stream=6)
        for _ in range(3):
            target = haar_random_unitary(n, rng)
            plan = plan_unitary(model, target)
            realized = mesh_unitary(model.layout, phases_from_powers(model.thermal, plan.powers))
            assert_allclose(realized.data, target.data, atol=1e-9)
            assert plan.phase_residual < 1e-9
            assert plan.model_error == 0.0
            assert np.all((plan.powers >= 0) & (plan.powers <= 60.0))

    def test_identity(self):
        model = ideal_model(4)
        powers = program_unitary(model, identity_unitary(4))
        realized = mesh_unitary(model.layout, phases_from_powers(model.thermal, powers))
        assert_allclose(realized.data, np.eye(4), atol=1e-9)

    def test_through_crosstalk_on_device(self):
        config = ImperfectionConfig(coupler_delta=0.0, crosstalk_eps=0.05, p2pi_sigma_mw=0.0, noise_sigma=0.0)
        truth = synth_device(4, 6, config)
        device = SimulatedProcessor(truth)
        model = truth_model(truth)
        for target in make_targets("haar", 4, count=5, seed=2):
            record = device.measure_amplitudes(program_unitary(model, target))
            assert amplitude_fidelity(np.abs(target.data), record.amplitudes) >= 1 - 1e-8

    def test_size_mismatch(self):
        with pytest.raises(LayoutMismatchError):
            plan_unitary(ideal_model(3), identity_unitary(4))

    def test_power_budget(self):
        model = ideal_model(3, max_power=10.0)
        target = haar_random_unitary(3, make_rng(0))
        with pytest.raises(InfeasiblePowerError):
            plan_unitary(model, target)


class TestRefinement:
    def test_refinement_on_imperfect_couplers(self):
        truth = synth_device(4, 9, ImperfectionConfig(coupler_delta=0.03, crosstalk_eps=0.0, noise_sigma=0.0))
        target = haar_random_unitary(4, make_rng(5))
        start = clements_decompose(target, truth.layout.ideal())
        before = np.linalg.norm(mesh_unitary(truth.layout, start).data - target.data)
        phases, error = refine_phases(truth.layout, target, start)
        assert error <= before
        realized = np.abs(mesh_unitary(truth.layout, phases).data)
        assert amplitude_fidelity(np.abs(target.data), realized) >= 0.99

    def test_plan_reports_model_error(self):
        truth = synth_device(3, 2, ImperfectionConfig(coupler_delta=0.03, crosstalk_eps=0.0))
        plan = plan_unitary(truth_model(truth), haar_random_unitary(3, make_rng(1)))
        assert plan.model_error >= 0.0
        assert plan.phase_residual < 1e-9


class TestTargets:
    def test_kinds(self):
        for kind in ("haar", "permutation", "phase-screen"):
            targets = make_targets(kind, 4, count=3, seed=1)
            assert len(targets) == 3
            assert all(t.n_modes == 4 for t in targets)
        for target in make_targets("permutation", 5, count=4):
            m = np.abs(target.data)
            assert_allclose(m.sum(axis=0), 1.0)
            assert set(np.unique(m)) <= {0.0, 1.0}

    def test_deterministic(self):
        a = make_targets("haar", 3, count=2, seed=8)
        b = make_targets("haar", 3, count=2, seed=8)
        for x, y in zip(a, b):
            assert_allclose(x.data, y.data)

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            make_targets("fourier", 3)
        with pytest.raises(ValidationError):
            make_targets("haar", 3, count=0)

    def test_file(self, tmp_path):
        targets = make_targets("haar", 3, count=2, seed=0)
        path = tmp_path / "targets.json"
        path.write_text(json.dumps({"targets": [t.to_json() for t in targets]}))
        loaded = make_targets("file", 3, path=path)
        for x, y in zip(targets, loaded):
            assert_allclose(x.data, y.data)
        with pytest.raises(ValidationError):
            make_targets("file", 4, path=path)
        with pytest.raises(ValidationError):
            make_targets("file", 3)

    def test_empty_file(self, tmp_path):
        path = tmp_path / "targets.json"
        path.write_text(json.dumps({"targets": []}))
        with pytest.raises(ValidationError):
            load_targets(path)


class TestCampaign:
    def test_desk_campaign_on_known_device(self, ideal_device, tmp_path):
        truth, device = ideal_device(4, seed=3)
        targets = make_targets("haar", 4, count=6, seed=1)
        result = evaluate_campaign(truth_model(truth), device, targets)
        frame = result.to_frame()
        assert list(frame.columns) == CAMPAIGN_COLUMNS
        assert (frame["status"] == "ok").all()
        assert result.fidelity.min >= 1 - 1e-8

        summary = result.summary()
        assert summary["targets"] == 6
        assert summary["failed"] == 0
        assert summary["fidelity_reference"] == FIDELITY_REFERENCE
        assert summary["targets_under_power_reference"] == 6
        assert summary["fidelity"]["count"] == 6

        path = result.write_csv(tmp_path / "campaign.csv")
        assert path.read_text().splitlines()[0] == ",".join(CAMPAIGN_COLUMNS)

    def test_failures_are_recorded_per_target(self, ideal_device):
        truth, device = ideal_device(3)
        starved = CalibrationModel(truth.layout, ThermalModel(truth.thermal.theta0, truth.thermal.p2pi,
                                                              truth.thermal.xtalk_index, truth.thermal.xtalk,
                                                              max_power=1.0))
        audit = AuditTrail("campaign")
        result = evaluate_campaign(starved, device, make_targets("haar", 3, count=3, seed=0), audit=audit)
        frame = result.to_frame()
        assert list(frame["status"]) == ["InfeasiblePowerError"] * 3
        assert frame["fidelity"].isna().all()
        assert result.fidelity is None
        assert result.summary()["failed"] == 3
        assert len(audit.anomalies) == 3

    def test_no_targets(self, ideal_device):
        truth, device = ideal_device(2)
        with pytest.raises(ValidationError):
            evaluate_campaign(truth_model(truth), device, [])

    def test_unknown_metric(self, ideal_device):
        truth, device = ideal_device(2)
        with pytest.raises(ValidationError):
            evaluate_campaign(truth_model(truth), device, make_targets("haar", 2), metric="trace")


@pytest.mark.slow
@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_desk_scale_acceptance(seed):
    from upp_calibration_langgraph.calibration import FitHyperparameters, fit_model, generate_training_set

    config = ImperfectionConfig(coupler_delta=0.05, crosstalk_eps=0.05, noise_sigma=0.01)
    truth = synth_device(6, seed, config)
    device = SimulatedProcessor(truth, noise_seed=seed + 1)
    records = generate_training_set(device, 2000, power_range=(0.0, 45.0), seed=seed)
    model = fit_model(device.layout, records, FitHyperparameters(max_iterations=50, seed=seed))
    assert model.metadata["validation_rms"] <= 2 * config.noise_sigma
    result = evaluate_campaign(model, device, make_targets("haar", 6, count=200, seed=1))
    assert result.fidelity.mean >= 0.995


@pytest.mark.slow
def test_full_size_power_accounting():
    config = ImperfectionConfig(coupler_delta=0.0, crosstalk_eps=0.0, noise_sigma=0.0)
    truth = synth_device(24, 0, config)
    targets = make_targets("haar", 24, count=10, seed=1)
    result = evaluate_campaign(truth_model(truth), SimulatedProcessor(truth), targets)
    summary = result.summary()
    assert summary["failed"] == 0
    assert summary["power_reference_mw"] == 10_000.0
    assert 0 <= summary["targets_under_power_reference"] <= 10
    assert summary["max_phase_residual_rad"] <= 1e-9
    assert result.fidelity.min >= 1 - 1e-8
