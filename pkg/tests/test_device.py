import numpy as np
import pytest
from numpy.testing import assert_allclose

from upp_calibration_langgraph.device import (
    ImperfectionConfig,
    SimulatedProcessor,
    load_processor,
    read_device_public,
    read_measurement_log,
    save_device,
    synth_device,
    write_measurement_log,
)
from upp_calibration_langgraph.errors import DeviceFileError, ValidationError
from upp_calibration_langgraph.mesh import mesh_unitary
from upp_calibration_langgraph.thermal import phases_from_powers


def flat_config(**kwargs):
    base = dict(coupler_delta=0.0, crosstalk_eps=0.0, p2pi_sigma_mw=0.0, noise_sigma=0.0,
                random_static_phase=False)
    base.update(kwargs)
    return ImperfectionConfig(**base)


class TestSynthesis:
    def test_full_size_counts(self):
        truth = synth_device(24, 0)
        assert truth.layout.n_nodes == 276
        assert truth.layout.n_couplers == 552
        assert truth.thermal.n_heaters == 576
        assert truth.thermal.window == 24

    def test_deterministic(self):
        a, b = synth_device(5, 11), synth_device(5, 11)
        assert_allclose(a.layout.couplers(), b.layout.couplers())
        assert_allclose(a.thermal.theta0, b.thermal.theta0)
        assert_allclose(a.thermal.xtalk, b.thermal.xtalk)
        assert not np.allclose(a.thermal.theta0, synth_device(5, 12).thermal.theta0)

    def test_imperfection_bounds(self):
        truth = synth_device(6, 3, ImperfectionConfig(coupler_delta=0.02, crosstalk_eps=0.05))
        couplers = truth.layout.couplers()
        assert np.all(np.abs(couplers - 0.5) <= 0.02)
        assert np.all(truth.thermal.xtalk >= 0)
        assert np.all(truth.thermal.xtalk <= 0.05 * 2 * np.pi / 46.0)

    def test_window_capped(self):
        truth = synth_device(2, 0, ImperfectionConfig(window=10))
        assert truth.thermal.window == truth.layout.n_heaters - 1

    @pytest.mark.parametrize("kwargs", [dict(coupler_delta=0.6), dict(noise_sigma=0.3),
                                        dict(input_loss_db=-1.0), dict(crosstalk_eps=-0.1),
                                        dict(pigtail_loss_db=-0.5)])
    def test_invalid_config(self, kwargs):
        with pytest.raises(ValidationError):
            ImperfectionConfig(**kwargs)


class TestMeasurement:
    def test_noiseless_matches_truth(self, ideal_device):
        truth, device = ideal_device(4)
        record = device.measure_amplitudes(np.zeros(device.n_heaters))
        expected = np.abs(mesh_unitary(truth.layout, truth.thermal.theta0).data)
        assert_allclose(record.amplitudes, expected, atol=1e-12)
        assert record.seq == 0
        assert device.measure_amplitudes(np.zeros(device.n_heaters)).seq == 1

    def test_batch_matches_single(self):
        truth = synth_device(4, 2)
        powers = np.random.default_rng(0).uniform(0, 40, size=(3, truth.layout.n_heaters))
        batch = SimulatedProcessor(truth).measure_batch(powers)
        single = SimulatedProcessor(truth)
        for record, p in zip(batch, powers):
            assert_allclose(record.amplitudes, single.measure_amplitudes(p).amplitudes, atol=1e-12)

    def test_layout_is_nominal(self):
        device = SimulatedProcessor(synth_device(4, 0))
        assert device.layout.is_ideal()

    def test_noise_level(self):
        sigma = 0.02
        truth = synth_device(4, 5, ImperfectionConfig(noise_sigma=sigma))
        device = SimulatedProcessor(truth, noise_seed=9)
        powers = np.full(device.n_heaters, 10.0)
        exact = np.abs(mesh_unitary(truth.layout, phases_from_powers(truth.thermal, powers)).data)
        records = device.measure_batch(np.tile(powers, (400, 1)))
        measured = np.array([r.amplitudes for r in records])
        bright = exact > 0.05
        relative = measured[:, bright] / exact[bright] - 1.0
        assert abs(np.std(relative) / sigma - 1.0) < 0.1
        assert np.all(measured >= 0)

    def test_noise_seed_reproducible(self):
        truth = synth_device(3, 1, ImperfectionConfig(noise_sigma=0.01))
        powers = np.full(truth.layout.n_heaters, 5.0)
        a = SimulatedProcessor(truth, noise_seed=4).measure_amplitudes(powers).amplitudes
        b = SimulatedProcessor(truth, noise_seed=4).measure_amplitudes(powers).amplitudes
        assert_allclose(a, b)

    @pytest.mark.parametrize("bad", [-0.1, 60.5, np.nan])
    def test_power_out_of_range(self, bad):
        device = SimulatedProcessor(synth_device(3, 0))
        powers = np.zeros(device.n_heaters)
        powers[2] = bad
        with pytest.raises(ValidationError):
            device.measure_amplitudes(powers)

    def test_wrong_power_length(self):
        device = SimulatedProcessor(synth_device(3, 0))
        with pytest.raises(ValidationError):
            device.measure_amplitudes(np.zeros(device.n_heaters + 1))

    def test_drift_clock(self):
        truth = synth_device(3, 0, ImperfectionConfig(drift_enabled=True, noise_sigma=0.0))
        device = SimulatedProcessor(truth)
        powers = np.full(device.n_heaters, 30.0)
        before = device.measure_amplitudes(powers).amplitudes
        device.advance_clock(1000.0)
        assert not np.allclose(before, device.measure_amplitudes(powers).amplitudes)
        with pytest.raises(ValidationError):
            device.advance_clock(-1.0)

    def test_sessions_draw_independent_noise(self):
        truth = synth_device(3, 1, ImperfectionConfig(noise_sigma=0.01))
        powers = np.full(truth.layout.n_heaters, 5.0)

        def measure(session):
            return SimulatedProcessor(truth, session=session).measure_amplitudes(powers).amplitudes

        assert_allclose(measure("calibrate"), measure("calibrate"))
        assert not np.allclose(measure("calibrate"), measure("evaluate"))
        assert not np.allclose(measure("lab"), measure("trainset"))
        with pytest.raises(ValidationError):
            SimulatedProcessor(truth, session="bench")

    def test_column_norms_within_three_sigma(self):
        sigma = 0.01
        truth = synth_device(4, 2, ImperfectionConfig(noise_sigma=sigma))
        device = SimulatedProcessor(truth)
        powers = np.random.default_rng(5).uniform(0, 45, size=(50, device.n_heaters))
        norms = np.array([np.linalg.norm(device.measure_amplitudes(p).amplitudes, axis=0) for p in powers])
        assert np.all(np.abs(norms - 1.0) <= 3 * sigma)


class TestOptics:
    def test_insertion_loss(self):
        truth = synth_device(4, 0, flat_config(input_loss_db=2.17, output_loss_db=2.18))
        report = SimulatedProcessor(truth).insertion_loss_report()
        assert_allclose(report.per_port_db, 4.35, atol=1e-9)
        assert_allclose(report.average_db, 4.35, atol=1e-9)
        assert list(report.to_frame().columns) == ["input_port", "insertion_loss_before_pigtail_db",
                                                   "insertion_loss_db"]

    def test_pigtailing_adds_loss(self):
        truth = synth_device(4, 0, flat_config(input_loss_db=2.05, output_loss_db=2.05, pigtail_loss_db=0.25))
        device = SimulatedProcessor(truth)
        report = device.insertion_loss_report()
        assert_allclose(report.average_before_pigtail_db, 4.1, atol=1e-9)
        assert_allclose(report.average_db, 4.35, atol=1e-9)
        assert_allclose(report.per_port_db - report.before_pigtail_db, 0.25, atol=1e-9)
        off = np.zeros(device.n_heaters)
        assert_allclose(device.measure_output_distribution(0, off, pigtailed=False).probabilities,
                        device.measure_output_distribution(0, off).probabilities)

    def test_per_port_override(self):
        truth = synth_device(4, 0, flat_config(input_loss_db=1.0, input_loss_overrides={2: 3.0}))
        report = SimulatedProcessor(truth).insertion_loss_report()
        assert_allclose(report.per_port_db, [1.0, 1.0, 3.0, 1.0], atol=1e-9)

    def test_override_port_out_of_range(self):
        with pytest.raises(ValidationError):
            synth_device(3, 0, flat_config(output_loss_overrides={5: 1.0}))

    def test_identity_setting_routes_straight(self):
        truth = synth_device(5, 0, flat_config())
        device = SimulatedProcessor(truth)
        # 23 mW is half of p2pi: every MZI sits at theta = phi = pi
        powers = np.full(device.n_heaters, 23.0)
        for k in range(5):
            distribution = device.measure_output_distribution(k, powers)
            assert_allclose(distribution.probabilities, np.eye(5)[k], atol=1e-12)
            assert_allclose(distribution.loss_db, 0.0, atol=1e-9)

    def test_static_transformation_columns_are_inputs(self):
        truth = synth_device(4, 8, flat_config(coupler_delta=0.03, random_static_phase=True))
        device = SimulatedProcessor(truth)
        static = device.static_transformation()
        expected = np.abs(mesh_unitary(truth.layout, truth.thermal.theta0).data) ** 2
        assert_allclose(static, expected, atol=1e-12)
        assert_allclose(static.sum(axis=0), 1.0)

    def test_bad_port(self):
        device = SimulatedProcessor(synth_device(3, 0))
        with pytest.raises(ValidationError):
            device.port_powers(3, np.zeros(device.n_heaters))


class TestFiles:
    def test_device_file_round_trip(self, tmp_path):
        truth = synth_device(4, 6, ImperfectionConfig(noise_sigma=0.0))
        path = save_device(tmp_path / "device.json", truth)
        public = read_device_public(path)
        assert public["n_modes"] == 4
        assert "sealed" not in public
        assert public["layout"].is_ideal()
        assert "theta0" not in path.read_text()
        assert load_processor(path).session == "lab"

        powers = np.full(truth.layout.n_heaters, 12.0)
        loaded = load_processor(path)
        assert_allclose(loaded.measure_amplitudes(powers).amplitudes,
                        SimulatedProcessor(truth).measure_amplitudes(powers).amplitudes, atol=1e-12)

    def test_pigtail_loss_survives_device_file(self, tmp_path):
        truth = synth_device(3, 0, flat_config(pigtail_loss_db=0.25))
        path = save_device(tmp_path / "device.json", truth)
        report = load_processor(path, session="characterize").insertion_loss_report()
        assert_allclose(report.per_port_db, 0.25, atol=1e-9)
        assert_allclose(report.before_pigtail_db, 0.0, atol=1e-9)

    def test_missing_device_file(self, tmp_path):
        with pytest.raises(DeviceFileError):
            load_processor(tmp_path / "absent.json")

    def test_measurement_log(self, tmp_path):
        truth = synth_device(3, 0, ImperfectionConfig(noise_sigma=0.01))
        device = SimulatedProcessor(truth)
        records = device.measure_batch(np.random.default_rng(2).uniform(0, 40, size=(6, device.n_heaters)))
        path = write_measurement_log(tmp_path / "log.csv", records)
        restored = read_measurement_log(path)
        assert [r.seq for r in restored] == list(range(6))
        for a, b in zip(records, restored):
            assert_allclose(a.powers, b.powers, rtol=1e-11)
            assert_allclose(a.amplitudes, b.amplitudes, rtol=1e-11, atol=1e-13)
