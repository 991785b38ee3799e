import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import gammaln

from upp_calibration_langgraph.core import haar_random_unitary, make_rng
from upp_calibration_langgraph.errors import ValidationError
from upp_calibration_langgraph.metrics import (
    EXTINCTION_CEILING_DB,
    FidelityReport,
    amplitude_fidelity,
    db_from_transmission,
    extinction_ratio_db,
    get_metric,
    transmission_from_db,
)


class TestFidelity:
    def test_identical(self):
        u = np.abs(haar_random_unitary(5, make_rng(0)).data)
        assert_allclose(amplitude_fidelity(u, u), 1.0)

    def test_disjoint_supports(self):
        assert amplitude_fidelity(np.eye(2), np.array([[0.0, 1.0], [1.0, 0.0]])) == 0.0

    def test_symmetric_and_scale_invariant(self):
        rng = make_rng(1)
        t = np.abs(haar_random_unitary(4, rng).data)
        m = np.abs(haar_random_unitary(4, rng).data)
        assert_allclose(amplitude_fidelity(t, m), amplitude_fidelity(m, t))
        scaled = m * np.array([0.3, 2.0, 1.0, 7.5])
        assert_allclose(amplitude_fidelity(t, scaled), amplitude_fidelity(t, m))

    def test_bounded(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            f = amplitude_fidelity(rng.uniform(0, 1, (3, 3)), rng.uniform(0, 1, (3, 3)))
            assert 0.0 <= f <= 1.0

    def test_independent_haar_pairs(self):
        n = 24
        rng = make_rng(4)
        values = [amplitude_fidelity(np.abs(haar_random_unitary(n, rng).data),
                                     np.abs(haar_random_unitary(n, rng).data)) for _ in range(200)]
        # E|u_ij| for one column entry of an n-dim Haar vector
        mean_modulus = np.exp(gammaln(1.5) + gammaln(n) - gammaln(n + 0.5))
        assert abs(np.mean(values) - n * mean_modulus ** 2) < 0.01
        assert abs(np.mean(values) - np.pi / 4) < 0.02

    def test_errors(self):
        with pytest.raises(ValidationError):
            amplitude_fidelity(np.eye(2), np.eye(3))
        with pytest.raises(ValidationError):
            amplitude_fidelity(np.eye(2), np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(ValidationError):
            amplitude_fidelity(np.eye(2), -np.eye(2))

    def test_registry(self):
        assert get_metric() is amplitude_fidelity
        with pytest.raises(ValidationError):
            get_metric("process")


class TestExtinction:
    def test_ceiling(self):
        assert extinction_ratio_db([1.0, 0.0, 0.0], 0) == EXTINCTION_CEILING_DB

    def test_one_percent_leakage(self):
        assert_allclose(extinction_ratio_db([0.99, 0.0039, 0.0061 / 2, 0.0061 / 2], 0), 24.05, atol=0.01)

    def test_uniform(self):
        assert_allclose(extinction_ratio_db(np.full(4, 0.25), 2), 0.0, atol=1e-12)

    def test_dark_target(self):
        assert extinction_ratio_db([0.0, 1.0], 0) == -EXTINCTION_CEILING_DB

    def test_errors(self):
        with pytest.raises(ValidationError):
            extinction_ratio_db([], 0)
        with pytest.raises(ValidationError):
            extinction_ratio_db([0.5, -0.1], 0)
        with pytest.raises(ValidationError):
            extinction_ratio_db([0.5, 0.5], 2)


class TestDecibels:
    def test_values(self):
        assert db_from_transmission(1.0) == 0.0
        assert_allclose(db_from_transmission(0.5), 3.0103, atol=1e-4)
        assert_allclose(transmission_from_db(4.35), 0.3673, atol=1e-4)

    def test_round_trip(self):
        for t in np.geomspace(1e-6, 1.0, 50):
            assert abs(t - transmission_from_db(db_from_transmission(t))) <= 1e-12

    def test_nonpositive(self):
        with pytest.raises(ValidationError):
            db_from_transmission(0.0)


class TestFidelityReport:
    def test_statistics(self):
        report = FidelityReport.from_values([0.99, 0.995, 1.0])
        assert_allclose(report.mean, 0.995, atol=1e-12)
        assert report.min == 0.99 and report.max == 1.0
        assert report.to_dict()["count"] == 3

    def test_rejects_out_of_range(self):
        with pytest.raises(ValidationError):
            FidelityReport.from_values([0.5, 1.2])
        with pytest.raises(ValidationError):
            FidelityReport.from_values([])
