import numpy as np
import pytest
from numpy.testing import assert_allclose

from upp_calibration_langgraph.core import unitarity_defect
from upp_calibration_langgraph.errors import ValidationError
from upp_calibration_langgraph.mesh import (
    MeshLayout,
    MZINode,
    batch_unitaries,
    canonical_phases,
    gauge_directions,
    input_phase_gauge,
    mesh_unitary,
    mzi_transfer,
    standard_layout,
    transfer_jacobian,
)


def random_layout(n, rng, delta=0.05):
    layout = standard_layout(n)
    return layout.with_couplers(rng.uniform(0.5 - delta, 0.5 + delta, size=(layout.n_nodes, 2)))


class TestLayout:
    def test_full_size_counts(self):
        layout = standard_layout(24)
        assert layout.n_nodes == 276
        assert layout.n_couplers == 552
        assert layout.n_heaters == 576
        assert layout.n_layers == 24

    def test_minimal(self):
        layout = standard_layout(2)
        assert layout.n_nodes == 1
        assert layout.n_heaters == 4
        assert list(layout.screen_heaters) == [2, 3]

    def test_too_small(self):
        with pytest.raises(ValidationError):
            standard_layout(1)

    def test_layer_parity(self):
        for node in standard_layout(7).nodes:
            assert (node.layer - node.top_mode) % 2 == 0

    def test_duplicate_mode_in_layer(self):
        nodes = (MZINode(0, 0, 0, 1), MZINode(0, 1, 2, 3))
        with pytest.raises(ValidationError):
            MeshLayout(3, nodes)

    def test_hash_ignores_couplers(self, rng):
        layout = standard_layout(5)
        assert random_layout(5, rng).layout_hash() == layout.layout_hash()
        assert standard_layout(6).layout_hash() != layout.layout_hash()

    def test_json(self, rng):
        layout = random_layout(4, rng)
        restored = MeshLayout.from_json(layout.to_json())
        assert restored == layout

    def test_gauge_heaters(self):
        layout = standard_layout(4)
        # layer 0 holds nodes 0 and 1; their external heaters are 0 and 2
        assert layout.gauge_heaters() == [0, 2, 12, 13, 14, 15]


class TestTransfer:
    def test_ideal_fringe_law(self):
        for theta in np.linspace(0, 2 * np.pi, 7):
            t = mzi_transfer(0.3, theta).data
            assert_allclose(abs(t[0, 0]) ** 2, np.sin(theta / 2) ** 2, atol=1e-12)

    def test_identity_setting(self):
        assert_allclose(mzi_transfer(np.pi, np.pi).data, np.eye(2), atol=1e-12)

    def test_imperfect_is_unitary(self):
        assert unitarity_defect(mzi_transfer(1.1, 2.3, 0.43, 0.58)) < 1e-12

    def test_bad_transmissivity(self):
        with pytest.raises(ValidationError):
            mzi_transfer(0.0, 0.0, 1.2, 0.5)

    def test_mesh_identity(self):
        layout = standard_layout(5)
        phases = np.full(layout.n_heaters, np.pi)
        phases[list(layout.screen_heaters)] = 0.0
        assert_allclose(mesh_unitary(layout, phases).data, np.eye(5), atol=1e-12)

    def test_batch_matches_single(self, rng):
        layout = random_layout(4, rng)
        phases = rng.uniform(0, 2 * np.pi, size=(3, layout.n_heaters))
        batch = batch_unitaries(layout, phases)
        for b in range(3):
            assert_allclose(batch[b], mesh_unitary(layout, phases[b]).data, atol=1e-12)

    @pytest.mark.parametrize("n", [4, 5, 8])
    def test_node_order_within_layer(self, n, rng):
        layout = random_layout(n, rng)
        phases = rng.uniform(0, 2 * np.pi, size=layout.n_heaters)
        order = [i for group in layout.layers() for i in rng.permutation(group)]
        shuffled = MeshLayout(n, tuple(layout.nodes[i] for i in order))
        assert_allclose(mesh_unitary(shuffled, phases).data, mesh_unitary(layout, phases).data, atol=1e-12)

    def test_wrong_length(self):
        with pytest.raises(ValidationError):
            mesh_unitary(standard_layout(3), np.zeros(4))

    def test_canonical_phases(self):
        wrapped = canonical_phases([-1e-18, 2 * np.pi, 7.0, -np.pi])
        assert np.all((wrapped >= 0) & (wrapped < 2 * np.pi))
        assert_allclose(wrapped[2:], [7.0 - 2 * np.pi, np.pi])


class TestJacobian:
    def test_matches_finite_differences(self, rng):
        layout = random_layout(3, rng)
        phases = rng.uniform(0, 2 * np.pi, size=layout.n_heaters)
        u, d_phase, d_coupler = transfer_jacobian(layout, phases)
        assert_allclose(u[0], mesh_unitary(layout, phases).data, atol=1e-12)

        step = 1e-6
        for h in range(layout.n_heaters):
            plus, minus = phases.copy(), phases.copy()
            plus[h] += step
            minus[h] -= step
            fd = (mesh_unitary(layout, plus).data - mesh_unitary(layout, minus).data) / (2 * step)
            assert_allclose(d_phase[0, :, :, h], fd, atol=1e-8)

        couplers = layout.couplers().ravel()
        for c in range(couplers.size):
            plus, minus = couplers.copy(), couplers.copy()
            plus[c] += step
            minus[c] -= step
            fd = (mesh_unitary(layout.with_couplers(plus), phases).data
                  - mesh_unitary(layout.with_couplers(minus), phases).data) / (2 * step)
            assert_allclose(d_coupler[0, :, :, c], fd, atol=1e-8)


class TestGauge:
    @pytest.mark.parametrize("n", [2, 3, 4, 5])
    def test_input_phase_gauge_is_exact(self, n, rng):
        layout = random_layout(n, rng)
        phases = rng.uniform(0, 2 * np.pi, size=layout.n_heaters)
        u = mesh_unitary(layout, phases).data
        for mode in range(n):
            shifted = mesh_unitary(layout, phases + input_phase_gauge(layout, mode)).data
            expected = u.copy()
            expected[:, mode] *= np.exp(1j)
            assert_allclose(shifted, expected, atol=1e-12)

    def test_directions_leave_amplitudes(self, rng):
        layout = random_layout(4, rng)
        phases = rng.uniform(0, 2 * np.pi, size=layout.n_heaters)
        reference = np.abs(mesh_unitary(layout, phases).data)
        directions = gauge_directions(layout)
        assert directions.shape == (8, layout.n_heaters)
        assert np.linalg.matrix_rank(directions) == 7
        for direction in directions:
            moved = np.abs(mesh_unitary(layout, phases + 0.7 * direction).data)
            assert_allclose(moved, reference, atol=1e-12)
