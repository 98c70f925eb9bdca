import numpy as np
import pytest
from scipy.linalg import block_diag

from partialiso import (
    DecompositionError,
    assert_no_shift_parts,
    haar_unitary,
    hw_decompose,
    kron,
    multiplicity_space,
    op_norm,
    op_norm_diff,
    projection_onto,
    stable_range_projection,
    truncated_block_projection,
    truncated_shift,
)
from conftest import non_power_partial_isometry_3d, random_hw_instance


class TestStableRangeProjection:
    def test_unitary_stabilizes_immediately_at_identity(self):
        p, n0 = stable_range_projection(haar_unitary(4, 0))
        assert n0 == 1
        assert op_norm_diff(p, np.eye(4)) <= 1e-12

    @pytest.mark.parametrize("p", [1, 2, 3, 5])
    def test_truncated_shift_stabilizes_at_zero(self, p):
        mat, n0 = stable_range_projection(truncated_shift(p))
        assert n0 == p
        assert op_norm(mat) <= 1e-12

    def test_mixed_direct_sum(self):
        v = block_diag(truncated_shift(2), np.eye(1)).astype(complex)
        p, n0 = stable_range_projection(v)
        assert n0 == 2
        np.testing.assert_allclose(p, np.diag([0.0, 0.0, 1.0]), atol=1e-12)

    def test_non_stabilizing_input_raises(self):
        with pytest.raises(DecompositionError):
            stable_range_projection(non_power_partial_isometry_3d())


class TestTruncatedBlockProjection:
    def test_shift_of_order_two(self):
        j2 = truncated_shift(2)
        np.testing.assert_allclose(truncated_block_projection(j2, 2), np.eye(2), atol=1e-12)
        assert op_norm(truncated_block_projection(j2, 1)) <= 1e-12

    def test_unitary_has_no_blocks(self):
        u = haar_unitary(3, 1)
        for p in range(1, 4):
            assert op_norm(truncated_block_projection(u, p)) <= 1e-12

    def test_zero_operator_is_pure_order_one(self):
        np.testing.assert_allclose(
            truncated_block_projection(np.zeros((3, 3)), 1), np.eye(3)
        )

    def test_distinct_orders_are_orthogonal(self):
        v = block_diag(truncated_shift(2), truncated_shift(3)).astype(complex)
        p2 = truncated_block_projection(v, 2)
        p3 = truncated_block_projection(v, 3)
        assert op_norm(p2 @ p3) <= 1e-12
        np.testing.assert_allclose(p2 + p3, np.eye(5), atol=1e-12)


class TestMultiplicitySpace:
    def test_shift_multiplicity_basis(self):
        s = multiplicity_space(truncated_shift(2), 2)
        assert s.dim == 1
        np.testing.assert_allclose(s.basis[:, 0], [1.0, 0.0], atol=1e-12)

    def test_tensor_multiplicity(self):
        v = kron(truncated_shift(2), np.eye(2))
        assert multiplicity_space(v, 2).dim == 2

    def test_unitary_has_none(self):
        u = haar_unitary(4, 2)
        for p in range(1, 5):
            assert multiplicity_space(u, p).dim == 0


class TestHwDecompose:
    def test_pure_unitary(self):
        v = np.diag(np.exp(1j * np.array([0.3, 1.9])))
        hw = hw_decompose(v)
        assert hw.unitary_dim == 2
        assert hw.truncated_blocks == []
        assert hw.residual <= 1e-12
        # T is V expressed in the unitary-part basis
        b = hw.unitary_basis.basis
        assert op_norm_diff(b @ hw.unitary_op @ b.conj().T, v) <= 1e-12

    def test_shift_plus_fixed_point(self):
        v = block_diag(truncated_shift(2), np.eye(1)).astype(complex)
        hw = hw_decompose(v)
        assert hw.unitary_dim == 1
        assert hw.block_multiset() == [(2, 1)]
        assert hw.residual <= 1e-12
        np.testing.assert_allclose(hw.unitary_op, [[1.0]], atol=1e-12)

    def test_scrambled_tensor_block_with_unitary(self):
        rng = np.random.default_rng(8)
        v = block_diag(kron(truncated_shift(3), np.eye(2)), haar_unitary(2, rng))
        w = haar_unitary(8, rng)
        hw = hw_decompose(w @ v @ w.conj().T)
        assert hw.block_multiset() == [(3, 2)]
        assert hw.unitary_dim == 2
        assert hw.residual <= 1e-9

    def test_shift_exclusion_holds(self):
        assert assert_no_shift_parts(truncated_shift(3))
        assert assert_no_shift_parts(haar_unitary(4, 9))
        assert assert_no_shift_parts(
            block_diag(truncated_shift(2), haar_unitary(2, 5)).astype(complex)
        )
        for seed in range(5):
            v, _, _ = random_hw_instance(seed)
            assert assert_no_shift_parts(v)

    def test_rejects_non_power_partial_isometry(self):
        with pytest.raises(DecompositionError):
            hw_decompose(non_power_partial_isometry_3d())

    def test_rejects_a_contraction(self):
        with pytest.raises(DecompositionError):
            hw_decompose(np.diag([1.0, 0.5]))


class TestStructuralInvariants:
    @pytest.mark.parametrize("seed", range(40))
    def test_block_structure_invariants(self, seed):
        v, u_dim, expected = random_hw_instance(seed)
        d = v.shape[0]
        hw = hw_decompose(v)
        assert hw.unitary_dim == u_dim
        assert hw.block_multiset() == expected

        p_mat, _ = stable_range_projection(v)
        q_mat, _ = stable_range_projection(v.conj().T)
        assert op_norm(p_mat @ q_mat - q_mat @ p_mat) <= 1e-10

        projections = []
        if hw.unitary_dim:
            projections.append(projection_onto(hw.unitary_basis))
        for block in hw.truncated_blocks:
            pi = truncated_block_projection(v, block.p)
            projections.append(pi)
            assert round(float(pi.trace().real)) == block.p * block.mult
        total = sum(projections)
        assert op_norm_diff(total, np.eye(d)) <= 1e-9
        for i in range(len(projections)):
            for j in range(i + 1, len(projections)):
                assert op_norm(projections[i] @ projections[j]) <= 1e-9
        eye = np.eye(d)
        for pi in projections:
            assert op_norm((eye - pi) @ v @ pi) <= 1e-9
            assert op_norm(pi @ v @ (eye - pi)) <= 1e-9

    @pytest.mark.parametrize("seed", range(20))
    def test_intertwiner_columns_are_isometric_before_any_fix(self, seed):
        v, _, _ = random_hw_instance(seed)
        hw = hw_decompose(v)
        columns = []
        if hw.unitary_dim:
            columns.append(hw.unitary_basis.basis)
        for block in hw.truncated_blocks:
            current = block.mult_basis.basis
            columns.append(current)
            for _ in range(block.p - 1):
                current = v @ current
                columns.append(current)
        gram = np.hstack(columns)
        gram = gram.conj().T @ gram
        assert op_norm_diff(gram, np.eye(v.shape[0])) <= 1e-9

    @pytest.mark.parametrize("seed", range(20))
    def test_round_trip_reconstruction(self, seed):
        v, _, _ = random_hw_instance(seed + 500)
        hw = hw_decompose(v)
        w = hw.intertwiner
        assert op_norm(w @ hw.model_operator() @ w.conj().T - v) <= 1e-9
