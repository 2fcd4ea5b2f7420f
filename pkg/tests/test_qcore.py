import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qflow.qcore import (
    IDENTITY_2,
    InvariantViolation,
    PAULI_OPS,
    SIGMA_MINUS,
    SIGMA_X,
    SIGMA_Z,
    apply_superop,
    basis_ket,
    kron,
    lindblad_superoperator,
    matrix_exp,
    partial_trace,
    projector,
    random_density_matrix,
    trace_distance,
    trace_preservation_residual,
    unvec,
    validate_density_matrix,
    vec,
)

seeds = st.integers(0, 2**32 - 1)


class TestKron:
    def test_identity(self):
        assert np.array_equal(kron(IDENTITY_2, IDENTITY_2), np.eye(4))

    def test_basis_projectors(self):
        got = kron(np.diag([1.0, 0.0]), np.diag([0.0, 1.0]))
        assert np.array_equal(got, np.diag([0.0, 1.0, 0.0, 0.0]))

    def test_pauli_involution(self):
        xx = kron(SIGMA_X, SIGMA_X)
        assert np.abs(xx @ xx - np.eye(4)).max() == 0.0


class TestPartialTrace:
    def test_product_state_recovery(self):
        rng = np.random.default_rng(7)
        rho = random_density_matrix(rng, 2)
        sig = random_density_matrix(rng, 3)
        joint = kron(rho, sig)
        assert np.abs(partial_trace(joint, (2, 3), "system") - rho).max() < 1e-14
        assert np.abs(partial_trace(joint, (2, 3), "environment") - sig).max() < 1e-14

    def test_maximally_entangled(self):
        bell = (kron(basis_ket(2, 0).reshape(-1, 1), basis_ket(2, 0).reshape(-1, 1))
                + kron(basis_ket(2, 1).reshape(-1, 1), basis_ket(2, 1).reshape(-1, 1)))
        bell = bell.flatten() / np.sqrt(2)
        rho = projector(bell)
        reduced = partial_trace(rho, (2, 2), "system")
        assert np.abs(reduced - np.eye(2) / 2).max() < 1e-14

    def test_dimension_mismatch(self):
        with pytest.raises(InvariantViolation):
            partial_trace(np.eye(4), (2, 3), "system")


class TestTraceDistance:
    def test_identical(self):
        rho = random_density_matrix(np.random.default_rng(0), 3)
        assert trace_distance(rho, rho) == 0.0

    def test_orthogonal_pure(self):
        assert trace_distance(np.diag([1.0, 0.0]), np.diag([0.0, 1.0])) == pytest.approx(1.0)

    def test_quarter(self):
        # eigenvalues of the difference are +/- 1/4
        assert trace_distance(np.eye(2) / 2, np.diag([0.75, 0.25])) == pytest.approx(0.25)

    def test_mismatch(self):
        with pytest.raises(InvariantViolation):
            trace_distance(np.eye(2) / 2, np.eye(3) / 3)

    @settings(max_examples=30, deadline=None)
    @given(seeds)
    def test_metric_properties(self, seed):
        rng = np.random.default_rng(seed)
        a = random_density_matrix(rng, 3)
        b = random_density_matrix(rng, 3)
        c = random_density_matrix(rng, 3)
        dab = trace_distance(a, b)
        assert dab == pytest.approx(trace_distance(b, a), abs=1e-12)
        assert trace_distance(a, a) < 1e-12
        assert dab <= trace_distance(a, c) + trace_distance(c, b) + 1e-12

    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_contractivity_under_cptp(self, seed):
        rng = np.random.default_rng(seed)
        d = 2
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = 0.5 * (h + h.conj().T)
        jump = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        gen = lindblad_superoperator(h, [(jump, float(rng.uniform()))])
        phi = matrix_exp(gen * float(rng.uniform(0.1, 2.0)))
        a = random_density_matrix(rng, d)
        b = random_density_matrix(rng, d)
        da = trace_distance(apply_superop(phi, a), apply_superop(phi, b))
        assert da <= trace_distance(a, b) + 1e-9


class TestMatrixExp:
    def test_zero(self):
        assert np.array_equal(matrix_exp(np.zeros((3, 3))), np.eye(3))

    def test_diagonal_phases(self):
        theta = 0.37
        got = matrix_exp(-1j * theta * SIGMA_Z)
        want = np.diag([np.exp(-1j * theta), np.exp(1j * theta)])
        assert np.abs(got - want).max() < 1e-14

    def test_amplitude_damping_decay(self):
        gamma, t = 0.8, 1.3
        gen = lindblad_superoperator(np.zeros((2, 2)), [(SIGMA_MINUS, gamma)])
        rho = np.array([[0.3, 0.1], [0.1, 0.7]], dtype=complex)
        out = apply_superop(matrix_exp(gen * t), rho)
        assert out[1, 1].real == pytest.approx(np.exp(-gamma * t) * 0.7, abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_eigendecomposition_oracle_on_normal_matrices(self, seed):
        rng = np.random.default_rng(seed)
        d = 4
        herm = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        herm = 0.5 * (herm + herm.conj().T)
        w, v = np.linalg.eigh(herm)
        m = 1j * herm  # skew-Hermitian, hence normal
        oracle = v @ np.diag(np.exp(1j * w)) @ v.conj().T
        got = matrix_exp(m)
        rel = np.abs(got - oracle).max() / np.abs(oracle).max()
        assert rel < 1e-10

    def test_commuting_product(self):
        rng = np.random.default_rng(3)
        a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        b = 0.4 * a @ a - 1.2 * a  # polynomial in a commutes with a
        lhs = matrix_exp(a + b)
        rhs = matrix_exp(a) @ matrix_exp(b)
        assert np.abs(lhs - rhs).max() < 1e-9

    def test_nonfinite_rejected(self):
        bad = np.array([[np.inf, 0.0], [0.0, 0.0]])
        with pytest.raises(InvariantViolation):
            matrix_exp(bad)


class TestLindbladSuperoperator:
    def test_trivial_zero(self):
        gen = lindblad_superoperator(np.zeros((2, 2)))
        assert np.abs(gen).max() == 0.0

    def test_decay_population(self):
        gamma = 0.5
        gen = lindblad_superoperator(np.zeros((2, 2)), [(SIGMA_MINUS, gamma)])
        rho = np.array([[0.2, 0.0], [0.0, 0.8]], dtype=complex)
        for t in (0.3, 1.0, 2.5):
            out = apply_superop(matrix_exp(gen * t), rho)
            assert out[1, 1].real == pytest.approx(0.8 * np.exp(-gamma * t), abs=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_trace_functional_fixed_point(self, seed):
        rng = np.random.default_rng(seed)
        d = 3
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = 0.5 * (h + h.conj().T)
        jumps = [(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)),
                  float(rng.uniform())) for _ in range(2)]
        gen = lindblad_superoperator(h, jumps)
        assert trace_preservation_residual(gen, d) < 1e-10

    def test_non_hermitian_rejected(self):
        with pytest.raises(InvariantViolation):
            lindblad_superoperator(np.array([[0.0, 1.0], [0.0, 0.0]]))

    def test_negative_rate_rejected(self):
        with pytest.raises(InvariantViolation):
            lindblad_superoperator(np.zeros((2, 2)), [(SIGMA_MINUS, -0.1)])


class TestApplySuperop:
    def test_identity(self):
        x = np.arange(4).reshape(2, 2).astype(complex)
        assert np.array_equal(apply_superop(np.eye(4), x), x)

    @settings(max_examples=25, deadline=None)
    @given(seeds)
    def test_vec_convention(self, seed):
        rng = np.random.default_rng(seed)
        d = 3
        a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        b = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        x = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        s = np.kron(b.T, a)
        assert np.abs(apply_superop(s, x) - a @ x @ b).max() < 1e-12

    def test_stationary_state_in_kernel(self):
        gamma = 0.7
        gen = lindblad_superoperator(0.3 * SIGMA_Z, [(SIGMA_MINUS, gamma)])
        # stationary state from the null space
        w, v = np.linalg.eig(gen)
        idx = np.argmin(np.abs(w))
        rho = unvec(v[:, idx], 2)
        rho = rho / np.trace(rho)
        assert np.abs(apply_superop(gen, rho)).max() < 1e-9

    def test_dimension_mismatch(self):
        with pytest.raises(InvariantViolation):
            apply_superop(np.eye(4), np.eye(3, dtype=complex))


class TestValidateDensityMatrix:
    def test_accepts_valid(self):
        validate_density_matrix(np.eye(2) / 2)

    def test_rejects_trace(self):
        with pytest.raises(InvariantViolation):
            validate_density_matrix(np.eye(2))

    def test_rejects_non_hermitian(self):
        with pytest.raises(InvariantViolation):
            validate_density_matrix(np.array([[0.5, 0.1], [0.3, 0.5]]))

    def test_rejects_negative(self):
        with pytest.raises(InvariantViolation):
            validate_density_matrix(np.diag([1.5, -0.5]))


def test_vec_unvec_roundtrip():
    rng = np.random.default_rng(5)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    assert np.array_equal(unvec(vec(x), 4), x)
    # column stacking: first d entries are the first column
    assert np.array_equal(vec(x)[:4], x[:, 0])
