import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from qflow import models
from qflow.evolve import TimeGrid, propagate, propagate_interval
from qflow.models import (
    ClassicalMixtureModel,
    Collision,
    DepolarizingModel,
    EnvJump,
    QuantumBystanderModel,
    StochasticEnvModel,
    UnitaryModel,
    assemble_generator,
    born_markov_model,
    check_bystander,
    commuting_interaction_preset,
    exchange_preset,
    interaction_commutes,
    model_from_dict,
    model_to_dict,
    random_classical_mixture,
    random_cptp_kraus,
    random_lindblad_generator,
    random_quantum_bystander,
    random_stochastic_env,
    random_unitary_decomposition,
    random_unitary_model,
    sine_modulation,
)
from qflow.qcore import (
    InvariantViolation,
    PAULI_OPS,
    apply_superop,
    kron,
    lindblad_superoperator,
    matrix_exp,
    partial_trace,
    random_density_matrix,
    trace_preservation_residual,
    unvec,
    vec,
)
from qflow.witness import (
    RandomSchemePolicy,
    cpf_correlation,
    cpf_joint_deterministic,
    cpf_joint_random,
    markov_factorization_gap,
    reference_measurements,
    trace_distance_bound,
    trace_distance_series,
)

seeds = st.integers(0, 2**32 - 1)


def classical_rate_generator(model: StochasticEnvModel) -> np.ndarray:
    """Population-sector generator: gains off diagonal, losses on it."""
    r = model.rate_matrix()
    return r - np.diag(r.sum(axis=0))


class TestAssembleGenerator:
    def test_classical_mixture_block_diagonal(self):
        rng = np.random.default_rng(0)
        gens = [random_lindblad_generator(rng, 2) for _ in range(3)]
        m = ClassicalMixtureModel(lindblads=tuple(gens),
                                  weights=np.array([0.2, 0.5, 0.3]))
        got = assemble_generator(m)
        assert np.abs(got - scipy.linalg.block_diag(*gens)).max() == 0.0

    def test_depolarizing_population_master_equation(self):
        gamma, phi = 1.0, 0.7
        m = DepolarizingModel(gamma=gamma, phi=phi)
        rng = np.random.default_rng(1)
        rho0 = random_density_matrix(rng, 2)
        state = models.initial_state(m, rho0)
        # population rate matrix: 4 -> k at gamma/3, k -> 4 at phi
        w = np.zeros((4, 4))
        for k in range(3):
            w[k, 3] += gamma / 3.0
            w[3, k] += phi
        w -= np.diag(w.sum(axis=0))
        for t in (0.3, 1.1, 2.6):
            evolved = propagate_interval(m, state, 0.0, t)
            pops = np.array([np.trace(b).real for b in evolved])
            want = matrix_exp(w * t).real @ m.populations0
            assert np.abs(pops - want).max() < 1e-12

    def test_unitary_generator_exponential_is_unitary_conjugation(self):
        rng = np.random.default_rng(2)
        m = random_unitary_model(rng)
        gen = assemble_generator(m)
        t = 0.8
        u = matrix_exp(-1j * t * m.total_hamiltonian())
        want = np.kron(u.conj(), u)
        assert np.abs(matrix_exp(gen * t) - want).max() < 1e-10

    @settings(max_examples=15, deadline=None)
    @given(seeds)
    def test_trace_preserving_every_class(self, seed):
        rng = np.random.default_rng(seed)
        instances = [
            random_classical_mixture(rng, nc=2),
            random_stochastic_env(rng, nc=2),
            random_quantum_bystander(rng, de=2),
            random_unitary_model(rng),
            DepolarizingModel(gamma=1.0, phi=float(rng.uniform(0.3, 3.0)),
                              omega=float(rng.uniform(0.0, 2.0))),
        ]
        for m in instances:
            gen = assemble_generator(m)
            if models.uses_stacked(m):
                # trace functional on the stacked representation
                tvec = np.concatenate([vec(np.eye(m.ds)) for _ in range(m.env_dim)])
                assert np.abs(tvec.conj() @ gen).max() < 1e-9
            else:
                d = m.ds * m.env_dim
                assert trace_preservation_residual(gen, d) < 1e-9


class TestStochasticEnv:
    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_populations_independent_of_system_state(self, seed):
        rng = np.random.default_rng(seed)
        m = random_stochastic_env(rng, nc=3)
        rho_a = random_density_matrix(rng, 2)
        rho_b = random_density_matrix(rng, 2)
        grid = TimeGrid.regular(2.0, 0.5)
        series_a = propagate(m, models.initial_state(m, rho_a), grid)
        series_b = propagate(m, models.initial_state(m, rho_b), grid)
        gen_cl = classical_rate_generator(m)
        for i, t in enumerate(grid.times):
            pops_a = np.array([np.trace(b).real for b in series_a[i]])
            pops_b = np.array([np.trace(b).real for b in series_b[i]])
            assert np.abs(pops_a - pops_b).max() < 1e-9
            want = matrix_exp(gen_cl * t).real @ m.populations0
            assert np.abs(pops_a - want).max() < 1e-9


class TestQuantumBystander:
    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_env_marginal_closed_dynamics(self, seed):
        rng = np.random.default_rng(seed)
        m = random_quantum_bystander(rng, de=2)
        rho0 = random_density_matrix(rng, 2)
        state = models.initial_state(m, rho0)
        env_gen = m.env_generator()
        for t in (0.4, 1.2):
            evolved = propagate_interval(m, state, 0.0, t)
            got = models.env_marginal(m, evolved)
            want = apply_superop(matrix_exp(env_gen * t), m.env0)
            assert np.abs(got - want).max() < 1e-8


class TestBystanderCheck:
    def test_depolarizing_with_drive(self):
        ok, resid = check_bystander(DepolarizingModel(gamma=1.0, phi=1.0, omega=2.0))
        assert ok and resid < 1e-9

    @settings(max_examples=10, deadline=None)
    @given(seeds)
    def test_bystander_classes_pass(self, seed):
        rng = np.random.default_rng(seed)
        for m in (random_classical_mixture(rng, nc=2),
                  random_stochastic_env(rng, nc=3),
                  random_quantum_bystander(rng, de=3)):
            ok, resid = check_bystander(m)
            assert ok, f"{type(m).__name__} residual {resid}"

    def test_generic_unitary_fails(self):
        g = 1.0
        m = UnitaryModel(
            hs=np.zeros((2, 2), dtype=complex),
            he=PAULI_OPS[2],
            hi=g * kron(PAULI_OPS[0], PAULI_OPS[0]),
            env0=np.diag([0.6, 0.4]).astype(complex),
        )
        ok, resid = check_bystander(m)
        assert not ok
        assert resid > 1e-3 * g


class TestCommutingException:
    def test_env_diagonal_interaction_commutes(self):
        m = UnitaryModel(
            hs=np.zeros((2, 2), dtype=complex),
            he=0.7 * PAULI_OPS[2],
            hi=0.9 * kron(PAULI_OPS[0], PAULI_OPS[2]),
            env0=np.eye(2, dtype=complex) / 2,
        )
        assert interaction_commutes(m)

    def test_anticommuting_pair_fails(self):
        m = UnitaryModel(
            hs=np.zeros((2, 2), dtype=complex),
            he=0.7 * PAULI_OPS[0],
            hi=0.9 * kron(PAULI_OPS[0], PAULI_OPS[2]),
            env0=np.eye(2, dtype=complex) / 2,
        )
        assert not interaction_commutes(m)

    def test_no_interaction_commutes(self):
        m = UnitaryModel(
            hs=PAULI_OPS[2],
            he=0.7 * PAULI_OPS[0],
            hi=np.zeros((4, 4), dtype=complex),
            env0=np.eye(2, dtype=complex) / 2,
        )
        assert interaction_commutes(m)


class TestRandomUnitaryDecomposition:
    def test_dephasing_two_member_ensemble(self):
        m = commuting_interaction_preset()
        parts = random_unitary_decomposition(m)
        assert len(parts) == 2
        assert [w for w, _ in parts] == pytest.approx([0.75, 0.25])
        rng = np.random.default_rng(4)
        rho0 = random_density_matrix(rng, 2)
        state = models.initial_state(m, rho0)
        for t in (0.5, 1.3, 2.2):
            mix = sum(w * apply_superop(fam(t), rho0) for w, fam in parts)
            full = models.sys_marginal(m, propagate_interval(m, state, 0.0, t))
            assert np.abs(mix - full).max() < 1e-9

    def test_free_system_single_unitary(self):
        hs = 0.8 * PAULI_OPS[2]
        m = UnitaryModel(hs=hs, he=0.5 * PAULI_OPS[2],
                         hi=np.zeros((4, 4), dtype=complex),
                         env0=np.diag([0.3, 0.7]).astype(complex))
        parts = random_unitary_decomposition(m)
        t = 1.1
        u = matrix_exp(-1j * t * hs)
        want = np.kron(u.conj(), u)
        for _, fam in parts:
            assert np.abs(fam(t) - want).max() < 1e-10

    def test_invalid_model_rejected(self):
        m = exchange_preset()
        with pytest.raises(InvariantViolation):
            random_unitary_decomposition(m)

    def test_degenerate_env_spectrum_not_trusted(self):
        # a zero environment Hamiltonian commutes with everything, but the
        # propagator is still not block diagonal for an exchange coupling
        sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
        m = UnitaryModel(hs=np.zeros((2, 2)), he=np.zeros((2, 2)),
                         hi=kron(sm.conj().T, sm) + kron(sm, sm.conj().T),
                         env0=np.eye(2) / 2)
        assert interaction_commutes(m)  # vacuously
        with pytest.raises(InvariantViolation):
            random_unitary_decomposition(m)


class TestBornMarkov:
    def test_witnesses_vanish(self):
        rng = np.random.default_rng(8)
        sys_gen = random_lindblad_generator(rng, 2)
        env0 = random_density_matrix(rng, 2)
        m = born_markov_model(sys_gen, env0)
        rho0s, specs = reference_measurements()
        pd = cpf_joint_deterministic(m, rho0s, None, specs, 0.8, 0.6)
        pr = cpf_joint_random(m, rho0s, None, specs, None, 0.8, 0.6)
        assert np.nanmax(np.abs(cpf_correlation(pd, specs))) < 1e-10
        assert np.nanmax(np.abs(cpf_correlation(pr, specs))) < 1e-10
        assert markov_factorization_gap(pd) < 1e-10

    def test_bound_terms_vanish_and_td_monotone(self):
        rng = np.random.default_rng(9)
        sys_gen = random_lindblad_generator(rng, 2)
        env0 = random_density_matrix(rng, 2)
        m = born_markov_model(sys_gen, env0)
        rho = random_density_matrix(rng, 2)
        sig = random_density_matrix(rng, 2)
        b = trace_distance_bound(m, rho, sig, env0, 0.7, 0.5)
        assert b.env_term < 1e-10
        assert b.corr_rho < 1e-10
        assert b.corr_sigma < 1e-10
        assert b.increment <= 1e-12
        trace = trace_distance_series(m, rho, sig, env0,
                                      grid=TimeGrid.regular(3.0, 0.05))
        assert not trace.has_revival()


class TestModelFiles:
    @settings(max_examples=8, deadline=None)
    @given(seeds)
    def test_roundtrip_every_class(self, seed):
        rng = np.random.default_rng(seed)
        instances = [
            random_classical_mixture(rng, nc=2),
            random_stochastic_env(rng, nc=2),
            random_quantum_bystander(rng, de=2),
            random_unitary_model(rng),
            DepolarizingModel(gamma=1.2, phi=0.8, omega=0.5,
                              modulation=sine_modulation(0.4, 0.01),
                              modulation_bound=0.004),
        ]
        for m in instances:
            m2 = model_from_dict(model_to_dict(m))
            assert type(m2) is type(m)
            g1 = assemble_generator(m, t=0.3)
            g2 = assemble_generator(m2, t=0.3)
            assert np.abs(g1 - g2).max() < 1e-12

    def test_save_load_file(self, tmp_path):
        m = exchange_preset()
        path = tmp_path / "model.json"
        models.save_model(m, path)
        m2 = models.load_model(path)
        assert np.abs(m2.hi - m.hi).max() == 0.0

    def test_bad_format_rejected(self):
        with pytest.raises(InvariantViolation):
            model_from_dict({"format": "qflow-model/999", "class": "unitary"})


class TestInvariantEnforcement:
    def test_mixture_weights_must_normalize(self):
        rng = np.random.default_rng(1)
        g = random_lindblad_generator(rng, 2)
        with pytest.raises(InvariantViolation):
            ClassicalMixtureModel(lindblads=(g,), weights=np.array([0.7]))

    def test_jump_kraus_must_be_cptp(self):
        with pytest.raises(InvariantViolation):
            EnvJump(src=0, dst=1, rate=0.5, kraus=(0.5 * np.eye(2),))

    def test_collision_rate_nonnegative(self):
        with pytest.raises(InvariantViolation):
            Collision(op=np.eye(2), rate=-1.0, kraus=(np.eye(2),))

    def test_unitary_hermitian_required(self):
        with pytest.raises(InvariantViolation):
            UnitaryModel(hs=np.array([[0.0, 1.0], [0.0, 0.0]]),
                         he=np.zeros((2, 2)),
                         hi=np.zeros((4, 4)),
                         env0=np.eye(2) / 2)

    def test_depolarizing_rates_positive(self):
        with pytest.raises(InvariantViolation):
            DepolarizingModel(gamma=0.0, phi=1.0)

    def test_modulation_must_keep_rates_positive(self):
        m = DepolarizingModel(gamma=1.0, phi=1.0,
                              modulation=lambda t: 1.5 * np.sin(t))
        with pytest.raises(InvariantViolation):
            assemble_generator(m, t=np.pi / 2)


class TestStateHelpers:
    def test_stacked_marginals(self):
        m = DepolarizingModel(gamma=1.0, phi=1.0)
        rng = np.random.default_rng(11)
        rho0 = random_density_matrix(rng, 2)
        state = models.initial_state(m, rho0)
        assert np.abs(models.sys_marginal(m, state) - rho0).max() < 1e-14
        env = models.env_marginal(m, state)
        assert np.abs(np.diag(env).real - m.populations0).max() < 1e-14

    def test_full_marginals(self):
        rng = np.random.default_rng(12)
        m = random_quantum_bystander(rng, de=3)
        rho0 = random_density_matrix(rng, 2)
        state = models.initial_state(m, rho0)
        assert np.abs(models.sys_marginal(m, state) - rho0).max() < 1e-14
        assert np.abs(models.env_marginal(m, state) - m.env0).max() < 1e-14

    def test_classical_env_rejects_coherences(self):
        m = DepolarizingModel(gamma=1.0, phi=1.0)
        rho0 = np.eye(2, dtype=complex) / 2
        env = np.full((4, 4), 0.25, dtype=complex)
        with pytest.raises(InvariantViolation):
            models.initial_state(m, rho0, env)
