"""System-environment model classes reduced to a common generator form.

Two internal representations are used:

* "stacked": classical environments carry no coherences between their
  labels, so the joint state is a stack of (unnormalized) system blocks,
  one per environment label, shape ``(nc, ds, ds)``.  The generator acts
  on the concatenation of the column-stacked blocks.
* "full": quantum environments use the bipartite density matrix, shape
  ``(ds*de, ds*de)``, with the generator acting on its vectorization.

Models are immutable after construction and all helpers are pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.linalg

from .qcore import (
    HERMITIAN_TOL,
    PROPAGATION_TOL,
    InvariantViolation,
    PAULI_OPS,
    basis_ket,
    conjugation_superop,
    dag,
    hermitize,
    kraus_superoperator,
    kron,
    lift_env_superop,
    lift_system_superop,
    lindblad_superoperator,
    matrix_exp,
    partial_trace,
    projector,
    random_density_matrix,
    random_hermitian,
    trace_distance,
    trace_preservation_residual,
    unvec,
    validate_density_matrix,
    vec,
)

MODEL_FORMAT = "qflow-model/1"

BYSTANDER_TOL = 1e-9
COMMUTATOR_TOL = 1e-10


def _freeze(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=complex)
    out.setflags(write=False)
    return out


def _freeze_real(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


def _check_generator(gen: np.ndarray, dim: int, label: str) -> None:
    if trace_preservation_residual(gen, dim) > PROPAGATION_TOL:
        raise InvariantViolation(f"{label} generator is not trace preserving")


@dataclass(frozen=True)
class ClassicalMixtureModel:
    """Static mixture of Markovian system evolutions, one per environment label.

    ``lindblads[c]`` is a trace-preserving system generator active under
    environment label ``c``; ``weights[c]`` is the (time independent)
    probability of that label.
    """

    lindblads: tuple
    weights: np.ndarray

    def __post_init__(self):
        lindblads = tuple(_freeze(g) for g in self.lindblads)
        weights = _freeze_real(self.weights)
        object.__setattr__(self, "lindblads", lindblads)
        object.__setattr__(self, "weights", weights)
        if len(lindblads) != weights.size or not lindblads:
            raise InvariantViolation("one weight per generator required")
        if weights.min() < 0 or abs(weights.sum() - 1.0) > 1e-12:
            raise InvariantViolation("weights must be a probability vector")
        ds = self.ds
        for i, g in enumerate(lindblads):
            if g.shape != (ds * ds, ds * ds):
                raise InvariantViolation("generator dimensions differ")
            _check_generator(g, ds, f"mixture component {i}")

    @property
    def ds(self) -> int:
        return int(round(np.sqrt(self.lindblads[0].shape[0])))

    @property
    def env_dim(self) -> int:
        return len(self.lindblads)


@dataclass(frozen=True)
class EnvJump:
    """Classical environment transition src -> dst at a given rate.

    ``kraus`` lists the Kraus operators of the trace-preserving system
    transformation applied when the jump fires.
    """

    src: int
    dst: int
    rate: float
    kraus: tuple

    def __post_init__(self):
        object.__setattr__(self, "kraus", tuple(_freeze(k) for k in self.kraus))
        if self.rate < 0:
            raise InvariantViolation("jump rate must be non-negative")
        if self.src == self.dst:
            raise InvariantViolation("jump must change the environment label")
        kraus_superoperator(self.kraus, require_cptp=True)


@dataclass(frozen=True)
class StochasticEnvModel:
    """System driven by stochastic classical environment transitions."""

    lindblads: tuple
    jumps: tuple
    populations0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lindblads", tuple(_freeze(g) for g in self.lindblads))
        object.__setattr__(self, "jumps", tuple(self.jumps))
        object.__setattr__(self, "populations0", _freeze_real(self.populations0))
        nc = len(self.lindblads)
        if self.populations0.size != nc:
            raise InvariantViolation("one initial population per label required")
        if self.populations0.min() < 0 or abs(self.populations0.sum() - 1.0) > 1e-12:
            raise InvariantViolation("initial populations must be normalized")
        ds = self.ds
        for i, g in enumerate(self.lindblads):
            if g.shape != (ds * ds, ds * ds):
                raise InvariantViolation("generator dimensions differ")
            _check_generator(g, ds, f"label {i}")
        for j in self.jumps:
            if not (0 <= j.src < nc and 0 <= j.dst < nc):
                raise InvariantViolation("jump label out of range")

    @property
    def ds(self) -> int:
        return int(round(np.sqrt(self.lindblads[0].shape[0])))

    @property
    def env_dim(self) -> int:
        return len(self.lindblads)

    def rate_matrix(self) -> np.ndarray:
        """Classical rate matrix r[dst, src] of the label populations."""
        nc = self.env_dim
        r = np.zeros((nc, nc))
        for j in self.jumps:
            r[j.dst, j.src] += j.rate
        return r


@dataclass(frozen=True)
class Collision:
    """Environment transition operator with an attached system kick."""

    op: np.ndarray
    rate: float
    kraus: tuple

    def __post_init__(self):
        object.__setattr__(self, "op", _freeze(self.op))
        object.__setattr__(self, "kraus", tuple(_freeze(k) for k in self.kraus))
        if self.rate < 0:
            raise InvariantViolation("collision rate must be non-negative")
        kraus_superoperator(self.kraus, require_cptp=True)


@dataclass(frozen=True)
class QuantumBystanderModel:
    """Quantum environment with self-contained marginal dynamics.

    The environment evolves under ``le`` plus the dissipators of the
    collision operators alone; the system feels the collisions through
    the attached Kraus kicks.
    """

    ls: np.ndarray
    le: np.ndarray
    collisions: tuple
    env0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ls", _freeze(self.ls))
        object.__setattr__(self, "le", _freeze(self.le))
        object.__setattr__(self, "collisions", tuple(self.collisions))
        object.__setattr__(self, "env0", _freeze(validate_density_matrix(self.env0)))
        _check_generator(self.ls, self.ds, "system")
        _check_generator(self.le, self.env_dim, "environment")
        for c in self.collisions:
            if c.op.shape != (self.env_dim, self.env_dim):
                raise InvariantViolation("collision operator must act on the environment")
            if c.kraus[0].shape != (self.ds, self.ds):
                raise InvariantViolation("collision Kraus must act on the system")

    @property
    def ds(self) -> int:
        return int(round(np.sqrt(self.ls.shape[0])))

    @property
    def env_dim(self) -> int:
        return int(round(np.sqrt(self.le.shape[0])))

    def env_generator(self) -> np.ndarray:
        """Marginal environment generator (self-dynamics plus collisions)."""
        de = self.env_dim
        gen = np.array(self.le)
        eye = np.eye(de)
        for c in self.collisions:
            n = dag(c.op) @ c.op
            gen += c.rate * (conjugation_superop(c.op)
                             - 0.5 * np.kron(eye, n)
                             - 0.5 * np.kron(n.T, eye))
        return gen


@dataclass(frozen=True)
class UnitaryModel:
    """Closed bipartite dynamics under a total Hamiltonian."""

    hs: np.ndarray
    he: np.ndarray
    hi: np.ndarray
    env0: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "hs", _freeze(self.hs))
        object.__setattr__(self, "he", _freeze(self.he))
        object.__setattr__(self, "hi", _freeze(self.hi))
        object.__setattr__(self, "env0", _freeze(validate_density_matrix(self.env0)))
        for name, h in (("hs", self.hs), ("he", self.he), ("hi", self.hi)):
            if np.abs(h - dag(h)).max() > HERMITIAN_TOL:
                raise InvariantViolation(f"{name} is not Hermitian within 1e-10")
        if self.hi.shape != (self.ds * self.env_dim,) * 2:
            raise InvariantViolation("interaction must act on the joint space")

    @property
    def ds(self) -> int:
        return self.hs.shape[0]

    @property
    def env_dim(self) -> int:
        return self.he.shape[0]

    def total_hamiltonian(self) -> np.ndarray:
        ds, de = self.ds, self.env_dim
        return (kron(self.hs, np.eye(de)) + kron(np.eye(ds), self.he) + self.hi)


@dataclass(frozen=True)
class DepolarizingModel:
    """Qubit coupled to a four-state exchange environment.

    Transitions 4 -> k at rate gamma/3 and k -> 4 at rate phi (k = 1, 2, 3)
    each kick the qubit with the matching Pauli conjugation.  Optional
    ingredients: a slow rate modulation ``gamma(t) = gamma*(1 + b(t))``,
    ``phi(t) = phi*(1 - b(t))``, and a coherent environment drive of
    frequency ``omega`` coupling the 4-th level to the other three.
    """

    gamma: float
    phi: float
    populations0: np.ndarray = None
    omega: float = 0.0
    modulation: Optional[Callable[[float], float]] = None
    modulation_bound: Optional[float] = None

    def __post_init__(self):
        if self.gamma <= 0 or self.phi <= 0:
            raise InvariantViolation("rates must be positive")
        if self.omega < 0:
            raise InvariantViolation("drive frequency must be non-negative")
        pops = self.populations0
        if pops is None:
            gp = self.gamma + self.phi
            pops = [self.gamma / (3 * gp)] * 3 + [self.phi / gp]
        pops = _freeze_real(pops)
        object.__setattr__(self, "populations0", pops)
        if pops.size != 4 or pops.min() < 0 or abs(pops.sum() - 1.0) > 1e-12:
            raise InvariantViolation("populations0 must be 4 normalized weights")

    @property
    def ds(self) -> int:
        return 2

    @property
    def env_dim(self) -> int:
        return 4

    def rates_at(self, t: float) -> tuple[float, float]:
        if self.modulation is None:
            return self.gamma, self.phi
        b = float(self.modulation(t))
        if abs(b) >= 1.0:
            raise InvariantViolation(f"|b({t})| = {abs(b)} must stay below 1")
        return self.gamma * (1.0 + b), self.phi * (1.0 - b)


BipartiteModel = Union[
    ClassicalMixtureModel,
    StochasticEnvModel,
    QuantumBystanderModel,
    UnitaryModel,
    DepolarizingModel,
]


def uses_stacked(model: BipartiteModel) -> bool:
    """Whether the model evolves in the stacked classical representation."""
    if isinstance(model, (ClassicalMixtureModel, StochasticEnvModel)):
        return True
    if isinstance(model, DepolarizingModel):
        return model.omega == 0.0
    return False


def is_time_dependent(model: BipartiteModel) -> bool:
    return isinstance(model, DepolarizingModel) and model.modulation is not None


def dims(model: BipartiteModel) -> tuple[int, int]:
    return model.ds, model.env_dim


def generator_dim(model: BipartiteModel) -> int:
    ds, de = dims(model)
    if uses_stacked(model):
        return ds * ds * de
    return (ds * de) ** 2


def _depolarizing_stacked_parts(ds_gamma: float = 1.0):
    """Stacked generators for unit gamma and unit phi, to combine affinely."""
    eye4 = np.eye(4)
    g_gamma = np.zeros((16, 16), dtype=complex)
    g_phi = np.zeros((16, 16), dtype=complex)
    g_gamma[12:16, 12:16] -= eye4
    for k in range(3):
        sl = slice(4 * k, 4 * k + 4)
        sand = conjugation_superop(PAULI_OPS[k])
        g_phi[sl, sl] -= eye4
        g_gamma[sl, 12:16] += sand / 3.0
        g_phi[12:16, sl] += sand
    return g_gamma, g_phi


_DEPOL_GAMMA_PART, _DEPOL_PHI_PART = _depolarizing_stacked_parts()


def _depolarizing_full_generator(gamma: float, phi: float, omega: float) -> np.ndarray:
    b_ops = [np.zeros((4, 4), dtype=complex) for _ in range(3)]
    for k in range(3):
        b_ops[k][k, 3] = 1.0
    he = np.zeros((4, 4), dtype=complex)
    for k in range(3):
        he[k, 3] += omega / 2.0
        he[3, k] += omega / 2.0
    jumps = []
    for k in range(3):
        jumps.append((kron(PAULI_OPS[k], b_ops[k]), gamma / 3.0))
        jumps.append((kron(PAULI_OPS[k], dag(b_ops[k])), phi))
    return lindblad_superoperator(kron(np.eye(2), he), jumps)


def assemble_generator(model: BipartiteModel, t: float = 0.0) -> np.ndarray:
    """Generator acting on the flattened representation at time ``t``."""
    if isinstance(model, ClassicalMixtureModel):
        return scipy.linalg.block_diag(*model.lindblads)
    if isinstance(model, StochasticEnvModel):
        ds, nc = model.ds, model.env_dim
        n = ds * ds
        gen = np.zeros((nc * n, nc * n), dtype=complex)
        for c in range(nc):
            gen[c * n:(c + 1) * n, c * n:(c + 1) * n] = model.lindblads[c]
        for j in model.jumps:
            src = slice(j.src * n, (j.src + 1) * n)
            dst = slice(j.dst * n, (j.dst + 1) * n)
            gen[src, src] -= j.rate * np.eye(n)
            gen[dst, src] += j.rate * kraus_superoperator(j.kraus)
        return gen
    if isinstance(model, DepolarizingModel):
        gamma_t, phi_t = model.rates_at(t)
        if gamma_t <= 0 or phi_t <= 0:
            raise InvariantViolation("modulated rates must stay positive")
        if uses_stacked(model):
            return gamma_t * _DEPOL_GAMMA_PART + phi_t * _DEPOL_PHI_PART
        return _depolarizing_full_generator(gamma_t, phi_t, model.omega)
    if isinstance(model, QuantumBystanderModel):
        ds, de = dims(model)
        d = ds * de
        gen = lift_system_superop(model.ls, ds, de) + lift_env_superop(model.le, ds, de)
        eye = np.eye(d)
        for c in model.collisions:
            n_env = kron(np.eye(ds), dag(c.op) @ c.op)
            jump = sum(conjugation_superop(kron(k, c.op)) for k in c.kraus)
            gen += c.rate * (jump - 0.5 * np.kron(eye, n_env)
                             - 0.5 * np.kron(n_env.T, eye))
        return gen
    if isinstance(model, UnitaryModel):
        return lindblad_superoperator(model.total_hamiltonian())
    raise InvariantViolation(f"unknown model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# bipartite state helpers (dispatch on the model representation)
# ---------------------------------------------------------------------------

def default_env_state(model: BipartiteModel):
    """Model-owned initial environment: populations or a density matrix."""
    if isinstance(model, ClassicalMixtureModel):
        return np.array(model.weights)
    if isinstance(model, StochasticEnvModel):
        return np.array(model.populations0)
    if isinstance(model, DepolarizingModel):
        if uses_stacked(model):
            return np.array(model.populations0)
        env = np.diag(model.populations0).astype(complex)
        return env
    return np.array(model.env0)


def _env_populations_from(env0, nc: int) -> np.ndarray:
    env0 = np.asarray(env0)
    if env0.ndim == 2:
        off = env0 - np.diag(np.diag(env0))
        if np.abs(off).max() > 1e-12:
            raise InvariantViolation(
                "classical environments cannot carry coherences; "
                "pass diagonal populations"
            )
        env0 = np.diag(env0).real
    if env0.size != nc or env0.min() < -1e-12 or abs(env0.sum() - 1.0) > 1e-10:
        raise InvariantViolation("environment populations must be normalized")
    return env0.real


def initial_state(model: BipartiteModel, rho0s: np.ndarray, env0=None):
    """Separable initial bipartite state in the model representation."""
    validate_density_matrix(rho0s)
    if env0 is None:
        env0 = default_env_state(model)
    if uses_stacked(model):
        pops = _env_populations_from(env0, model.env_dim)
        return np.array([p * np.asarray(rho0s, dtype=complex) for p in pops])
    env0 = validate_density_matrix(np.asarray(env0, dtype=complex))
    return kron(rho0s, env0)


def flatten_state(model: BipartiteModel, state: np.ndarray) -> np.ndarray:
    if uses_stacked(model):
        return np.concatenate([vec(b) for b in state])
    return vec(state)


def unflatten_state(model: BipartiteModel, v: np.ndarray) -> np.ndarray:
    ds, de = dims(model)
    if uses_stacked(model):
        n = ds * ds
        return np.array([unvec(v[c * n:(c + 1) * n], ds) for c in range(de)])
    return unvec(v, ds * de)


def state_trace(model: BipartiteModel, state: np.ndarray) -> float:
    if uses_stacked(model):
        return float(sum(np.trace(b).real for b in state))
    return float(np.trace(state).real)


def sys_marginal(model: BipartiteModel, state: np.ndarray) -> np.ndarray:
    if uses_stacked(model):
        return np.sum(state, axis=0)
    return partial_trace(state, dims(model), "system")


def env_marginal(model: BipartiteModel, state: np.ndarray) -> np.ndarray:
    """Environment marginal as a density matrix (diagonal when classical)."""
    if uses_stacked(model):
        return np.diag([np.trace(b).real for b in state]).astype(complex)
    return partial_trace(state, dims(model), "environment")


def env_after_projection(model: BipartiteModel, state: np.ndarray,
                         ket: np.ndarray) -> np.ndarray:
    """Unnormalized environment state conditioned on the system projector."""
    if uses_stacked(model):
        weights = [float((ket.conj() @ b @ ket).real) for b in state]
        return np.diag(weights).astype(complex)
    ds, de = dims(model)
    p_full = kron(projector(ket), np.eye(de))
    return partial_trace(p_full @ state @ p_full, (ds, de), "environment")


def product_with_env(model: BipartiteModel, sys_state: np.ndarray,
                     env_state: np.ndarray) -> np.ndarray:
    """Bipartite state with the given factors (env may be unnormalized)."""
    if uses_stacked(model):
        pops = np.diag(env_state).real
        return np.array([p * sys_state for p in pops])
    return kron(sys_state, env_state)


def expect_system_projector(model: BipartiteModel, state: np.ndarray,
                            ket: np.ndarray) -> float:
    if uses_stacked(model):
        return float(sum((ket.conj() @ b @ ket).real for b in state))
    ds, de = dims(model)
    p_full = kron(projector(ket), np.eye(de))
    return float(np.trace(p_full @ state).real)


def bipartite_trace_distance(model: BipartiteModel, a: np.ndarray,
                             b: np.ndarray) -> float:
    if uses_stacked(model):
        total = 0.0
        for ba, bb in zip(a, b):
            eigs = np.linalg.eigvalsh(hermitize(ba - bb))
            total += 0.5 * float(np.abs(eigs).sum())
        return total
    return trace_distance(a, b)


def resymmetrized(model: BipartiteModel, state: np.ndarray) -> np.ndarray:
    if uses_stacked(model):
        return np.array([hermitize(b) for b in state])
    return hermitize(state)


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------

def _traceless_basis(d: int):
    ops = []
    for i in range(d):
        for j in range(d):
            if i != j:
                m = np.zeros((d, d), dtype=complex)
                m[i, j] = 1.0
                ops.append(m)
    for i in range(d - 1):
        m = np.zeros((d, d), dtype=complex)
        m[i, i] = 1.0
        m[i + 1, i + 1] = -1.0
        ops.append(m)
    return ops


def check_bystander(model: BipartiteModel, t: float = 0.0,
                    tol: float = BYSTANDER_TOL) -> tuple[bool, float]:
    """Whether the environment marginal evolves independently of the system.

    Algebraic test: the composed map X -> Tr_s(L[X]) must annihilate every
    bipartite operator with vanishing system-partial trace.  Returns the
    verdict and the worst-case residual over that kernel basis.
    """
    gen = assemble_generator(model, t)
    ds, de = dims(model)
    worst = 0.0
    if uses_stacked(model):
        for block in _traceless_basis(ds):
            for c in range(de):
                x = np.zeros((de, ds, ds), dtype=complex)
                x[c] = block
                image = unflatten_state(model, gen @ flatten_state(model, x))
                worst = max(worst, max(abs(np.trace(b)) for b in image))
        return worst < tol, worst
    for sys_op in _traceless_basis(ds):
        for i in range(de):
            for j in range(de):
                f = np.zeros((de, de), dtype=complex)
                f[i, j] = 1.0
                x = kron(sys_op, f)
                image = unvec(gen @ vec(x), ds * de)
                resid = np.abs(partial_trace(image, (ds, de), "environment")).max()
                worst = max(worst, float(resid))
    return worst < tol, worst


def interaction_commutes(model: UnitaryModel,
                         tol: float = COMMUTATOR_TOL) -> bool:
    """Whether the environment Hamiltonian commutes with the interaction."""
    he_full = kron(np.eye(model.ds), model.he)
    comm = he_full @ model.hi - model.hi @ he_full
    return bool(np.abs(comm).max() < tol)


def _env_blocks_of_unitary(u: np.ndarray, ds: int, de: int) -> np.ndarray:
    """System-space blocks <e| U |e'> of a joint unitary."""
    return u.reshape(ds, de, ds, de).transpose(1, 3, 0, 2)


def random_unitary_decomposition(model: UnitaryModel, basis=None,
                                 check_times=(0.5, 1.0, 2.0),
                                 tol: float = PROPAGATION_TOL):
    """Mixture of environment-conditioned system propagators.

    Valid when the joint propagator is block diagonal in the environment
    basis; this is always verified numerically at ``check_times``, since a
    vanishing commutator of the environment Hamiltonian with the
    interaction guarantees it only for nondegenerate environment spectra.
    Returns ``[(weight, family), ...]`` where ``family(t)`` is the system
    superoperator conditioned on the basis state.
    """
    ds, de = model.ds, model.env_dim
    if basis is None:
        basis = [basis_ket(de, i) for i in range(de)]
    basis_mat = np.column_stack(basis)
    ht = model.total_hamiltonian()
    to_basis = kron(np.eye(ds), basis_mat)

    def joint_unitary(t: float) -> np.ndarray:
        u = matrix_exp(-1j * t * ht)
        return dag(to_basis) @ u @ to_basis

    worst = 0.0
    for t in check_times:
        blocks = _env_blocks_of_unitary(joint_unitary(float(t)), ds, de)
        for e in range(de):
            for ep in range(de):
                if e != ep:
                    worst = max(worst, float(np.abs(blocks[e, ep]).max()))
    if worst > tol:
        raise InvariantViolation(
            "joint propagator is not block diagonal in the given basis "
            f"(off-block residual {worst:.2e} exceeds {tol:g})"
        )

    weights = [float((k.conj() @ model.env0 @ k).real) for k in basis]

    def make_family(e: int):
        def family(t: float) -> np.ndarray:
            blocks = _env_blocks_of_unitary(joint_unitary(float(t)), ds, de)
            w = blocks[e, e]
            return conjugation_superop(w)
        return family

    return [(weights[e], make_family(e)) for e in range(de)]


def born_markov_model(system_generator: np.ndarray,
                      env_state: np.ndarray) -> QuantumBystanderModel:
    """Product-form control dynamics: frozen environment, Markovian system."""
    de = np.asarray(env_state).shape[0]
    return QuantumBystanderModel(
        ls=system_generator,
        le=np.zeros((de * de, de * de), dtype=complex),
        collisions=(),
        env0=env_state,
    )


# ---------------------------------------------------------------------------
# randomized instances for property suites (seeded, reproducible)
# ---------------------------------------------------------------------------

def random_lindblad_generator(rng: np.random.Generator, dim: int,
                              n_jumps: int = 1) -> np.ndarray:
    jumps = [
        (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)),
         float(rng.uniform()))
        for _ in range(n_jumps)
    ]
    return lindblad_superoperator(random_hermitian(rng, dim), jumps)


def random_cptp_kraus(rng: np.random.Generator, dim: int, n_ops: int = 2):
    """Random Kraus set normalized to exact completeness."""
    ks = [rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
          for _ in range(n_ops)]
    m = sum(dag(k) @ k for k in ks)
    w, v = np.linalg.eigh(m)
    m_inv_sqrt = v @ np.diag(w ** -0.5) @ dag(v)
    return tuple(k @ m_inv_sqrt for k in ks)


def random_classical_mixture(rng: np.random.Generator, ds: int = 2,
                             nc: int = 2) -> ClassicalMixtureModel:
    weights = rng.uniform(size=nc) + 0.1
    weights /= weights.sum()
    return ClassicalMixtureModel(
        lindblads=tuple(random_lindblad_generator(rng, ds) for _ in range(nc)),
        weights=weights,
    )


def random_stochastic_env(rng: np.random.Generator, ds: int = 2,
                          nc: int = 2) -> StochasticEnvModel:
    jumps = []
    for src in range(nc):
        for dst in range(nc):
            if src != dst:
                jumps.append(EnvJump(src=src, dst=dst, rate=float(rng.uniform()),
                                     kraus=random_cptp_kraus(rng, ds)))
    pops = rng.uniform(size=nc) + 0.1
    pops /= pops.sum()
    return StochasticEnvModel(
        lindblads=tuple(random_lindblad_generator(rng, ds) for _ in range(nc)),
        jumps=tuple(jumps),
        populations0=pops,
    )


def random_quantum_bystander(rng: np.random.Generator, ds: int = 2,
                             de: int = 2, n_collisions: int = 2
                             ) -> QuantumBystanderModel:
    collisions = tuple(
        Collision(
            op=rng.normal(size=(de, de)) + 1j * rng.normal(size=(de, de)),
            rate=float(rng.uniform()),
            kraus=random_cptp_kraus(rng, ds),
        )
        for _ in range(n_collisions)
    )
    return QuantumBystanderModel(
        ls=random_lindblad_generator(rng, ds),
        le=random_lindblad_generator(rng, de),
        collisions=collisions,
        env0=random_density_matrix(rng, de),
    )


def random_unitary_model(rng: np.random.Generator, ds: int = 2,
                         de: int = 2) -> UnitaryModel:
    return UnitaryModel(
        hs=random_hermitian(rng, ds),
        he=random_hermitian(rng, de),
        hi=random_hermitian(rng, ds * de),
        env0=random_density_matrix(rng, de),
    )


# ---------------------------------------------------------------------------
# named presets
# ---------------------------------------------------------------------------

def exchange_preset(coupling: float = 1.0, splitting: float = 0.5) -> UnitaryModel:
    """Resonant qubit pair exchanging excitations, mixed environment start."""
    sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
    sp = dag(sm)
    hi = coupling * (kron(sp, sm) + kron(sm, sp))
    sz = PAULI_OPS[2]
    return UnitaryModel(
        hs=splitting * sz,
        he=splitting * sz,
        hi=hi,
        env0=np.diag([0.75, 0.25]).astype(complex),
    )


def commuting_interaction_preset(coupling: float = 1.0,
                                 field: float = 0.7,
                                 env_freq: float = 0.5) -> UnitaryModel:
    """Dephasing-coupled pair whose environment Hamiltonian commutes with
    the interaction; a transverse system field keeps the dynamics rich."""
    sx = PAULI_OPS[0]
    sz = PAULI_OPS[2]
    return UnitaryModel(
        hs=field * sx,
        he=env_freq * sz,
        hi=coupling * kron(sz, sz),
        env0=np.diag([0.75, 0.25]).astype(complex),
    )


# ---------------------------------------------------------------------------
# model definition files ("qflow-model/1")
# ---------------------------------------------------------------------------

def _matrix_to_json(m: np.ndarray):
    m = np.asarray(m, dtype=complex)
    return [[[float(x.real), float(x.imag)] for x in row] for row in m]


def _matrix_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise InvariantViolation("matrices must be nested [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def model_to_dict(model: BipartiteModel) -> dict:
    doc = {"format": MODEL_FORMAT, "ds": model.ds, "de_or_nc": model.env_dim}
    if isinstance(model, ClassicalMixtureModel):
        doc["class"] = "classical_mixture"
        doc["parameters"] = {
            "generators": [_matrix_to_json(g) for g in model.lindblads],
        }
        doc["initial_env"] = [float(w) for w in model.weights]
    elif isinstance(model, StochasticEnvModel):
        doc["class"] = "stochastic_env"
        doc["parameters"] = {
            "generators": [_matrix_to_json(g) for g in model.lindblads],
            "jumps": [
                {
                    "src": j.src,
                    "dst": j.dst,
                    "rate": j.rate,
                    "kraus": [_matrix_to_json(k) for k in j.kraus],
                }
                for j in model.jumps
            ],
        }
        doc["initial_env"] = [float(p) for p in model.populations0]
    elif isinstance(model, QuantumBystanderModel):
        doc["class"] = "quantum_bystander"
        doc["parameters"] = {
            "system_generator": _matrix_to_json(model.ls),
            "env_generator": _matrix_to_json(model.le),
            "collisions": [
                {
                    "op": _matrix_to_json(c.op),
                    "rate": c.rate,
                    "kraus": [_matrix_to_json(k) for k in c.kraus],
                }
                for c in model.collisions
            ],
        }
        doc["initial_env"] = _matrix_to_json(model.env0)
    elif isinstance(model, UnitaryModel):
        doc["class"] = "unitary"
        doc["parameters"] = {
            "h_system": _matrix_to_json(model.hs),
            "h_env": _matrix_to_json(model.he),
            "h_interaction": _matrix_to_json(model.hi),
        }
        doc["initial_env"] = _matrix_to_json(model.env0)
    elif isinstance(model, DepolarizingModel):
        doc["class"] = "depolarizing"
        params = {"gamma": model.gamma, "phi": model.phi, "omega": model.omega}
        if model.modulation is not None:
            spec = getattr(model.modulation, "json_spec", None)
            if spec is None:
                raise InvariantViolation(
                    "only sine_modulation(...) callables are serializable"
                )
            params["modulation"] = spec
        doc["parameters"] = params
        doc["initial_env"] = [float(p) for p in model.populations0]
    else:
        raise InvariantViolation(f"unknown model type {type(model).__name__}")
    return doc


def sine_modulation(amplitude: float, frequency: float):
    """Serializable slow-drive profile b(t) = amplitude * sin(frequency * t)."""
    if not 0 <= amplitude < 1:
        raise InvariantViolation("modulation amplitude must lie in [0, 1)")

    def b(t):
        return amplitude * np.sin(frequency * t)

    b.json_spec = {"type": "sine", "amplitude": amplitude, "frequency": frequency}
    b.rate_bound = amplitude * frequency
    return b


def model_from_dict(doc: dict) -> BipartiteModel:
    if doc.get("format") != MODEL_FORMAT:
        raise InvariantViolation(
            f"unsupported model format {doc.get('format')!r}; expected {MODEL_FORMAT}"
        )
    cls = doc.get("class")
    params = doc.get("parameters", {})
    env = doc.get("initial_env")
    if cls == "classical_mixture":
        return ClassicalMixtureModel(
            lindblads=tuple(_matrix_from_json(g) for g in params["generators"]),
            weights=np.asarray(env, dtype=float),
        )
    if cls == "stochastic_env":
        jumps = tuple(
            EnvJump(src=int(j["src"]), dst=int(j["dst"]), rate=float(j["rate"]),
                    kraus=tuple(_matrix_from_json(k) for k in j["kraus"]))
            for j in params.get("jumps", [])
        )
        return StochasticEnvModel(
            lindblads=tuple(_matrix_from_json(g) for g in params["generators"]),
            jumps=jumps,
            populations0=np.asarray(env, dtype=float),
        )
    if cls == "quantum_bystander":
        collisions = tuple(
            Collision(op=_matrix_from_json(c["op"]), rate=float(c["rate"]),
                      kraus=tuple(_matrix_from_json(k) for k in c["kraus"]))
            for c in params.get("collisions", [])
        )
        return QuantumBystanderModel(
            ls=_matrix_from_json(params["system_generator"]),
            le=_matrix_from_json(params["env_generator"]),
            collisions=collisions,
            env0=_matrix_from_json(env),
        )
    if cls == "unitary":
        return UnitaryModel(
            hs=_matrix_from_json(params["h_system"]),
            he=_matrix_from_json(params["h_env"]),
            hi=_matrix_from_json(params["h_interaction"]),
            env0=_matrix_from_json(env),
        )
    if cls == "depolarizing":
        modulation = None
        bound = None
        mod_spec = params.get("modulation")
        if mod_spec is not None:
            if mod_spec.get("type") != "sine":
                raise InvariantViolation(
                    f"unknown modulation type {mod_spec.get('type')!r}"
                )
            modulation = sine_modulation(float(mod_spec["amplitude"]),
                                         float(mod_spec["frequency"]))
            bound = modulation.rate_bound
        return DepolarizingModel(
            gamma=float(params["gamma"]),
            phi=float(params["phi"]),
            populations0=np.asarray(env, dtype=float),
            omega=float(params.get("omega", 0.0)),
            modulation=modulation,
            modulation_bound=bound,
        )
    raise InvariantViolation(f"unknown model class {cls!r}")


def save_model(model: BipartiteModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> BipartiteModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
