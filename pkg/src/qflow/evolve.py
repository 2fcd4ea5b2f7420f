"""Propagation of bipartite states and closed-form depolarizing solutions.

Time is measured in units of the inverse base rate throughout; the default
grid step keeps the fastest rate resolved to one percent.  Time-independent
generators are propagated with cached matrix exponentials; modulated rates
fall back to classical fixed-step fourth-order integration, chosen over
adaptive stepping so outputs are bitwise reproducible.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import models
from .qcore import (
    InvariantViolation,
    NumericalDriftError,
    TRACE_DRIFT_TOL,
    lindblad_superoperator,
    matrix_exp,
    unvec,
    vec,
)


def default_step(*rates: float) -> float:
    """Default integration step, 0.01 over the fastest scale (at least 1)."""
    return 0.01 / max(1.0, *[abs(r) for r in rates])


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing times starting at zero with a nominal step."""

    times: np.ndarray
    step: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        if times.ndim != 1 or times.size < 1 or times[0] < 0:
            raise InvariantViolation("grid times must be non-negative scalars")
        if times.size > 1 and np.diff(times).min() <= 0:
            raise InvariantViolation("grid times must increase strictly")
        if self.step <= 0:
            raise InvariantViolation("grid step must be positive")

    @classmethod
    def regular(cls, t_max: float, step: float) -> "TimeGrid":
        n = int(round(t_max / step))
        if abs(n * step - t_max) > 1e-9 * max(1.0, t_max):
            n = int(np.ceil(t_max / step))
        return cls(times=np.arange(n + 1) * step, step=step)


@dataclass
class PropagatorCache:
    """Cached matrix exponentials of one generator, keyed by time gap."""

    generator: np.ndarray
    _cache: dict = field(default_factory=dict)

    def at(self, dt: float) -> np.ndarray:
        key = round(float(dt), 12)
        if key not in self._cache:
            self._cache[key] = matrix_exp(self.generator * float(dt))
        return self._cache[key]


def _rk4_span(model, v: np.ndarray, t0: float, t1: float,
              step: Optional[float] = None) -> np.ndarray:
    """Fixed-step integration of the flattened state from t0 to t1."""
    if t1 == t0:
        return v
    gamma, phi = model.gamma, model.phi
    peak = max(gamma, phi) * 2.0  # modulated rates stay below twice the base
    h_max = step if step is not None else default_step(peak, model.omega)
    n = max(1, int(np.ceil((t1 - t0) / h_max - 1e-12)))
    h = (t1 - t0) / n
    gen_at = lambda t: models.assemble_generator(model, t)
    t = t0
    for _ in range(n):
        k1 = gen_at(t) @ v
        k2 = gen_at(t + 0.5 * h) @ (v + 0.5 * h * k1)
        k3 = gen_at(t + 0.5 * h) @ (v + 0.5 * h * k2)
        k4 = gen_at(t + h) @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return v


def propagate_interval(model, state, t0: float, t1: float,
                       step: Optional[float] = None,
                       cache: Optional[PropagatorCache] = None):
    """Evolve one bipartite state from t0 to t1 (absolute times)."""
    v = models.flatten_state(model, state)
    if models.is_time_dependent(model):
        v = _rk4_span(model, v, t0, t1, step)
    else:
        if cache is None:
            cache = PropagatorCache(models.assemble_generator(model))
        v = cache.at(t1 - t0) @ v
    return models.unflatten_state(model, v)


def propagate(model, state0, grid: TimeGrid, stepper: str = "auto"):
    """State series over the grid; shape (nt, ...) in the model representation.

    ``stepper`` is "auto" (exponentials when the generator is constant),
    "expm", or "rk4".  Trace drift beyond 1e-8 raises; states are
    re-symmetrized after every step but never re-normalized.
    """
    if stepper not in ("auto", "expm", "rk4"):
        raise InvariantViolation(f"unknown stepper {stepper!r}")
    time_dep = models.is_time_dependent(model)
    if stepper == "expm" and time_dep:
        raise InvariantViolation("modulated rates require stepped integration")
    use_rk4 = time_dep or stepper == "rk4"

    trace0 = models.state_trace(model, state0)
    out = [np.array(state0)]
    v = models.flatten_state(model, state0)
    times = grid.times
    cache = None if use_rk4 else PropagatorCache(models.assemble_generator(model))
    if times[0] != 0.0:
        # grid not anchored at zero: evolve silently up to the first time
        if use_rk4:
            v = _rk4_span(model, v, 0.0, times[0], grid.step)
        else:
            v = cache.at(times[0]) @ v
        out[0] = models.resymmetrized(model, models.unflatten_state(model, v))
        v = models.flatten_state(model, out[0])
    prev_t = times[0]
    for t in times[1:]:
        if use_rk4:
            v = _rk4_span(model, v, prev_t, t, grid.step)
        else:
            v = cache.at(t - prev_t) @ v
        state = models.resymmetrized(model, models.unflatten_state(model, v))
        drift = abs(models.state_trace(model, state) - trace0)
        if drift > TRACE_DRIFT_TOL:
            raise NumericalDriftError(
                f"trace drift {drift:.2e} at t={t:g} exceeds {TRACE_DRIFT_TOL:g}"
            )
        out.append(state)
        v = models.flatten_state(model, state)
        prev_t = t
    return np.array(out)


# ---------------------------------------------------------------------------
# closed-form depolarizing solutions
# ---------------------------------------------------------------------------

def _require_rates(gamma: float, phi: float) -> None:
    if gamma <= 0 or phi <= 0:
        raise InvariantViolation("rates must be positive")


def depolarizing_weight(gamma: float, phi: float, t):
    """Channel weight w(t) for stationary initial environment populations.

    w(t) = (g^2 + 3 f^2) / (3 (g+f)^2)
         + 4 g f e^{-(g+f) t} / (3 (g+f)^2)
         + 2 g e^{-f t} / (3 (g+f))
    """
    _require_rates(gamma, phi)
    t = np.asarray(t, dtype=float)
    gp = gamma + phi
    out = ((gamma ** 2 + 3 * phi ** 2) / (3 * gp ** 2)
           + (4 * gamma * phi) / (3 * gp ** 2) * np.exp(-gp * t)
           + (2 * gamma) / (3 * gp) * np.exp(-phi * t))
    return out if out.ndim else float(out)


def trace_distance_factor(gamma: float, phi: float, t):
    """Universal trace-distance decay factor |4 w(t) - 1| / 3."""
    w = depolarizing_weight(gamma, phi, t)
    out = np.abs(4.0 * np.asarray(w) - 1.0) / 3.0
    return out if out.ndim else float(out)


def stationary_populations(gamma: float, phi: float):
    """Long-time environment populations, returned as (p4, p1, p2, p3)."""
    _require_rates(gamma, phi)
    gp = gamma + phi
    p4 = phi / gp
    pk = gamma / (3.0 * gp)
    return p4, pk, pk, pk


def stationary_populations_vector(gamma: float, phi: float) -> np.ndarray:
    """Populations in label order (p1, p2, p3, p4)."""
    p4, pk, _, _ = stationary_populations(gamma, phi)
    return np.array([pk, pk, pk, p4])


_PAULI_PRODUCT = np.zeros((4, 4), dtype=int)
for _k in range(1, 5):
    for _m in range(1, 5):
        if _k == 4:
            _r = _m
        elif _m == 4:
            _r = _k
        elif _k == _m:
            _r = 4
        else:
            _r = 6 - _k - _m
        _PAULI_PRODUCT[_k - 1, _m - 1] = _r - 1


def _coefficient_matrix(gamma: float, phi: float) -> np.ndarray:
    """Linear ODE matrix for the 16 Pauli-channel coefficients.

    Coefficient (k, j) multiplies the j-th Pauli conjugation inside the
    unnormalized system block attached to environment label k; flattened
    index is 4*k + j with labels 0..3 (3 = identity / fourth level).
    """
    a = np.zeros((16, 16))

    def idx(k, j):
        return 4 * k + j

    for m in range(4):
        a[idx(3, m), idx(3, m)] -= gamma
        for k in range(3):
            a[idx(3, m), idx(k, _PAULI_PRODUCT[k, m])] += phi
            a[idx(k, m), idx(k, m)] -= phi
            a[idx(k, m), idx(3, _PAULI_PRODUCT[k, m])] += gamma / 3.0
    return a


@dataclass(frozen=True)
class ChannelCoefficients:
    """Pauli-channel coefficients g[k][j] on a time grid, shape (nt, 4, 4)."""

    times: np.ndarray
    coeffs: np.ndarray

    def weight(self) -> np.ndarray:
        """Depolarizing weight: identity-channel column summed over labels."""
        return self.coeffs[:, :, 3].sum(axis=1)

    def populations(self) -> np.ndarray:
        """Environment populations p_k(t), shape (nt, 4)."""
        return self.coeffs.sum(axis=2)

    def channel_column(self, j: int) -> np.ndarray:
        """Total weight of the j-th Pauli conjugation (j = 0, 1, 2 for x, y, z)."""
        return self.coeffs[:, :, j].sum(axis=1)


def solve_channel_coefficients(gamma: float, phi: float, populations0,
                               grid: TimeGrid,
                               modulation: Optional[Callable] = None
                               ) -> ChannelCoefficients:
    """Integrate the 16 coupled coefficient ODEs with fixed-step RK4.

    Initial data: the identity column carries the initial populations,
    every other column starts at zero.
    """
    _require_rates(gamma, phi)
    pops = np.asarray(populations0, dtype=float)
    if pops.size != 4 or pops.min() < 0 or abs(pops.sum() - 1.0) > 1e-12:
        raise InvariantViolation("populations0 must be 4 normalized weights")
    g = np.zeros(16)
    g[3::4] = pops  # g[k, identity] = p_k(0)
    a_gamma = _coefficient_matrix(1.0, 0.0)
    a_phi = _coefficient_matrix(0.0, 1.0)

    def a_at(t: float) -> np.ndarray:
        if modulation is None:
            return gamma * a_gamma + phi * a_phi
        b = float(modulation(t))
        if abs(b) >= 1.0:
            raise InvariantViolation("modulation must stay inside (-1, 1)")
        return gamma * (1 + b) * a_gamma + phi * (1 - b) * a_phi

    times = grid.times
    out = np.empty((times.size, 16))
    pos = 0
    if times[0] == 0.0:
        out[0] = g
        pos = 1
    t = 0.0
    h_max = grid.step
    for i in range(pos, times.size):
        target = times[i]
        n = max(1, int(np.ceil((target - t) / h_max - 1e-12)))
        h = (target - t) / n
        for _ in range(n):
            k1 = a_at(t) @ g
            k2 = a_at(t + 0.5 * h) @ (g + 0.5 * h * k1)
            k3 = a_at(t + 0.5 * h) @ (g + 0.5 * h * k2)
            k4 = a_at(t + h) @ (g + h * k3)
            g = g + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        total = g.sum()
        if abs(total - 1.0) > TRACE_DRIFT_TOL:
            raise NumericalDriftError(
                f"coefficient normalization drift {abs(total-1):.2e} at t={t:g}"
            )
        out[i] = g
    return ChannelCoefficients(times=np.array(times),
                               coeffs=out.reshape(-1, 4, 4))


def adiabatic_weight(gamma: float, phi: float, b, t, populations0=None):
    """Slow-modulation channel weight in the long-time regime.

    The populations relax to the instantaneous stationary values while the
    coefficient dynamics conserves the total weight of the identity-plus-
    matching-Pauli columns; the surviving weight is the overlap of the
    initial populations with the instantaneous stationary ones:

        w(t) = sum_k p_k(0) * p_k_stationary(t)

    with p_4_stat(t) = phi(t)/(gamma(t)+phi(t)) and
    p_k_stat(t) = gamma(t)/(3 (gamma(t)+phi(t))) evaluated at the modulated
    rates.  Valid for slow drives once the initial transient has decayed.
    """
    _require_rates(gamma, phi)
    if abs(gamma - phi) / (gamma + phi) > 0.2:
        warnings.warn(
            "adiabatic weight assumes nearly balanced rates; "
            f"|gamma-phi|/(gamma+phi) = {abs(gamma-phi)/(gamma+phi):.2f}",
            stacklevel=2,
        )
    t = np.asarray(t, dtype=float)
    bt = np.asarray(b(t) if callable(b) else b, dtype=float)
    if np.any(np.abs(bt) >= 1.0):
        raise InvariantViolation("modulation must stay inside (-1, 1)")
    if populations0 is None:
        populations0 = stationary_populations_vector(gamma, phi)
    pops = np.asarray(populations0, dtype=float)
    gamma_t = gamma * (1.0 + bt)
    phi_t = phi * (1.0 - bt)
    total = gamma_t + phi_t
    p4_inst = phi_t / total
    pk_inst = gamma_t / (3.0 * total)
    out = pops[3] * p4_inst + pops[:3].sum() * pk_inst
    return out if out.ndim else float(out)


def coherent_weight_series(gamma: float, phi: float, omega: float,
                           grid: TimeGrid) -> np.ndarray:
    """Fourth-level environment population under the coherent drive.

    Integrates the environment-marginal Lindblad dynamics (exchange jumps
    plus the drive Hamiltonian) from the pure fourth level and returns the
    population of that level on the grid.  With no drive this coincides
    with the depolarizing channel weight started from that level.
    """
    _require_rates(gamma, phi)
    if omega < 0:
        raise InvariantViolation("drive frequency must be non-negative")
    b_ops = [np.zeros((4, 4), dtype=complex) for _ in range(3)]
    for k in range(3):
        b_ops[k][k, 3] = 1.0
    he = np.zeros((4, 4), dtype=complex)
    for k in range(3):
        he[k, 3] += omega / 2.0
        he[3, k] += omega / 2.0
    jumps = []
    for k in range(3):
        jumps.append((b_ops[k], gamma / 3.0))
        jumps.append((b_ops[k].conj().T, phi))
    gen = lindblad_superoperator(he, jumps)
    cache = PropagatorCache(gen)
    env = np.zeros((4, 4), dtype=complex)
    env[3, 3] = 1.0
    v = vec(env)
    times = grid.times
    out = np.empty(times.size)
    prev_t = 0.0
    for i, t in enumerate(times):
        if t != prev_t:
            v = cache.at(t - prev_t) @ v
            prev_t = t
        out[i] = unvec(v, 4)[3, 3].real
    return out
