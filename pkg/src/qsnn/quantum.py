"""
Qubit x truncated-Fock operators, the theta-scheduled neuron-qubit
Hamiltonian, and a fixed-step RK4 Lindblad integrator.

Basis ordering is qubit-major: index = q * (n_max + 1) + n with q = 0 for the
ground state |g> and q = 1 for |e>, and n = 0..n_max the photon number.
"""

from __future__ import annotations

import bisect
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ShapeError, StepSizeError

log = logging.getLogger(__name__)

TRACE_DRIFT_TOL = 1e-6

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
# |g><e| in the (g, e) basis
SIGMA_GE = np.array([[0, 1], [0, 0]], dtype=complex)


@dataclass(frozen=True)
class FockConfig:
    n_max: int

    def __post_init__(self):
        if int(self.n_max) != self.n_max or self.n_max < 1:
            raise ValueError("n_max must be an integer >= 1")

    @property
    def n_levels(self) -> int:
        return self.n_max + 1

    @property
    def dim(self) -> int:
        return 2 * (self.n_max + 1)


@dataclass(frozen=True)
class ThetaSchedule:
    """Piecewise-constant rotation angles; entry k is active on [t_start, t_end)."""

    entries: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        entries = tuple((float(a), float(b), float(th)) for a, b, th in self.entries)
        prev_end = -math.inf
        for a, b, th in entries:
            if not b > a:
                raise ValueError("schedule interval must have t_end > t_start")
            if a < prev_end:
                raise ValueError("schedule intervals must be sorted and non-overlapping")
            if not 0.0 <= th < 2.0 * math.pi:
                raise ValueError("theta must lie in [0, 2*pi)")
            prev_end = b
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_starts", [a for a, _, _ in entries])

    @property
    def N(self) -> int:
        return len(self.entries)

    @property
    def thetas(self) -> list[float]:
        return [th for _, _, th in self.entries]

    def active(self, t: float) -> float | None:
        i = bisect.bisect_right(self._starts, t) - 1
        if i < 0:
            return None
        a, b, th = self.entries[i]
        return th if a <= t < b else None

    @classmethod
    def constant(cls, theta: float, t_start: float = 0.0) -> "ThetaSchedule":
        return cls(((t_start, math.inf, theta),))


@dataclass(frozen=True)
class HamiltonianParams:
    g: float
    drive_amp: float
    tau_e: float
    theta_schedule: ThetaSchedule = field(default_factory=ThetaSchedule)

    def __post_init__(self):
        if not self.g >= 0:
            raise ValueError("g must be >= 0")
        if not self.drive_amp >= 0:
            raise ValueError("drive_amp must be >= 0")
        if not self.tau_e > 0:
            raise ValueError("tau_e must be > 0")


@dataclass(frozen=True)
class CollapseChannel:
    operator: np.ndarray
    rate: float

    def __post_init__(self):
        op = np.asarray(self.operator, dtype=complex)
        if op.ndim != 2 or op.shape[0] != op.shape[1]:
            raise ShapeError("collapse operator must be square")
        if not self.rate >= 0:
            raise ValueError("rate must be >= 0")
        object.__setattr__(self, "operator", op)


@dataclass
class Trajectory:
    """Recorded states of an :func:`evolve` run.

    ``states`` has shape ``(n_records, *batch, dim, dim)``;
    ``trace_corrections`` holds, per step, the largest ``|tr(rho) - 1|``
    removed by renormalization.
    """

    times: np.ndarray
    states: np.ndarray
    trace_corrections: np.ndarray


HamiltonianLike = Union[HamiltonianParams, Callable[[float], np.ndarray]]


def fock_annihilation(n_levels: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_levels, dtype=float)), k=1).astype(complex)


def annihilation_op(cfg: FockConfig) -> np.ndarray:
    """Cavity lowering operator ``I_2 (x) a``."""
    return np.kron(np.eye(2), fock_annihilation(cfg.n_levels))


def lowering_op(cfg: FockConfig) -> np.ndarray:
    """Qubit lowering operator ``|g><e| (x) I_fock``."""
    return np.kron(SIGMA_GE, np.eye(cfg.n_levels))


def number_op(cfg: FockConfig) -> np.ndarray:
    a = annihilation_op(cfg)
    return a.conj().T @ a


def qubit_op(op2: np.ndarray, cfg: FockConfig) -> np.ndarray:
    return np.kron(op2, np.eye(cfg.n_levels))


def basis_index(qubit: int, n: int, cfg: FockConfig) -> int:
    return qubit * cfg.n_levels + n


def pure_state(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=complex)
    vec = vec / np.linalg.norm(vec)
    return np.outer(vec, vec.conj())


def product_state(rho_q: np.ndarray, rho_f: np.ndarray) -> np.ndarray:
    return np.kron(rho_q, rho_f)


def vacuum(cfg: FockConfig) -> np.ndarray:
    rho = np.zeros((cfg.n_levels, cfg.n_levels), dtype=complex)
    rho[0, 0] = 1.0
    return rho


class NeuronQubitHamiltonian:
    """Callable ``H(t)`` with the static operator pieces built once."""

    def __init__(self, p: HamiltonianParams, cfg: FockConfig):
        self.p = p
        self.cfg = cfg
        sm = lowering_op(cfg)
        a = annihilation_op(cfg)
        self.jc = sm.conj().T @ a + a.conj().T @ sm
        self.drive = sm.conj().T + sm

    def coefficients(self, t: float) -> tuple[float, float]:
        theta = self.p.theta_schedule.active(t)
        if theta is None:
            return 0.0, 0.0
        c_jc = -self.p.g * math.sin(theta / 2.0)
        c_dr = -self.p.drive_amp * math.cos(theta / 2.0) * math.sin((t / self.p.tau_e) ** 2)
        return c_jc, c_dr

    def __call__(self, t: float) -> np.ndarray:
        c_jc, c_dr = self.coefficients(t)
        return c_jc * self.jc + c_dr * self.drive


def hamiltonian_at(t: float, p: HamiltonianParams, cfg: FockConfig) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be >= 0")
    return NeuronQubitHamiltonian(p, cfg)(t)


def default_channels(cfg: FockConfig, t1: float | None = 7.4, kappa: float = 0.0,
                     dephasing: float = 0.0) -> list[CollapseChannel]:
    """Qubit decay at 1/T1, optional cavity decay and qubit dephasing."""
    channels = []
    if t1 is not None and math.isfinite(t1):
        channels.append(CollapseChannel(lowering_op(cfg), 1.0 / t1))
    if kappa > 0:
        channels.append(CollapseChannel(annihilation_op(cfg), kappa))
    if dephasing > 0:
        channels.append(CollapseChannel(qubit_op(SIGMA_Z, cfg), dephasing))
    return channels


def _check_square(m: np.ndarray, dim: int, what: str):
    if m.shape[-2:] != (dim, dim):
        raise ShapeError(f"{what} has shape {m.shape[-2:]}, expected ({dim}, {dim})")


def lindblad_rhs(rho: np.ndarray, H: np.ndarray,
                 channels: Sequence[CollapseChannel]) -> np.ndarray:
    """-i[H, rho] + sum_j gamma_j (L rho L^+ - {L^+ L, rho}/2)."""
    rho = np.asarray(rho)
    dim = H.shape[0]
    _check_square(H, dim, "H")
    _check_square(rho, dim, "rho")
    out = -1j * (H @ rho - rho @ H)
    for ch in channels:
        _check_square(ch.operator, dim, "collapse operator")
        L = ch.operator
        Ld = L.conj().T
        LdL = Ld @ L
        out = out + ch.rate * (L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL))
    return out


class _Generator:
    """Lindblad generator split as K rho + rho K^+ + sum J rho J^+."""

    def __init__(self, hamiltonian: Callable[[float], np.ndarray],
                 channels: Sequence[CollapseChannel], dim: int):
        self.hamiltonian = hamiltonian
        self.jumps = []
        G = np.zeros((dim, dim), dtype=complex)
        for ch in channels:
            _check_square(ch.operator, dim, "collapse operator")
            if ch.rate == 0:
                continue
            J = math.sqrt(ch.rate) * ch.operator
            self.jumps.append((J, J.conj().T))
            G += J.conj().T @ J
        self.half_G = 0.5 * G

    def __call__(self, t: float, rho: np.ndarray) -> np.ndarray:
        K = -1j * self.hamiltonian(t) - self.half_G
        out = K @ rho + rho @ K.conj().T
        for J, Jd in self.jumps:
            out = out + J @ rho @ Jd
        return out


def _rk4_step(gen: _Generator, t: float, rho: np.ndarray, dt: float) -> np.ndarray:
    k1 = gen(t, rho)
    k2 = gen(t + 0.5 * dt, rho + 0.5 * dt * k1)
    k3 = gen(t + 0.5 * dt, rho + 0.5 * dt * k2)
    k4 = gen(t + dt, rho + dt * k3)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def as_hamiltonian(hamiltonian: HamiltonianLike, cfg: FockConfig | None):
    if isinstance(hamiltonian, HamiltonianParams):
        if cfg is None:
            raise ValueError("cfg is required with HamiltonianParams")
        return NeuronQubitHamiltonian(hamiltonian, cfg)
    return hamiltonian


def _n_steps(dt: float, t_end: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    return int(round(t_end / dt))


def evolve(rho0: np.ndarray, hamiltonian: HamiltonianLike, channels: Sequence[CollapseChannel],
           dt: float, t_end: float, record_stride: int = 1, *, cfg: FockConfig | None = None,
           t0: float = 0.0) -> Trajectory:
    """Integrate the master equation from ``t0`` to ``t0 + t_end``.

    ``rho0`` may carry leading batch axes; every state is stepped together.
    After each RK4 step the states are Hermitized and renormalized to unit
    trace. States are recorded at step 0 and every ``record_stride`` steps.
    """
    rho = np.array(rho0, dtype=complex)
    dim = rho.shape[-1]
    _check_square(rho, dim, "rho0")
    if cfg is not None and cfg.dim != dim:
        raise ShapeError(f"rho0 dimension {dim} does not match cfg ({cfg.dim})")
    if record_stride < 1:
        raise ValueError("record_stride must be >= 1")
    n_steps = _n_steps(dt, t_end)
    gen = _Generator(as_hamiltonian(hamiltonian, cfg), channels, dim)

    n_rec = n_steps // record_stride + 1
    states = np.empty((n_rec,) + rho.shape, dtype=complex)
    times = t0 + dt * record_stride * np.arange(n_rec)
    corrections = np.zeros(n_steps)
    states[0] = rho
    for step in range(n_steps):
        t = t0 + step * dt
        rho = _rk4_step(gen, t, rho, dt)
        rho = 0.5 * (rho + np.swapaxes(rho, -1, -2).conj())
        tr = np.trace(rho, axis1=-2, axis2=-1).real
        drift = float(np.max(np.abs(tr - 1.0)))
        if not drift <= TRACE_DRIFT_TOL:  # also catches nan from a blow-up
            raise StepSizeError(
                f"trace drift {drift:.3e} at t={t + dt:.6g} exceeds {TRACE_DRIFT_TOL:g}; "
                "reduce dt", t + dt, drift)
        rho = rho / tr[..., None, None]
        corrections[step] = drift
        if (step + 1) % record_stride == 0:
            states[(step + 1) // record_stride] = rho
    if n_steps and log.isEnabledFor(logging.DEBUG):
        log.debug("evolve: %d steps, max renormalization %.3e", n_steps, corrections.max())
    return Trajectory(times=times, states=states, trace_corrections=corrections)


def propagate_operator(op0: np.ndarray, hamiltonian: HamiltonianLike,
                       channels: Sequence[CollapseChannel], dt: float, t_end: float,
                       record_stride: int = 1, *, cfg: FockConfig | None = None,
                       t0: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Apply the same generator to an arbitrary (non-state) operator.

    No Hermitization or renormalization; used for two-time correlations.
    """
    X = np.array(op0, dtype=complex)
    dim = X.shape[-1]
    _check_square(X, dim, "operator")
    n_steps = _n_steps(dt, t_end)
    gen = _Generator(as_hamiltonian(hamiltonian, cfg), channels, dim)
    n_rec = n_steps // record_stride + 1
    out = np.empty((n_rec,) + X.shape, dtype=complex)
    out[0] = X
    for step in range(n_steps):
        X = _rk4_step(gen, t0 + step * dt, X, dt)
        if (step + 1) % record_stride == 0:
            out[(step + 1) // record_stride] = X
    return t0 + dt * record_stride * np.arange(n_rec), out


def partial_trace_to_qubit(rho: np.ndarray, cfg: FockConfig) -> np.ndarray:
    rho = np.asarray(rho)
    if rho.shape[-2:] != (cfg.dim, cfg.dim):
        raise ShapeError(f"rho has shape {rho.shape[-2:]}, expected ({cfg.dim}, {cfg.dim})")
    n = cfg.n_levels
    r = rho.reshape(rho.shape[:-2] + (2, n, 2, n))
    return np.einsum("...ajbj->...ab", r)


def partial_trace_to_fock(rho: np.ndarray, cfg: FockConfig) -> np.ndarray:
    n = cfg.n_levels
    r = np.asarray(rho).reshape(rho.shape[:-2] + (2, n, 2, n))
    return np.einsum("...ajak->...jk", r)


def bloch_vector(rho_q: np.ndarray) -> tuple[float, float, float]:
    """(tr rho sx, tr rho sy, tr rho sz) in the (g, e) basis; |e> sits at z = -1."""
    rho_q = np.asarray(rho_q)
    if rho_q.shape != (2, 2):
        raise ShapeError("bloch_vector needs a 2x2 matrix")
    x = 2.0 * rho_q[0, 1].real
    y = -2.0 * rho_q[0, 1].imag
    z = (rho_q[0, 0] - rho_q[1, 1]).real
    return float(x), float(y), float(z)


def bloch_vectors(rho_q: np.ndarray) -> np.ndarray:
    """Vectorized :func:`bloch_vector` over leading axes."""
    rho_q = np.asarray(rho_q)
    return np.stack([2.0 * rho_q[..., 0, 1].real, -2.0 * rho_q[..., 0, 1].imag,
                     (rho_q[..., 0, 0] - rho_q[..., 1, 1]).real], axis=-1)


def bloch_state(vec: Sequence[float]) -> np.ndarray:
    x, y, z = vec
    return 0.5 * (np.eye(2) + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


def density_matrix_violations(rho: np.ndarray, herm_tol: float = 1e-10, trace_tol: float = 1e-9,
                              eig_tol: float = 1e-9) -> list[str]:
    """Empty list when ``rho`` is Hermitian, unit-trace and PSD within tolerance."""
    rho = np.asarray(rho)
    problems = []
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        return ["not a square matrix"]
    if not np.all(np.isfinite(rho)):
        return ["non-finite entries"]
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    if herm > herm_tol:
        problems.append(f"hermiticity residual {herm:.3e}")
    tr = complex(np.trace(rho))
    if abs(tr - 1.0) > trace_tol:
        problems.append(f"trace {tr:.12g}")
    lam = float(np.min(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))))
    if lam < -eig_tol:
        problems.append(f"min eigenvalue {lam:.3e}")
    return problems


def is_density_matrix(rho: np.ndarray, **tol) -> bool:
    return not density_matrix_violations(rho, **tol)
