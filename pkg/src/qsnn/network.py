"""Two coupled qubit-neurons: exchange Hamiltonian, concurrence, g1 and mixing."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigValidationError, ShapeError, UndefinedNormalizationError
from .quantum import (
    SIGMA_GE,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    CollapseChannel,
    FockConfig,
    HamiltonianLike,
    annihilation_op,
    lowering_op,
    partial_trace_to_qubit,
    propagate_operator,
)

_I2 = np.eye(2, dtype=complex)
_YY = np.kron(SIGMA_Y, SIGMA_Y)


@dataclass(frozen=True)
class CouplingEntry:
    t_start: float
    t_end: float
    j_exchange: float
    drive_pair: tuple[float, float] = (0.0, 0.0)
    theta_pair: tuple[float, float] = (math.pi, math.pi)

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("coupling interval must have t_end > t_start")
        if not self.j_exchange >= 0 or not all(a >= 0 for a in self.drive_pair):
            raise ValueError("coupling and drive rates must be >= 0")
        object.__setattr__(self, "drive_pair", tuple(float(a) for a in self.drive_pair))
        object.__setattr__(self, "theta_pair", tuple(float(th) for th in self.theta_pair))


@dataclass(frozen=True)
class TwoQubitCouplingSchedule:
    """Piecewise-constant exchange/drive settings.

    ``g`` is the qubit-cavity coupling used only when each site carries a
    cavity mode; it is scaled by sin(theta_i / 2) like the single-site model.
    """

    entries: tuple[CouplingEntry, ...]
    tau_e: float = 1.0
    g: float = 0.0

    def __post_init__(self):
        entries = tuple(self.entries)
        for prev, cur in zip(entries, entries[1:]):
            if cur.t_start < prev.t_end:
                raise ValueError("coupling intervals must be sorted and non-overlapping")
        if not self.tau_e > 0:
            raise ValueError("tau_e must be > 0")
        if not self.g >= 0:
            raise ValueError("g must be >= 0")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "_starts", [e.t_start for e in entries])

    def active(self, t: float) -> CouplingEntry | None:
        i = bisect.bisect_right(self._starts, t) - 1
        if i < 0:
            return None
        e = self.entries[i]
        return e if e.t_start <= t < e.t_end else None

    @classmethod
    def constant(cls, j_exchange: float, drive_pair=(0.0, 0.0), theta_pair=(math.pi, math.pi),
                 tau_e: float = 1.0, g: float = 0.0) -> "TwoQubitCouplingSchedule":
        return cls((CouplingEntry(0.0, math.inf, j_exchange, drive_pair, theta_pair),), tau_e, g)


class CoupledHamiltonian:
    """Callable H(t) for two sites, each a bare qubit or qubit (x) cavity."""

    def __init__(self, sched: TwoQubitCouplingSchedule, cfg: FockConfig | None = None):
        self.sched = sched
        self.cfg = cfg
        if cfg is None:
            s_local, a_local = SIGMA_GE, None
        else:
            s_local, a_local = lowering_op(cfg), annihilation_op(cfg)
        eye = np.eye(s_local.shape[0], dtype=complex)
        self.sigma = (np.kron(s_local, eye), np.kron(eye, s_local))
        s1, s2 = self.sigma
        self.exchange = s1.conj().T @ s2 + s1 @ s2.conj().T
        self.drives = tuple(s.conj().T + s for s in self.sigma)
        if a_local is not None:
            a = (np.kron(a_local, eye), np.kron(eye, a_local))
            self.jc = tuple(s.conj().T @ ai + ai.conj().T @ s for s, ai in zip(self.sigma, a))
        else:
            self.jc = None
        self.dim = self.exchange.shape[0]

    def __call__(self, t: float) -> np.ndarray:
        e = self.sched.active(t)
        H = np.zeros((self.dim, self.dim), dtype=complex)
        if e is None:
            return H
        H -= e.j_exchange * self.exchange
        ramp = math.sin((t / self.sched.tau_e) ** 2)
        for i in range(2):
            th = e.theta_pair[i]
            H -= e.drive_pair[i] * math.cos(th / 2.0) * ramp * self.drives[i]
            if self.jc is not None:
                H -= self.sched.g * math.sin(th / 2.0) * self.jc[i]
        return H

    def excitation_number(self) -> np.ndarray:
        """Total qubit excitations (plus photons when cavities are present)."""
        N = sum(s.conj().T @ s for s in self.sigma)
        if self.cfg is not None:
            eye = np.eye(self.cfg.dim, dtype=complex)
            a = annihilation_op(self.cfg)
            n_loc = a.conj().T @ a
            N = N + np.kron(n_loc, eye) + np.kron(eye, n_loc)
        return N


def coupled_hamiltonian(t: float, sched: TwoQubitCouplingSchedule,
                        cfg: FockConfig | None = None) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be >= 0")
    return CoupledHamiltonian(sched, cfg)(t)


def site_operator(op2: np.ndarray, site: int) -> np.ndarray:
    """Embed a single-qubit operator on site 0 or 1 of the bare two-qubit space."""
    return np.kron(op2, _I2) if site == 0 else np.kron(_I2, op2)


def two_qubit_channels(t1: float | None = None, dephasing: float = 0.0,
                       depolarizing: float = 0.0) -> list[CollapseChannel]:
    """Identical local channels on both bare qubits.

    Depolarizing at rate p uses Pauli jumps X, Y, Z each at p / 4.
    """
    out = []
    for site in (0, 1):
        if t1 is not None and math.isfinite(t1):
            out.append(CollapseChannel(site_operator(SIGMA_GE, site), 1.0 / t1))
        if dephasing > 0:
            out.append(CollapseChannel(site_operator(SIGMA_Z, site), dephasing))
        if depolarizing > 0:
            for pauli in (SIGMA_X, SIGMA_Y, SIGMA_Z):
                out.append(CollapseChannel(site_operator(pauli, site), depolarizing / 4.0))
    return out


def reduce_site(rho: np.ndarray, site: int, site_dim: int = 2) -> np.ndarray:
    """Trace out the other site of a two-site state (batched over leading axes)."""
    rho = np.asarray(rho)
    if rho.shape[-1] != site_dim * site_dim or rho.shape[-2] != rho.shape[-1]:
        raise ShapeError(f"expected a {site_dim ** 2}x{site_dim ** 2} two-site state")
    r = rho.reshape(rho.shape[:-2] + (site_dim, site_dim, site_dim, site_dim))
    if site == 0:
        return np.einsum("...ajbj->...ab", r)
    return np.einsum("...jajb->...ab", r)


def reduce_site_qubit(rho: np.ndarray, site: int, cfg: FockConfig | None = None) -> np.ndarray:
    """Qubit state of one site, tracing out the partner and (if present) the cavity."""
    if cfg is None:
        return reduce_site(rho, site, 2)
    return partial_trace_to_qubit(reduce_site(rho, site, cfg.dim), cfg)


def concurrence(rho: np.ndarray) -> float:
    """Wootters concurrence of a two-qubit density matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise ShapeError(f"concurrence needs a 4x4 matrix, got {rho.shape}")
    R = rho @ _YY @ rho.conj() @ _YY
    ev = np.sort(np.sqrt(np.clip(np.linalg.eigvals(R).real, 0.0, None)))[::-1]
    return float(max(0.0, ev[0] - ev[1] - ev[2] - ev[3]))


@dataclass
class G1Series:
    tau: np.ndarray
    raw: np.ndarray  # complex <sigma^+(t + tau) sigma(t)>
    normalized: np.ndarray  # |raw| / |raw[0]|

    def sustained(self) -> float:
        """Mean normalized magnitude over the tau grid."""
        return float(np.mean(self.normalized))


def g1_correlation(hamiltonian: HamiltonianLike, channels: Sequence[CollapseChannel],
                   rho_t: np.ndarray, tau_grid: np.ndarray, *, cfg: FockConfig | None = None,
                   t: float = 0.0, dt: float | None = None,
                   sigma: np.ndarray | None = None) -> G1Series:
    """First-order coherence by the quantum regression procedure.

    Lambda(0) = sigma rho(t) is propagated with the master-equation generator
    from time ``t``; the correlation is tr(sigma^+ Lambda(tau)). ``dt`` is the
    integration step (defaults to the tau spacing, which must be a multiple of it).
    """
    tau = np.asarray(tau_grid, dtype=float)
    if tau.ndim != 1 or tau.size < 1 or tau[0] != 0.0:
        raise ValueError("tau grid must be 1-D and start at 0")
    if tau.size > 1:
        step = tau[1] - tau[0]
        if not step > 0 or not np.allclose(np.diff(tau), step, rtol=1e-9, atol=0.0):
            raise ValueError("tau grid must be uniform and increasing")
    else:
        step = dt or 1.0
    dt = step if dt is None else dt
    stride = int(round(step / dt))
    if stride < 1 or abs(step / dt - stride) > 1e-9 * max(1.0, stride):
        raise ValueError("tau spacing must be an integer multiple of dt")
    if sigma is None:
        sigma = lowering_op(cfg) if cfg is not None else SIGMA_GE
    rho_t = np.asarray(rho_t, dtype=complex)
    _, lam = propagate_operator(sigma @ rho_t, hamiltonian, channels, dt,
                                (tau.size - 1) * step, stride, cfg=cfg, t0=t)
    raw = np.einsum("ij,...ji->...", sigma.conj().T, lam)
    norm0 = abs(raw[0])
    if not norm0 > 1e-14:
        raise UndefinedNormalizationError(
            "g1 is undefined: <sigma^+ sigma> vanishes at tau = 0", raw=raw)
    return G1Series(tau=tau, raw=raw, normalized=np.abs(raw) / norm0)


@dataclass(frozen=True)
class MixtureWeights:
    w: tuple[float, float, float] = field(default=(1.0 / 3.0, 1.0 / 2.0, 1.0 / 6.0))

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        if len(w) != 3:
            raise ConfigValidationError("mixture.weights must have exactly 3 entries",
                                        "mixture.weights")
        if any(not x >= 0 for x in w):
            raise ConfigValidationError("mixture.weights must be >= 0", "mixture.weights")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise ConfigValidationError("mixture.weights must sum to 1", "mixture.weights")
        object.__setattr__(self, "w", w)


def mix_density_matrices(rhos: Sequence[np.ndarray], w: MixtureWeights = MixtureWeights()) -> np.ndarray:
    if len(rhos) != 3:
        raise ShapeError("exactly three 2x2 states are mixed")
    arrs = [np.asarray(r, dtype=complex) for r in rhos]
    for r in arrs:
        if r.shape != (2, 2):
            raise ShapeError(f"mixed states must be 2x2, got {r.shape}")
    return w.w[0] * arrs[0] + w.w[1] * arrs[1] + w.w[2] * arrs[2]
