"""
Coupled memristive burst-spiking neuron pair.

Each neuron is a second-order RC ladder whose damping and stiffness depend on
two memristors. Solving the two circuit equations for the second derivative
gives, for neuron 1 (neuron 2 is identical with C5, C6, R5, R6, R_Mem3,
R_Mem4 and K2)::

    v1'' = -a1 * v1' - b1 * v1 - K1 * v2

    a1 = (R_M2/R3 + C1/C2 + R_M2' * C1 + R_M1/R4) / (R_M2 * C1)
    b1 = (1/(R3*C2) + R_M2'/R3) / (R_M2 * C1)

The memristors relax towards ``r_on`` above ``v_set`` and towards ``r_off``
below ``v_reset``, holding their value in between. R_Mem1 and R_Mem2 are
driven by v1, R_Mem3 and R_Mem4 by v2.

Values are in normalized circuit units (time in ms); SI names are labels only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import (
    EmptyInputError,
    InsufficientDataError,
    IntegrationFault,
    SingularCoefficientError,
)

# memristor index -> neuron whose voltage drives it
CONTROL_NEURON = (0, 0, 1, 1)

# bisection tolerance for locating a memristor branch switch, relative to dt
_EVENT_TOL = 1e-13
_EVENT_MAX_ITER = 60
# switch events resolved per grid step before the remainder is taken whole
_MAX_EVENTS_PER_STEP = 32


@dataclass(frozen=True)
class MemristanceLaw:
    r_on: float
    r_off: float
    v_set: float
    v_reset: float
    tau_switch: float

    def __post_init__(self):
        if not self.r_on > 0:
            raise ValueError("r_on must be > 0")
        if not self.r_off > self.r_on:
            raise ValueError("r_off must be > r_on")
        if not self.v_set > self.v_reset:
            raise ValueError("v_set must be > v_reset")
        if not self.tau_switch > 0:
            raise ValueError("tau_switch must be > 0")

    def branch(self, v: float) -> int:
        """+1 while setting, -1 while resetting, 0 in the dead band."""
        if v >= self.v_set:
            return 1
        if v <= self.v_reset:
            return -1
        return 0

    def target(self, branch: int, r: float) -> float:
        if branch > 0:
            return self.r_on
        if branch < 0:
            return self.r_off
        return r


@dataclass(frozen=True)
class NeuronCircuitParams:
    c1: float
    c2: float
    c5: float
    c6: float
    r3: float
    r4: float
    r5: float
    r6: float
    k1_coupled: float
    k2_coupled: float
    mem_laws: tuple[MemristanceLaw, MemristanceLaw, MemristanceLaw, MemristanceLaw]

    def __post_init__(self):
        for name in ("c1", "c2", "c5", "c6", "r3", "r4", "r5", "r6"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("k1_coupled", "k2_coupled"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if len(self.mem_laws) != 4:
            raise ValueError("mem_laws needs exactly four entries")
        object.__setattr__(self, "mem_laws", tuple(self.mem_laws))

    @property
    def decoupled(self) -> bool:
        return self.k1_coupled == 0.0 and self.k2_coupled == 0.0


@dataclass(frozen=True)
class NeuronNetworkState:
    t: float
    v1: float
    v2: float
    dv1: float
    dv2: float
    r_mem: tuple[float, float, float, float]

    def as_vector(self) -> list[float]:
        return [self.v1, self.dv1, self.v2, self.dv2, *self.r_mem]

    @classmethod
    def from_vector(cls, t: float, y: Sequence[float]) -> "NeuronNetworkState":
        return cls(t=t, v1=y[0], dv1=y[1], v2=y[2], dv2=y[3], r_mem=tuple(y[4:8]))

    def voltage(self, neuron: int) -> float:
        return self.v1 if neuron == 0 else self.v2


@dataclass(frozen=True)
class SpikeTrain:
    """Uniformly sampled voltage trace plus the spikes extracted from it."""

    t: np.ndarray
    v: np.ndarray
    spikes: tuple[tuple[float, float], ...] = field(default=())
    threshold: float | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("t and v must be 1-D arrays of equal length")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    def __len__(self) -> int:
        return self.t.size


def memristance_rate(v: float, r: float, law: MemristanceLaw) -> float:
    """dR/dt of the relaxation law at control voltage ``v``."""
    return _rate(law.branch(v), r, law)


def _rate(branch: int, r: float, law: MemristanceLaw) -> float:
    if branch == 0:
        return 0.0
    return (law.target(branch, r) - r) / law.tau_switch


def memristance_step(state: NeuronNetworkState, law: MemristanceLaw, index: int,
                     dt: float) -> tuple[float, float]:
    """Advance memristor ``index`` by ``dt`` with the control voltage held fixed.

    Returns the new resistance (exact exponential relaxation, clamped to
    ``[r_on, r_off]``) and dR/dt at the current state.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    v = state.voltage(CONTROL_NEURON[index])
    if not math.isfinite(v):
        raise IntegrationFault("non-finite control voltage", state.t)
    r = state.r_mem[index]
    branch = law.branch(v)
    rate = _rate(branch, r, law)
    if branch == 0:
        return r, 0.0
    target = law.target(branch, r)
    r_new = target + (r - target) * math.exp(-dt / law.tau_switch)
    return min(max(r_new, law.r_on), law.r_off), rate


def _branches(y: Sequence[float], laws) -> tuple[int, int, int, int]:
    return (laws[0].branch(y[0]), laws[1].branch(y[0]),
            laws[2].branch(y[2]), laws[3].branch(y[2]))


def _rhs(y: Sequence[float], p: NeuronCircuitParams, br) -> list[float]:
    v1, d1, v2, d2, m1, m2, m3, m4 = y
    laws = p.mem_laws
    q1 = _rate(br[0], m1, laws[0])
    q2 = _rate(br[1], m2, laws[1])
    q3 = _rate(br[2], m3, laws[2])
    q4 = _rate(br[3], m4, laws[3])
    rc1 = m2 * p.c1
    rc2 = m4 * p.c5
    if not (rc1 > 0 and rc2 > 0):
        raise SingularCoefficientError("R_Mem*C product must be > 0")
    a1 = (m2 / p.r3 + p.c1 / p.c2 + q2 * p.c1 + m1 / p.r4) / rc1
    b1 = (1.0 / (p.r3 * p.c2) + q2 / p.r3) / rc1
    a2 = (m4 / p.r5 + p.c5 / p.c6 + q4 * p.c5 + m3 / p.r6) / rc2
    b2 = (1.0 / (p.r5 * p.c6) + q4 / p.r5) / rc2
    return [d1, -a1 * d1 - b1 * v1 - p.k1_coupled * v2,
            d2, -a2 * d2 - b2 * v2 - p.k2_coupled * v1,
            q1, q2, q3, q4]


def ode_rhs(state: NeuronNetworkState, params: NeuronCircuitParams) -> tuple[float, ...]:
    """First-order right-hand side ``(dv1, ddv1, dv2, ddv2, dR1..dR4)``."""
    y = state.as_vector()
    return tuple(_rhs(y, params, _branches(y, params.mem_laws)))


def _rk4(y, p, br, h, active):
    k1 = _rhs(y, p, br)
    y2 = [y[i] + 0.5 * h * k1[i] if active[i] else y[i] for i in range(8)]
    k2 = _rhs(y2, p, br)
    y3 = [y[i] + 0.5 * h * k2[i] if active[i] else y[i] for i in range(8)]
    k3 = _rhs(y3, p, br)
    y4 = [y[i] + h * k3[i] if active[i] else y[i] for i in range(8)]
    k4 = _rhs(y4, p, br)
    return [y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) if active[i] else y[i]
            for i in range(8)]


def _clamp(y, laws):
    for j, law in enumerate(laws):
        r = y[4 + j]
        if r < law.r_on:
            y[4 + j] = law.r_on
        elif r > law.r_off:
            y[4 + j] = law.r_off
    return y


def _masked(br, neurons):
    return tuple(b if CONTROL_NEURON[j] in neurons else 0 for j, b in enumerate(br))


def _integrate_block(p: NeuronCircuitParams, y0: list[float], dt: float, n_steps: int,
                     neurons: tuple[int, ...]) -> np.ndarray:
    """RK4 on the neurons in ``neurons``; the others are frozen.

    Steps lie on a fixed grid. A step during which any memristor changes
    branch is split at the switching instant (bisection), so each RK4
    sub-step integrates a smooth vector field.
    """
    idx = set()
    for n in neurons:
        idx |= {0, 1, 4, 5} if n == 0 else {2, 3, 6, 7}
    active = [i in idx for i in range(8)]
    laws = p.mem_laws
    out = np.empty((n_steps + 1, 8))
    y = list(y0)
    out[0] = y
    for step in range(n_steps):
        remaining = dt
        events = 0
        while remaining > 0.0:
            br = _masked(_branches(y, laws), neurons)
            trial = _rk4(y, p, br, remaining, active)
            if events >= _MAX_EVENTS_PER_STEP or _masked(_branches(trial, laws), neurons) == br:
                y = trial
                break
            events += 1
            lo, hi = 0.0, remaining
            for _ in range(_EVENT_MAX_ITER):
                mid = 0.5 * (lo + hi)
                if _masked(_branches(_rk4(y, p, br, mid, active), laws), neurons) == br:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= _EVENT_TOL * dt:
                    break
            y = _clamp(_rk4(y, p, br, hi, active), laws)
            remaining -= hi
            if remaining <= _EVENT_TOL * dt:
                break
        y = _clamp(y, laws)
        if not all(math.isfinite(x) for x in y):
            raise IntegrationFault("non-finite circuit state", (step + 1) * dt)
        out[step + 1] = y
    return out


def integrate_circuit(params: NeuronCircuitParams, initial: NeuronNetworkState,
                      dt: float, t_end: float) -> tuple[np.ndarray, np.ndarray]:
    """Full state history; returns ``(t, Y)`` with ``Y[:, :]`` ordered as
    ``v1, dv1, v2, dv2, R1, R2, R3, R4``.

    A decoupled pair (both couplings zero) is integrated one neuron at a time,
    so each trace is bit-identical to the corresponding single-neuron run.
    """
    if not dt > 0:
        raise ValueError("dt must be > 0")
    if not t_end >= dt:
        raise ValueError("t_end must be >= dt")
    n_steps = int(round(t_end / dt))
    y0 = initial.as_vector()
    if not all(math.isfinite(x) for x in y0):
        raise IntegrationFault("non-finite initial state", initial.t)
    for j, law in enumerate(params.mem_laws):
        if not law.r_on <= y0[4 + j] <= law.r_off:
            raise ValueError(f"r_mem[{j}] outside [r_on, r_off]")
    if params.decoupled:
        first = _integrate_block(params, y0, dt, n_steps, (0,))
        second = _integrate_block(params, y0, dt, n_steps, (1,))
        Y = first
        Y[:, [2, 3, 6, 7]] = second[:, [2, 3, 6, 7]]
    else:
        Y = _integrate_block(params, y0, dt, n_steps, (0, 1))
    t = initial.t + dt * np.arange(n_steps + 1)
    return t, Y


def simulate(params: NeuronCircuitParams, initial: NeuronNetworkState, dt: float,
             t_end: float) -> tuple[SpikeTrain, SpikeTrain]:
    """Integrate the pair and return one voltage trace per neuron."""
    t, Y = integrate_circuit(params, initial, dt, t_end)
    return SpikeTrain(t, Y[:, 0].copy()), SpikeTrain(t, Y[:, 2].copy())


def count_spikes(train: SpikeTrain, threshold: float) -> tuple[int, list[tuple[float, float]]]:
    """Count maximal runs of samples at or above ``threshold``.

    Each run is reported once, at its (first) maximum.
    """
    if len(train) == 0:
        raise EmptyInputError("empty spike train")
    v = train.v
    above = v >= threshold
    if not above.any():
        return 0, []
    edges = np.diff(above.astype(np.int8))
    starts = list(np.flatnonzero(edges == 1) + 1)
    stops = list(np.flatnonzero(edges == -1) + 1)
    if above[0]:
        starts.insert(0, 0)
    if above[-1]:
        stops.append(v.size)
    spikes = []
    for a, b in zip(starts, stops):
        i = a + int(np.argmax(v[a:b]))
        spikes.append((float(train.t[i]), float(v[i])))
    return len(spikes), spikes


def with_spikes(train: SpikeTrain, threshold: float) -> SpikeTrain:
    _, spikes = count_spikes(train, threshold)
    return replace(train, spikes=tuple(spikes), threshold=threshold)


def phase_portrait(train: SpikeTrain) -> tuple[np.ndarray, np.ndarray]:
    """Second-order finite-difference (dv/dt, d2v/dt2) along the trace."""
    v = train.v
    n = v.size
    if n < 5:
        raise InsufficientDataError("phase portrait needs at least 5 samples")
    h = train.dt
    d1 = np.empty(n)
    d2 = np.empty(n)
    d1[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    d1[0] = (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * h)
    d1[-1] = (3.0 * v[-1] - 4.0 * v[-2] + v[-3]) / (2.0 * h)
    d2[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / (h * h)
    d2[0] = (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3]) / (h * h)
    d2[-1] = (2.0 * v[-1] - 5.0 * v[-2] + 4.0 * v[-3] - v[-4]) / (h * h)
    return d1, d2
