"""
Dynamical maps, transfer tensors and the trace-distance (BLP) measure.

Superoperators act on row-major vectorized matrices: ``vec(rho) = rho.reshape(-1)``,
so column ``i * d + j`` of a map is the image of the matrix unit ``|i><j|``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientHistoryError, ShapeError
from .quantum import (
    CollapseChannel,
    FockConfig,
    HamiltonianLike,
    bloch_state,
    evolve,
    partial_trace_to_qubit,
    vacuum,
)

log = logging.getLogger(__name__)

# increments of D(t) at or below this are treated as numerical noise
BLP_TOL = 1e-9


@dataclass(frozen=True)
class DynamicalMapSeries:
    dt_map: float
    maps: np.ndarray  # (K + 1, d*d, d*d); maps[0] is the identity

    @property
    def dim(self) -> int:
        return int(round(math.sqrt(self.maps.shape[-1])))

    @property
    def K(self) -> int:
        return self.maps.shape[0] - 1

    def apply(self, n: int, rho: np.ndarray) -> np.ndarray:
        d = self.dim
        return (self.maps[n] @ np.asarray(rho).reshape(-1)).reshape(d, d)


@dataclass(frozen=True)
class TransferTensorSeries:
    dt_map: float
    tensors: np.ndarray  # (K, d*d, d*d); tensors[m - 1] is T_m

    def __post_init__(self):
        if self.tensors.ndim != 3 or self.tensors.shape[0] < 1:
            raise ShapeError("need at least one transfer tensor")

    @property
    def dim(self) -> int:
        return int(round(math.sqrt(self.tensors.shape[-1])))

    @property
    def K(self) -> int:
        return self.tensors.shape[0]

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.tensors, axis=(1, 2))


@dataclass
class NonMarkovianityReport:
    level: float
    revival_intervals: list[tuple[float, float]]
    pair_used: str
    times: np.ndarray = field(default=None, repr=False)
    distance: np.ndarray = field(default=None, repr=False)

    def to_json(self) -> dict:
        return {"level": self.level,
                "revival_intervals": [[a, b] for a, b in self.revival_intervals],
                "pair_used": self.pair_used}


def tomography_states(d: int) -> list[np.ndarray]:
    """d*d pure states spanning all d x d matrices.

    Order: |i><i| for each i, then for each i < j the projectors onto
    (|i> + |j>)/sqrt2 and (|i> + i|j>)/sqrt2.
    """
    states = []
    for i in range(d):
        p = np.zeros((d, d), dtype=complex)
        p[i, i] = 1.0
        states.append(p)
    for i in range(d):
        for j in range(i + 1, d):
            for phase in (1.0, 1j):
                v = np.zeros(d, dtype=complex)
                v[i] = 1.0
                v[j] = phase
                states.append(0.5 * np.outer(v, v.conj()))
    return states


def _assemble_map(images: np.ndarray, d: int) -> np.ndarray:
    """Superoperator from the images of :func:`tomography_states`."""
    E = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        E[:, i * d + i] = images[i].reshape(-1)
    k = d
    for i in range(d):
        for j in range(i + 1, d):
            plus, plus_i = images[k], images[k + 1]
            k += 2
            x = 2.0 * plus - images[i] - images[j]
            y = 2.0 * plus_i - images[i] - images[j]
            E[:, i * d + j] = (0.5 * (x + 1j * y)).reshape(-1)
            E[:, j * d + i] = (0.5 * (x - 1j * y)).reshape(-1)
    return E


def learn_maps(p: HamiltonianLike, channels: Sequence[CollapseChannel], cfg: FockConfig | None,
               dt: float, dt_map: float, K: int, *, environment: np.ndarray | None = None,
               reduce: Callable[[np.ndarray], np.ndarray] | None = None,
               t0: float = 0.0) -> DynamicalMapSeries:
    """Learn E_0..E_K on the grid ``t_n = t0 + n * dt_map``.

    Without ``environment`` the maps act on the full space. With
    ``environment`` (a Fock-space density matrix, e.g. the vacuum) they act on
    the qubit: E_n[rho_q] = tr_fock(evolve(rho_q (x) environment)).
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    ratio = dt_map / dt
    stride = int(round(ratio))
    if stride < 1 or abs(ratio - stride) > 1e-9 * max(1.0, ratio):
        raise ValueError("dt_map must be an integer multiple of dt")
    if environment is not None:
        d = 2
        if reduce is None:
            reduce = lambda rho: partial_trace_to_qubit(rho, cfg)  # noqa: E731
        inputs = np.array([np.kron(s, environment) for s in tomography_states(d)])
    else:
        d = cfg.dim if cfg is not None else None
        if d is None:
            raise ValueError("cfg is required for full-space maps")
        inputs = np.array(tomography_states(d))
    traj = evolve(inputs, p, channels, dt, K * dt_map, stride, cfg=cfg, t0=t0)
    maps = np.empty((K + 1, d * d, d * d), dtype=complex)
    maps[0] = np.eye(d * d)
    for n in range(1, K + 1):
        out = traj.states[n]
        if reduce is not None:
            out = reduce(out)
        maps[n] = _assemble_map(out, d)
    return DynamicalMapSeries(dt_map=dt_map, maps=maps)


def compute_transfer_tensors(maps: DynamicalMapSeries) -> TransferTensorSeries:
    """T_1 = E_1, T_n = E_n - sum_{m<n} T_m E_{n-m}."""
    E = maps.maps
    if E.shape[0] < 2:
        raise ValueError("need E_0 and at least one further map")
    K = E.shape[0] - 1
    T = np.zeros((K,) + E.shape[1:], dtype=complex)
    for n in range(1, K + 1):
        acc = E[n].copy()
        for m in range(1, n):
            acc -= T[m - 1] @ E[n - m]
        T[n - 1] = acc
    return TransferTensorSeries(dt_map=maps.dt_map, tensors=T)


def reconstruct_maps(tensors: TransferTensorSeries) -> np.ndarray:
    """Replay the recursion forward: E_n = sum_{m=1}^{n} T_m E_{n-m}."""
    T = tensors.tensors
    K = T.shape[0]
    E = np.zeros((K + 1,) + T.shape[1:], dtype=complex)
    E[0] = np.eye(T.shape[1])
    for n in range(1, K + 1):
        for m in range(1, n + 1):
            E[n] += T[m - 1] @ E[n - m]
    return E


def ttm_propagate(tensors: TransferTensorSeries, history: Sequence[np.ndarray],
                  steps: int) -> np.ndarray:
    """Extend ``history`` (rho at t_0, t_1, ...) by ``steps`` TTM steps.

    Returns the full trajectory, history included. Every new state is
    Hermitized and renormalized to unit trace.
    """
    K = tensors.K
    d = tensors.dim
    hist = [np.asarray(h, dtype=complex) for h in history]
    if len(hist) < K:
        raise InsufficientHistoryError(f"history has {len(hist)} states, memory depth is {K}")
    for h in hist:
        if h.shape != (d, d):
            raise ShapeError(f"history state has shape {h.shape}, expected ({d}, {d})")
    vecs = [h.reshape(-1) for h in hist]
    worst = 0.0
    for _ in range(steps):
        n = len(vecs)
        acc = np.zeros(d * d, dtype=complex)
        for m in range(1, K + 1):
            acc += tensors.tensors[m - 1] @ vecs[n - m]
        rho = acc.reshape(d, d)
        rho = 0.5 * (rho + rho.conj().T)
        tr = float(np.trace(rho).real)
        worst = max(worst, abs(tr - 1.0))
        vecs.append((rho / tr).reshape(-1))
    if steps:
        log.debug("ttm_propagate: %d steps, max trace correction %.3e", steps, worst)
    return np.array([v.reshape(d, d) for v in vecs])


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeError("trace_distance needs two matrices of equal shape")
    return float(0.5 * np.sum(np.linalg.svd(a - b, compute_uv=False)))


def trace_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """:func:`trace_distance` over matching leading axes."""
    return 0.5 * np.sum(np.linalg.svd(np.asarray(a) - np.asarray(b), compute_uv=False), axis=-1)


_AXES = {
    "x": (1.0, 0.0, 0.0),
    "y": (0.0, 1.0, 0.0),
    "z": (0.0, 0.0, 1.0),
    "xy": (1 / math.sqrt(2), 1 / math.sqrt(2), 0.0),
    "xz": (1 / math.sqrt(2), 0.0, 1 / math.sqrt(2)),
    "yz": (0.0, 1 / math.sqrt(2), 1 / math.sqrt(2)),
}

PAIR_SETS = {
    "default6": ("x", "y", "z", "xy", "xz", "yz"),
    "axes3": ("x", "y", "z"),
}


def antipodal_pairs(pair_set: str = "default6") -> list[tuple[str, np.ndarray, np.ndarray]]:
    """Named pure qubit state pairs at opposite points of the Bloch sphere."""
    try:
        axes = PAIR_SETS[pair_set]
    except KeyError:
        raise ValueError(f"unknown pair set {pair_set!r}; choose from {sorted(PAIR_SETS)}") from None
    out = []
    for name in axes:
        r = np.array(_AXES[name])
        out.append((f"+{name}/-{name}", bloch_state(r), bloch_state(-r)))
    return out


def revival_intervals(times: np.ndarray, distance: np.ndarray,
                      tol: float = BLP_TOL) -> list[tuple[float, float]]:
    inc = np.diff(distance) > tol
    intervals = []
    i = 0
    while i < inc.size:
        if inc[i]:
            j = i
            while j + 1 < inc.size and inc[j + 1]:
                j += 1
            intervals.append((float(times[i]), float(times[j + 1])))
            i = j + 1
        else:
            i += 1
    return intervals


def blp_level(distance: np.ndarray, tol: float = BLP_TOL) -> float:
    inc = np.diff(distance)
    return float(np.sum(inc[inc > tol]))


def blp_measure(p: HamiltonianLike, channels: Sequence[CollapseChannel], cfg: FockConfig | None,
                pair_set, dt: float, t_end: float, record_stride: int = 1, *,
                environment: np.ndarray | None = None,
                reduce: Callable[[np.ndarray], np.ndarray] | None = None) -> NonMarkovianityReport:
    """Sum of trace-distance increases, maximized over a fixed set of pairs.

    ``pair_set`` is a pair-set name (see :data:`PAIR_SETS`) or a list of
    ``(label, rho_a, rho_b)``. With ``cfg`` set and 2 x 2 pair states, each state is
    embedded as ``rho (x) environment`` (vacuum by default) and the
    distance is taken between reduced qubit states; otherwise pair states
    are full-space and ``reduce`` (if given) maps them to the observed system.
    """
    pairs = antipodal_pairs(pair_set) if isinstance(pair_set, str) else list(pair_set)
    if not pairs:
        raise ValueError("pair_set must not be empty")
    states = []
    for _, a, b in pairs:
        states.extend([a, b])
    states = np.array(states, dtype=complex)
    if cfg is not None and states.shape[-1] == 2 and cfg.dim != 2:
        env = vacuum(cfg) if environment is None else environment
        states = np.array([np.kron(s, env) for s in states])
        if reduce is None:
            reduce = lambda rho: partial_trace_to_qubit(rho, cfg)  # noqa: E731
    traj = evolve(states, p, channels, dt, t_end, record_stride, cfg=cfg)
    obs = traj.states if reduce is None else reduce(traj.states)
    best = None
    for k, (label, _, _) in enumerate(pairs):
        D = trace_distances(obs[:, 2 * k], obs[:, 2 * k + 1])
        level = blp_level(D)
        if best is None or level > best[0]:
            best = (level, label, D)
    level, label, D = best
    return NonMarkovianityReport(level=level, revival_intervals=revival_intervals(traj.times, D),
                                 pair_used=label, times=traj.times, distance=D)


def save_series(series: DynamicalMapSeries | TransferTensorSeries, path: str | Path) -> tuple[Path, Path]:
    """Write ``<path>.bin`` (little-endian complex128, C order) and ``<path>.json``."""
    path = Path(path)
    data = series.maps if isinstance(series, DynamicalMapSeries) else series.tensors
    kind = "maps" if isinstance(series, DynamicalMapSeries) else "transfer_tensors"
    bin_path = path.with_suffix(".bin")
    json_path = path.with_suffix(".json")
    bin_path.write_bytes(np.ascontiguousarray(data, dtype="<c16").tobytes())
    meta = {"kind": kind, "dim": series.dim, "shape": list(data.shape),
            "dt_map": series.dt_map, "K": series.K, "dtype": "complex128-le",
            "layout": "row-major; superoperators act on row-major vec(rho)"}
    json_path.write_text(json.dumps(meta, indent=2) + "\n")
    return bin_path, json_path


def load_series(path: str | Path) -> DynamicalMapSeries | TransferTensorSeries:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    data = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<c16")
    data = data.reshape(meta["shape"]).astype(complex)
    if meta["kind"] == "maps":
        return DynamicalMapSeries(dt_map=meta["dt_map"], maps=data)
    return TransferTensorSeries(dt_map=meta["dt_map"], tensors=data)
