"""End-to-end run: spikes -> theta schedule -> open-system dynamics -> packets."""

from __future__ import annotations

import datetime as _dt
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import analysis, network, nonmarkov, quantum, spiking
from .artifacts import RunWriter, json_text, read_csv
from .config import MappingConfig, RunConfig
from .decision import AwarenessClass, PacketEmitter, RunContext, write_packets
from .errors import InsufficientPeaksError, NoDecayError, StageError, UndefinedNormalizationError

log = logging.getLogger(__name__)

_BELOW_TWO_PI = math.nextafter(2.0 * math.pi, 0.0)


# -- spikes -> theta --------------------------------------------------------

def spike_to_theta(spikes: Sequence[tuple[float, float]], mapping: MappingConfig,
                   theta_max: float | None = None) -> quantum.ThetaSchedule:
    """One schedule entry per spike, active from its peak until the next peak.

    The last entry stays active indefinitely.
    """
    theta_max = mapping.theta_max if theta_max is None else theta_max
    spikes = list(spikes)
    if not spikes:
        return quantum.ThetaSchedule(())
    times = [t for t, _ in spikes]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("spikes must be sorted by strictly increasing time")
    n = len(spikes)
    if mapping.mode == "amplitude":
        vmax = max(v for _, v in spikes)
        if not vmax > 0:
            raise ValueError("amplitude mapping needs a positive peak voltage")
        thetas = [theta_max * (v / vmax) for _, v in spikes]
    elif mapping.mode == "index":
        thetas = [theta_max * (k + 1) / n for k in range(n)]
    else:
        thetas = [theta_max] * n
    ends = times[1:] + [math.inf]
    return quantum.ThetaSchedule(tuple(
        (a, b, min(max(th, 0.0), _BELOW_TWO_PI)) for a, b, th in zip(times, ends, thetas)))


def select_spikes(spike_lists: Sequence[Sequence[tuple[float, float]]], source: str):
    if source == "neuron1":
        return list(spike_lists[0])
    if source == "neuron2":
        return list(spike_lists[1])
    merged = sorted(list(spike_lists[0]) + list(spike_lists[1]))
    # a shared peak time would give an empty interval; keep the larger peak
    out: list[tuple[float, float]] = []
    for t, v in merged:
        if out and out[-1][0] == t:
            out[-1] = (t, max(v, out[-1][1]))
        else:
            out.append((t, v))
    return out


def spike_quantity(counts: Sequence[int], q_mode: str) -> float:
    if q_mode == "neuron1":
        return float(counts[0])
    if q_mode == "total":
        return float(counts[0] + counts[1])
    return 0.5 * (counts[0] + counts[1])


def next_theta_max(theta_max: float, cls: AwarenessClass | None, policy: str,
                   factor: float) -> float:
    """Closed-loop remap applied between burst windows."""
    if policy == "off" or cls is None:
        return theta_max
    if cls is AwarenessClass.ENHANCED:
        return min(theta_max * factor, _BELOW_TWO_PI)
    if cls is AwarenessClass.ELEVATED:
        return math.pi
    return theta_max


# -- stage results ----------------------------------------------------------

@dataclass
class SpikeStage:
    trains: tuple[spiking.SpikeTrain, spiking.SpikeTrain]
    spikes: tuple[list, list]
    counts: tuple[int, int]
    q: float


@dataclass
class QuantumStage:
    schedule: quantum.ThetaSchedule
    trajectory: quantum.Trajectory
    qubit: np.ndarray  # reduced qubit states over the recorded grid


@dataclass
class RunResult:
    out_dir: Path
    manifest: dict
    packets: list = field(default_factory=list)


# -- individual stages ------------------------------------------------------

def run_spike_stage(cfg: RunConfig) -> SpikeStage:
    c = cfg.circuit
    trains = spiking.simulate(c.params(), c.initial_state(), c.dt, c.t_end)
    counted = [spiking.count_spikes(tr, c.threshold) for tr in trains]
    counts = (counted[0][0], counted[1][0])
    return SpikeStage(trains=trains, spikes=(counted[0][1], counted[1][1]), counts=counts,
                      q=spike_quantity(counts, cfg.mapping.q_mode))


def write_spike_stage(w: RunWriter, st: SpikeStage) -> None:
    a, b = st.trains
    w.csv("trace.csv", ["t", "v1", "v2"], [a.t, a.v, b.v])
    rows = [(t, v, k + 1) for k, sp in enumerate(st.spikes) for t, v in sp]
    w.csv("spike_list.csv", ["t_peak", "v_peak", "neuron_id"],
          [[r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows]])
    if len(a) >= 5:
        d1, d2 = spiking.phase_portrait(a)
        w.csv("portrait.csv", ["t", "dv1", "d2v1"], [a.t, d1, d2])
    w.json("spike_summary.json", {"counts": list(st.counts), "q": st.q})


def read_spike_list(path: str | Path) -> tuple[list, list]:
    cols = read_csv(path)
    out: tuple[list, list] = ([], [])
    for t, v, k in zip(cols["t_peak"], cols["v_peak"], cols["neuron_id"]):
        out[int(k) - 1].append((float(t), float(v)))
    return out


def initial_qubit_state(cfg: RunConfig) -> np.ndarray:
    fock = cfg.quantum.fock()
    return quantum.product_state(quantum.bloch_state(cfg.quantum.initial_bloch), quantum.vacuum(fock))


def hamiltonian_params(cfg: RunConfig, schedule: quantum.ThetaSchedule) -> quantum.HamiltonianParams:
    q = cfg.quantum
    return quantum.HamiltonianParams(q.g, q.drive_amp, q.tau_e, schedule)


def run_evolve_stage(cfg: RunConfig, schedule: quantum.ThetaSchedule) -> QuantumStage:
    q = cfg.quantum
    fock = q.fock()
    traj = quantum.evolve(initial_qubit_state(cfg), hamiltonian_params(cfg, schedule), q.channels(),
                          q.dt, q.t_end, cfg.io.record_stride, cfg=fock)
    return QuantumStage(schedule, traj, quantum.partial_trace_to_qubit(traj.states, fock))


def write_schedule(w: RunWriter, prefix: str, schedule: quantum.ThetaSchedule) -> None:
    e = schedule.entries
    w.csv(prefix + "theta_schedule.csv", ["t_start", "t_end", "theta"],
          [[x[0] for x in e], [x[1] for x in e], [x[2] for x in e]])


def write_evolve_stage(w: RunWriter, prefix: str, st: QuantumStage) -> None:
    t = st.trajectory.times
    b = quantum.bloch_vectors(st.qubit)
    w.csv(prefix + "bloch.csv", ["t", "bloch_x", "bloch_y", "bloch_z"], [t, b[:, 0], b[:, 1], b[:, 2]])
    r = st.qubit
    w.csv(prefix + "rho_qubit.csv",
          ["t", "re_rho_00", "im_rho_00", "re_rho_01", "im_rho_01", "re_rho_11", "im_rho_11"],
          [t, r[:, 0, 0].real, r[:, 0, 0].imag, r[:, 0, 1].real, r[:, 0, 1].imag,
           r[:, 1, 1].real, r[:, 1, 1].imag])


def run_ttm_stage(cfg: RunConfig, schedule: quantum.ThetaSchedule, w: RunWriter | None = None,
                  prefix: str = "") -> dict:
    """Learn reduced qubit maps, propagate beyond the window, compare to direct."""
    q, tt = cfg.quantum, cfg.ttm
    fock = q.fock()
    p = hamiltonian_params(cfg, schedule)
    ch = q.channels()
    maps = nonmarkov.learn_maps(p, ch, fock, q.dt, tt.dt_map, tt.K,
                                environment=quantum.vacuum(fock))
    tensors = nonmarkov.compute_transfer_tensors(maps)
    n_total = tt.K + tt.steps
    stride = int(round(tt.dt_map / q.dt))
    direct = quantum.evolve(initial_qubit_state(cfg), p, ch, q.dt, n_total * tt.dt_map, stride, cfg=fock)
    direct_q = quantum.partial_trace_to_qubit(direct.states, fock)
    rho0 = direct_q[0]
    history = [maps.apply(n, rho0) for n in range(tt.K + 1)]
    traj = nonmarkov.ttm_propagate(tensors, history, n_total - tt.K)
    dist = np.array([nonmarkov.trace_distance(a, b) for a, b in zip(traj, direct_q)])
    summary = {"dt_map": tt.dt_map, "K": tt.K, "steps": tt.steps,
               "max_trace_distance": float(dist.max()),
               "tensor_norms": [float(x) for x in tensors.norms()]}
    if w is not None:
        for name, series in (("maps", maps), ("transfer_tensors", tensors)):
            bin_path, json_path = nonmarkov.save_series(series, w.root / (prefix + name))
            w.adopt(prefix + bin_path.name)
            w.adopt(prefix + json_path.name)
        b = quantum.bloch_vectors(traj)
        w.csv(prefix + "ttm.csv", ["t", "bloch_x", "bloch_y", "bloch_z", "trace_distance_direct"],
              [direct.times, b[:, 0], b[:, 1], b[:, 2], dist])
        w.json(prefix + "ttm_summary.json", summary)
    return summary


def run_blp_stage(cfg: RunConfig, schedule: quantum.ThetaSchedule) -> nonmarkov.NonMarkovianityReport:
    q = cfg.quantum
    return nonmarkov.blp_measure(hamiltonian_params(cfg, schedule), q.channels(), q.fock(),
                                 cfg.blp_pairs, q.dt, q.t_end, cfg.io.record_stride)


def network_schedule(cfg: RunConfig, schedule: quantum.ThetaSchedule) -> network.TwoQubitCouplingSchedule:
    n = cfg.network
    entries = tuple(network.CouplingEntry(a, b, n.j, tuple(n.drive_amps), (th, th))
                    for a, b, th in schedule.entries)
    return network.TwoQubitCouplingSchedule(entries, tau_e=cfg.quantum.tau_e, g=cfg.quantum.g)


def run_network_stage(cfg: RunConfig, schedule: quantum.ThetaSchedule) -> dict:
    n, q = cfg.network, cfg.quantum
    site_cfg = quantum.FockConfig(n.cavity_n_max) if n.cavity else None
    H = network.CoupledHamiltonian(network_schedule(cfg, schedule), site_cfg)
    single = {"g": quantum.bloch_state([0, 0, 1]), "e": quantum.bloch_state([0, 0, -1])}
    rho0 = np.kron(single[n.initial[0]], single[n.initial[1]])
    if site_cfg is not None:
        vac = quantum.vacuum(site_cfg)
        rho0 = np.kron(np.kron(single[n.initial[0]], vac), np.kron(single[n.initial[1]], vac))
        channels = _cavity_site_channels(site_cfg, n)
    else:
        channels = network.two_qubit_channels(n.t1, n.dephasing, n.depolarizing)
    traj = quantum.evolve(rho0, H, channels, q.dt, q.t_end, cfg.io.record_stride)
    q1 = network.reduce_site_qubit(traj.states, 0, site_cfg)
    q2 = network.reduce_site_qubit(traj.states, 1, site_cfg)
    pair = traj.states if site_cfg is None else _qubit_pair(traj.states, site_cfg)
    conc = np.array([network.concurrence(r) for r in pair])
    return {"times": traj.times, "concurrence": conc, "q1": q1[-1], "q2": q2[-1]}


def _cavity_site_channels(site_cfg: quantum.FockConfig, n) -> list[quantum.CollapseChannel]:
    eye = np.eye(site_cfg.dim, dtype=complex)
    local = quantum.default_channels(site_cfg, n.t1, 0.0, n.dephasing)
    out = []
    for ch in local:
        out.append(quantum.CollapseChannel(np.kron(ch.operator, eye), ch.rate))
        out.append(quantum.CollapseChannel(np.kron(eye, ch.operator), ch.rate))
    return out


def _qubit_pair(states: np.ndarray, site_cfg: quantum.FockConfig) -> np.ndarray:
    # trace both cavities: indices (q1, n1, q2, n2)
    m = site_cfg.n_levels
    r = states.reshape(states.shape[:-2] + (2, m, 2, m, 2, m, 2, m))
    r = np.einsum("...aibjcidj->...abcd", r)
    return r.reshape(states.shape[:-2] + (4, 4))


def run_g1_stage(cfg: RunConfig, qs: QuantumStage) -> network.G1Series | None:
    q, c = cfg.quantum, cfg.correlation
    tau = np.linspace(0.0, c.tau_max, c.n_tau)
    spacing = tau[1] - tau[0]
    sub = max(1, int(math.ceil(spacing / q.dt - 1e-9)))
    try:
        return network.g1_correlation(hamiltonian_params(cfg, qs.schedule), q.channels(),
                                      qs.trajectory.states[-1], tau, cfg=q.fock(),
                                      t=float(qs.trajectory.times[-1]), dt=spacing / sub)
    except UndefinedNormalizationError:
        log.info("g1 undefined at report time (no excitation); correlation set to 0")
        return None


# -- orchestration ----------------------------------------------------------

class _Timer:
    def __init__(self):
        self.timings: dict[str, float] = {}
        self.current: str | None = None

    @contextmanager
    def stage(self, name: str):
        self.current = name
        t0 = time.perf_counter()
        yield
        self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0
        self.current = None


def run_pipeline(cfg: RunConfig, out_dir: str | Path, scenario: str | None = None) -> RunResult:
    """Run every stage and write artifacts plus ``manifest.json`` to ``out_dir``.

    On failure the manifest records the failed stage and :class:`StageError` is raised.
    """
    w = RunWriter(out_dir)
    timer = _Timer()
    manifest = {"status": "running", "scenario": scenario, "config_hash": cfg.digest(),
                "started_at": _dt.datetime.now(_dt.timezone.utc).isoformat()}
    emitter = PacketEmitter(cfg.thresholds.build())
    try:
        with timer.stage("config"):
            w.json("effective_config.json", cfg.effective())
        with timer.stage("spike"):
            ss = run_spike_stage(cfg)
            write_spike_stage(w, ss)
        theta_max = cfg.mapping.theta_max
        windows = cfg.feedback.windows
        for k in range(windows):
            prefix = "" if windows == 1 else f"window_{k}/"
            with timer.stage("theta"):
                schedule = spike_to_theta(select_spikes(ss.spikes, cfg.mapping.source),
                                          cfg.mapping, theta_max)
                write_schedule(w, prefix, schedule)
            with timer.stage("evolve"):
                qs = run_evolve_stage(cfg, schedule)
                write_evolve_stage(w, prefix, qs)
            with timer.stage("ttm"):
                run_ttm_stage(cfg, schedule, w, prefix)
            with timer.stage("blp"):
                rep = run_blp_stage(cfg, schedule)
                w.json(prefix + "blp.json", rep.to_json())
                w.csv(prefix + "blp_distance.csv", ["t", "value"], [rep.times, rep.distance])
            with timer.stage("network"):
                rhos_net = None
                if cfg.network.enabled:
                    net = run_network_stage(cfg, schedule)
                    w.csv(prefix + "concurrence.csv", ["t", "value"], [net["times"], net["concurrence"]])
                    rhos_net = (net["q1"], net["q2"])
            with timer.stage("g1"):
                g1 = run_g1_stage(cfg, qs)
                corr = 0.0 if g1 is None else g1.sustained()
                if g1 is not None:
                    w.csv(prefix + "g1.csv", ["t", "value"], [g1.tau, g1.normalized])
            with timer.stage("mixture"):
                own = qs.qubit[-1]
                parts = (own,) + (rhos_net if rhos_net is not None else (own, own))
                mixed = network.mix_density_matrices(parts, cfg.mixture.build())
                bloch = quantum.bloch_vector(mixed)
                w.json(prefix + "mixture.json", {
                    "weights": list(cfg.mixture.weights),
                    "rho_re": mixed.real.tolist(), "rho_im": mixed.imag.tolist(),
                    "bloch": list(bloch)})
            with timer.stage("decision"):
                ctx = RunContext(t=(k + 1) * cfg.quantum.t_end, q=ss.q, level=rep.level,
                                 correlation=corr, bloch=bloch, theta=schedule.thetas)
                pkt = emitter.generate_packet(ctx)
                w.json(prefix + "decision.json", {
                    "q": ss.q, "level": rep.level, "correlation": corr,
                    "class": pkt.cls.value if pkt else AwarenessClass.UNCLASSIFIED.value,
                    "theta_max": theta_max})
                theta_max = next_theta_max(theta_max, pkt.cls if pkt else None,
                                           cfg.feedback.policy, cfg.feedback.enhanced_factor)
        with timer.stage("packets"):
            write_packets(emitter.packets, w.root / "packets.ndjson")
            w.adopt("packets.ndjson")
    except Exception as exc:
        stage = timer.current or "unknown"
        manifest.update(status="failed", failed_stage=stage, error=f"{type(exc).__name__}: {exc}")
        path = _write_manifest(w, manifest, timer)
        raise StageError(stage, exc, path) from exc
    manifest.update(status="ok", failed_stage=None, packets=len(emitter.packets))
    _write_manifest(w, manifest, timer)
    return RunResult(out_dir=w.root, manifest=manifest, packets=list(emitter.packets))


def _write_manifest(w: RunWriter, manifest: dict, timer: _Timer) -> Path:
    manifest["timings_s"] = timer.timings
    manifest["files"] = dict(sorted(w.files.items()))
    path = w.root / "manifest.json"
    path.write_text(json_text(manifest))
    return path


def run_analysis(t: np.ndarray, a: np.ndarray, b: np.ndarray | None, w: RunWriter,
                 window: str | None = None) -> dict:
    """Decay fit and spectrum of ``a``; delay of ``b`` relative to ``a``."""
    out: dict = {}
    dt = float(t[1] - t[0])
    try:
        fit = analysis.t1_fit(t, a)
        w.csv("t1.csv", ["t1", "intercept", "r_squared"], [[fit.t1], [fit.intercept], [fit.r_squared]])
        out["t1"] = fit.t1
    except (NoDecayError, InsufficientPeaksError) as exc:
        out["t1_error"] = str(exc)
    if b is not None:
        delay, peak = analysis.estimate_delay(a, b, dt)
        w.csv("delay.csv", ["delay_s", "peak_corr"], [[delay], [peak]])
        out["delay"] = delay
    f, mag = analysis.spectrum(t, a, window)
    w.csv("spectrum.csv", ["freq_hz", "magnitude"], [f, mag])
    return out
