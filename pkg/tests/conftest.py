import math

import numpy as np
import pytest

from qsnn.spiking import MemristanceLaw, NeuronCircuitParams, NeuronNetworkState

_ACCEPTANCE: list[tuple[str, str, bool, str]] = []

REFERENCE_LAW = MemristanceLaw(r_on=0.2, r_off=1.75, v_set=0.8, v_reset=-0.32, tau_switch=2.8)


def reference_circuit(k1: float = 56.0, k2: float = -2.1) -> NeuronCircuitParams:
    return NeuronCircuitParams(1.15, 0.45, 1.15, 0.45, 0.23, 23.0, 0.23, 23.0, k1, k2,
                               (REFERENCE_LAW,) * 4)


def reference_initial() -> NeuronNetworkState:
    return NeuronNetworkState(0.0, 0.0, 0.0, 0.0, 0.63, (1.75,) * 4)


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""

    def record(criterion: str, title: str, ok: bool, detail: str = "") -> bool:
        _ACCEPTANCE.append((criterion, title, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {title} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, title, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {criterion:>3}  {title}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def random_density_matrix(rng, dim: int, rank: int | None = None) -> np.ndarray:
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, dim: int) -> np.ndarray:
    z = (rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
