import math

import numpy as np
import pytest

from conftest import random_density_matrix, random_unitary
from qsnn.errors import ConfigValidationError, ShapeError, UndefinedNormalizationError
from qsnn.network import (
    CoupledHamiltonian,
    CouplingEntry,
    MixtureWeights,
    TwoQubitCouplingSchedule,
    concurrence,
    coupled_hamiltonian,
    g1_correlation,
    mix_density_matrices,
    reduce_site,
    reduce_site_qubit,
    site_operator,
    two_qubit_channels,
)
from qsnn.quantum import SIGMA_GE, CollapseChannel, FockConfig, evolve, vacuum

G = np.array([1, 0], dtype=complex)
E = np.array([0, 1], dtype=complex)


def ket(*parts):
    out = parts[0]
    for p in parts[1:]:
        out = np.kron(out, p)
    return out


def proj(v):
    return np.outer(v, v.conj())


def werner(p):
    phi = (ket(G, G) + ket(E, E)) / math.sqrt(2)
    return p * proj(phi) + (1 - p) * np.eye(4) / 4


class TestSchedule:
    def test_overlap_rejected(self):
        with pytest.raises(ValueError):
            TwoQubitCouplingSchedule((CouplingEntry(0, 2, 1.0), CouplingEntry(1, 3, 1.0)))

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            CouplingEntry(0, 1, -0.1)
        with pytest.raises(ValueError):
            CouplingEntry(0, 1, 0.1, (0.0, -1.0))

    def test_active_lookup(self):
        s = TwoQubitCouplingSchedule((CouplingEntry(1, 2, 0.5), CouplingEntry(3, 4, 0.7)))
        assert s.active(0.5) is None
        assert s.active(1.0).j_exchange == 0.5
        assert s.active(2.5) is None
        assert s.active(3.999).j_exchange == 0.7


class TestHamiltonian:
    def test_zero(self):
        H = coupled_hamiltonian(1.3, TwoQubitCouplingSchedule.constant(0.0))
        assert np.array_equal(H, np.zeros((4, 4)))

    def test_zero_outside_entries(self):
        s = TwoQubitCouplingSchedule((CouplingEntry(1, 2, 0.5, (1.0, 1.0), (0.3, 0.3)),))
        assert not np.any(coupled_hamiltonian(2.5, s))

    def test_negative_time(self):
        with pytest.raises(ValueError):
            coupled_hamiltonian(-1.0, TwoQubitCouplingSchedule.constant(1.0))

    def test_hermitian(self, rng):
        s = TwoQubitCouplingSchedule.constant(0.4, (0.7, 1.1), (0.5, 2.0), tau_e=2.0, g=0.8)
        for cfg in (None, FockConfig(2)):
            H = CoupledHamiltonian(s, cfg)
            for t in rng.uniform(0, 10, 5):
                h = H(t)
                assert np.max(np.abs(h - h.conj().T)) < 1e-15

    def test_excitation_number_commutes(self):
        s = TwoQubitCouplingSchedule.constant(0.9, g=0.6, theta_pair=(1.0, 2.0))
        for cfg in (None, FockConfig(2)):
            H = CoupledHamiltonian(s, cfg)
            h, N = H(0.7), H.excitation_number()
            assert np.max(np.abs(h @ N - N @ h)) < 1e-12

    def test_exchange_period(self):
        j = math.pi / 4  # period pi / j = 4 lands on the record grid
        H = CoupledHamiltonian(TwoQubitCouplingSchedule.constant(j))
        traj = evolve(proj(ket(E, G)), H, [], 0.001, 2 * math.pi / j, 10)
        p_ge = traj.states[:, 1, 1].real  # |g,e> is index 1 when |g>=0, |e>=1
        p_eg = traj.states[:, 2, 2].real
        t = traj.times
        assert np.max(np.abs(p_eg - np.cos(j * t) ** 2)) < 1e-8
        assert np.max(np.abs(p_ge - np.sin(j * t) ** 2)) < 1e-8
        # population returns after pi / j
        k = int(round(math.pi / j / (t[1] - t[0])))
        assert p_eg[k] == pytest.approx(1.0, abs=1e-9)

    def test_excitations_conserved_with_decay_free_exchange(self, rng):
        H = CoupledHamiltonian(TwoQubitCouplingSchedule.constant(1.3))
        rho = random_density_matrix(rng, 4)
        traj = evolve(rho, H, two_qubit_channels(dephasing=0.4), 0.01, 5.0, 10)
        N = H.excitation_number()
        n = np.einsum("ij,tji->t", N, traj.states).real
        assert np.max(np.abs(n - n[0])) < 1e-8


class TestReductions:
    def test_reduce_product(self, rng):
        a, b = random_density_matrix(rng, 2), random_density_matrix(rng, 2)
        rho = np.kron(a, b)
        assert np.allclose(reduce_site(rho, 0), a, atol=1e-15)
        assert np.allclose(reduce_site(rho, 1), b, atol=1e-15)

    def test_reduce_with_cavity(self, rng):
        cfg = FockConfig(2)
        a, b = random_density_matrix(rng, 2), random_density_matrix(rng, 2)
        rho = np.kron(np.kron(a, vacuum(cfg)), np.kron(b, vacuum(cfg)))
        assert np.allclose(reduce_site_qubit(rho, 0, cfg), a, atol=1e-15)
        assert np.allclose(reduce_site_qubit(rho, 1, cfg), b, atol=1e-15)

    def test_shape(self):
        with pytest.raises(ShapeError):
            reduce_site(np.eye(3), 0)


class TestConcurrence:
    def test_bell(self):
        psi = (ket(G, E) + ket(E, G)) / math.sqrt(2)
        assert concurrence(proj(psi)) == pytest.approx(1.0, abs=1e-10)

    def test_product(self, rng):
        for _ in range(20):
            rho = np.kron(random_density_matrix(rng, 2), random_density_matrix(rng, 2))
            assert concurrence(rho) < 1e-7

    def test_werner_sweep(self):
        for p in np.linspace(0, 1, 101):
            assert abs(concurrence(werner(p)) - max(0.0, (3 * p - 1) / 2)) < 1e-8

    def test_local_unitary_invariance(self, rng):
        for _ in range(50):
            rho = random_density_matrix(rng, 4)
            U = np.kron(random_unitary(rng, 2), random_unitary(rng, 2))
            assert abs(concurrence(U @ rho @ U.conj().T) - concurrence(rho)) < 1e-8

    def test_range(self, rng):
        for rank in (1, 2, 4):
            c = concurrence(random_density_matrix(rng, 4, rank))
            assert 0.0 <= c <= 1.0

    def test_shape(self):
        with pytest.raises(ShapeError):
            concurrence(np.eye(2) / 2)

    def test_depolarizing_monotone(self):
        j = 1.0
        H = CoupledHamiltonian(TwoQubitCouplingSchedule.constant(j))
        rho0 = proj(ket(E, G))
        t = math.pi / (4 * j)  # maximal entanglement of the closed exchange
        values = []
        for p in (0.0, 0.05, 0.1, 0.2, 0.4, 0.8):
            traj = evolve(rho0, H, two_qubit_channels(depolarizing=p), 0.005, t)
            values.append(concurrence(traj.states[-1]))
        assert values[0] == pytest.approx(1.0, abs=1e-6)
        assert all(b <= a + 1e-12 for a, b in zip(values, values[1:])), values


class TestG1:
    def tau(self, n=21, step=0.1):
        return np.arange(n) * step

    def test_tau_zero_normalized(self, rng):
        rho = random_density_matrix(rng, 2)
        s = g1_correlation(lambda t: np.zeros((2, 2)), [], rho, self.tau())
        assert s.normalized[0] == 1.0

    def test_pure_decay(self):
        gamma = 0.7
        ch = [CollapseChannel(SIGMA_GE, gamma)]
        rho = np.eye(2, dtype=complex) / 2
        tau = self.tau(41)
        s = g1_correlation(lambda t: np.zeros((2, 2)), ch, rho, tau, dt=0.001)
        assert np.max(np.abs(s.normalized - np.exp(-gamma * tau / 2))) < 1e-6

    def test_eigenstate_constant(self):
        # closed two-qubit exchange; (|ge> + |eg>)/sqrt2 is an eigenstate
        H = CoupledHamiltonian(TwoQubitCouplingSchedule.constant(0.6))
        psi = (ket(G, E) + ket(E, G)) / math.sqrt(2)
        sigma = site_operator(SIGMA_GE, 0)
        s = g1_correlation(H, [], proj(psi), self.tau(), dt=0.01, sigma=sigma)
        assert np.max(np.abs(s.normalized - 1.0)) < 1e-9

    def test_undefined_normalization(self):
        rho = np.diag([1.0, 0.0]).astype(complex)
        with pytest.raises(UndefinedNormalizationError) as info:
            g1_correlation(lambda t: np.zeros((2, 2)), [], rho, self.tau())
        assert info.value.raw is not None and np.all(info.value.raw == 0)

    def test_grid_validation(self):
        rho = np.eye(2) / 2
        with pytest.raises(ValueError):
            g1_correlation(lambda t: np.zeros((2, 2)), [], rho, np.array([0.1, 0.2]))
        with pytest.raises(ValueError):
            g1_correlation(lambda t: np.zeros((2, 2)), [], rho, np.array([0.0, 0.1, 0.3]))

    def test_sustained_is_mean(self):
        gamma = 1.0
        s = g1_correlation(lambda t: np.zeros((2, 2)), [CollapseChannel(SIGMA_GE, gamma)],
                           np.eye(2) / 2, self.tau(11, 0.05), dt=0.001)
        assert s.sustained() == pytest.approx(np.mean(np.exp(-gamma * s.tau / 2)), abs=1e-6)


class TestMixture:
    def test_fixed_point(self):
        half = np.eye(2) / 2
        assert np.allclose(mix_density_matrices([half] * 3), half, atol=1e-16)

    def test_forced_arithmetic_exact(self):
        g, e = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        out = mix_density_matrices([g, e, g])
        assert np.array_equal(out, np.diag([0.5, 0.5]).astype(complex))

    def test_random_inputs_valid(self, rng):
        for _ in range(100):
            rhos = [random_density_matrix(rng, 2, int(rng.integers(1, 3))) for _ in range(3)]
            out = mix_density_matrices(rhos)
            assert abs(np.trace(out) - 1) < 1e-12
            assert np.min(np.linalg.eigvalsh(out)) >= -1e-12

    @pytest.mark.parametrize("w", [(0.5, 0.5), (0.6, 0.6, -0.2), (0.3, 0.3, 0.3), (float("nan"), 0.5, 0.5)])
    def test_invalid_weights(self, w):
        with pytest.raises(ConfigValidationError) as info:
            MixtureWeights(w)
        assert info.value.path == "mixture.weights"

    def test_custom_weights(self):
        g, e = np.diag([1.0, 0.0]), np.diag([0.0, 1.0])
        out = mix_density_matrices([g, e, e], MixtureWeights((1.0, 0.0, 0.0)))
        assert np.array_equal(out, g.astype(complex))

    def test_shape(self):
        with pytest.raises(ShapeError):
            mix_density_matrices([np.eye(2) / 2] * 2)
        with pytest.raises(ShapeError):
            mix_density_matrices([np.eye(2) / 2, np.eye(2) / 2, np.eye(4) / 4])
