import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from endqt.quantum import (
    SIGMA_X,
    SIGMA_Z,
    DensityOperator,
    DimensionError,
    Observable,
    StateVector,
    apply_unitary,
    born_probabilities,
    commutator_defect,
    make_rng,
    partial_trace,
    random_density,
    random_state,
    random_unitary,
    reduced_density,
    sample_outcome,
    spin_observable,
    tensor_product,
    von_neumann_entropy,
)
from endqt.decoherence import interaction_hamiltonian

import oracles

KET0 = StateVector.basis(0, (2,))
KET1 = StateVector.basis(1, (2,))
PLUS = StateVector.from_amplitudes([1, 1], normalize=True)
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
PHI_PLUS = np.array([1, 0, 0, 1]) / np.sqrt(2)


class TestStates:
    def test_norm_invariant(self):
        with pytest.raises(ValueError):
            StateVector(np.array([1.0, 1.0]), (2,))

    def test_dims_must_match(self):
        with pytest.raises(DimensionError):
            StateVector(np.array([1.0, 0, 0]), (2,))

    def test_density_invariants(self):
        with pytest.raises(ValueError):
            DensityOperator(np.diag([0.6, 0.6]), (2,))
        with pytest.raises(ValueError):
            DensityOperator(np.diag([1.2, -0.2]), (2,))
        with pytest.raises(ValueError):
            DensityOperator(np.array([[0.5, 0.1], [0.2, 0.5]]), (2,))

    def test_observable_projectors_sum_to_identity(self):
        obs = Observable(np.diag([1.0, 1.0, -2.0]))
        assert len(obs.projectors) == 2
        np.testing.assert_allclose(sum(obs.projectors), np.eye(3), atol=1e-10)


class TestTensorProduct:
    def test_basis_kets(self):
        np.testing.assert_array_equal(tensor_product(KET0, KET0).amplitudes, [1, 0, 0, 0])

    def test_dims_concatenate(self):
        out = tensor_product(KET0, StateVector.basis(2, (3,)))
        assert out.dims == (2, 3) and out.dim == 6

    def test_distributive(self):
        out = tensor_product(PLUS, KET0)
        np.testing.assert_allclose(out.amplitudes, [1 / np.sqrt(2), 0, 1 / np.sqrt(2), 0], atol=1e-15)

    def test_density_kind(self):
        out = tensor_product(KET0.density(), DensityOperator.maximally_mixed(2))
        assert out.dims == (2, 2)
        assert abs(np.trace(out.matrix) - 1) < 1e-12

    def test_mixed_kinds_rejected(self):
        with pytest.raises(TypeError):
            tensor_product(KET0, KET0.density())


class TestApplyUnitary:
    def test_identity(self):
        psi = random_state((2, 3), make_rng(0))
        out = apply_unitary(psi, np.eye(3), [1])
        np.testing.assert_allclose(out.amplitudes, psi.amplitudes)

    def test_x_gate(self):
        np.testing.assert_allclose(apply_unitary(KET0, SIGMA_X, [0]).amplitudes, KET1.amplitudes)

    def test_cnot_makes_bell_state(self):
        out = apply_unitary(tensor_product(PLUS, KET0), CNOT, [0, 1])
        np.testing.assert_allclose(out.amplitudes, PHI_PLUS, atol=1e-15)

    def test_target_order_respected(self):
        # control on subsystem 1, target subsystem 0: |01> -> |11>
        out = apply_unitary(StateVector.basis(1, (2, 2)), CNOT, [1, 0])
        np.testing.assert_allclose(out.amplitudes, [0, 0, 0, 1])

    def test_errors(self):
        psi = StateVector.basis(0, (2, 2))
        with pytest.raises(ValueError):
            apply_unitary(psi, np.array([[1, 1], [0, 1]]), [0])
        with pytest.raises(IndexError):
            apply_unitary(psi, SIGMA_X, [2])
        with pytest.raises(DimensionError):
            apply_unitary(psi, np.eye(4), [0])

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([(2,), (2, 2), (3, 2), (2, 2, 2)]))
    def test_norm_preserved(self, seed, dims):
        rng = make_rng(seed)
        psi = random_state(dims, rng)
        t = int(rng.integers(len(dims)))
        out = apply_unitary(psi, random_unitary(dims[t], rng), [t])
        assert abs(np.linalg.norm(out.amplitudes) - 1) < 1e-12


class TestPartialTrace:
    def test_product_state(self):
        rng = make_rng(1)
        ra, rb = random_density((2,), rng), random_density((3,), rng)
        out = partial_trace(tensor_product(ra, rb), [0])
        np.testing.assert_allclose(out.matrix, ra.matrix, atol=1e-12)

    def test_bell_state_reduces_to_mixed(self):
        rho = StateVector(PHI_PLUS, (2, 2)).density()
        np.testing.assert_allclose(partial_trace(rho, [0]).matrix, np.eye(2) / 2, atol=1e-12)

    def test_two_env_spins_against_hand_construction(self):
        # target (a|0> + b|1>) entangled with two env spins as |0>|e0 e0'> + |1>|e1 e1'>
        a, b = 0.6, 0.8
        e0, e1 = np.array([1, 0]), np.array([np.cos(0.3), np.sin(0.3)])
        f0, f1 = np.array([1, 0]), np.array([np.cos(1.1), np.sin(1.1)])
        psi = a * np.kron([1, 0], np.kron(e0, f0)) + b * np.kron([0, 1], np.kron(e1, f1))
        rho = StateVector(psi, (2, 2, 2)).density()
        expected = np.array([[a * a, a * b * np.vdot(e1, e0) * np.vdot(f1, f0)],
                             [a * b * np.vdot(e0, e1) * np.vdot(f0, f1), b * b]])
        np.testing.assert_allclose(partial_trace(rho, [0]).matrix, expected, atol=1e-12)
        np.testing.assert_allclose(reduced_density(StateVector(psi, (2, 2, 2)), [0]).matrix, expected, atol=1e-12)

    def test_empty_keep(self):
        with pytest.raises(ValueError):
            partial_trace(DensityOperator.maximally_mixed(2), [])

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.sampled_from([((2,), (2,)), ((2,), (4,)), ((4,), (4,)), ((3,), (5,))]))
    def test_reproduces_first_factor(self, seed, dims):
        rng = make_rng(seed)
        ra, rb = random_density(dims[0], rng), random_density(dims[1], rng)
        out = partial_trace(tensor_product(ra, rb), [0])
        assert np.max(np.abs(out.matrix - ra.matrix)) < 1e-12


class TestEntropy:
    def test_pure_is_zero(self):
        assert von_neumann_entropy(random_state((3,), make_rng(2)).density()) == pytest.approx(0, abs=1e-10)

    @pytest.mark.parametrize("n", [2, 3, 7, 16])
    def test_maximally_mixed(self, n):
        assert von_neumann_entropy(DensityOperator.maximally_mixed(n)) == pytest.approx(np.log(n), abs=1e-10)

    def test_reduced_bell(self):
        rho = reduced_density(StateVector(PHI_PLUS, (2, 2)), [1])
        assert von_neumann_entropy(rho) == pytest.approx(np.log(2), abs=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_subadditivity(self, seed):
        rho = random_density((2, 2), make_rng(seed))
        s = von_neumann_entropy(rho)
        sa = von_neumann_entropy(partial_trace(rho, [0]))
        sb = von_neumann_entropy(partial_trace(rho, [1]))
        assert s <= sa + sb + 1e-10
        assert 0 <= s <= np.log(4) + 1e-10


class TestBorn:
    def test_ket0_z(self):
        assert born_probabilities(KET0, Observable(SIGMA_Z)) == [(1.0, 1.0), (-1.0, 0.0)]

    def test_plus_z(self):
        probs = born_probabilities(PLUS, Observable(SIGMA_Z))
        assert [v for v, _ in probs] == [1.0, -1.0]
        np.testing.assert_allclose([p for _, p in probs], [0.5, 0.5], atol=1e-12)

    def test_diagonal(self):
        rho = DensityOperator(np.diag([0.3, 0.7]), (2,))
        np.testing.assert_allclose([p for _, p in born_probabilities(rho, Observable(SIGMA_Z))], [0.3, 0.7])

    def test_degenerate_eigenspace_aggregated(self):
        obs = Observable(np.diag([1.0, 1.0, -1.0]))
        rho = DensityOperator(np.diag([0.2, 0.3, 0.5]), (3,))
        assert born_probabilities(rho, obs) == [(1.0, pytest.approx(0.5)), (-1.0, pytest.approx(0.5))]

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            born_probabilities(KET0, Observable(np.eye(3)))

    def test_random_pairs_normalized(self):
        rng = make_rng(3)
        for _ in range(1000):
            d = int(rng.integers(2, 6))
            h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
            probs = born_probabilities(random_density((d,), rng), Observable(h + h.conj().T))
            assert abs(sum(p for _, p in probs) - 1) < 1e-10
            assert min(p for _, p in probs) >= 0


class TestSampling:
    def test_degenerate_distribution(self):
        for seed in range(50):
            assert sample_outcome(KET0, Observable(SIGMA_Z), make_rng(seed)).index == 0

    def test_plus_frequency_over_seeds(self):
        hits = sum(sample_outcome(PLUS, Observable(SIGMA_Z), make_rng(s)).eigenvalue == 1 for s in range(10_000))
        assert abs(hits / 10_000 - 0.5) < 0.02

    def test_reproducible(self):
        a = sample_outcome(PLUS, Observable(SIGMA_Z), make_rng(99))
        b = sample_outcome(PLUS, Observable(SIGMA_Z), make_rng(99))
        assert a == b

    def test_probability_matches_born_weight(self):
        rho = DensityOperator(np.diag([0.25, 0.75]), (2,))
        s = sample_outcome(rho, Observable(SIGMA_Z), make_rng(4))
        assert s.probability == pytest.approx(dict(born_probabilities(rho, Observable(SIGMA_Z)))[s.eigenvalue], abs=1e-12)

    @pytest.mark.parametrize("d", [2, 5, 8])
    def test_frequencies_converge(self, d):
        rng = make_rng(d)
        rho = random_density((d,), rng)
        obs = Observable(np.diag(np.arange(d, dtype=float)))
        exact = np.array([p for _, p in born_probabilities(rho, obs)])
        counts = np.zeros(d)
        for _ in range(100_000):
            counts[sample_outcome(rho, obs, rng).index] += 1
        assert np.max(np.abs(counts / counts.sum() - exact)) < 0.01


class TestCommutator:
    def test_x_interaction_commutes_with_x_pointer(self):
        h = interaction_hamiltonian([0.3, 0.8], basis="x")
        target_x = oracles.kron(oracles.X, oracles.I2, oracles.I2)
        assert commutator_defect(h, Observable(target_x)) < 1e-10

    def test_z_vs_x(self):
        assert commutator_defect(SIGMA_Z, Observable(SIGMA_X)) == pytest.approx(2.0)

    def test_identity(self):
        h = random_density((3,), make_rng(5)).matrix
        assert commutator_defect(h, Observable(np.eye(3))) < 1e-12

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            commutator_defect(np.eye(2), Observable(np.eye(3)))


def test_spin_observable_extremes():
    np.testing.assert_allclose(spin_observable(0).matrix, SIGMA_Z)
    np.testing.assert_allclose(spin_observable(np.pi / 2).matrix, SIGMA_X, atol=1e-15)


def test_rng_stream_is_philox_and_reproducible():
    assert isinstance(make_rng(7).bit_generator, np.random.Philox)
    assert make_rng(7).random() == make_rng(7).random()
    assert make_rng(7).random() != make_rng(8).random()
