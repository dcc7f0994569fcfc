import unittest

import numpy as np

from config import SolverConfig
from modules.cca_model_module import CcaParams, build_model
from modules.dynamics_module import (ExcitationState, TruncationWindow, build_hamiltonian, energy_expectation,
                                     evolve_state, included_modes, initial_excited_state, observables,
                                     propagate_eigen, propagate_ode)
from modules.exceptions import CcaValidationError


def small_model(n_cavities=21, atom_site=11, coupling_g=0.1, resonant_mode=11, **kwargs):
    return build_model(CcaParams.create(n_cavities=n_cavities, atom_site=atom_site, coupling_g=coupling_g,
                                        resonant_mode=resonant_mode, **kwargs))


def random_state(model, seed):
    rng = np.random.default_rng(seed)
    vec = rng.normal(size=model.n_modes + 1) + 1j * rng.normal(size=model.n_modes + 1)
    return ExcitationState.from_vector(vec / np.linalg.norm(vec))


class HamiltonianTest(unittest.TestCase):

    def test_arrowhead_structure(self):
        model = small_model(n_cavities=3, atom_site=1, resonant_mode=2)
        H = build_hamiltonian(model)
        self.assertEqual(H.shape, (4, 4))
        np.testing.assert_array_equal(H, H.T)
        self.assertEqual(np.count_nonzero(H[0, 1:]), 3)
        self.assertEqual(np.count_nonzero(H[1:, 1:] - np.diag(np.diag(H[1:, 1:]))), 0)
        self.assertEqual(H[0, 0], model.omega_a)

    def test_truncated_window(self):
        model = build_model(CcaParams.create(n_cavities=2001, atom_site=1984, coupling_g=0.0015, resonant_mode=55))
        H = build_hamiltonian(model, TruncationWindow(half_width=5))
        self.assertEqual(H.shape, (12, 12))
        np.testing.assert_array_equal(np.diag(H)[1:], model.omega[49:60])
        np.testing.assert_array_equal(H[0, 1:], model.g_k[49:60])

    def test_zero_coupling_is_diagonal(self):
        H = build_hamiltonian(small_model(coupling_g=0.0))
        self.assertEqual(np.count_nonzero(H - np.diag(np.diag(H))), 0)

    def test_window_clipped_and_empty(self):
        model = small_model()
        np.testing.assert_array_equal(included_modes(model, TruncationWindow(3, center=2)), [1, 2, 3, 4, 5])
        with self.assertRaises(CcaValidationError):
            included_modes(model, TruncationWindow(2, center=40))
        with self.assertRaises(CcaValidationError):
            TruncationWindow(half_width=-1)


class EigenPropagationTest(unittest.TestCase):

    def test_initial_state(self):
        state = initial_excited_state(small_model())
        self.assertEqual(state.alpha, 1.0)
        self.assertEqual(len(state.beta), 21)
        self.assertEqual(state.norm(), 1.0)

    def test_decoupled_atom_stays_excited(self):
        model = small_model(coupling_g=0.0)
        traj = propagate_eigen(model, initial_excited_state(model), np.linspace(0.0, 100.0, 51))
        np.testing.assert_allclose(traj.atom_pop, 1.0, rtol=0, atol=1e-12)

    def test_norm_conserved(self):
        model = small_model()
        traj = propagate_eigen(model, initial_excited_state(model), np.linspace(0.0, 500.0, 201))
        self.assertTrue(traj.tracks_all_modes())
        np.testing.assert_allclose(traj.total_pop, 1.0, rtol=0, atol=1e-10)

    def test_norm_conserved_with_truncation(self):
        model = small_model()
        state = random_state(model, 3)
        traj = propagate_eigen(model, state, np.linspace(0.0, 200.0, 101), trunc=TruncationWindow(2))
        np.testing.assert_allclose(traj.total_pop, 1.0, rtol=0, atol=1e-10)

    def test_modes_outside_window_evolve_freely(self):
        model = small_model(n_cavities=5, atom_site=1, resonant_mode=3)
        beta = np.zeros(5, dtype=complex)
        beta[0] = 1.0
        state = ExcitationState(alpha=0.0, beta=beta)
        traj = propagate_eigen(model, state, np.linspace(0.0, 50.0, 11), trunc=TruncationWindow(0))
        np.testing.assert_allclose(traj.mode_pops[1], 1.0, rtol=0, atol=1e-14)
        np.testing.assert_allclose(traj.atom_pop, 0.0, rtol=0, atol=1e-14)

    def test_time_reversal(self):
        model = small_model()
        state = random_state(model, 7)
        back = evolve_state(model, evolve_state(model, state, 137.5), -137.5)
        np.testing.assert_allclose(back.as_vector(), state.as_vector(), rtol=0, atol=1e-10)

    def test_energy_conserved(self):
        model = small_model()
        state = random_state(model, 11)
        e0 = energy_expectation(model, state)
        for t in (1.0, 50.0, 400.0):
            self.assertAlmostEqual(energy_expectation(model, evolve_state(model, state, t)), e0, delta=1e-10)

    def test_chunking_does_not_change_result(self):
        model = small_model()
        times = np.linspace(0.0, 100.0, 37)
        a = propagate_eigen(model, initial_excited_state(model), times, config=SolverConfig(eigen_chunk_size=5))
        b = propagate_eigen(model, initial_excited_state(model), times, config=SolverConfig(eigen_chunk_size=512))
        np.testing.assert_allclose(a.atom_pop, b.atom_pop, rtol=0, atol=1e-14)

    def test_invalid_time_grid(self):
        model = small_model()
        state = initial_excited_state(model)
        for times in ([], [1.0, 0.5], [-1.0, 0.0], [0.0, 0.0]):
            with self.assertRaises(CcaValidationError):
                propagate_eigen(model, state, times)

    def test_tracked_mode_out_of_range(self):
        model = small_model()
        with self.assertRaises(CcaValidationError):
            propagate_eigen(model, initial_excited_state(model), [0.0, 1.0], tracked_modes=[22])


class OdePropagationTest(unittest.TestCase):

    def test_matches_eigen(self):
        model = small_model()
        state = initial_excited_state(model)
        ode = propagate_ode(model, state, t_max=20.0, dt=1e-3, tracked_modes=[10, 11, 12], sample_every=100)
        eig = propagate_eigen(model, state, ode.times, tracked_modes=[10, 11, 12])
        self.assertEqual(len(ode.times), 201)
        np.testing.assert_allclose(ode.atom_pop, eig.atom_pop, rtol=0, atol=1e-8)
        for k in (10, 11, 12):
            np.testing.assert_allclose(ode.mode_pops[k], eig.mode_pops[k], rtol=0, atol=1e-8)

    def test_fourth_order_convergence(self):
        model = small_model()
        state = initial_excited_state(model)
        coarse = propagate_ode(model, state, t_max=50.0, dt=0.04, tracked_modes=[], sample_every=25)
        fine = propagate_ode(model, state, t_max=50.0, dt=0.02, tracked_modes=[], sample_every=50)
        np.testing.assert_allclose(coarse.times, fine.times, rtol=0, atol=1e-12)
        exact = propagate_eigen(model, state, coarse.times, tracked_modes=[])
        err_coarse = np.max(np.abs(coarse.atom_pop - exact.atom_pop))
        err_fine = np.max(np.abs(fine.atom_pop - exact.atom_pop))
        self.assertGreater(err_coarse / err_fine, 12.0)
        self.assertLess(err_coarse / err_fine, 20.0)

    def test_step_guard(self):
        model = small_model()
        with self.assertRaises(CcaValidationError):
            propagate_ode(model, initial_excited_state(model), t_max=1.0, dt=0.06)

    def test_invalid_arguments(self):
        model = small_model()
        state = initial_excited_state(model)
        with self.assertRaises(CcaValidationError):
            propagate_ode(model, state, t_max=0.0, dt=0.01)
        with self.assertRaises(CcaValidationError):
            propagate_ode(model, state, t_max=1.0, dt=0.01, sample_every=0)


class ObservablesTest(unittest.TestCase):

    def setUp(self):
        self.model = small_model(n_cavities=101, atom_site=51, resonant_mode=51)
        self.traj = propagate_eigen(self.model, initial_excited_state(self.model), np.linspace(0.0, 10.0, 6),
                                    tracked_modes=range(50, 61))

    def test_atom_only(self):
        frame = observables(self.traj)
        self.assertEqual(list(frame.columns), ["time", "atom_pop"])
        self.assertEqual(len(frame), 6)

    def test_mode_columns_sorted(self):
        frame = observables(self.traj, [60, 50, 55] + list(range(51, 60)))
        self.assertEqual(frame.shape[1], 13)
        self.assertEqual(list(frame.columns[2:]), [f"mode_{k}" for k in range(50, 61)])

    def test_untracked_mode(self):
        with self.assertRaises(CcaValidationError):
            observables(self.traj, [10])


if __name__ == "__main__":
    unittest.main()
