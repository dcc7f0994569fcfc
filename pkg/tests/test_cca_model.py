import unittest

import numpy as np

from modules.cca_model_module import (CcaParams, band_edges, build_model, detuning, find_antinode_site,
                                      mode_coupling, mode_frequency, nearest_mode_spacing)
from modules.exceptions import CcaValidationError


def make_model(n_cavities=2001, atom_site=1984, coupling_g=0.0015, **kwargs):
    if "atom_freq" not in kwargs:
        kwargs.setdefault("resonant_mode", 55)
    return build_model(CcaParams.create(n_cavities=n_cavities, atom_site=atom_site, coupling_g=coupling_g,
                                        **kwargs))


class BuildModelTest(unittest.TestCase):

    def test_resonant_by_index(self):
        model = make_model()
        self.assertEqual(model.k0, 55)
        self.assertEqual(model.omega_a, model.omega[54])
        self.assertTrue(model.resonance_by_index)

    def test_band_center_is_exact_zero(self):
        model = make_model(n_cavities=3, atom_site=2, coupling_g=0.0, resonant_mode=2)
        self.assertEqual(model.omega[1], 0.0)
        self.assertTrue(np.all(model.g_k == 0.0))

    def test_invalid_site(self):
        with self.assertRaises(CcaValidationError):
            make_model(atom_site=0)
        with self.assertRaises(CcaValidationError):
            make_model(atom_site=2002)

    def test_invalid_sizes(self):
        with self.assertRaises(CcaValidationError):
            make_model(n_cavities=0, atom_site=1)
        with self.assertRaises(CcaValidationError):
            make_model(hopping_eta=0.0)
        with self.assertRaises(CcaValidationError):
            make_model(resonant_mode=2002)

    def test_resonance_needs_exactly_one_choice(self):
        with self.assertRaises(CcaValidationError):
            make_model(atom_freq=0.1, resonant_mode=55)
        with self.assertRaises(CcaValidationError):
            CcaParams.create(n_cavities=5, atom_site=1, coupling_g=0.1)

    def test_unknown_field_rejected(self):
        with self.assertRaises(CcaValidationError) as ctx:
            CcaParams.create(n_cavities=5, atom_site=1, coupling_g=0.1, resonant_mode=2, kappa=0.1)
        self.assertIn("kappa", str(ctx.exception))

    def test_resonance_by_frequency(self):
        reference = make_model()
        model = make_model(atom_freq=reference.omega[54] + 1e-6)
        self.assertEqual(model.k0, 55)
        self.assertFalse(model.resonance_by_index)
        self.assertAlmostEqual(detuning(model, 55), -1e-6, places=15)

    def test_frequency_tie_picks_smaller_mode(self):
        model = make_model(n_cavities=2, atom_site=1, coupling_g=0.1, atom_freq=0.0)
        self.assertEqual(model.omega[0], -model.omega[1])
        self.assertEqual(model.k0, 1)

    def test_arrays_are_read_only(self):
        model = make_model(n_cavities=5, atom_site=2, resonant_mode=2)
        with self.assertRaises(ValueError):
            model.omega[0] = 1.0


class SpectrumTest(unittest.TestCase):

    def test_mode_frequency_values(self):
        model = make_model()
        self.assertEqual(mode_frequency(model, 1001), 0.0)
        self.assertAlmostEqual(mode_frequency(model, 55), -1.992555642, places=8)
        self.assertAlmostEqual(mode_frequency(model, 56), -1.992282651, places=8)

    def test_mode_frequency_range(self):
        model = make_model()
        with self.assertRaises(CcaValidationError):
            mode_frequency(model, 0)
        with self.assertRaises(CcaValidationError):
            mode_frequency(model, 2002)

    def test_monotone_and_inside_band(self):
        for n in (1, 2, 7, 100, 2001, 5000):
            model = make_model(n_cavities=n, atom_site=1, resonant_mode=1, hopping_eta=1.5, cavity_freq=0.3)
            lo, hi = band_edges(model)
            self.assertTrue(np.all(np.diff(model.omega) > 0))
            self.assertTrue(np.all(model.omega > lo))
            self.assertTrue(np.all(model.omega < hi))

    def test_scaling_with_eta_and_omega_c(self):
        base = make_model(n_cavities=11, atom_site=3, resonant_mode=4)
        scaled = make_model(n_cavities=11, atom_site=3, resonant_mode=4, hopping_eta=2.0, cavity_freq=0.5)
        np.testing.assert_allclose(scaled.omega, 0.5 + 2.0 * base.omega, rtol=0, atol=1e-14)


class CouplingTest(unittest.TestCase):

    def test_preset_coupling(self):
        model = make_model()
        self.assertAlmostEqual(mode_coupling(model, 55) / 4.740e-5, 1.0, delta=1e-3)
        self.assertGreater(mode_coupling(model, 55), 0.0)

    def test_node_gives_zero(self):
        model = make_model(n_cavities=3, atom_site=2, coupling_g=0.5, resonant_mode=1)
        self.assertEqual(mode_coupling(model, 2), 0.0)

    def test_completeness(self):
        for n, site, g in ((2001, 1984, 0.0015), (5000, 1, 0.3), (7, 4, 1.0), (1001, 992, 0.0015)):
            model = make_model(n_cavities=n, atom_site=site, coupling_g=g, resonant_mode=1)
            self.assertLess(abs(np.sum(model.g_k ** 2) - g ** 2), 1e-12 * g ** 2)

    def test_mirror_symmetry(self):
        n = 101
        for site in (1, 17, 50):
            left = make_model(n_cavities=n, atom_site=site, coupling_g=0.2, resonant_mode=3)
            right = make_model(n_cavities=n, atom_site=n + 1 - site, coupling_g=0.2, resonant_mode=3)
            np.testing.assert_allclose(np.abs(left.g_k), np.abs(right.g_k), rtol=0, atol=1e-15)


class DetuningTest(unittest.TestCase):

    def test_zero_at_resonance(self):
        self.assertEqual(detuning(make_model(), 55), 0.0)

    def test_neighbour_values(self):
        self.assertAlmostEqual(detuning(make_model(), 56) / 2.72991e-4, 1.0, delta=1e-4)
        small = make_model(n_cavities=1001, atom_site=992)
        self.assertAlmostEqual(detuning(small, 56) / 1.086e-3, 1.0, delta=1e-3)

    def test_matches_frequency_difference(self):
        model = make_model()
        for k in (1, 54, 56, 60, 1000, 2001):
            self.assertAlmostEqual(detuning(model, k), model.omega[k - 1] - model.omega_a, places=12)

    def test_nearest_mode_spacing(self):
        self.assertAlmostEqual(nearest_mode_spacing(make_model()) / 2.72991e-4, 1.0, delta=1e-4)
        small = make_model(n_cavities=1001, atom_site=992)
        self.assertAlmostEqual(nearest_mode_spacing(small) / 1.086e-3, 1.0, delta=1e-3)
        with self.assertRaises(CcaValidationError):
            nearest_mode_spacing(make_model(n_cavities=3, atom_site=1, resonant_mode=3))


class AntinodeTest(unittest.TestCase):

    def test_examples(self):
        self.assertEqual(find_antinode_site(make_model(n_cavities=3, atom_site=1, resonant_mode=1), 1), 2)
        model = make_model()
        self.assertEqual(find_antinode_site(model, 55), 1911)
        self.assertEqual(find_antinode_site(model, 1001), 2001)

    def test_exhaustive_scan(self):
        for n, k0 in ((2001, 55), (1001, 55), (37, 5), (10, 3)):
            model = make_model(n_cavities=n, atom_site=1, resonant_mode=k0)
            site = find_antinode_site(model, k0)
            values = np.abs(np.sin(np.arange(1, n + 1) * k0 * np.pi / (n + 1)))
            self.assertGreaterEqual(values[site - 1], values.max() - 1e-12)

    def test_range_check(self):
        with self.assertRaises(CcaValidationError):
            find_antinode_site(make_model(), 0)


if __name__ == "__main__":
    unittest.main()
