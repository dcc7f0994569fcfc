"""
原始参数组 (N, n) ∈ {(1001, 992), (1501, 1488), (2001, 1984)}, g=0.0015, k₀=55 上的端到端检查

计算量较大，轨迹在 setUpClass 中只算一次。
"""
import unittest

import numpy as np

from modules.analysis_module import (collective_minimum_table, compare_series, detect_turning_time,
                                     extract_oscillation_frequency, fit_decay_rate, truncation_study)
from modules.cca_model_module import CcaParams, build_model
from modules.dynamics_module import evolve_state, initial_excited_state, propagate_eigen
from modules.theory_module import (decay_prediction, dressed_basis_project, dressed_decay_prediction,
                                   dressed_emptying_time, mode_population_model)

ARRAYS = ((1001, 992), (1501, 1488), (2001, 1984))


def preset_model(n_cavities=2001, atom_site=1984):
    return build_model(CcaParams.create(n_cavities=n_cavities, atom_site=atom_site, coupling_g=0.0015,
                                        resonant_mode=55))


class LargestArrayTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.model = preset_model()
        cls.prediction = decay_prediction(cls.model)
        cls.state0 = initial_excited_state(cls.model)
        cls.times = np.arange(0.0, 2.3e5 + 5.0, 10.0)
        cls.traj = propagate_eigen(cls.model, cls.state0, cls.times, tracked_modes=range(45, 66))
        cls.t_turn = detect_turning_time(cls.traj, cls.prediction.gamma)

    def test_norm(self):
        full = propagate_eigen(self.model, self.state0, self.times[::100])
        np.testing.assert_allclose(full.total_pop, 1.0, rtol=0, atol=1e-10)

    def test_exponential_rate(self):
        fit = fit_decay_rate(self.traj, (0.0, 0.5 * self.prediction.t_c))
        self.assertAlmostEqual(fit.rate / self.prediction.gamma, 1.0, delta=0.1)

    def test_turning_time(self):
        self.assertIsNotNone(self.t_turn)
        self.assertAlmostEqual(self.t_turn / self.prediction.t_c, 1.0, delta=0.15)

    def test_mode_population_model(self):
        early = self.times <= self.prediction.t_c
        for k in (56, 57, 58):
            exact = self.traj.mode_pops[k][early]
            model = mode_population_model(self.model, self.prediction.gamma, k, self.times[early])
            metrics = compare_series(exact, model, self.times[early])
            self.assertLess(metrics.rmse, 0.1 * exact.max())

    def test_collective_minima(self):
        table = collective_minimum_table(self.traj, self.model, offsets=(1, 2, 3))
        self.assertEqual(len(table), 6)
        self.assertTrue(table["t_min"].notna().all())
        self.assertTrue((table["rel_error"] < 0.1).all())

    def test_dressed_decay(self):
        state = evolve_state(self.model, self.state0, self.t_turn)
        block = dressed_basis_project(state, self.model, t_ref=self.t_turn)
        self.assertLess(block.trace, 1.0)

        start = dressed_decay_prediction(self.model, block, [self.t_turn])[0]
        self.assertAlmostEqual(start, self.traj.atom_pop[self.times == self.t_turn][0], delta=1e-8)

        # 原子第一次排空之前与精确结果一致
        t_empty = dressed_emptying_time(self.model, block)
        self.assertIsNotNone(t_empty)
        before = (self.times >= self.t_turn) & (self.times <= t_empty)
        predicted = dressed_decay_prediction(self.model, block, self.times[before])
        early = compare_series(self.traj.atom_pop[before], predicted, self.times[before])
        self.assertLess(early.rmse, 0.02)
        self.assertLess(self.traj.atom_pop[before][-1], 0.05)

        # 排空后精确布居回升到 e^{−Γτ/2} 包络之上，整段偏差明显更大
        window = (self.times >= self.t_turn) & (self.times <= self.t_turn + 2.0 / self.prediction.gamma)
        full = compare_series(self.traj.atom_pop[window],
                              dressed_decay_prediction(self.model, block, self.times[window]), self.times[window])
        self.assertGreater(full.rmse, early.rmse)

    def test_dressed_oscillation_frequency(self):
        t_c = self.prediction.t_c
        omega = extract_oscillation_frequency(self.traj.atom_pop, (t_c, t_c + 2.0e5), times=self.times)
        self.assertAlmostEqual(omega / (2.0 * self.prediction.g_r), 1.0, delta=0.1)

    def test_truncation_convergence(self):
        table = truncation_study(self.model, (2, 5, 10, 20), t_max=5.0e4, dt_sample=10.0)
        deviations = table.set_index("half_width")["max_abs_dev"]
        # 最大偏差出现在短时区，11 个模式还不足以重现最初的衰变
        self.assertLess(deviations[5], 0.03)
        self.assertLess(deviations[2], 0.1)
        self.assertLess(deviations[5], deviations[2])
        self.assertLessEqual(deviations[20], deviations[5])


class ArraySizeTest(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.results = []
        times = np.arange(0.0, 5.0e4 + 5.0, 10.0)
        for n, site in ARRAYS:
            model = preset_model(n, site)
            prediction = decay_prediction(model)
            traj = propagate_eigen(model, initial_excited_state(model), times, tracked_modes=())
            t_turn = detect_turning_time(traj, prediction.gamma)
            cls.results.append((model, prediction, traj, t_turn))

    def test_rate_independent_of_size(self):
        for model, prediction, traj, _ in self.results:
            fit = fit_decay_rate(traj, (0.0, 0.5 * prediction.t_c))
            self.assertAlmostEqual(fit.rate / prediction.gamma, 1.0, delta=0.1)

    def test_turning_time_grows_with_size(self):
        turns = [t_turn for *_, t_turn in self.results]
        self.assertTrue(all(t is not None for t in turns))
        self.assertTrue(turns[0] < turns[1] < turns[2])

    def test_turning_time_of_largest_array(self):
        _, prediction, _, t_turn = self.results[-1]
        self.assertAlmostEqual(t_turn / prediction.t_c, 1.0, delta=0.15)

    def test_smallest_array_turns_late(self):
        # N=1001 时 Γt_c 较小，相对偏差要到 t_c 之后才超过阈值
        _, prediction, _, t_turn = self.results[0]
        self.assertGreater(t_turn / prediction.t_c, 1.15)


if __name__ == "__main__":
    unittest.main()
