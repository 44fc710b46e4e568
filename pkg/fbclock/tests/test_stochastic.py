# fbclock/tests/test_stochastic.py
import math
import unittest

import numpy as np
from scipy import integrate, stats

from ..analysis import IQRecord, compute_esd, fit_lorentzian
from ..errors import NeverCrossesError
from ..models import MeanFieldModel, StateQuad, TickSeries, Trajectory
from ..stochastic import (DiffusionSpec, PhaseOscillatorParams, SdeConfig, feedback_diffusion_rate,
                          first_passage_ticks, path_generator, phase_path_ticks,
                          reduced_phase_params, simulate_meanfield_sde, simulate_normal_form,
                          simulate_phase, summarize_ticks, trajectory_ticks,
                          wald_distribution, wald_mode, wald_moments, wald_pdf)
from ..slh import clock_mean_field
from .fixtures import operating_point


def params_for(period: float, lam: float) -> PhaseOscillatorParams:
    """Phase oscillator whose ticks follow Wald(period, lam)."""
    mu = 1e6
    return PhaseOscillatorParams(omega=2 * math.pi / period, mu=mu, sigma=mu * 2 * math.pi / math.sqrt(lam))


class PhaseOscillatorTests(unittest.TestCase):
    def test_noiseless_ticks_are_regular(self):
        p = PhaseOscillatorParams(omega=2 * math.pi * 1e6, mu=1e6, sigma=0.0)
        ticks = first_passage_ticks(p, SdeConfig(dt=1e-9), 20)
        np.testing.assert_allclose(ticks.periods, 1e-6, rtol=1e-9)
        self.assertEqual(len(ticks), 20)

    def test_derived_quantities(self):
        p = params_for(1e-6, 50e-6)
        self.assertAlmostEqual(p.wald_lambda / 50e-6, 1.0, places=12)
        self.assertAlmostEqual(p.tick_variance / (1e-18 / 50e-6), 1.0, places=12)
        self.assertAlmostEqual(p.linewidth_hz, p.phase_diffusion / (2 * math.pi))

    def test_tick_statistics(self):
        p = params_for(1e-6, 50e-6)
        ticks = first_passage_ticks(p, SdeConfig(dt=2e-10, seed=11), 10000)
        self.assertAlmostEqual(ticks.mean / 1e-6, 1.0, delta=0.01)
        self.assertAlmostEqual(ticks.variance / p.tick_variance, 1.0, delta=0.05)

    def test_ticks_follow_wald_law(self):
        p = params_for(1e-6, 50e-6)
        ticks = first_passage_ticks(p, SdeConfig(dt=2e-10, seed=5), 10000)
        ks = stats.kstest(ticks.periods, wald_distribution(p.period, p.wald_lambda).cdf)
        self.assertGreater(ks.pvalue, 0.01)

    def test_threads_do_not_change_paths(self):
        p = params_for(1e-6, 20e-6)
        one = first_passage_ticks(p, SdeConfig(dt=1e-9, seed=2, n_paths=4, threads=1), 50)
        four = first_passage_ticks(p, SdeConfig(dt=1e-9, seed=2, n_paths=4, threads=4), 50)
        np.testing.assert_array_equal(one.periods, four.periods)

    def test_phase_paths(self):
        p = PhaseOscillatorParams(omega=2 * math.pi, mu=1.0, sigma=0.0)
        paths = simulate_phase(p, SdeConfig(dt=1e-3, n_paths=2), 3.0)
        self.assertEqual(paths.theta.shape, (2, 3001))
        ticks = phase_path_ticks(paths.t, paths.theta[0])
        np.testing.assert_allclose(ticks.periods, 1.0, rtol=1e-9)

    def test_field_linewidth_matches_phase_diffusion(self):
        fs, n = 125e6, 48000
        p = PhaseOscillatorParams(omega=2 * math.pi * 2e6, mu=1e6, sigma=1e6 * math.sqrt(2 * math.pi * 200e3))
        paths = simulate_phase(p, SdeConfig(dt=1.0 / fs, seed=13, n_paths=60), (n - 1) / fs)
        esd = compute_esd([IQRecord(fs, np.exp(1j * theta)) for theta in paths.theta])
        fit = fit_lorentzian(esd, (1e6, 3e6))
        self.assertAlmostEqual(fit.fwhm / p.linewidth_hz, 1.0, delta=0.1)
        self.assertAlmostEqual(fit.center / 2e6, 1.0, delta=0.01)

    def test_never_crosses(self):
        with self.assertRaises(NeverCrossesError):
            first_passage_ticks(PhaseOscillatorParams(omega=0.0, mu=1.0, sigma=0.0), SdeConfig(dt=1e-3), 3)
        with self.assertRaises(NeverCrossesError):
            first_passage_ticks(PhaseOscillatorParams(omega=1.0, mu=1.0, sigma=0.0), SdeConfig(dt=1e-3),
                                1000, max_steps=10)

    def test_invalid_parameters(self):
        with self.assertRaises(ValueError):
            PhaseOscillatorParams(omega=1.0, mu=0.0, sigma=0.1)
        with self.assertRaises(ValueError):
            SdeConfig(dt=0.0)


class WaldLawTests(unittest.TestCase):
    def test_density_is_normalised(self):
        total, _ = integrate.quad(lambda T: wald_pdf(T, 2e-6, 10.2e-6), 1e-12, 2e-4, limit=400,
                                  points=[1e-6, 2e-6, 5e-6])
        self.assertAlmostEqual(total, 1.0, places=6)

    def test_density_matches_scipy(self):
        T = np.linspace(0.1e-6, 8e-6, 50)
        np.testing.assert_allclose(wald_pdf(T, 2e-6, 10.2e-6),
                                   wald_distribution(2e-6, 10.2e-6).pdf(T), rtol=1e-10)

    def test_mode(self):
        T = np.linspace(0.05e-6, 6e-6, 200001)
        numeric = T[np.argmax(wald_pdf(T, 2e-6, 10.2e-6))]
        self.assertAlmostEqual(wald_mode(2e-6, 10.2e-6) / numeric, 1.0, places=4)

    def test_moments(self):
        m = wald_moments(2e-6, 10.2e-6)
        dist = wald_distribution(2e-6, 10.2e-6)
        self.assertAlmostEqual(m["mean"] / dist.mean(), 1.0, places=10)
        self.assertAlmostEqual(m["variance"] / dist.var(), 1.0, places=10)
        self.assertAlmostEqual(m["accuracy"], 5.1)

    def test_rejects_non_positive(self):
        with self.assertRaises(ValueError):
            wald_pdf(0.0, 1.0, 1.0)
        with self.assertRaises(ValueError):
            wald_pdf(1.0, -1.0, 1.0)


class NormalFormTests(unittest.TestCase):
    def test_noiseless_radius_relaxes_to_sqrt_mu(self):
        paths = simulate_normal_form(2.0, 2 * math.pi, 0.0, SdeConfig(dt=1e-3), 10.0, x0=0.1)
        self.assertAlmostEqual(paths.radius[0, -1], math.sqrt(2.0), places=4)

    def test_noisy_radius_stays_near_cycle(self):
        paths = simulate_normal_form(2.0, 2 * math.pi, 0.05, SdeConfig(dt=1e-3, seed=4, n_paths=8), 20.0)
        self.assertAlmostEqual(np.mean(paths.radius[:, 5000:]) / math.sqrt(2.0), 1.0, delta=0.02)

    def test_period_statistics_of_projected_phase(self):
        mu, omega, sigma = 2.0, 2 * math.pi, 0.3
        cfg = SdeConfig(dt=2e-3, seed=9, n_paths=4)
        paths = simulate_normal_form(mu, omega, sigma, cfg, 400.0, stride=1)
        periods = np.concatenate([phase_path_ticks(paths.t, th).periods for th in paths.phase])
        expected = reduced_phase_params(mu, omega, sigma)
        self.assertAlmostEqual(np.mean(periods), 1.0, delta=0.01)
        self.assertAlmostEqual(np.var(periods, ddof=1) / expected.tick_variance, 1.0, delta=0.25)

    def test_reduced_noise_intensity(self):
        self.assertAlmostEqual(reduced_phase_params(2.0, 1.0, 0.3).sigma, 0.3)
        self.assertAlmostEqual(reduced_phase_params(8.0, 1.0, 0.3).sigma, 0.6)


class MeanFieldSdeTests(unittest.TestCase):
    model = MeanFieldModel(drift_a=-1.0 + 0j, drift_b=-1.0 + 0j, coupling_ab=0j, coupling_ba=0j,
                           kerr_a=0.0, kerr_b=0.0)

    def test_stationary_variance(self):
        cfg = SdeConfig(dt=0.01, seed=1, n_paths=200)
        ens = simulate_meanfield_sde(self.model, DiffusionSpec(0.5), cfg, 200.0, StateQuad(0, 0, 0, 0),
                                     stride=10)
        tail = ens.states[:, ens.t > 10.0]
        # dx = -(kappa / 2) x dt + sqrt(2 gamma) dW  ->  var = 2 gamma / kappa
        self.assertAlmostEqual(np.var(tail[..., 0]) / 0.5, 1.0, delta=0.05)
        self.assertAlmostEqual(np.var(tail[..., 1]) / 0.5, 1.0, delta=0.05)
        self.assertEqual(np.max(np.abs(tail[..., 2:])), 0.0)

    def test_threads_do_not_change_paths(self):
        runs = [simulate_meanfield_sde(self.model, DiffusionSpec(0.5),
                                       SdeConfig(dt=0.01, seed=3, n_paths=6, threads=k), 2.0,
                                       StateQuad(1, 0, 0, 0))
                for k in (1, 3)]
        np.testing.assert_array_equal(runs[0].states, runs[1].states)
        self.assertEqual(len(runs[0]), 6)

    def test_noiseless_ensemble_is_deterministic(self):
        ens = simulate_meanfield_sde(self.model, DiffusionSpec(0.0), SdeConfig(dt=0.01, n_paths=2), 1.0,
                                     StateQuad(1, 0, 0, 0))
        self.assertAlmostEqual(ens.path(0).final.x_a, math.exp(-1.0), places=4)
        np.testing.assert_array_equal(ens.states[0], ens.states[1])

    def test_feedback_diffusion_rate(self):
        self.assertAlmostEqual(feedback_diffusion_rate(4.0, 9.0, 0.5), 9.0)
        self.assertAlmostEqual(feedback_diffusion_rate(4.0, 9.0, 0.5, rate_unit=3.0), 3.0)
        with self.assertRaises(ValueError):
            DiffusionSpec(-1.0)


class NoiseOrderingTests(unittest.TestCase):
    def test_diffusion_widens_tick_spread_on_clock_cycle(self):
        model = clock_mean_field(operating_point().with_port_drive(math.sqrt(0.5e10)))
        s0, t_end, transient = StateQuad(0.0, 0.0, 0.0, 0.0), 45e-6, 20e-6
        quiet = simulate_meanfield_sde(model, DiffusionSpec(0.0), SdeConfig(dt=1e-9), t_end, s0, stride=2)
        baseline = trajectory_ticks(quiet.path(0), transient)
        self.assertGreater(len(baseline), 10)
        noisy = simulate_meanfield_sde(model, DiffusionSpec(1e5), SdeConfig(dt=1e-9, seed=8, n_paths=20),
                                       t_end, s0, stride=2)
        wider = sum(trajectory_ticks(noisy.path(i), transient).variance > baseline.variance for i in range(20))
        self.assertGreaterEqual(wider, 18)


class TickSummaryTests(unittest.TestCase):
    def test_path_streams(self):
        first = path_generator(7, 0).standard_normal(5)
        np.testing.assert_array_equal(first, path_generator(7, 0).standard_normal(5))
        self.assertFalse(np.allclose(first, path_generator(7, 1).standard_normal(5)))
        self.assertFalse(np.allclose(first, path_generator(8, 0).standard_normal(5)))

    def test_trajectory_ticks_follow_amplitude(self):
        t = np.arange(20001) * 1e-9
        states = np.zeros((t.size, 4))
        states[:, 0] = 2.0 + 0.5 * np.sin(2 * math.pi * t / 1e-6)
        ticks = trajectory_ticks(Trajectory(t, states), transient=2e-6)
        self.assertGreaterEqual(len(ticks), 16)
        np.testing.assert_allclose(ticks.periods, 1e-6, rtol=1e-3)

    def test_summary(self):
        summary = summarize_ticks(TickSeries([1.0, 2.0, 3.0]))
        self.assertEqual(summary["n"], 3)
        self.assertAlmostEqual(summary["mean"], 2.0)
        self.assertAlmostEqual(summary["variance"], 1.0)
        self.assertAlmostEqual(summary["accuracy"], 4.0)
        empty = summarize_ticks(TickSeries())
        self.assertEqual(empty["n"], 0)
        self.assertTrue(math.isnan(empty["mean"]))


if __name__ == "__main__":
    unittest.main()
