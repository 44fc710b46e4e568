# fbclock/tests/test_analysis.py
import math
import unittest

import numpy as np
from scipy import signal

from ..analysis import (EsdResult, IQRecord, NoisyDriveConfig, WaldFit, clock_readout, compute_esd, extract_ticks,
                        fit_lorentzian, fit_wald, fm_noise_phase, linewidth_from_ticks, lorentzian, lowpass,
                        noisy_drive_experiment, noisy_drive_records, synthesize_heterodyne)
from ..dynamics import detect_limit_cycle, integrate
from ..errors import DegenerateDistributionError, FitError, RecordError
from ..models import MeanFieldModel, StateQuad, TickSeries, Trajectory
from ..slh import AffineModeOperator, clock_mean_field
from ..stochastic import PhaseOscillatorParams, SdeConfig, first_passage_ticks, wald_distribution
from .fixtures import operating_point

FS = 125e6


class EsdTests(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(21)

    def test_parseval(self):
        rec = IQRecord(FS, self.rng.normal(size=4800) + 1j * self.rng.normal(size=4800))
        self.assertAlmostEqual(compute_esd([rec]).energy / rec.energy, 1.0, places=10)

    def test_tone_lands_on_its_bin(self):
        f0 = 40 * FS / 4800
        t = np.arange(4800) / FS
        esd = compute_esd([IQRecord(FS, np.exp(2j * math.pi * f0 * t))])
        self.assertAlmostEqual(esd.freq_axis[np.argmax(esd.esd)], f0)
        self.assertAlmostEqual(esd.freq_axis[0], -FS / 2)

    def test_mixed_records_rejected(self):
        a = IQRecord(FS, np.ones(16))
        with self.assertRaises(RecordError):
            compute_esd([a, IQRecord(FS, np.ones(32))])
        with self.assertRaises(RecordError):
            compute_esd([])
        with self.assertRaises(RecordError):
            IQRecord(FS, np.ones(1))

    def test_ou_process_gives_lorentzian(self):
        fwhm = 200e3
        decay = math.pi * fwhm            # field correlation exp(-decay |tau|)
        a = math.exp(-decay / FS)
        records = []
        for _ in range(100):
            w = self.rng.normal(size=48000) + 1j * self.rng.normal(size=48000)
            records.append(IQRecord(FS, signal.lfilter([1.0], [1.0, -a], w)))
        fit = fit_lorentzian(compute_esd(records), (-2e6, 2e6))
        self.assertAlmostEqual(fit.fwhm / fwhm, 1.0, delta=0.05)
        self.assertLess(abs(fit.center), 0.05 * fwhm)


class LorentzianFitTests(unittest.TestCase):
    def test_noiseless_profile(self):
        freq = np.fft.fftshift(np.fft.fftfreq(4800, 1 / FS))
        esd = EsdResult(freq, lorentzian(freq, 3.0, 0.5e6, 136.34e3, 0.01), 1)
        fit = fit_lorentzian(esd, (0.0, 1.0e6))
        self.assertAlmostEqual(fit.fwhm / 136.34e3, 1.0, places=4)
        self.assertAlmostEqual(fit.center / 0.5e6, 1.0, places=6)
        self.assertAlmostEqual(fit.amplitude / 3.0, 1.0, places=4)

    def test_narrow_window_raises_with_diagnostics(self):
        freq = np.fft.fftshift(np.fft.fftfreq(4800, 1 / FS))
        esd = EsdResult(freq, lorentzian(freq, 1.0, 0.0, 1e5), 1)
        with self.assertRaises(FitError) as ctx:
            fit_lorentzian(esd, (0.0, 50e3))
        self.assertIn("bins", ctx.exception.diagnostics)


class TickExtractionTests(unittest.TestCase):
    def test_modulated_amplitude(self):
        t = np.arange(4800) / FS
        rec = IQRecord(FS, (1.0 + 0.5 * np.sin(2 * math.pi * 1e6 * t)) * np.exp(0.3j))
        ticks = extract_ticks(rec)
        np.testing.assert_allclose(ticks.periods, 1e-6, rtol=1e-3)

    def test_positive_sideband(self):
        f0 = 38 * FS / 4800
        t = np.arange(4800) / FS
        rec = IQRecord(FS, 1.0 + 0.5 * np.exp(2j * math.pi * f0 * t))
        ticks = extract_ticks(rec, band="positive")
        np.testing.assert_allclose(ticks.periods, 1 / f0, rtol=1e-3)

    def test_flat_record_has_no_ticks(self):
        with self.assertRaises(RecordError):
            extract_ticks(IQRecord(FS, np.ones(4800)))
        with self.assertRaises(ValueError):
            extract_ticks(IQRecord(FS, np.ones(4800)), band="negative")

    def test_record_shorter_than_filter(self):
        with self.assertRaises(RecordError):
            extract_ticks(IQRecord(FS, np.ones(100) + 0.5j * np.arange(100)))
        with self.assertRaises(RecordError):
            extract_ticks(IQRecord(FS, np.ones(2)), numtaps=3)

    def test_lowpass_cutoff_checked(self):
        with self.assertRaises(ValueError):
            lowpass(np.ones(100), 70e6, FS)

    def test_phase_diffusing_record_to_wald_fit(self):
        alpha, lam = 2e-6, 200e-6
        p = PhaseOscillatorParams(omega=2 * math.pi / alpha, mu=1e6, sigma=1e6 * 2 * math.pi / math.sqrt(lam))
        rng = np.random.default_rng(8)
        n = 375000
        dtheta = p.omega / FS + math.sqrt(p.phase_diffusion / FS) * rng.standard_normal(n)
        theta = np.cumsum(dtheta)
        # a long narrow filter keeps sub-period phase jitter from adding crossings
        ticks = extract_ticks(IQRecord(FS, 1.0 + 0.5 * np.exp(1j * theta)), lp_cutoff=1.5e6, numtaps=1001)
        fit = fit_wald(ticks)
        self.assertAlmostEqual(fit.alpha / alpha, 1.0, delta=0.02)
        self.assertAlmostEqual(fit.accuracy / 100.0, 1.0, delta=0.2)
        self.assertTrue(fit.beats_random_clock)

    def test_low_accuracy_clock_closes_through_wald_fit(self):
        alpha, lam = 2e-6, 10.2e-6
        p = PhaseOscillatorParams(omega=2 * math.pi / alpha, mu=1e6, sigma=1e6 * 2 * math.pi / math.sqrt(lam))
        fit = fit_wald(first_passage_ticks(p, SdeConfig(dt=5e-10, seed=31), 10000))
        self.assertAlmostEqual(fit.alpha / alpha, 1.0, delta=0.02)
        self.assertAlmostEqual(fit.accuracy / 5.1, 1.0, delta=0.1)
        self.assertAlmostEqual(linewidth_from_ticks(fit) / p.linewidth_hz, 1.0, delta=0.1)
        self.assertTrue(fit.beats_random_clock)

    def test_record_ticks_match_cycle_period(self):
        p = operating_point().with_port_drive(math.sqrt(0.5e10))
        traj = integrate(clock_mean_field(p), StateQuad(0.0, 0.0, 0.0, 0.0), 60e-6, 1e-9)
        cycle = detect_limit_cycle(traj, transient=20e-6)
        self.assertIsNotNone(cycle)
        rec = synthesize_heterodyne(traj, clock_readout(p))
        # keep only the fundamental of the envelope
        ticks = extract_ticks(rec, lp_cutoff=1.5 * cycle.frequency, numtaps=1001)
        self.assertAlmostEqual(ticks.mean / cycle.period, 1.0, delta=0.01)
        np.testing.assert_allclose(ticks.periods, cycle.period, rtol=0.05)


class WaldFitTests(unittest.TestCase):
    def test_recovers_accuracy(self):
        rng = np.random.default_rng(4)
        periods = wald_distribution(2e-6, 10.2e-6).rvs(size=20000, random_state=rng)
        fit = fit_wald(TickSeries(periods))
        self.assertAlmostEqual(fit.alpha / 2e-6, 1.0, delta=0.01)
        self.assertAlmostEqual(fit.accuracy / 5.1, 1.0, delta=0.05)
        self.assertGreater(fit.r_squared, 0.9)
        f_mean, f_var = fit.frequency_moments()
        self.assertAlmostEqual(f_mean * fit.alpha, 1.0 + 1.0 / fit.accuracy)
        self.assertGreater(f_var, 0.0)

    def test_degenerate_and_short_series(self):
        with self.assertRaises(DegenerateDistributionError):
            fit_wald(TickSeries(np.full(50, 1e-6)))
        with self.assertRaises(ValueError):
            fit_wald(TickSeries(np.full(5, 1e-6)))

    def test_linewidth_matches_phase_diffusion(self):
        p = PhaseOscillatorParams(omega=2 * math.pi * 0.5e6, mu=1e6, sigma=3e8)
        fit = WaldFit(alpha=p.period, lam=p.wald_lambda, n_ticks=1000, r_squared=1.0)
        self.assertAlmostEqual(linewidth_from_ticks(fit) / p.linewidth_hz, 1.0, places=10)
        self.assertEqual(linewidth_from_ticks(WaldFit(1e-6, math.inf, 10, 1.0)), 0.0)


class HeterodyneTests(unittest.TestCase):
    readout = AffineModeOperator([0.0, 2.0], scalar=0.5)

    def _constant(self, duration):
        t = np.linspace(0.0, duration, 1001)
        return Trajectory(t, np.tile([0.0, 0.0, 1.0, -1.0], (t.size, 1)))

    def test_constant_state(self):
        rec = synthesize_heterodyne(self._constant(50e-6), self.readout)
        np.testing.assert_allclose(rec.samples, 2.0 * (1 + 1j) + 0.5)
        self.assertEqual(len(rec), 4800)

    def test_short_trajectory(self):
        with self.assertRaises(RecordError):
            synthesize_heterodyne(self._constant(10e-6), self.readout)


class NoisyDriveTests(unittest.TestCase):
    # the readout passes the drive through unchanged
    model = MeanFieldModel(drift_a=-1e6 + 0j, drift_b=-1e6 + 0j, coupling_ab=0j, coupling_ba=0j,
                           kerr_a=0.0, kerr_b=0.0, drive_b=1e3 + 0j)
    readout = AffineModeOperator([0.0, 0.0], scalar=1.0)
    cfg = NoisyDriveConfig(n_records=12, substeps=2, transient=1e-6, seed=6)

    def test_fm_phase_has_requested_deviation(self):
        phase = fm_noise_phase(100000, FS, 250e3, 500e3, np.random.default_rng(2))
        self.assertEqual(phase[0], 0.0)
        inst = np.diff(phase) * FS / (2 * math.pi)
        self.assertAlmostEqual(np.sqrt(np.mean(inst ** 2)) / 250e3, 1.0, delta=0.01)
        np.testing.assert_array_equal(fm_noise_phase(10, FS, 0.0, 500e3, np.random.default_rng(2)), 0.0)

    def test_drive_width_grows_with_deviation(self):
        widths = []
        for k, dev in enumerate((100e3, 200e3, 300e3)):
            esd = compute_esd(noisy_drive_records(self.model, self.readout, dev, 500e3, self.cfg, k))
            widths.append(fit_lorentzian(esd, (-2e6, 2e6)).fwhm)
        self.assertTrue(widths[0] < widths[1] < widths[2], widths)

    def test_experiment_reports_every_deviation(self):
        report = noisy_drive_experiment(self.model, self.readout, [0.0, 200e3], 500e3, self.cfg)
        self.assertEqual([pt.deviation_hz for pt in report.points], [0.0, 200e3])
        self.assertEqual(report.points[0].drive_fwhm, 0.0)
        with self.assertRaises(ValueError):
            noisy_drive_experiment(self.model, self.readout, [-1.0], 500e3, self.cfg)

    def test_noiseless_drive_is_a_single_bin(self):
        esd = compute_esd(noisy_drive_records(self.model, self.readout, 0.0, 500e3, self.cfg))
        self.assertGreater(np.max(esd.esd) / np.sum(esd.esd), 1.0 - 1e-9)
        self.assertEqual(esd.freq_axis[np.argmax(esd.esd)], 0.0)


class ClockNoisyDriveTests(unittest.TestCase):
    def test_crossover_at_operating_point(self):
        p = operating_point().with_port_drive(math.sqrt(0.5e10))
        cfg = NoisyDriveConfig(n_records=16, substeps=4, transient=20e-6, seed=3, drive_window=0.8e6,
                               sideband_guard=0.8e6, sideband_window=0.4e6)
        report = noisy_drive_experiment(clock_mean_field(p), clock_readout(p), [0.0, 100e3, 200e3], 500e3, cfg)
        self.assertTrue(all(pt.error is None for pt in report.points), report.points)
        self.assertTrue(report.drive_monotone())
        self.assertIsNotNone(report.crossover_hz)
        self.assertGreater(report.crossover_hz, 0.0)
        # the upper sideband sits near the resonators, above the drive
        self.assertGreater(report.points[-1].sideband_center, cfg.sideband_guard)
        self.assertLess(report.points[-1].sideband_fwhm, report.points[-1].drive_fwhm)


if __name__ == "__main__":
    unittest.main()
