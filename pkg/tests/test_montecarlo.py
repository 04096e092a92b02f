import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aidsim import montecarlo as mc
from aidsim.montecarlo import ExperimentConfig, LambdaSchedule, ResponseKind, SpinResponse
from aidsim.sensitivity import QubitReadoutParams, aid_activation_stats, eta_aid
from aidsim.stochastics import PoissonVar, photon_compound

F0, FWHM = 2.87e9, 7e6
FAR = F0 + 100 * FWHM


class TestSpinResponse:
    def test_lorentzian(self):
        r = SpinResponse()
        assert mc.spin_response_value(r, F0) == 1.0
        assert mc.spin_response_value(r, F0 + FWHM / 2) == pytest.approx(0.5)
        assert mc.spin_response_value(r, F0 - FWHM / 2) == pytest.approx(0.5)

    def test_rabi_and_echo(self):
        rabi = SpinResponse(ResponseKind.RABI)
        assert mc.spin_response_value(rabi, 0.0) == 0.0
        assert mc.spin_response_value(rabi, 1 / (2 * rabi.rabi_freq)) == pytest.approx(
            math.exp(-1 / (2 * rabi.rabi_freq * rabi.decay_time))
        )
        echo = SpinResponse("echo")
        assert mc.spin_response_value(echo, 0.0) == 0.0
        assert mc.spin_response_value(echo, 1.0) == pytest.approx(0.5)

    def test_negative_duration(self):
        with pytest.raises(ValueError):
            mc.spin_response_value(SpinResponse(ResponseKind.RABI), -1e-9)

    @given(st.sampled_from(list(ResponseKind)), st.floats(0, 1e10))
    def test_range(self, kind, x):
        v = mc.spin_response_value(SpinResponse(kind), x)
        assert 0.0 <= v <= 1.0


class TestSchedule:
    def test_constant(self):
        s = LambdaSchedule.constant(0.3)
        lengths, values = s.blocks(1000)
        assert lengths.tolist() == [1000] and values.tolist() == [0.3]

    def test_from_curve(self):
        s = LambdaSchedule.from_curve([0, 10, 100], [1.0, 0.5])
        assert s.length == 100
        assert s.per_repeat(12).tolist() == [1.0] * 10 + [0.5] * 2
        assert s.mean(100) == pytest.approx((10 + 45) / 100)

    def test_too_short(self):
        with pytest.raises(ValueError):
            LambdaSchedule.from_values([1.0, 1.0]).blocks(3)

    @pytest.mark.parametrize("bad", [-0.1, 1.2, float("nan")])
    def test_out_of_range(self, bad):
        with pytest.raises(ValueError):
            LambdaSchedule.from_values([0.5, bad])

    def test_from_csv(self, tmp_path):
        path = tmp_path / "lam.csv"
        path.write_text("cycle,activated_count,lambda_eff\n0,0,nan\n5,4,0.8\n10,6,0.4\n")
        s = LambdaSchedule.from_csv(path)
        assert s.per_repeat(10).tolist() == [0.8] * 5 + [0.4] * 5


def sos_config(**kw):
    base = dict(sweep=(FAR, F0), n=10_000, runs=400, seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


class TestSOS:
    def test_count_levels(self):
        spec = mc.simulate_sos(sos_config())
        far, on = spec.counts[:, 0], spec.counts[:, 1]
        assert abs(far.mean() - 750) < 4 * math.sqrt(750 / far.size)
        assert abs(on.mean() - 525) < 4 * math.sqrt(525 / on.size)
        assert far.var(ddof=1) == pytest.approx(750, rel=0.25)
        assert np.all(np.abs(far - 750) < 6 * math.sqrt(750))

    def test_dark_qubit(self):
        cfg = sos_config(qubit=QubitReadoutParams(k0_mean=0.0), n=1, runs=3)
        assert mc.simulate_sos(cfg).counts.sum() == 0

    def test_n_zero_rejected(self):
        with pytest.raises(ValueError):
            sos_config(n=0)

    def test_symmetric_spectrum(self):
        offsets = np.array([1, 2, 3, 5]) * 1e6
        cfg = sos_config(sweep=tuple(F0 - offsets) + tuple(F0 + offsets), runs=300)
        c = mc.simulate_sos(cfg).counts
        left, right = c[:, :4], c[:, 4:]
        se = np.sqrt(left.var(axis=0, ddof=1) / c.shape[0] + right.var(axis=0, ddof=1) / c.shape[0])
        assert np.all(np.abs(left.mean(axis=0) - right.mean(axis=0)) < 4 * se)

    @pytest.mark.parametrize("threads", [2, 4])
    def test_thread_determinism(self, threads):
        cfg = sos_config(sweep=tuple(np.linspace(2.85e9, 2.89e9, 9)), runs=5)
        assert np.array_equal(mc.simulate_sos(cfg).counts, mc.simulate_sos(cfg, threads=threads).counts)

    def test_seed_changes_counts(self):
        a = mc.simulate_sos(sos_config(runs=5))
        b = mc.simulate_sos(sos_config(runs=5, seed=12))
        assert not np.array_equal(a.counts, b.counts)


class TestAID:
    def test_means(self):
        cfg = ExperimentConfig(sweep=(FAR, F0), n=10_000, runs=200, seed=3)
        spec = mc.simulate_aid(cfg)
        for col, q in ((0, cfg.aid_q(FAR)), (1, 0.8 * 0.64)):
            m, v = mc.aid_run_moments(cfg, q)
            assert abs(spec.counts[:, col].mean() - m) < 4 * math.sqrt(v / cfg.runs)
        assert mc.aid_run_moments(cfg, 0.8)[0] == pytest.approx(1.76e5)
        assert mc.aid_run_moments(cfg, 0.512)[0] == pytest.approx(112_640)

    def test_no_capture(self):
        cfg = ExperimentConfig(sweep=(FAR, F0), n=1000, runs=4, lambda_schedule=0.0, background_defects=5)
        assert mc.simulate_aid(cfg).counts.sum() == 0

    def test_variance_matches_sensitivity_module(self):
        q = QubitReadoutParams()
        cfg = ExperimentConfig(qubit=q, sweep=(FAR,), n=100, runs=10_000, seed=5)
        counts = mc.simulate_aid(cfg).counts[:, 0]
        v = replace(q, q0_mean=cfg.aid_q(FAR))
        per_repeat = photon_compound(aid_activation_stats(v)[0], PoissonVar(q.ka_mean)).variance
        assert counts.var(ddof=1) == pytest.approx(100 * per_repeat, rel=0.05)

    def test_background_defects_shift_all_points(self):
        base = ExperimentConfig(sweep=(FAR, F0), n=2000, runs=300, seed=8)
        d0 = mc.simulate_aid(base).counts
        d5 = mc.simulate_aid(replace(base, background_defects=5)).counts
        shift = d5.mean(axis=0) - d0.mean(axis=0)
        expected = 2000 * 5 * 0.8 * 22
        se = np.sqrt((d0.var(axis=0, ddof=1) + d5.var(axis=0, ddof=1)) / 300)
        assert np.all(np.abs(shift - expected) < 4 * se)

    def test_schedule_shorter_than_n(self):
        cfg = ExperimentConfig(n=100, lambda_schedule=LambdaSchedule.from_values([1.0] * 50))
        with pytest.raises(ValueError):
            mc.simulate_aid(cfg)

    @pytest.mark.parametrize("threads", [1, 3])
    def test_thread_determinism(self, threads):
        cfg = ExperimentConfig(sweep=tuple(np.linspace(2.85e9, 2.89e9, 7)), n=500, runs=3,
                               lambda_schedule=LambdaSchedule.from_curve([0, 100, 500], [1.0, 0.3]))
        assert np.array_equal(mc.simulate_aid(cfg).counts, mc.simulate_aid(cfg, threads=threads).counts)


class TestSNR:
    def test_identical_sets(self):
        x = np.arange(50, dtype=float)
        est = mc.estimate_snr(x, x)
        assert est.value == 0.0 and est.contains(0.0)

    def test_too_few_runs(self):
        with pytest.raises(ValueError):
            mc.estimate_snr([1.0], [2.0])

    def test_unequal_sizes(self):
        with pytest.raises(ValueError):
            mc.estimate_snr([1.0, 2.0, 3.0], [2.0, 3.0])

    def test_known_separation(self):
        rng = np.random.default_rng(0)
        on, off = rng.normal(3.0, 1.0, 5000), rng.normal(0.0, 1.0, 5000)
        est = mc.estimate_snr(on, off)
        assert est.contains(3 / math.sqrt(2))
        assert est.ci_low < est.value < est.ci_high


class TestSensitivityCurve:
    def test_expected_matches_closed_form(self):
        cfg = ExperimentConfig(runs=200, seed=2)
        pts = mc.sensitivity_curve(cfg, [100, 10_000], resamples=200)
        q = replace(cfg.qubit, q0_mean=cfg.aid_q(FAR), q1_mean=cfg.aid_q(F0))
        for pt in pts:
            timing = replace(cfg.timing, n=pt.n)
            assert pt.eta_expected == pytest.approx(eta_aid(q, timing), rel=1e-9)
            assert pt.valid
            assert math.sqrt(pt.n * pt.t_aid) / pt.snr_high <= pt.eta_expected * 1.05
            assert pt.eta_expected <= math.sqrt(pt.n * pt.t_aid) / pt.snr_low * 1.05

    def test_invalid_point_flagged(self):
        cfg = ExperimentConfig(runs=10, lambda_schedule=0.0)
        pt = mc.sensitivity_curve(cfg, [10], resamples=50)[0]
        assert not pt.valid and math.isnan(pt.eta)

    def test_needs_runs(self):
        with pytest.raises(ValueError):
            mc.sensitivity_curve(ExperimentConfig(runs=1), [10])

    def test_thread_determinism(self):
        cfg = ExperimentConfig(runs=20)
        a = mc.sensitivity_curve(cfg, [10, 100, 1000], resamples=100)
        b = mc.sensitivity_curve(cfg, [10, 100, 1000], threads=3, resamples=100)
        assert [p.row() for p in a] == [p.row() for p in b]


def test_fit_lorentzian_noiseless():
    x = np.linspace(2.84e9, 2.90e9, 61)
    y = 750 - 225 / (1 + (2 * (x - 2.871e9) / 6.5e6) ** 2)
    x0, w, a, b = mc.fit_lorentzian(x, y)
    assert x0 == pytest.approx(2.871e9, abs=1e3)
    assert w == pytest.approx(6.5e6, rel=1e-4)
    assert a == pytest.approx(225, rel=1e-4) and b == pytest.approx(750, rel=1e-6)
