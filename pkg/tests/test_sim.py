import io

import numpy as np
import pytest

from irsbf.channels import Geometry, generate_channels
from irsbf.model import ConfigError, PhaseConstraint, SystemConfig
from irsbf.sim import (
    Scheme,
    SweepSpec,
    SweepVariable,
    SymbolTransmission,
    child_seed,
    design_beams,
    pow2db,
    read_results_csv,
    run_iteration_study,
    run_sweep,
    ser_qpsk_theory,
    simulate_ser,
    simulate_symbols,
    write_results_csv,
)
from irsbf.txbf import composite_vector, evaluate_snr, optimal_transmit_beam

from conftest import random_channels


def small_setup(n_i=12):
    cfg = SystemConfig(n_s=4, n_i=n_i, p=10**1.2, kappa_s=0.07, kappa_d=0.07, sigma_n2=10**-8.5)
    geo = Geometry(d_si=50.0, d_v=2.0, d_sd_h=49.0)
    return cfg, geo


class TestSeeding:
    def test_child_seed_is_deterministic_and_spread(self):
        a = child_seed(7, 0, 3)
        assert a == child_seed(7, 0, 3)
        others = {child_seed(7, i, j) for i in range(10) for j in range(10)}
        assert len(others) == 100
        assert all(0 <= s < 2**64 for s in others)


class TestDesignBeams:
    def test_zero_kappa_designs_coincide(self):
        cfg, geo = small_setup()
        cfg0 = SystemConfig(n_s=4, n_i=12, p=cfg.p, kappa_s=0.0, kappa_d=0.0, sigma_n2=cfg.sigma_n2)
        ch = generate_channels(np.random.default_rng(1), cfg0, geo)
        robust = design_beams(Scheme.ROBUST_IRS, ch, cfg0, rng=np.random.default_rng(5))
        nonrobust = design_beams(Scheme.NONROBUST_IRS, ch, cfg0, rng=np.random.default_rng(5))
        assert evaluate_snr(robust.w, robust.theta, ch, cfg0) == pytest.approx(
            evaluate_snr(nonrobust.w, nonrobust.theta, ch, cfg0), rel=1e-9
        )

    def test_robust_dominates_nonrobust_per_realization(self):
        cfg, geo = small_setup()
        for seed in range(15):
            ch = generate_channels(np.random.default_rng(seed), cfg, geo)
            r = design_beams(Scheme.ROBUST_IRS, ch, cfg, rng=np.random.default_rng(seed))
            n = design_beams(Scheme.NONROBUST_IRS, ch, cfg, rng=np.random.default_rng(seed))
            assert evaluate_snr(r.w, r.theta, ch, cfg) >= evaluate_snr(n.w, n.theta, ch, cfg) - 1e-9

    def test_no_irs_schemes(self):
        cfg, geo = small_setup()
        ch = generate_channels(np.random.default_rng(2), cfg, geo)
        robust = design_beams(Scheme.ROBUST_NO_IRS, ch, cfg)
        mf = design_beams(Scheme.NONROBUST_NO_IRS, ch, cfg)
        assert robust.theta is None and mf.theta is None
        np.testing.assert_allclose(np.linalg.norm(mf.w) ** 2, cfg.p_tilde, rtol=1e-12)
        direction = mf.w / np.linalg.norm(mf.w)
        ref = ch.h_sd / np.linalg.norm(ch.h_sd)
        assert np.abs(np.vdot(direction, ref)) == pytest.approx(1.0, rel=1e-12)
        assert evaluate_snr(robust.w, None, ch, cfg) >= evaluate_snr(mf.w, None, ch, cfg) - 1e-12

    def test_all_beams_respect_true_power_budget(self):
        cfg, geo = small_setup()
        ch = generate_channels(np.random.default_rng(3), cfg, geo)
        for scheme in (Scheme.ROBUST_IRS, Scheme.NONROBUST_IRS, Scheme.ROBUST_NO_IRS, Scheme.NONROBUST_NO_IRS):
            d = design_beams(scheme, ch, cfg, rng=np.random.default_rng(3))
            assert np.linalg.norm(d.w) ** 2 <= cfg.p_tilde * (1 + 1e-9)

    def test_discrete_mode_quantizes(self):
        cfg, geo = small_setup()
        ch = generate_channels(np.random.default_rng(4), cfg, geo)
        d = design_beams(
            Scheme.ROBUST_IRS, ch, cfg, rng=np.random.default_rng(4),
            phase=PhaseConstraint.discrete(2),
        )
        levels = 2 * np.pi * np.arange(4) / 4
        for phase in d.theta.phases:
            assert min(abs(phase - lv) for lv in levels) < 1e-12

    def test_upper_bound_has_no_design(self):
        cfg, geo = small_setup()
        ch = generate_channels(np.random.default_rng(5), cfg, geo)
        with pytest.raises(ConfigError):
            design_beams(Scheme.UPPER_BOUND, ch, cfg)


class TestSymbolSimulation:
    def test_perfect_hardware_noiseless_limit(self, rng):
        cfg = SystemConfig(n_s=3, n_i=4, p=2.0, kappa_s=0.0, kappa_d=0.0, sigma_n2=1e-300)
        ch = random_channels(rng, 4, 3)
        from irsbf.model import ReflectConfig

        theta = ReflectConfig.from_phases(rng.uniform(0, 2 * np.pi, 4))
        w = optimal_transmit_beam(theta, ch, cfg)
        assert simulate_ser(w, theta, ch, cfg, 2000, np.random.default_rng(0)) == 0.0

    def test_zero_beam_reports_random_guess(self, rng):
        cfg = SystemConfig(n_s=3, n_i=4, p=2.0, kappa_s=0.1, kappa_d=0.1, sigma_n2=0.1)
        ch = random_channels(rng, 4, 3)
        assert simulate_ser(np.zeros(3, complex), None, ch, cfg, 100, rng) == 0.75

    def test_moment_structure(self, rng):
        cfg = SystemConfig(n_s=4, n_i=5, p=2.0, kappa_s=0.08, kappa_d=0.12, sigma_n2=0.3)
        ch = random_channels(rng, 5, 4)
        from irsbf.model import ReflectConfig

        theta = ReflectConfig.from_phases(rng.uniform(0, 2 * np.pi, 5))
        w = optimal_transmit_beam(theta, ch, cfg)
        batch = simulate_symbols(w, theta, ch, cfg, 200_000, np.random.default_rng(8))
        assert isinstance(batch, SymbolTransmission)
        v = composite_vector(theta, ch)
        g = np.vdot(v, w)
        m2 = abs(g) ** 2 + cfg.kappa_s * np.sum(np.abs(v) ** 2 * np.abs(w) ** 2) + cfg.sigma_n2
        assert np.mean(np.abs(batch.y_tilde) ** 2) == pytest.approx(m2, rel=0.02)
        assert np.mean(np.abs(batch.z_d) ** 2) == pytest.approx(cfg.kappa_d * m2, rel=0.02)
        for i in range(4):
            assert np.mean(np.abs(batch.z_s[i]) ** 2) == pytest.approx(
                cfg.kappa_s * abs(w[i]) ** 2, rel=0.03
            )
        np.testing.assert_allclose(np.abs(batch.x), 1.0, atol=1e-12)

    def test_ser_matches_gaussian_formula(self, rng):
        cfg = SystemConfig(n_s=4, n_i=6, p=2.0, kappa_s=0.05, kappa_d=0.05, sigma_n2=0.4)
        ch = random_channels(rng, 6, 4)
        from irsbf.model import ReflectConfig

        theta = ReflectConfig.from_phases(rng.uniform(0, 2 * np.pi, 6))
        w = optimal_transmit_beam(theta, ch, cfg)
        snr = evaluate_snr(w, theta, ch, cfg)
        n = 200_000
        ser = simulate_ser(w, theta, ch, cfg, n, np.random.default_rng(77))
        expected = ser_qpsk_theory(snr)
        stderr = np.sqrt(expected * (1 - expected) / n)
        assert abs(ser - expected) < 3 * stderr


class TestSweep:
    def test_spec_validation(self):
        with pytest.raises(ConfigError):
            SweepSpec(variable=SweepVariable.N_I, values=())
        with pytest.raises(ConfigError):
            SweepSpec(variable=SweepVariable.N_I, values=(4, 2))
        with pytest.raises(ConfigError):
            SweepSpec(variable=SweepVariable.N_I, values=(4,), n_channels=0)

    def test_deterministic_under_seed(self):
        cfg, geo = small_setup()
        spec = SweepSpec(
            variable=SweepVariable.N_I, values=(4.0,), n_channels=3, n_symbols=200, seed=13,
            schemes=(Scheme.ROBUST_IRS, Scheme.NONROBUST_IRS),
        )
        r1 = run_sweep(spec, cfg, geo)
        r2 = run_sweep(spec, cfg, geo)
        assert r1[0].stats[Scheme.ROBUST_IRS] == r2[0].stats[Scheme.ROBUST_IRS]

    def test_snr_grows_with_surface_size(self):
        cfg, geo = small_setup()
        spec = SweepSpec(
            variable=SweepVariable.N_I, values=(4.0, 24.0, 48.0), n_channels=20, n_symbols=0,
            seed=3, schemes=(Scheme.ROBUST_IRS, Scheme.NONROBUST_IRS, Scheme.ROBUST_NO_IRS),
        )
        results = run_sweep(spec, cfg, geo)
        robust = [r.stats[Scheme.ROBUST_IRS].mean_snr_db for r in results]
        assert robust[0] < robust[1] < robust[2]
        baseline = [r.stats[Scheme.ROBUST_NO_IRS].mean_snr_db for r in results]
        assert max(baseline) - min(baseline) < 2.0  # flat within Monte-Carlo wobble

    def test_destination_near_surface_is_best(self):
        cfg, geo = small_setup(n_i=32)
        spec = SweepSpec(
            variable=SweepVariable.D_SD_H, values=(40.0, 50.0, 60.0), n_channels=20,
            n_symbols=0, seed=5, schemes=(Scheme.ROBUST_IRS,),
        )
        results = run_sweep(spec, cfg, geo)
        snrs = {r.sweep_value: r.stats[Scheme.ROBUST_IRS].mean_snr_db for r in results}
        assert snrs[50.0] > snrs[40.0]
        assert snrs[50.0] > snrs[60.0]

    def test_dominance_chain_with_bound(self):
        cfg, geo = small_setup(n_i=10)
        spec = SweepSpec(
            variable=SweepVariable.N_I, values=(10.0,), n_channels=6, n_symbols=0, seed=21,
        )
        res = run_sweep(spec, cfg, geo)[0]
        assert res.stats[Scheme.UPPER_BOUND].mean_snr_db >= res.stats[Scheme.ROBUST_IRS].mean_snr_db - 1e-6
        assert res.stats[Scheme.ROBUST_IRS].mean_snr_db >= res.stats[Scheme.NONROBUST_IRS].mean_snr_db - 1e-9
        assert res.stats[Scheme.ROBUST_IRS].mean_snr_db >= res.stats[Scheme.ROBUST_NO_IRS].mean_snr_db - 1e-9

    def test_linear_domain_averaging(self):
        cfg, geo = small_setup(n_i=4)
        spec = SweepSpec(
            variable=SweepVariable.N_I, values=(4.0,), n_channels=4, n_symbols=0, seed=9,
            schemes=(Scheme.NONROBUST_NO_IRS,),
        )
        res = run_sweep(spec, cfg, geo)[0]
        snrs = []
        for r in range(4):
            rng = np.random.default_rng(child_seed(9, 0, r))
            ch = generate_channels(rng, cfg, geo)
            w = np.sqrt(cfg.p_tilde) * ch.h_sd / np.linalg.norm(ch.h_sd)
            snrs.append(evaluate_snr(w, None, ch, cfg))
        assert res.stats[Scheme.NONROBUST_NO_IRS].mean_snr_db == pytest.approx(
            pow2db(float(np.mean(snrs))), abs=1e-9
        )


class TestTrends:
    def test_no_irs_collapse_at_zero_elements(self):
        cfg, geo = small_setup(n_i=0)
        ch = generate_channels(np.random.default_rng(17), cfg, geo)
        snrs = {}
        for scheme in (Scheme.ROBUST_IRS, Scheme.NONROBUST_IRS, Scheme.ROBUST_NO_IRS, Scheme.NONROBUST_NO_IRS):
            d = design_beams(scheme, ch, cfg, rng=np.random.default_rng(17))
            snrs[scheme] = evaluate_snr(d.w, d.theta, ch, cfg)
        assert snrs[Scheme.ROBUST_IRS] == pytest.approx(snrs[Scheme.ROBUST_NO_IRS], rel=1e-9)
        assert snrs[Scheme.NONROBUST_IRS] == pytest.approx(snrs[Scheme.NONROBUST_NO_IRS], rel=1e-9)
        assert snrs[Scheme.ROBUST_IRS] >= snrs[Scheme.NONROBUST_IRS] - 1e-12

    def test_two_bit_phases_cost_little(self):
        cfg, geo = small_setup(n_i=32)
        base = dict(variable=SweepVariable.N_I, values=(32.0,), n_channels=15, n_symbols=0,
                    seed=23, schemes=(Scheme.ROBUST_IRS,))
        cont = run_sweep(SweepSpec(**base), cfg, geo)[0]
        disc = run_sweep(SweepSpec(**base, phase_mode=PhaseConstraint.discrete(2)), cfg, geo)[0]
        gap = cont.stats[Scheme.ROBUST_IRS].mean_snr_db - disc.stats[Scheme.ROBUST_IRS].mean_snr_db
        assert gap >= -1e-9
        assert gap < 1.5

    def test_ser_tracks_snr_across_power(self):
        cfg, geo = small_setup(n_i=16)
        spec = SweepSpec(
            variable=SweepVariable.P_DBW, values=(0.0, 8.0), n_channels=25, n_symbols=1500,
            seed=29, schemes=(Scheme.ROBUST_IRS,),
        )
        low, high = run_sweep(spec, cfg, geo)
        assert high.stats[Scheme.ROBUST_IRS].mean_snr_db > low.stats[Scheme.ROBUST_IRS].mean_snr_db
        assert high.stats[Scheme.ROBUST_IRS].ser < low.stats[Scheme.ROBUST_IRS].ser


class TestFailureHandling:
    def test_failed_realizations_skipped_and_logged(self, monkeypatch, caplog):
        import irsbf.sim as sim_mod

        original = sim_mod._realization_stats
        calls = {"n": 0}

        def flaky(args):
            calls["n"] += 1
            if calls["n"] == 2:
                return {"failed": "RuntimeError: injected"}
            return original(args)

        monkeypatch.setattr(sim_mod, "_realization_stats", flaky)
        cfg, geo = small_setup(n_i=4)
        spec = SweepSpec(
            variable=SweepVariable.N_I, values=(4.0,), n_channels=3, n_symbols=0, seed=1,
            schemes=(Scheme.ROBUST_NO_IRS,),
        )
        import logging

        with caplog.at_level(logging.WARNING, logger="irsbf.sim"):
            results = run_sweep(spec, cfg, geo)
        assert len(results) == 1
        assert "skipped 1/3" in caplog.text


class TestCsv:
    def test_round_trip_is_serialization_fixed_point(self):
        cfg, geo = small_setup(n_i=6)
        spec = SweepSpec(
            variable=SweepVariable.N_I, values=(4.0, 6.0), n_channels=2, n_symbols=100, seed=2,
            schemes=(Scheme.ROBUST_IRS, Scheme.ROBUST_NO_IRS),
        )
        results = run_sweep(spec, cfg, geo)
        buf = io.StringIO()
        write_results_csv(buf, results)
        parsed = read_results_csv(io.StringIO(buf.getvalue()))
        buf2 = io.StringIO()
        write_results_csv(buf2, parsed)
        assert buf.getvalue() == buf2.getvalue()
        for orig, back in zip(results, parsed):
            assert back.sweep_variable == orig.sweep_variable
            assert back.sweep_value == pytest.approx(orig.sweep_value, rel=1e-9)
            for scheme in orig.stats:
                assert back.stats[scheme].mean_snr_db == pytest.approx(
                    orig.stats[scheme].mean_snr_db, rel=1e-9
                )

    def test_bad_header_rejected(self):
        with pytest.raises(ValueError):
            read_results_csv(io.StringIO("a,b,c\n1,2,3\n"))


class TestIterationStudy:
    def test_acceleration_and_robustness_ordering(self):
        cfg, geo = small_setup()
        rows = run_iteration_study([6, 16], cfg, geo, seed=31, n_channels=8)
        for row in rows:
            assert row.robust_accel < row.robust_plain
            assert row.nonrobust_accel < row.nonrobust_plain
            assert row.nonrobust_plain < row.robust_plain
        assert rows[1].robust_plain > rows[0].robust_plain
