import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmpkwire import (
    EnsembleStats,
    StreamingMoments,
    WireConfig,
    covariance_structure_report,
    localization_decay_report,
    lyapunov_spectrum,
    run_micro_ensemble,
    run_sde_ensemble,
)
from dmpkwire.ensemble import _blocks
from dmpkwire.errors import ConfigError, InsufficientSamples


def ring(n=2, disorder=0.1, s=0.5, **kw):
    return WireConfig(energy=kw.pop("energy", 1.0), disorder=disorder,
                      n_channels=n, flux=0.7 * 2 * math.pi / n,
                      transverse_hopping=kw.pop("hopping", 0.3),
                      scaled_length=s, **kw)


class TestStreamingMoments:
    def test_matches_numpy(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal(1000) * 3 + 1
        mom = StreamingMoments()
        mom.update_batch(values[:300])
        mom.update_batch(values[300:])
        assert mom.count == 1000
        assert mom.mean == pytest.approx(values.mean(), rel=1e-12)
        assert mom.variance == pytest.approx(values.var(ddof=1), rel=1e-12)
        assert mom.vmin == values.min() and mom.vmax == values.max()

    def test_merge_equals_single_pass(self):
        rng = np.random.default_rng(1)
        values = rng.standard_normal(4096)
        single = StreamingMoments()
        single.update_batch(values)
        merged = StreamingMoments()
        for lo, hi in _blocks(len(values), 300):
            part = StreamingMoments()
            part.update_batch(values[lo:hi])
            merged.merge(part)
        assert merged.mean == pytest.approx(single.mean, rel=1e-12)
        assert merged.m2 == pytest.approx(single.m2, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40),
           st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40))
    def test_merge_commutes_within_float_noise(self, xs, ys):
        a1, b1 = StreamingMoments(), StreamingMoments()
        a1.update_batch(np.array(xs))
        b1.update_batch(np.array(ys))
        a1.merge(b1)
        a2, b2 = StreamingMoments(), StreamingMoments()
        a2.update_batch(np.array(xs))
        b2.update_batch(np.array(ys))
        b2.merge(a2)
        assert a1.count == b2.count
        assert np.isclose(a1.mean, b2.mean, rtol=1e-9, atol=1e-9)
        assert np.isclose(a1.m2, b2.m2, rtol=1e-9, atol=1e-6)
        assert a1.variance >= 0 and b2.variance >= 0

    def test_vector_observables(self):
        mom = StreamingMoments()
        mom.update_batch(np.arange(12.0).reshape(4, 3))
        assert np.allclose(mom.mean, [4.5, 5.5, 6.5])
        assert mom.stderr.shape == (3,)


class TestMicroEnsemble:
    def test_ballistic_is_exact(self):
        cfg = ring(n=3, disorder=0.0, s=None, length=25)
        stats = run_micro_ensemble(cfg, 64, master_seed=0)
        assert float(stats.mean("g")) == 3.0
        assert float(stats["g"].variance) == 0.0
        assert stats.count("g") == 64

    def test_deterministic_across_worker_counts(self):
        cfg = ring(disorder=0.15, s=0.3)
        serial = run_micro_ensemble(cfg, 600, master_seed=7, block_size=128,
                                    n_workers=0)
        parallel = run_micro_ensemble(cfg, 600, master_seed=7, block_size=128,
                                      n_workers=3)
        for name in ("g", "ln_g"):
            assert float(serial.mean(name)) == float(parallel.mean(name))
            assert float(serial[name].m2) == float(parallel[name].m2)

    def test_block_size_does_not_change_results(self):
        # realizations are seeded by index, and blocks merge in index order
        cfg = ring(disorder=0.15, s=0.3)
        a = run_micro_ensemble(cfg, 500, master_seed=7, block_size=100)
        b = run_micro_ensemble(cfg, 500, master_seed=7, block_size=500)
        assert float(a.mean("g")) == pytest.approx(float(b.mean("g")), rel=1e-12)

    def test_clt_stderr_scaling(self):
        cfg = ring(disorder=0.2, s=0.4)
        small = run_micro_ensemble(cfg, 1000, master_seed=3)
        large = run_micro_ensemble(cfg, 4000, master_seed=3)
        ratio = float(small.stderr("g")) / float(large.stderr("g"))
        assert ratio == pytest.approx(2.0, rel=0.25)

    def test_transmission_observable_shape(self):
        cfg = ring(n=4, disorder=0.1, s=0.3)
        stats = run_micro_ensemble(cfg, 200, master_seed=1)
        assert stats["transmission"].mean.shape == (4,)
        assert np.all(stats["transmission"].vmax <= 1.0)


class TestSdeEnsemble:
    def test_mea_equals_aniso_at_unit_sigma(self):
        from dmpkwire import SigmaMatrix

        n_paths, ds = 400, 2e-3
        mea = run_sde_ensemble("mea", dict(n_channels=2, s_final=0.5),
                               n_paths, ds, master_seed=5)
        ones = SigmaMatrix(np.ones((2, 2)))
        aniso = run_sde_ensemble("aniso", dict(sigma=ones, s_final=0.5),
                                 n_paths, ds, master_seed=5)
        # identical draws, identical results, bitwise
        assert float(mea.mean("g")) == float(aniso.mean("g"))

    def test_dmpk_start_is_nearly_ballistic(self):
        stats = run_sde_ensemble("dmpk", dict(n_channels=16, s_final=1e-9, beta=1),
                                 16, 1e-3, master_seed=2)
        assert abs(float(stats.mean("g")) - 16.0) < 16 * 1e-8

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            run_sde_ensemble("euler", dict(n_channels=2, s_final=0.1), 4, 1e-3, 0)

    def test_aniso_requires_sigma(self):
        with pytest.raises(ConfigError):
            run_sde_ensemble("aniso", dict(n_channels=2, s_final=0.1), 4, 1e-3, 0)


class TestCovarianceReport:
    def test_single_channel_all_on_pattern_or_structural_zero(self):
        # at N=1 the two movers carry phases (theta, -theta): every quadruple
        # is either phase-matched or excluded by the mod-2pi rule
        cfg = ring(n=1, disorder=0.1, s=0.5, energy=0.4, hopping=0.25)
        rep = covariance_structure_report(cfg, n_samples=4000, master_seed=0)
        assert rep.conj_on[0, 1, 0, 1]          # diagonal pattern survives
        assert not rep.conj_on[0, 1, 1, 0]      # cross-mover phases differ
        assert rep.plain_on[0, 1, 1, 0]

    def test_off_pattern_small_on_pattern_matches(self):
        cfg = ring(n=2, disorder=0.05, s=0.5)
        rep = covariance_structure_report(cfg, n_samples=30000, master_seed=1)
        assert rep.max_off_pattern() < 0.05 * rep.scaled_length
        assert rep.diagonal_relative_errors().max() < 0.10

    def test_reference_values_positive_on_diagonal(self):
        cfg = ring(n=2, disorder=0.1, s=0.5)
        rep = covariance_structure_report(cfg, n_samples=2000, master_seed=2)
        dim = rep.plain.shape[0]
        for i in range(dim):
            for j in range(dim):
                assert rep.conj_ref[i, j, i, j].real > 0


class TestLyapunov:
    def test_ballistic_exponents_vanish(self):
        cfg = ring(n=2, disorder=0.0, s=None, length=10)
        est = lyapunov_spectrum(cfg, length=2000, reorth_every=10, seed=0)
        assert np.abs(est.exponents).max() < 1e-12

    def test_symplectic_pairing(self):
        cfg = ring(n=2, disorder=0.2, s=None, length=10)
        est = lyapunov_spectrum(cfg, length=30000, reorth_every=10, seed=1)
        assert est.pairing_residual < 5e-3 * est.exponents.max()

    def test_exponent_scales_as_disorder_squared(self):
        # N=1: smallest positive exponent ~ lambda^2; fitted power within 15%
        cfg0 = ring(n=1, disorder=0.05, s=None, length=10, energy=0.6)
        gammas = []
        lams = (0.05, 0.1, 0.2)
        for lam in lams:
            import dataclasses

            cfg = dataclasses.replace(cfg0, disorder=lam)
            est = lyapunov_spectrum(cfg, length=300_000, reorth_every=10, seed=2)
            gammas.append(est.smallest_positive)
        power = np.polyfit(np.log(lams), np.log(gammas), 1)[0]
        assert power == pytest.approx(2.0, rel=0.15)


class TestLocalization:
    def test_ballistic_control_slope_zero(self):
        cfg = ring(n=2, disorder=0.0, s=None, length=10)
        import dataclasses

        reports = []
        for length in (10, 20, 30):
            c = dataclasses.replace(cfg, length=length)
            stats = run_micro_ensemble(c, 16, master_seed=0)
            reports.append(float(stats.mean("g")))
        assert reports == [2.0, 2.0, 2.0]

    def test_insufficient_samples_raises(self):
        cfg = ring(n=1, disorder=0.3, s=2.0, energy=0.5)
        with pytest.raises(InsufficientSamples):
            # s far beyond what 8 samples can resolve in E(g)
            localization_decay_report(cfg, [40.0, 60.0], n_samples=8,
                                      master_seed=0)


class TestEnsembleStatsContainer:
    def test_merge_disjoint_names(self):
        a, b = EnsembleStats(), EnsembleStats()
        a.update("x", np.array([1.0, 2.0]))
        b.update("y", np.array([3.0]))
        a.merge(b)
        assert set(a.observables) == {"x", "y"}

    def test_stderr_definition(self):
        st_ = EnsembleStats()
        st_.update("x", np.array([1.0, 2.0, 3.0, 4.0]))
        mom = st_["x"]
        assert float(mom.stderr) == pytest.approx(
            math.sqrt(float(mom.variance) / mom.count))


class TestFailureBudget:
    def test_budget_default_aborts(self, monkeypatch):
        import dmpkwire.ensemble as ens

        cfg = ring(disorder=0.1, s=0.2)
        original = ens._interaction_products

        def poisoned(basis, disorder, length, potential, rngs, collect_sum=False):
            out = original(basis, disorder, length, potential, rngs, collect_sum)
            a, log_scale = out[:2]
            a[0] = np.nan
            return (a, log_scale) + out[2:]

        monkeypatch.setattr(ens, "_interaction_products", poisoned)
        from dmpkwire.errors import NumericalError

        with pytest.raises(NumericalError, match="budget"):
            run_micro_ensemble(cfg, 32, master_seed=0)
        stats = run_micro_ensemble(cfg, 32, master_seed=0, failure_budget=1)
        assert stats.count("g") == 31
        assert stats.count("failed") == 1
