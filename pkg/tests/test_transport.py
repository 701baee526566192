import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmpkwire import (
    DisorderSlice,
    cartan_decompose,
    group_residuals,
    run_microscopic,
    sample_mea_increment,
    scattering_from_transfer,
    slice_transfer_wave,
    transmission_from_scattering,
    transmission_spectrum,
)
from dmpkwire.errors import NotInGroup
from dmpkwire.transport import sigma_x, sigma_z
from dmpkwire.wire import TransferMatrix

from conftest import real_chain_basis


def lie_group_element(n, scale=1.0, seed=0):
    """An exact group element: exponential of a structured algebra element."""
    from scipy.linalg import expm

    rng = np.random.default_rng(seed)
    ell = sample_mea_increment(n, scale, rng).entries
    return TransferMatrix(expm(ell), "wave")


def hyperbolic_boost(x):
    return TransferMatrix(np.array([[math.cosh(x), math.sinh(x)],
                                    [math.sinh(x), math.cosh(x)]], dtype=complex),
                          "wave")


class TestGroupResiduals:
    def test_identity(self):
        res = group_residuals(TransferMatrix(np.eye(8, dtype=complex), "wave"))
        assert res.current == 0.0 and res.time_reversal == 0.0

    def test_free_transfer_matrix(self):
        theta = np.array([0.6, 1.1, 1.4])
        m0 = np.diag(np.exp(1j * np.concatenate([theta, -theta])))
        res = group_residuals(TransferMatrix(m0, "wave"))
        assert res.current < 1e-14 and res.time_reversal < 1e-14

    def test_random_matrix_is_far(self):
        rng = np.random.default_rng(1)
        m = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
        res = group_residuals(TransferMatrix(m, "wave"))
        assert res.current > 0.1 and res.time_reversal > 0.1


class TestTransmissionSpectrum:
    def test_identity_is_ballistic(self):
        sp = transmission_spectrum(TransferMatrix(np.eye(10, dtype=complex), "wave"))
        assert np.all(sp.values == 1.0)
        assert sp.conductance == 5.0

    def test_free_transfer_transmits_perfectly(self):
        theta = np.array([0.5, 0.9])
        m0 = np.diag(np.exp(1j * np.concatenate([theta, -theta])))
        sp = transmission_spectrum(TransferMatrix(m0, "wave"))
        assert np.all(sp.values == 1.0)

    def test_hyperbolic_boost(self):
        sp = transmission_spectrum(hyperbolic_boost(1.3))
        assert sp.values[0] == pytest.approx(1.0 / math.cosh(1.3) ** 2, rel=1e-12)

    def test_log_scale_respected(self):
        m = hyperbolic_boost(2.0)
        scaled = TransferMatrix(m.matrix * math.exp(-3.0), "wave", log_scale=3.0)
        a = transmission_spectrum(m)
        b = transmission_spectrum(scaled)
        assert a.values[0] == pytest.approx(b.values[0], rel=1e-12)
        assert a.log_values[0] == pytest.approx(b.log_values[0], rel=1e-12)
        res = group_residuals(scaled)
        assert res.current < 1e-12

    def test_not_in_group_rejected(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
        with pytest.raises(NotInGroup):
            transmission_spectrum(TransferMatrix(m, "wave"))

    def test_clamp_discipline(self):
        # a matrix inside the residual gate whose T overshoots 1 beyond the
        # clamp tolerance must be refused, not silently clamped
        eps = 2e-4
        alpha = (1.0 - eps) * np.eye(1)
        m = np.zeros((2, 2), dtype=complex)
        m[:1, :1] = alpha
        m[1:, 1:] = alpha.conj()
        with pytest.raises(NotInGroup):
            transmission_spectrum(TransferMatrix(m, "wave"), residual_tol=1e-3)

    def test_deep_localization_logs_are_finite(self):
        # T ~ e^{-800} underflows in linear scale; the log route stays exact
        from dmpkwire.transport import spectrum_from_log_singular_values

        # singular value of the boost alpha block: cosh(x) = e^x (1 + e^{-2x})/2
        x = 400.0
        log_sv = np.array([x + math.log1p(math.exp(-2 * x)) - math.log(2.0)])
        sp = spectrum_from_log_singular_values(log_sv)
        assert sp.values[0] == 0.0
        assert sp.log_values[0] == pytest.approx(-2 * x + 2 * math.log(2), rel=1e-12)
        assert np.isfinite(sp.log_conductance)


class TestCartan:
    def test_identity(self):
        f = cartan_decompose(TransferMatrix(np.eye(6, dtype=complex), "wave"))
        assert np.allclose(f.transmission, 1.0)
        assert np.allclose(f.u @ f.u.conj().T, np.eye(3), atol=1e-12)
        assert np.abs(f.reassemble() - np.eye(6)).max() < 1e-12

    def test_group_element_roundtrip(self):
        for seed in range(5):
            m = lie_group_element(2, scale=1.5, seed=seed)
            f = cartan_decompose(m)
            assert np.abs(f.reassemble() - m.matrix).max() < 1e-8

    def test_sign_gauge_invariance(self):
        # flipping signs via any diagonal +-1 matrix reproduces the same M
        m = lie_group_element(3, scale=0.7, seed=4)
        f = cartan_decompose(m)
        rng = np.random.default_rng(0)
        for _ in range(4):
            a = np.diag(rng.choice([-1.0, 1.0], size=3))
            flipped = type(f)(u=f.u @ a, v=a @ f.v,
                              transmission=f.transmission, degenerate=f.degenerate)
            assert np.abs(flipped.reassemble() - f.reassemble()).max() < 1e-10

    def test_canonical_representative_deterministic(self):
        m = lie_group_element(2, scale=0.5, seed=5)
        f1 = cartan_decompose(m)
        f2 = cartan_decompose(m)
        assert np.array_equal(f1.u, f2.u) and np.array_equal(f1.v, f2.v)

    def test_degenerate_flag(self):
        f = cartan_decompose(TransferMatrix(np.eye(4, dtype=complex), "wave"))
        assert f.degenerate  # all T exactly 1


class TestScattering:
    def test_identity_transmits(self):
        s = scattering_from_transfer(TransferMatrix(np.eye(8, dtype=complex), "wave"))
        n = 4
        assert np.allclose(s[:n, :n], 0)
        assert np.allclose(s[:n, n:], np.eye(n))
        assert np.allclose(s[n:, :n], np.eye(n))
        assert np.allclose(s[n:, n:], 0)

    def test_micro_wire_unitarity(self, ring_config):
        res = run_microscopic(ring_config, seed=31)
        s = scattering_from_transfer(res.transfer)
        assert np.abs(s.conj().T @ s - np.eye(8)).max() < 1e-9

    def test_conductance_cross_check(self, ring_config):
        res = run_microscopic(ring_config, seed=32)
        sp = transmission_spectrum(res.transfer)
        s = scattering_from_transfer(res.transfer)
        t_from_s = transmission_from_scattering(s)
        assert np.abs(t_from_s - sp.values).max() < 1e-10
        n = 4
        t = s[n:, :n]
        assert np.trace(t.conj().T @ t).real == pytest.approx(sp.conductance,
                                                              abs=1e-10)

    def test_real_frame_scattering_is_symmetric(self):
        # with time reversal intact, S equals its transpose
        basis = real_chain_basis(4)
        rng = np.random.default_rng(6)
        total = np.eye(8, dtype=complex)
        for _ in range(60):
            total = slice_transfer_wave(
                basis, DisorderSlice(rng.standard_normal(4)), 0.4).matrix @ total
        s = scattering_from_transfer(TransferMatrix(total, "wave"))
        assert np.abs(s - s.T).max() < 1e-9


class TestInvariants:
    def test_gauge_invariance_of_conductance(self, ring_config):
        res = run_microscopic(ring_config, seed=33)
        g0 = transmission_spectrum(res.transfer).conductance
        rng = np.random.default_rng(7)
        for _ in range(3):
            w, _ = np.linalg.qr(rng.standard_normal((4, 4))
                                + 1j * rng.standard_normal((4, 4)))
            wp, _ = np.linalg.qr(rng.standard_normal((4, 4))
                                 + 1j * rng.standard_normal((4, 4)))
            rot_l = np.zeros((8, 8), dtype=complex)
            rot_l[:4, :4] = w
            rot_l[4:, 4:] = w.conj()
            rot_r = np.zeros((8, 8), dtype=complex)
            rot_r[:4, :4] = wp
            rot_r[4:, 4:] = wp.conj()
            rotated = TransferMatrix(rot_l @ res.transfer.matrix @ rot_r, "wave",
                                     res.transfer.log_scale)
            g1 = transmission_spectrum(rotated).conductance
            assert g1 == pytest.approx(g0, abs=1e-9)

    @settings(max_examples=20, deadline=None)
    @given(st.integers(min_value=0, max_value=10**6),
           st.integers(min_value=0, max_value=10**6))
    def test_multiplicativity_stays_in_group(self, seed_a, seed_b):
        # real-frame slices compose inside the group: residuals stay at rounding
        basis = real_chain_basis(3)
        rng_a = np.random.default_rng(seed_a)
        rng_b = np.random.default_rng(seed_b)
        ma = slice_transfer_wave(basis, DisorderSlice(rng_a.standard_normal(3)), 0.5)
        mb = slice_transfer_wave(basis, DisorderSlice(rng_b.standard_normal(3)), 0.5)
        prod = TransferMatrix(ma.matrix @ mb.matrix, "wave")
        res = group_residuals(prod)
        assert res.current < 1e-12
        assert res.time_reversal < 1e-12

    def test_sigma_matrices(self):
        assert np.allclose(sigma_z(2) @ sigma_z(2), np.eye(4))
        assert np.allclose(sigma_x(2) @ sigma_x(2), np.eye(4))
