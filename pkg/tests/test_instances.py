"""Instance pipeline: complex -> real -> shifted coordinates, SNR accounting,
regularization, canonical gauge, serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.random import SeedSequence, default_rng

from gd4mimo.instances import (
    ComplexSystem,
    Constellation,
    ProblemInstance,
    RealSystem,
    canonical_scale,
    inverse_transform,
    load_instance,
    realify,
    regularize,
    sample_instance,
    save_instance,
    sigma_from_snr,
    transform,
)


def random_complex_system(rng, n_rx=4, n_tx=4, k=2, sigma_c=0.3):
    const = Constellation(k)
    H_c = rng.normal(size=(n_rx, n_tx)) + 1j * rng.normal(size=(n_rx, n_tx))
    x_c = rng.choice(const.real_alphabet, size=n_tx) + 1j * rng.choice(
        const.real_alphabet, size=n_tx
    )
    noise = sigma_c / np.sqrt(2) * (
        rng.normal(size=n_rx) + 1j * rng.normal(size=n_rx)
    )
    y_c = H_c @ x_c + noise
    return ComplexSystem(H_c=H_c, y_c=y_c, sigma_c=sigma_c, x_c=x_c)


class TestConstellation:
    def test_levels_and_alphabet(self):
        c = Constellation(2)
        assert c.levels == 4
        assert c.real_alphabet.tolist() == [-3, -1, 1, 3]

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_symbol_variance_closed_form(self, k):
        # enumeration in the class must agree with (4^k - 1)/3
        assert Constellation(k).symbol_variance == pytest.approx(
            (4.0**k - 1.0) / 3.0, rel=1e-12
        )

    def test_rejects_nonpositive_k(self):
        with pytest.raises(ValueError):
            Constellation(0)


class TestRealify:
    def test_residual_preserved(self):
        rng = default_rng(SeedSequence([10]))
        cs = random_complex_system(rng)
        rs = realify(cs)
        res_c = np.sum(np.abs(cs.y_c - cs.H_c @ cs.x_c) ** 2)
        res_r = np.sum((rs.y_r - rs.H_r @ rs.x_r) ** 2)
        assert res_r == pytest.approx(res_c, rel=1e-12)

    def test_block_structure(self):
        rng = default_rng(SeedSequence([11]))
        cs = random_complex_system(rng, n_rx=3, n_tx=2)
        rs = realify(cs)
        n_rx, n_tx = 3, 2
        assert rs.H_r.shape == (2 * n_rx, 2 * n_tx)
        np.testing.assert_allclose(rs.H_r[:n_rx, :n_tx], cs.H_c.real)
        np.testing.assert_allclose(rs.H_r[:n_rx, n_tx:], -cs.H_c.imag)
        np.testing.assert_allclose(rs.H_r[n_rx:, :n_tx], cs.H_c.imag)
        np.testing.assert_allclose(rs.H_r[n_rx:, n_tx:], cs.H_c.real)
        assert rs.sigma_n == pytest.approx(cs.sigma_c / np.sqrt(2))


class TestTransform:
    def test_residual_preserved_and_symbols_shifted(self):
        rng = default_rng(SeedSequence([12]))
        cs = random_complex_system(rng, k=2)
        rs = realify(cs)
        inst = transform(rs, 2)
        assert inst.x_star is not None
        assert np.all(inst.x_star >= 1) and np.all(inst.x_star <= 4)
        res_r = np.sum((rs.y_r - rs.H_r @ rs.x_r) ** 2)
        assert inst.residual_sq(inst.x_star) == pytest.approx(res_r, rel=1e-10)

    def test_round_trip_through_inverse(self):
        rng = default_rng(SeedSequence([13]))
        for k in (1, 2, 3):
            cs = random_complex_system(rng, k=k)
            rs = realify(cs)
            inst = transform(rs, k)
            np.testing.assert_array_equal(
                inverse_transform(inst.x_star, k), rs.x_r
            )

    def test_rejects_even_symbols(self):
        H_r = np.eye(2)
        rs = RealSystem(H_r=H_r, y_r=np.zeros(2), sigma_n=0.1, x_r=np.array([2, 1]))
        with pytest.raises(ValueError, match="odd integers"):
            transform(rs, 1)

    def test_inverse_transform_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            inverse_transform(np.array([0]), 2)
        with pytest.raises(ValueError):
            inverse_transform(np.array([5]), 2)

    @given(
        k=st.integers(min_value=1, max_value=4),
        data=st.data(),
    )
    @settings(max_examples=30, deadline=None)
    def test_shift_bijection_property(self, k, data):
        levels = 2**k
        xs = data.draw(
            st.lists(
                st.integers(min_value=1, max_value=levels), min_size=1, max_size=8
            )
        )
        shifted = np.array(xs, dtype=np.int64)
        real = inverse_transform(shifted, k)
        assert np.all(real % 2 != 0)
        assert np.all(np.abs(real) <= levels - 1)
        np.testing.assert_array_equal((real + levels + 1) // 2, shifted)


class TestSnr:
    def test_sigma_matches_empirical_snr(self):
        # E||H_c x_c||^2 / E||n_c||^2 should hit the target ratio
        rng = default_rng(SeedSequence([14]))
        n_tx = n_rx = 4
        k = 2
        snr_db = 12.0
        sig = 0.0
        noi = 0.0
        for _ in range(4000):
            inst_rng = default_rng(rng.integers(0, 2**63))
            inst = sample_instance(inst_rng, n_tx, n_rx, k, snr_db)
            # shifted system: signal part is H(x - midpoint shift)/1 in real coords
            real_x = inverse_transform(inst.x_star, k)
            H_r = inst.H / 2.0
            sig += float(np.sum((H_r @ real_x) ** 2))
            noi += 2 * n_rx * inst.sigma_n**2
        measured_db = 10 * np.log10(sig / noi)
        assert measured_db == pytest.approx(snr_db, abs=0.15)

    def test_sigma_from_snr_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            sigma_from_snr(float("inf"), 4, 4, Constellation(2))


class TestSampleInstance:
    def test_deterministic_given_seed(self):
        a = sample_instance(default_rng(SeedSequence([15])), 4, 4, 2, 20.0)
        b = sample_instance(default_rng(SeedSequence([15])), 4, 4, 2, 20.0)
        np.testing.assert_array_equal(a.H, b.H)
        np.testing.assert_array_equal(a.y, b.y)
        np.testing.assert_array_equal(a.x_star, b.x_star)
        assert a.sigma_n == b.sigma_n

    def test_shapes_and_metadata(self):
        inst = sample_instance(default_rng(SeedSequence([16])), 3, 5, 3, 18.0)
        assert inst.H.shape == (10, 6)
        assert inst.n_symbols == 6
        assert inst.k == 3
        assert inst.snr_db == 18.0
        assert not inst.regularized

    def test_arrays_frozen(self):
        inst = sample_instance(default_rng(SeedSequence([17])), 2, 2, 2, 20.0)
        with pytest.raises(ValueError):
            inst.H[0, 0] = 0.0


class TestRegularize:
    def test_residual_identity(self):
        # augmented residual = plain residual + lambda^2 ||x_r||^2
        rng = default_rng(SeedSequence([18]))
        inst = sample_instance(rng, 4, 3, 2, 15.0)
        reg = regularize(inst)
        lam = inst.sigma_n / np.sqrt(inst.constellation.symbol_variance)
        for _ in range(20):
            x = rng.integers(1, 5, size=inst.n_symbols)
            real_x = inverse_transform(x, 2)
            expect = inst.residual_sq(x) + lam**2 * float(np.sum(real_x**2))
            assert reg.residual_sq(x) == pytest.approx(expect, rel=1e-10)

    def test_full_column_rank(self):
        inst = sample_instance(default_rng(SeedSequence([19])), 4, 2, 2, 15.0)
        reg = regularize(inst)
        assert np.linalg.matrix_rank(reg.H) == reg.n_symbols

    def test_double_regularize_rejected(self):
        inst = sample_instance(default_rng(SeedSequence([20])), 2, 2, 2, 15.0)
        with pytest.raises(ValueError, match="already regularized"):
            regularize(regularize(inst))

    def test_zero_noise_rejected(self):
        inst = ProblemInstance(H=np.eye(2), y=np.zeros(2), sigma_n=0.0, k=1)
        with pytest.raises(ValueError, match="sigma_n > 0"):
            regularize(inst)


class TestCanonicalScale:
    def test_unit_frobenius_gauge(self):
        inst = sample_instance(default_rng(SeedSequence([21])), 4, 4, 2, 20.0)
        scaled = canonical_scale(inst)
        assert np.linalg.norm(scaled.H) ** 2 == pytest.approx(
            scaled.n_symbols, rel=1e-12
        )

    def test_detection_invariant(self):
        from gd4mimo.lattice import babai_box, brute_force_ils, qr_factor

        rng = default_rng(SeedSequence([22]))
        for _ in range(10):
            inst = sample_instance(rng, 2, 2, 2, 14.0)
            scaled = canonical_scale(inst)
            b0 = babai_box(qr_factor(inst.H, inst.y), inst.k).x_hat
            b1 = babai_box(qr_factor(scaled.H, scaled.y), scaled.k).x_hat
            np.testing.assert_array_equal(b0, b1)
            np.testing.assert_array_equal(
                brute_force_ils(inst).x_hat, brute_force_ils(scaled).x_hat
            )

    def test_idempotent(self):
        inst = sample_instance(default_rng(SeedSequence([23])), 3, 3, 2, 20.0)
        once = canonical_scale(inst)
        twice = canonical_scale(once)
        np.testing.assert_allclose(twice.H, once.H, rtol=1e-15)


class TestSerialization:
    def test_round_trip(self, tmp_path):
        inst = sample_instance(default_rng(SeedSequence([24])), 3, 4, 2, 17.5)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        back = load_instance(path)
        np.testing.assert_array_equal(back.H, inst.H)
        np.testing.assert_array_equal(back.y, inst.y)
        np.testing.assert_array_equal(back.x_star, inst.x_star)
        assert back.sigma_n == inst.sigma_n
        assert back.k == inst.k
        assert back.snr_db == inst.snr_db
        assert back.regularized == inst.regularized

    def test_round_trip_without_truth(self, tmp_path):
        inst = ProblemInstance(H=np.eye(2), y=np.ones(2), sigma_n=0.1, k=1)
        path = tmp_path / "inst.json"
        save_instance(inst, path)
        back = load_instance(path)
        assert back.x_star is None
        assert np.isnan(back.snr_db)


class TestValidation:
    def test_shape_mismatches_rejected(self):
        with pytest.raises(ValueError):
            ProblemInstance(H=np.eye(2), y=np.zeros(3), sigma_n=0.1, k=1)
        with pytest.raises(ValueError):
            ProblemInstance(
                H=np.eye(2), y=np.zeros(2), sigma_n=0.1, k=1,
                x_star=np.array([1, 1, 1]),
            )

    def test_out_of_box_truth_rejected(self):
        with pytest.raises(ValueError):
            ProblemInstance(
                H=np.eye(2), y=np.zeros(2), sigma_n=0.1, k=1,
                x_star=np.array([1, 3]),
            )
