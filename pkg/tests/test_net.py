"""Denoising network: feature construction, parameter layout, forward paths,
analytic gradients, structural invariances."""

import numpy as np
import pytest
from numpy.random import SeedSequence, default_rng

from gd4mimo.instances import ProblemInstance, canonical_scale, sample_instance
from gd4mimo.net import (
    NetworkParams,
    backward_batch,
    eval_count,
    forward,
    forward_batch,
    init_graph_features,
    normalize_symbols,
    reset_eval_count,
    sinusoidal_embed,
)


def random_features(rng, n, scale=0.8):
    node = rng.normal(0.0, scale, size=(1, n, 3))
    edge = rng.normal(0.0, scale, size=(1, n, n, 2))
    return node, edge


class TestGraphFeatures:
    def test_values_match_definitions(self):
        inst = sample_instance(default_rng(SeedSequence([80])), 3, 3, 2, 15.0)
        feats = init_graph_features(inst)
        n = inst.n_symbols
        for i in range(n):
            h_i = inst.H[:, i]
            assert feats.node_raw[i, 0] == pytest.approx(inst.y @ h_i, rel=1e-12)
            assert feats.node_raw[i, 1] == pytest.approx(h_i @ h_i, rel=1e-12)
            assert feats.node_raw[i, 2] == pytest.approx(inst.sigma_n**2, rel=1e-12)
            for j in range(n):
                h_j = inst.H[:, j]
                assert feats.edge_raw[i, j, 0] == pytest.approx(-h_i @ h_j, rel=1e-12)
                assert feats.edge_raw[i, j, 1] == pytest.approx(inst.sigma_n**2)

    def test_canonical_gauge_keeps_features_order_one(self):
        # raw features grow with the antenna count; the canonical gauge pins
        # the Frobenius mass so they stay O(1) at any size
        for n_tx in (2, 8, 16):
            inst = sample_instance(
                default_rng(SeedSequence([81, n_tx])), n_tx, n_tx, 2, 20.0
            )
            feats = init_graph_features(canonical_scale(inst))
            assert float(np.mean(np.abs(feats.node_raw[:, 1]))) == pytest.approx(
                1.0, abs=0.5
            )


class TestNormalizeSymbols:
    def test_k2_map(self):
        s = normalize_symbols(np.array([1, 2, 3, 4]), 2)
        np.testing.assert_allclose(s, [-1.0, -1 / 3, 1 / 3, 1.0])

    def test_k1_map(self):
        np.testing.assert_allclose(normalize_symbols(np.array([1, 2]), 1), [-1.0, 1.0])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            normalize_symbols(np.array([0]), 2)
        with pytest.raises(ValueError):
            normalize_symbols(np.array([5]), 2)

    def test_jitter_needs_rng(self):
        with pytest.raises(ValueError):
            normalize_symbols(np.array([1]), 2, train_mode=True)

    def test_jitter_reproducible(self):
        a = normalize_symbols(
            np.array([2, 3]), 2, rng=default_rng(SeedSequence([82])), train_mode=True
        )
        b = normalize_symbols(
            np.array([2, 3]), 2, rng=default_rng(SeedSequence([82])), train_mode=True
        )
        np.testing.assert_array_equal(a, b)
        clean = normalize_symbols(np.array([2, 3]), 2)
        assert not np.array_equal(a, clean)
        assert np.max(np.abs(a - clean)) < 0.5


class TestSinusoidalEmbed:
    def test_closed_form(self):
        d = 6
        x = 3.7
        emb = sinusoidal_embed(x, d)
        j = np.arange(1, 4)
        div = 10000.0 ** (2.0 * j / d)
        np.testing.assert_allclose(emb[0::2], np.sin(x / div), atol=1e-15)
        np.testing.assert_allclose(emb[1::2], np.cos(x / div), atol=1e-15)

    def test_odd_width_rejected(self):
        with pytest.raises(ValueError):
            sinusoidal_embed(1.0, 5)

    def test_batched_shape(self):
        emb = sinusoidal_embed(np.zeros((3, 4)), 8)
        assert emb.shape == (3, 4, 8)
        np.testing.assert_allclose(emb[..., 0::2], 0.0, atol=1e-15)
        np.testing.assert_allclose(emb[..., 1::2], 1.0, atol=1e-15)


class TestNetworkParams:
    def test_parameter_count(self):
        D, L = 8, 3
        p = NetworkParams(D, L)
        expect = (D * 3 + D) + (D * 2 * D + D) + (D * 2 + D)
        expect += L * (D * 3 * D + D + 3 * (D * D + D))
        expect += 2 * D + 2
        assert p.n_params == expect

    def test_views_alias_flat_vector(self):
        p = NetworkParams.init(4, 1, default_rng(SeedSequence([83])))
        p.flat[:] = 0.0
        assert np.all(p.blocks["mlp2_w"] == 0.0)
        p.blocks["out_b"][:] = 5.0
        assert np.any(p.flat == 5.0)

    def test_copy_is_independent(self):
        p = NetworkParams.init(4, 1, default_rng(SeedSequence([84])))
        q = p.copy()
        q.flat[:] = 0.0
        assert not np.all(p.flat == 0.0)

    def test_init_deterministic(self):
        a = NetworkParams.init(8, 2, default_rng(SeedSequence([85])))
        b = NetworkParams.init(8, 2, default_rng(SeedSequence([85])))
        np.testing.assert_array_equal(a.flat, b.flat)

    def test_validation(self):
        with pytest.raises(ValueError):
            NetworkParams(5, 1)
        with pytest.raises(ValueError):
            NetworkParams(4, 0)
        with pytest.raises(ValueError):
            NetworkParams(4, 1, flat=np.zeros(3))


class TestForward:
    def test_rows_are_distributions(self):
        params = NetworkParams.init(8, 2, default_rng(SeedSequence([86])))
        inst = sample_instance(default_rng(SeedSequence([87])), 3, 3, 2, 15.0)
        xt = np.array([1, 2, 3, 4, 1, 2])
        P = forward(params, inst, xt, 10)
        assert P.shape == (6, 4)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(P >= 0.0)

    def test_single_equals_batched(self):
        # the compiled single-instance path and the python training path
        # must produce the same probabilities
        params = NetworkParams.init(8, 3, default_rng(SeedSequence([88])))
        inst = sample_instance(default_rng(SeedSequence([89])), 2, 2, 2, 12.0)
        xt = np.array([4, 1, 2, 3])
        t = 37
        P1 = forward(params, inst, xt, t)
        feats = init_graph_features(canonical_scale(inst))
        P2 = forward_batch(
            params, feats.node_raw[None], feats.edge_raw[None],
            xt[None], np.array([t]), inst.k,
        )[0]
        np.testing.assert_allclose(P1, P2, rtol=1e-10, atol=1e-12)

    def test_joint_scale_invariance(self):
        params = NetworkParams.init(8, 2, default_rng(SeedSequence([90])))
        inst = sample_instance(default_rng(SeedSequence([91])), 3, 3, 2, 18.0)
        scaled = ProblemInstance(
            H=7.3 * inst.H, y=7.3 * inst.y, sigma_n=7.3 * inst.sigma_n,
            k=inst.k, x_star=inst.x_star, snr_db=inst.snr_db,
        )
        xt = np.array([2, 2, 1, 4, 3, 1])
        np.testing.assert_allclose(
            forward(params, inst, xt, 5), forward(params, scaled, xt, 5),
            rtol=1e-9, atol=1e-12,
        )

    def test_permutation_equivariance(self):
        params = NetworkParams.init(8, 2, default_rng(SeedSequence([92])))
        inst = sample_instance(default_rng(SeedSequence([93])), 3, 3, 2, 15.0)
        perm = np.array([3, 0, 4, 1, 5, 2])
        xt = np.array([1, 3, 2, 4, 2, 1])
        P = forward(params, inst, xt, 20)
        inst_p = ProblemInstance(
            H=inst.H[:, perm], y=inst.y, sigma_n=inst.sigma_n, k=inst.k,
        )
        P_p = forward(params, inst_p, xt[perm], 20)
        np.testing.assert_allclose(P_p, P[perm], rtol=1e-9, atol=1e-12)

    def test_step_conditioning_changes_output(self):
        params = NetworkParams.init(8, 2, default_rng(SeedSequence([94])))
        inst = sample_instance(default_rng(SeedSequence([95])), 2, 2, 2, 15.0)
        xt = np.array([1, 2, 3, 4])
        P1 = forward(params, inst, xt, 1)
        P2 = forward(params, inst, xt, 90)
        assert np.max(np.abs(P1 - P2)) > 1e-6

    def test_eval_counter(self):
        params = NetworkParams.init(4, 1, default_rng(SeedSequence([96])))
        inst = sample_instance(default_rng(SeedSequence([97])), 2, 2, 2, 15.0)
        reset_eval_count()
        forward(params, inst, np.array([1, 1, 1, 1]), 3)
        assert eval_count() == 1
        feats = init_graph_features(inst)
        forward_batch(
            params,
            np.repeat(feats.node_raw[None], 5, axis=0),
            np.repeat(feats.edge_raw[None], 5, axis=0),
            np.ones((5, 4), dtype=np.int64),
            np.full(5, 2),
            2,
        )
        assert eval_count() == 6
        reset_eval_count()
        assert eval_count() == 0

    def test_train_mode_jitter_reproducible(self):
        params = NetworkParams.init(8, 2, default_rng(SeedSequence([98])))
        inst = sample_instance(default_rng(SeedSequence([99])), 2, 2, 2, 15.0)
        xt = np.array([2, 3, 1, 4])
        a = forward(params, inst, xt, 7, train_mode=True, rng=default_rng(SeedSequence([100])))
        b = forward(params, inst, xt, 7, train_mode=True, rng=default_rng(SeedSequence([100])))
        np.testing.assert_array_equal(a, b)
        c = forward(params, inst, xt, 7)
        assert np.max(np.abs(a - c)) > 0.0


class TestHeadConditioning:
    def test_fresh_init_is_not_saturated(self):
        # the output head must start responsive: a saturated tanh mean or a
        # clamped log-std has an exactly-zero gradient and freezes training
        params = NetworkParams.init(32, 6, default_rng(SeedSequence([0, 2**32])))
        for seed in range(5):
            inst = sample_instance(default_rng(SeedSequence([101, seed])), 4, 4, 2, 20.0)
            feats = init_graph_features(canonical_scale(inst))
            xt = np.ones(8, dtype=np.int64)
            _, cache = forward_batch(
                params, feats.node_raw[None], feats.edge_raw[None],
                xt[None], np.array([50]), 2, want_cache=True,
            )
            assert np.all(np.abs(cache["mu"]) < 1.0 - 1e-9)
            assert np.all(cache["rho"] > -7.0)
            assert np.all(cache["rho"] < 2.0)


class TestGradients:
    def test_analytic_matches_finite_differences(self):
        rng = default_rng(SeedSequence([102]))
        params = NetworkParams.init(8, 2, rng)
        n = 4
        node, edge = random_features(rng, n)
        xt = rng.integers(1, 5, size=(1, n))
        t = np.array([13])
        cvec = rng.normal(size=(1, n, 4))

        def loss_at(flat):
            p = NetworkParams(8, 2, flat=flat)
            P = forward_batch(p, node, edge, xt, t, 2)
            return float(np.sum(cvec * P))

        P, cache = forward_batch(params, node, edge, xt, t, 2, want_cache=True)
        grad = backward_batch(params, cache, cvec)
        assert grad.shape == (params.n_params,)

        h = 1e-5
        coords = rng.choice(params.n_params, size=12, replace=False)
        for c in coords:
            fp = params.flat.copy()
            fm = params.flat.copy()
            fp[c] += h
            fm[c] -= h
            fd = (loss_at(fp) - loss_at(fm)) / (2 * h)
            denom = max(abs(fd), abs(grad[c]), 1e-8)
            assert abs(fd - grad[c]) / denom < 1e-4, f"coordinate {c}"

    def test_literal_gate_variant_gradients(self):
        rng = default_rng(SeedSequence([103]))
        params = NetworkParams.init(6, 1, rng, literal_gate=True)
        node, edge = random_features(rng, 3)
        xt = rng.integers(1, 5, size=(1, 3))
        t = np.array([5])
        cvec = rng.normal(size=(1, 3, 4))

        def loss_at(flat):
            p = NetworkParams(6, 1, flat=flat, literal_gate=True)
            return float(np.sum(cvec * forward_batch(p, node, edge, xt, t, 2)))

        _, cache = forward_batch(params, node, edge, xt, t, 2, want_cache=True)
        grad = backward_batch(params, cache, cvec)
        h = 1e-5
        for c in rng.choice(params.n_params, size=8, replace=False):
            fp = params.flat.copy()
            fm = params.flat.copy()
            fp[c] += h
            fm[c] -= h
            fd = (loss_at(fp) - loss_at(fm)) / (2 * h)
            denom = max(abs(fd), abs(grad[c]), 1e-8)
            assert abs(fd - grad[c]) / denom < 1e-4
