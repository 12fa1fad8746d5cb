import logging

import numpy as np
import pytest

from pansharp.baselines import (
    BASELINES,
    FusionInput,
    gs_components,
    gs_fuse,
    hist_match,
    ihs_fuse,
    mtf_glp_hpm_fuse,
    pca_fuse,
    prepare_fusion_input,
)
from pansharp.raster import RasterImage


def make_input(h=16, w=16, seed=0, r=4):
    """Random but well-conditioned MS/PAN pair on the same grid, values in [-1, 1]."""
    rng = np.random.default_rng(seed)
    ms = rng.uniform(-0.6, 0.6, size=(4, h, w)).astype(np.float32)
    pan = rng.uniform(-0.6, 0.6, size=(1, h, w)).astype(np.float32)
    return FusionInput(ms_up=RasterImage(ms), pan=RasterImage(pan), r=r)


def to01(arr):
    return (np.asarray(arr, dtype=np.float64) + 1.0) / 2.0


class TestFusionInput:
    def test_validation(self):
        ms = RasterImage(np.zeros((4, 8, 8), dtype=np.float32))
        pan = RasterImage(np.zeros((1, 8, 8), dtype=np.float32))
        FusionInput(ms_up=ms, pan=pan, r=4)
        with pytest.raises(ValueError):
            FusionInput(ms_up=pan, pan=pan, r=4)
        with pytest.raises(ValueError):
            FusionInput(ms_up=ms, pan=ms, r=4)
        with pytest.raises(ValueError):
            FusionInput(ms_up=ms, pan=RasterImage(np.zeros((1, 4, 4), dtype=np.float32)), r=4)
        with pytest.raises(ValueError):
            FusionInput(ms_up=ms, pan=pan, r=1)

    def test_prepare_upsamples(self):
        ms = RasterImage(np.random.default_rng(0).uniform(-1, 1, (4, 4, 4)).astype(np.float32))
        pan = RasterImage(np.zeros((1, 16, 16), dtype=np.float32))
        inp = prepare_fusion_input(ms, pan, 4)
        assert inp.ms_up.data.shape == (4, 16, 16)
        with pytest.raises(ValueError):
            prepare_fusion_input(ms, RasterImage(np.zeros((1, 8, 8), dtype=np.float32)), 4)


class TestHistMatch:
    def test_defining_property(self):
        rng = np.random.default_rng(1)
        src = rng.uniform(0, 1, 500)
        ref = rng.uniform(0.3, 0.8, 500)
        out = hist_match(src, ref)
        assert out.mean() == pytest.approx(ref.mean(), abs=1e-6)
        assert out.std() == pytest.approx(ref.std(), abs=1e-6)

    def test_fixed_point(self):
        rng = np.random.default_rng(2)
        ref = rng.uniform(0, 1, 300)
        np.testing.assert_allclose(hist_match(ref, ref), ref, atol=1e-6)

    def test_idempotent(self):
        rng = np.random.default_rng(3)
        src = rng.uniform(0, 1, 300)
        ref = rng.uniform(0.2, 0.9, 300)
        once = hist_match(src, ref)
        np.testing.assert_allclose(hist_match(once, ref), once, atol=1e-6)

    def test_constant_source_warns(self, caplog):
        ref = np.random.default_rng(4).uniform(0, 1, 100)
        with caplog.at_level(logging.WARNING):
            out = hist_match(np.full(100, 0.5), ref)
        np.testing.assert_allclose(out, ref.mean())
        assert any("variance" in rec.message for rec in caplog.records)


class TestIhs:
    def test_zero_injection_identity(self):
        inp = make_input(seed=5)
        ms01 = to01(inp.ms_up.data)
        intensity = ms01.mean(axis=0)
        pan = RasterImage((2.0 * intensity - 1.0)[None].astype(np.float32))
        out = ihs_fuse(FusionInput(ms_up=inp.ms_up, pan=pan, r=4))
        np.testing.assert_allclose(out.data, inp.ms_up.data, atol=1e-5)

    def test_band_mean_equals_matched_pan(self):
        inp = make_input(seed=6)
        out = to01(ihs_fuse(inp).data)
        ms01, pan01 = to01(inp.ms_up.data), to01(inp.pan.data[0])
        matched = hist_match(pan01, ms01.mean(axis=0))
        np.testing.assert_allclose(out.mean(axis=0), matched, atol=1e-6)

    def test_direct_formula(self):
        inp = make_input(h=8, w=8, seed=7)
        ms01, pan01 = to01(inp.ms_up.data), to01(inp.pan.data[0])
        intensity = ms01.mean(axis=0)
        expected = ms01 + (hist_match(pan01, intensity) - intensity)[None]
        np.testing.assert_allclose(to01(ihs_fuse(inp).data), expected, atol=1e-6)


class TestPca:
    def test_round_trip_without_substitution(self):
        # projecting and reconstructing with PC1 untouched must be the identity
        inp = make_input(seed=8)
        ms01 = to01(inp.ms_up.data)
        flat = ms01.reshape(4, -1)
        mu = flat.mean(axis=1, keepdims=True)
        cov = np.cov(flat, bias=True)
        _, vecs = np.linalg.eigh(cov)
        recon = vecs @ (vecs.T @ (flat - mu)) + mu
        np.testing.assert_allclose(recon, flat, atol=1e-5)

    def test_fixed_point_when_pan_is_pc1(self):
        inp = make_input(seed=9)
        ms01 = to01(inp.ms_up.data)
        flat = ms01.reshape(4, -1)
        centered = flat - flat.mean(axis=1, keepdims=True)
        cov = (centered @ centered.T) / centered.shape[1]
        vals, vecs = np.linalg.eigh(cov)
        pc1 = vecs[:, np.argmax(vals)] @ centered
        # any positive affine image of PC1 hist-matches back onto PC1 exactly
        pan01 = (0.3 * pc1 + 0.5).reshape(inp.pan.data.shape[1:])
        pan = RasterImage((2.0 * pan01 - 1.0)[None].astype(np.float64))
        out = pca_fuse(FusionInput(ms_up=inp.ms_up.with_data(inp.ms_up.data.astype(np.float64)), pan=pan, r=4))
        np.testing.assert_allclose(to01(out.data), ms01, atol=1e-5)

    def test_variances_ordered(self):
        inp = make_input(seed=10)
        ms01 = to01(inp.ms_up.data)
        flat = ms01.reshape(4, -1)
        centered = flat - flat.mean(axis=1, keepdims=True)
        cov = (centered @ centered.T) / centered.shape[1]
        vals = np.sort(np.linalg.eigvalsh(cov))[::-1]
        # oracle: component-score variances equal the sorted eigenvalues
        scores_var = np.sort(np.var(np.linalg.eigh(cov)[1].T @ centered, axis=1))[::-1]
        np.testing.assert_allclose(scores_var, vals, atol=1e-10)
        assert vals[0] == np.max(vals)

    def test_rank_deficient_raises(self):
        base = np.random.default_rng(11).uniform(-0.5, 0.5, (1, 8, 8)).astype(np.float32)
        ms = RasterImage(np.repeat(base, 4, axis=0))   # rank-1 covariance
        pan = RasterImage(np.random.default_rng(12).uniform(-0.5, 0.5, (1, 8, 8)).astype(np.float32))
        with pytest.raises(ValueError, match="rank"):
            pca_fuse(FusionInput(ms_up=ms, pan=pan, r=4))

    def test_output_shape_and_determinism(self):
        inp = make_input(seed=13)
        a = pca_fuse(inp).data
        b = pca_fuse(inp).data
        assert a.shape == (4, 16, 16)
        np.testing.assert_array_equal(a, b)


class TestGs:
    def test_zero_substitution_identity(self):
        inp = make_input(seed=14)
        ms01 = to01(inp.ms_up.data)
        intensity = ms01.mean(axis=0)
        pan = RasterImage((2.0 * intensity - 1.0)[None].astype(np.float32))
        out = gs_fuse(FusionInput(ms_up=inp.ms_up, pan=pan, r=4))
        np.testing.assert_allclose(out.data, inp.ms_up.data, atol=1e-5)

    def test_components_mutually_orthogonal(self):
        inp = make_input(seed=15)
        t0, comps, _ = gs_components(inp)
        vectors = [t0] + list(comps)
        scale = max(float(v @ v) for v in vectors)
        for i in range(len(vectors)):
            for j in range(i + 1, len(vectors)):
                assert abs(float(vectors[i] @ vectors[j])) < 1e-8 * scale

    def test_matches_independent_projection_oracle(self):
        # re-derive the GS coefficients as least-squares projections
        inp = make_input(h=6, w=6, seed=16)
        t0, comps, coeffs = gs_components(inp)
        ms01 = to01(inp.ms_up.data)
        centered = ms01.reshape(4, -1) - ms01.reshape(4, -1).mean(axis=1, keepdims=True)
        basis = [t0]
        for b in range(4):
            # projection coefficients of band b on the current basis
            for j, t in enumerate(basis):
                expected = float(centered[b] @ t) / float(t @ t)
                assert coeffs[b][j] == pytest.approx(expected, abs=1e-5)
            residual = centered[b] - sum(c * t for c, t in zip(coeffs[b], basis))
            np.testing.assert_allclose(residual, comps[b], atol=1e-8)
            basis.append(comps[b])

    def test_reconstruction_identity(self):
        # band = residual + sum of coefficients * earlier components + mean
        inp = make_input(seed=17)
        t0, comps, coeffs = gs_components(inp)
        ms01 = to01(inp.ms_up.data)
        flat = ms01.reshape(4, -1)
        means = flat.mean(axis=1)
        basis = [t0] + list(comps)
        for b in range(4):
            acc = comps[b].copy()
            for j in range(b + 1):
                acc = acc + coeffs[b][j] * basis[j]
            np.testing.assert_allclose(acc + means[b], flat[b], atol=1e-8)


class TestMtfGlpHpm:
    def test_constant_pan_identity(self):
        inp = make_input(seed=18)
        pan = RasterImage(np.full((1, 16, 16), 0.2, dtype=np.float32))
        out = mtf_glp_hpm_fuse(FusionInput(ms_up=inp.ms_up, pan=pan, r=4))
        np.testing.assert_allclose(out.data, inp.ms_up.data, atol=1e-5)

    def test_ratio_invariance(self):
        # doubling PAN in [0, 1] space doubles PAN_low, leaving the ratio alone
        inp = make_input(seed=19)
        pan01 = to01(inp.pan.data[0]) * 0.4 + 0.1
        pan_a = RasterImage((2.0 * pan01 - 1.0)[None].astype(np.float32))
        pan_b = RasterImage((2.0 * (2.0 * pan01) - 1.0)[None].astype(np.float32))
        out_a = mtf_glp_hpm_fuse(FusionInput(ms_up=inp.ms_up, pan=pan_a, r=4))
        out_b = mtf_glp_hpm_fuse(FusionInput(ms_up=inp.ms_up, pan=pan_b, r=4))
        np.testing.assert_allclose(out_a.data, out_b.data, atol=1e-5)

    def test_divisibility_checked(self):
        ms = RasterImage(np.zeros((4, 15, 15), dtype=np.float32))
        pan = RasterImage(np.zeros((1, 15, 15), dtype=np.float32))
        with pytest.raises(ValueError):
            mtf_glp_hpm_fuse(FusionInput(ms_up=ms, pan=pan, r=4))


class TestRegistryAndInvariants:
    def test_registry_names(self):
        assert set(BASELINES) == {"ihs", "pca", "gs", "mtf-glp-hpm"}

    @pytest.mark.parametrize("name", sorted(BASELINES))
    def test_shape_preservation_and_purity(self, name):
        inp = make_input(seed=20)
        before_ms = inp.ms_up.data.copy()
        before_pan = inp.pan.data.copy()
        out = BASELINES[name](inp)
        assert out.data.shape == (4, 16, 16)
        assert out.data.dtype == np.float32
        np.testing.assert_array_equal(inp.ms_up.data, before_ms)
        np.testing.assert_array_equal(inp.pan.data, before_pan)

    @pytest.mark.parametrize("name", sorted(BASELINES))
    def test_deterministic(self, name):
        inp = make_input(seed=21)
        np.testing.assert_array_equal(BASELINES[name](inp).data, BASELINES[name](inp).data)
