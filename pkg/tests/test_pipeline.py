import numpy as np
import pytest

from targetfill.core import make_linear_schedule
from targetfill.denoise import AnalyticGaussianDenoiser, Capability, OracleDenoiser
from targetfill.masks import heated_mask, ring
from targetfill.pipeline import (
    SamplerConfig,
    compose_binary,
    compose_heated,
    compose_scene_buffer,
    run,
    run_candidates,
)

from conftest import random_mask


def make_images(gen, c=3, h=12, w=12):
    return (gen.uniform(-1, 1, (c, h, w)) for _ in range(3))


def box_mask(h=12, w=12):
    m = np.ones((h, w), np.uint8)
    m[h // 4 : 3 * h // 4, w // 4 : 3 * w // 4] = 0
    return m


class CountingDenoiser:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0
        self.capability = inner.capability

    def predict_epsilon(self, x_t, t):
        self.calls += 1
        return self.inner.predict_epsilon(x_t, t)


class TestComposeBinary:
    def test_scene_pixels_win_regardless_of_lambda(self, rng):
        xs, xt, xr = make_images(rng)
        m = box_mask()
        for lam in (0.0, 0.3, 1.0):
            out = compose_binary(xs, xt, xr, m, lam)
            assert np.array_equal(out[:, m == 1], xs[:, m == 1])

    def test_hole_arithmetic(self):
        one = np.ones((1, 1, 1))
        hole = np.zeros((1, 1), np.uint8)
        out = compose_binary(one * 9, one * 0.4, one * 0.8, hole, 0.25)
        assert out[0, 0, 0] == pytest.approx(0.5, abs=1e-15)

    def test_lambda_one_bitwise_independent_of_target(self, rng):
        xs, xt, xr = make_images(rng)
        other_target = rng.uniform(-1, 1, xt.shape)
        m = box_mask()
        a = compose_binary(xs, xt, xr, m, 1.0)
        b = compose_binary(xs, other_target, xr, m, 1.0)
        assert np.array_equal(a, b)

    def test_shape_mismatch_rejected(self, rng):
        xs, xt, xr = make_images(rng)
        with pytest.raises(ValueError):
            compose_binary(xs, xt[:, :-1], xr, box_mask(), 0.5)
        with pytest.raises(ValueError):
            compose_binary(xs, xt, xr, box_mask(6, 6), 0.5)

    def test_lambda_out_of_range(self, rng):
        xs, xt, xr = make_images(rng)
        with pytest.raises(ValueError):
            compose_binary(xs, xt, xr, box_mask(), 1.5)


class TestComposeHeated:
    def test_b1_reduces_to_binary_lambda_zero(self, rng):
        xs, xt, xr = make_images(rng)
        m = box_mask()
        heat = heated_mask(m, 1)
        assert np.array_equal(
            compose_heated(xs, xt, xr, m, heat), compose_binary(xs, xt, xr, m, 0.0)
        )

    def test_half_heat_arithmetic(self):
        one = np.ones((1, 1, 1))
        out = compose_heated(
            one * 9, one * 0.4, one * 0.8, np.zeros((1, 1), np.uint8),
            np.full((1, 1), 0.5),
        )
        assert out[0, 0, 0] == pytest.approx(0.6, abs=1e-15)

    def test_saturated_heat_is_exact_target(self, rng):
        xs, xt, xr = make_images(rng)
        m = box_mask()
        heat = heated_mask(m, 1)  # every hole pixel saturates
        out = compose_heated(xs, xt, xr, m, heat)
        assert np.array_equal(out[:, m == 0], xt[:, m == 0])


class TestComposeSceneBuffer:
    def test_w0_c_equals_lambda_reduces_to_binary(self, rng):
        xs, xt, xr = make_images(rng)
        m = box_mask()
        empty = ring(m, 0)
        for lam in (0.0, 0.4, 1.0):
            assert np.array_equal(
                compose_scene_buffer(xs, xt, xr, m, empty, lam, lam),
                compose_binary(xs, xt, xr, m, lam),
            )

    def test_ring_pixels_take_denoiser_output(self, rng):
        xs, xt, xr = make_images(rng)
        m = box_mask()
        r = ring(m, 1)
        out = compose_scene_buffer(xs, xt, xr, m, r, 0.5, 0.2)
        assert np.array_equal(out[:, r == 1], xr[:, r == 1])

    def test_lambda_blend_ring_source(self, rng):
        xs, xt, xr = make_images(rng)
        m = box_mask()
        r = ring(m, 1)
        out = compose_scene_buffer(xs, xt, xr, m, r, 0.5, 0.25,
                                   ring_source="lambda-blend")
        want = 0.25 * xr[:, r == 1] + 0.75 * xt[:, r == 1]
        assert np.allclose(out[:, r == 1], want, atol=1e-15)

    def test_hole_arithmetic(self):
        one = np.ones((1, 1, 1))
        out = compose_scene_buffer(
            one * 9, one * 0.6, one * 0.2, np.zeros((1, 1), np.uint8),
            np.zeros((1, 1), np.uint8), 0.5, 0.0,
        )
        assert out[0, 0, 0] == pytest.approx(0.4, abs=1e-15)

    def test_overlapping_ring_rejected(self, rng):
        xs, xt, xr = make_images(rng)
        m = box_mask()
        bad = (1 - m).astype(np.uint8)  # ring equal to the hole
        with pytest.raises(ValueError):
            compose_scene_buffer(xs, xt, xr, m, bad, 0.5, 0.5)

    def test_convexity_no_overshoot(self, rng):
        xs, xt, xr = make_images(rng)
        m = box_mask()
        r = ring(m, 2)
        for lam in (0.13, 0.77):
            out = compose_scene_buffer(xs, xt, xr, m, r, lam, 1 - lam)
            lo = np.minimum(np.minimum(xs, xt), xr) - 1e-12
            hi = np.maximum(np.maximum(xs, xt), xr) + 1e-12
            assert np.all(out >= lo) and np.all(out <= hi)


class TestRun:
    def test_lambda_one_is_target_independent(self, rng):
        scene = rng.uniform(-1, 1, (3, 12, 12))
        t1 = rng.uniform(-1, 1, scene.shape)
        t2 = rng.uniform(-1, 1, scene.shape)
        m = box_mask()
        sched = make_linear_schedule(20)
        cfg = SamplerConfig(timesteps=20, jump_len=5, resample=2,
                            lambda_schedule="const", lambda0=1.0, seed=5)
        den = OracleDenoiser(scene, sched)
        assert np.array_equal(run(scene, t1, m, cfg, den), run(scene, t2, m, cfg, den))

    def test_lambda_zero_copy_paste(self, rng):
        scene = rng.uniform(-1, 1, (3, 12, 12))
        target = rng.uniform(-1, 1, scene.shape)
        m = box_mask()
        cfg = SamplerConfig(timesteps=15, jump_len=1, resample=1,
                            lambda_schedule="const", lambda0=0.0, seed=2)
        den = AnalyticGaussianDenoiser(0, 1, make_linear_schedule(15),
                                       Capability(3, 12, 12))
        out = run(scene, target, m, cfg, den)
        assert np.array_equal(out[:, m == 0], target[:, m == 0])
        assert np.array_equal(out[:, m == 1], scene[:, m == 1])

    def test_oracle_chain_reconstructs_composite(self, rng):
        scene = rng.uniform(-1, 1, (3, 12, 12))
        target = rng.uniform(-1, 1, scene.shape)
        m = box_mask()
        gt = np.where(m.astype(bool)[None], scene, target)
        T = 30
        cfg = SamplerConfig(timesteps=T, jump_len=1, resample=1,
                            lambda_schedule="const", lambda0=1.0, seed=8)
        den = OracleDenoiser(gt, make_linear_schedule(T))
        out = run(scene, target, m, cfg, den)
        assert np.abs(out - gt).max() <= 1e-4

    @pytest.mark.parametrize("mode", ["binary", "heated", "scene-buffer"])
    def test_scene_preserved_exactly(self, rng, mode):
        scene = rng.uniform(-1, 1, (3, 12, 12))
        target = rng.uniform(-1, 1, scene.shape)
        m = box_mask()
        cfg = SamplerConfig(timesteps=10, jump_len=1, resample=1, mask_mode=mode,
                            lambda_schedule="const", lambda0=0.5, seed=4,
                            heat_buffer=2, ring_width=2)
        den = AnalyticGaussianDenoiser(0, 1, make_linear_schedule(10),
                                       Capability(3, 12, 12))
        out = run(scene, target, m, cfg, den)
        if mode == "scene-buffer":
            outside = (m == 1) & (ring(m, 2) == 0)
        else:
            outside = m == 1
        assert np.array_equal(out[:, outside], scene[:, outside])

    def test_denoiser_calls_match_plan(self, rng):
        from targetfill.schedules import denoiser_call_count

        scene = rng.uniform(-1, 1, (1, 6, 6))
        target = rng.uniform(-1, 1, scene.shape)
        m = box_mask(6, 6)
        for T, j, r in [(5, 1, 1), (4, 2, 2), (12, 3, 3), (9, 4, 2)]:
            cfg = SamplerConfig(timesteps=T, jump_len=j, resample=r,
                                lambda_schedule="const", lambda0=0.7, seed=1)
            den = CountingDenoiser(
                AnalyticGaussianDenoiser(0, 1, make_linear_schedule(T),
                                         Capability(1, 6, 6))
            )
            run(scene, target, m, cfg, den)
            assert den.calls == denoiser_call_count(T, j, r)

    @pytest.mark.parametrize("mode", ["binary", "heated", "scene-buffer"])
    def test_bitwise_deterministic(self, rng, mode):
        scene = rng.uniform(-1, 1, (3, 10, 10))
        target = rng.uniform(-1, 1, scene.shape)
        m = box_mask(10, 10)
        cfg = SamplerConfig(timesteps=12, jump_len=4, resample=2, mask_mode=mode,
                            seed=31, heat_buffer=2, ring_width=1)
        den = AnalyticGaussianDenoiser(0, 1, make_linear_schedule(12),
                                       Capability(3, 10, 10))
        assert np.array_equal(
            run(scene, target, m, cfg, den), run(scene, target, m, cfg, den)
        )

    def test_heated_combined_lambda_mode(self, rng):
        # optional mode: effective weight toward the target is h*(1-lambda),
        # so lambda=1 hands the whole hole to the denoiser even at full heat
        scene = rng.uniform(-1, 1, (1, 10, 10))
        target = rng.uniform(-1, 1, scene.shape)
        m = box_mask(10, 10)
        den = AnalyticGaussianDenoiser(0, 1, make_linear_schedule(6),
                                       Capability(1, 10, 10))
        base = dict(timesteps=6, jump_len=1, resample=1, mask_mode="heated",
                    heat_buffer=2, seed=9)
        combined = SamplerConfig(**base, lambda_schedule="const", lambda0=1.0,
                                 heated_combine_lambda=True)
        plain_binary = SamplerConfig(**{**base, "mask_mode": "binary"},
                                     lambda_schedule="const", lambda0=1.0)
        out_combined = run(scene, target, m, combined, den)
        out_binary = run(scene, target, m, plain_binary, den)
        assert np.array_equal(out_combined, out_binary)

    def test_all_scene_mask_returns_scene(self, rng):
        scene = rng.uniform(-1, 1, (3, 8, 8))
        target = rng.uniform(-1, 1, scene.shape)
        m = np.ones((8, 8), np.uint8)
        for mode in ("binary", "heated", "scene-buffer"):
            cfg = SamplerConfig(timesteps=8, jump_len=1, resample=1,
                                mask_mode=mode, seed=0)
            den = AnalyticGaussianDenoiser(0, 1, make_linear_schedule(8),
                                           Capability(3, 8, 8))
            assert np.array_equal(run(scene, target, m, cfg, den), scene)

    def test_all_hole_mask_only_valid_in_binary_mode(self, rng):
        scene = np.zeros((1, 6, 6))
        target = np.zeros((1, 6, 6))
        m = np.zeros((6, 6), np.uint8)
        den = AnalyticGaussianDenoiser(0, 1, make_linear_schedule(5),
                                       Capability(1, 6, 6))
        ok_cfg = SamplerConfig(timesteps=5, jump_len=1, resample=1,
                               lambda_schedule="const", lambda0=1.0)
        run(scene, target, m, ok_cfg, den)  # binary mode accepts it
        for mode in ("heated", "scene-buffer"):
            with pytest.raises(ValueError):
                run(scene, target, m,
                    SamplerConfig(timesteps=5, jump_len=1, resample=1,
                                  mask_mode=mode), den)

    def test_composition_convexity_all_modes(self, rng):
        # Every composed pixel stays inside the interval spanned by its
        # sources, up to ulp-level slack from the three blend roundings.
        eps = 1e-12
        for _ in range(50):
            xs, xt, xr = make_images(rng, c=1, h=6, w=6)
            m = random_mask(rng, 6, 6)
            lo = np.minimum(np.minimum(xs, xt), xr) - eps
            hi = np.maximum(np.maximum(xs, xt), xr) + eps
            lam, c = float(rng.uniform()), float(rng.uniform())
            outs = [compose_binary(xs, xt, xr, m, lam)]
            if (m == 1).any():
                outs.append(compose_heated(xs, xt, xr, m, heated_mask(m, 2)))
            outs.append(compose_scene_buffer(xs, xt, xr, m, ring(m, 1), c, lam))
            for out in outs:
                assert np.all(out >= lo) and np.all(out <= hi)

    def test_non_finite_input_rejected(self):
        scene = np.full((1, 4, 4), np.nan)
        cfg = SamplerConfig(timesteps=4, jump_len=1, resample=1)
        den = AnalyticGaussianDenoiser(0, 1, make_linear_schedule(4),
                                       Capability(1, 4, 4))
        with pytest.raises(ValueError):
            run(scene, np.zeros((1, 4, 4)), np.ones((4, 4), np.uint8), cfg, den)


class TestRunCandidates:
    def _setup(self, rng):
        scene = rng.uniform(-1, 1, (1, 8, 8))
        target = rng.uniform(-1, 1, scene.shape)
        m = box_mask(8, 8)
        cfg = SamplerConfig(timesteps=8, jump_len=1, resample=1,
                            lambda_schedule="const", lambda0=1.0, seed=77)
        den = AnalyticGaussianDenoiser(0, 1, make_linear_schedule(8),
                                       Capability(1, 8, 8))
        return scene, target, m, cfg, den

    def test_single_candidate_equals_run(self, rng):
        scene, target, m, cfg, den = self._setup(rng)
        assert np.array_equal(
            run_candidates(scene, target, m, cfg, den, n=1)[0],
            run(scene, target, m, cfg, den),
        )

    def test_candidates_reproduce_bitwise(self, rng):
        scene, target, m, cfg, den = self._setup(rng)
        a = run_candidates(scene, target, m, cfg, den, n=2)
        b = run_candidates(scene, target, m, cfg, den, n=2)
        assert all(np.array_equal(x, y) for x, y in zip(a, b))

    def test_candidates_differ_in_hole(self, rng):
        scene, target, m, cfg, den = self._setup(rng)
        a, b = run_candidates(scene, target, m, cfg, den, n=2)
        assert not np.array_equal(a[:, m == 0], b[:, m == 0])
