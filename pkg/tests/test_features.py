import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy import ndimage

from vsod.features import (
    CHANNEL_KEYS,
    FlowField,
    FlowParams,
    build_channel_stack,
    compute_flicker,
    compute_flow,
    horn_schunck,
    to_hsv,
    to_lab,
)


def _px(rgb):
    return np.array([[rgb]], dtype=np.uint8)


class TestColor:
    def test_black(self):
        L, _, _ = to_lab(_px((0, 0, 0)))
        _, _, V = to_hsv(_px((0, 0, 0)))
        assert L[0, 0] == 0.0 and V[0, 0] == 0.0

    def test_white(self):
        L, a, b = to_lab(_px((255, 255, 255)))
        assert L[0, 0] == pytest.approx(1.0, abs=1e-6)
        assert a[0, 0] == pytest.approx(128 / 255, abs=1e-3)
        assert b[0, 0] == pytest.approx(128 / 255, abs=1e-3)

    def test_red(self):
        H, S, V = to_hsv(_px((255, 0, 0)))
        assert (H[0, 0], S[0, 0], V[0, 0]) == (0.0, 1.0, 1.0)


def _periodic_texture(h=64, w=64, seed=0):
    r = np.random.default_rng(seed)
    base = ndimage.gaussian_filter(r.random((h, w)), 2.0, mode="wrap")
    return (base - base.min()) / (base.max() - base.min()) * 200 + 20


class TestFlow:
    def test_identical_frames_zero(self):
        f = _periodic_texture()
        fl = horn_schunck(f, f)
        assert np.abs(fl.u).max() == 0.0 and np.abs(fl.v).max() == 0.0

    def test_one_pixel_translate(self):
        f = _periodic_texture()
        fl = horn_schunck(f, np.roll(f, 1, axis=1))
        assert np.mean(fl.u) == pytest.approx(1.0, abs=0.2)
        assert abs(np.mean(fl.v)) < 0.1

    def test_last_frame_zero(self):
        fl = compute_flow(np.zeros((8, 9, 3), np.uint8), None)
        assert fl.u.shape == (8, 9) and not fl.u.any() and not fl.v.any()

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compute_flow(np.zeros((8, 9)), np.zeros((8, 10)))

    def test_deterministic(self):
        f = _periodic_texture()
        g = np.roll(f, 2, axis=0)
        a, b = horn_schunck(f, g, FlowParams(iters=20)), horn_schunck(f, g, FlowParams(iters=20))
        assert np.array_equal(a.u, b.u) and np.array_equal(a.v, b.v)


class TestFlicker:
    def test_identical(self):
        L = np.random.default_rng(0).random((5, 6))
        assert not compute_flicker(L, L).any()

    def test_inverse_is_maximal(self):
        L = np.zeros((4, 4))
        L[::2, ::2] = 1.0
        out = compute_flicker(L, 1.0 - L)
        assert np.all(out == 1.0)

    def test_checkerboard_shift(self):
        yy, xx = np.mgrid[0:8, 0:8]
        cb = ((yy // 2 + xx // 2) % 2).astype(float)
        shifted = np.roll(cb, 2, axis=1)
        out = compute_flicker(cb, shifted)
        assert np.array_equal(out, (cb != shifted).astype(float))

    def test_first_frame_zero(self):
        assert not compute_flicker(np.ones((3, 3)), None).any()

    @given(arrays(np.float64, (4, 5), elements=st.floats(0, 1)), arrays(np.float64, (4, 5), elements=st.floats(0, 1)))
    def test_symmetric(self, a, b):
        assert np.array_equal(compute_flicker(a, b), compute_flicker(b, a))


class TestChannelStack:
    def test_static_gray_video(self):
        f = np.full((12, 16, 3), 90, np.uint8)
        stack, _ = build_channel_stack(f, f, f)
        for k in CHANNEL_KEYS:
            assert not stack[k].any(), k

    def test_single_frame_xyt_zero(self):
        f = (np.random.default_rng(0).random((12, 16, 3)) * 255).astype(np.uint8)
        stack, flow = build_channel_stack(f)
        assert not stack["X"].any() and not stack["Y"].any() and not stack["T"].any()
        assert not flow.u.any()

    def test_moving_square(self):
        r = np.random.default_rng(3)
        bg = (ndimage.gaussian_filter(r.random((48, 64)), 1.0) * 120 + 60).astype(np.uint8)

        def frame(x):
            f = np.repeat(bg[..., None], 3, axis=2).copy()
            f[16:32, x:x + 16] = (240, 40, 40)
            return f

        f0, f1, f2 = frame(18), frame(20), frame(22)
        stack, _ = build_channel_stack(f1, f0, f2)
        sq = np.zeros((48, 64), bool)
        sq[16:32, 22:36] = True
        far = np.ones((48, 64), bool)
        far[8:40, 8:52] = False
        assert stack["X"][sq].mean() > 0.2
        assert stack["X"][far].mean() < 0.1

    def test_signed_flow_option(self):
        f = np.repeat(_periodic_texture().astype(np.uint8)[..., None], 3, axis=2)
        u = np.zeros(f.shape[:2])
        u[:, :32] = -1.0
        stack, _ = build_channel_stack(f, None, None, FlowField(u, np.zeros_like(u)), signed_flow=True)
        # Signed: -1 maps to 0 and 0 to 1; magnitude would do the opposite.
        assert stack["X"][0, 0] == 0.0 and stack["X"][0, -1] == 1.0

    @given(arrays(np.uint8, (6, 7, 3)), arrays(np.uint8, (6, 7, 3)))
    def test_channels_bounded_and_finite(self, a, b):
        stack, _ = build_channel_stack(a, b, None, FlowField(np.zeros((6, 7)), np.zeros((6, 7))))
        for k in CHANNEL_KEYS:
            v = stack[k]
            assert np.all(np.isfinite(v)) and v.min() >= 0.0 and v.max() <= 1.0
