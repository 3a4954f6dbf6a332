import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from covxr.errors import NonDifferentiableModel, UnwritableDirectory
from covxr.model import ModelSpec, build_classifier
from covxr.preprocess import BGR, ImageBuffer, preprocess_eval
from covxr.saliency import (
    COLORMAP,
    SaliencyMap,
    colorize,
    input_gradient_saliency,
    normalize_map,
    overlay,
    raw_input_gradient,
    write_overlay,
)

LUMA = np.array([0.299, 0.587, 0.114])


def fd_input_gradient(clf, x, h=1e-3):
    """Central differences of the scalar probability w.r.t. every input element."""
    x = x.copy()
    g = np.zeros_like(x)

    def f():
        t = torch.from_numpy(x).permute(2, 0, 1)[None]
        with torch.no_grad():
            return float(clf(t))

    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + h
        up = f()
        x[idx] = orig - h
        down = f()
        x[idx] = orig
        g[idx] = (up - down) / (2 * h)
    return g


@pytest.fixture
def tiny():
    return build_classifier(ModelSpec(backbone_id="standin", head_width=8), use_pretrained=False, seed=3).double().eval()


class TestGradient:
    def test_matches_finite_differences_16px(self, tiny):
        x = np.random.default_rng(0).normal(0, 50, (16, 16, 3))
        analytic = raw_input_gradient(tiny, x)
        numeric = fd_input_gradient(tiny, x)
        mask = np.maximum(np.abs(analytic), np.abs(numeric)) > 1e-6
        assert mask.mean() > 0.5
        rel = np.abs(analytic - numeric)[mask] / np.maximum(np.abs(analytic), np.abs(numeric))[mask]
        assert rel.max() < 1e-2
        # and the reduced map agrees with the same reduction of the numeric gradient
        smap = input_gradient_saliency(tiny, x)
        np.testing.assert_allclose(smap.values, normalize_map(np.abs(numeric).max(axis=2)), atol=1e-2)

    def test_constant_head_gives_zero_map(self, tiny):
        with torch.no_grad():
            tiny.head[0].weight.zero_()
        smap = input_gradient_saliency(tiny, np.random.default_rng(1).normal(0, 50, (16, 16, 3)))
        assert not smap.values.any()

    def test_shape_and_range(self, standin):
        img = ImageBuffer(np.random.default_rng(2).random((300, 250)) * 255)
        smap = input_gradient_saliency(standin, preprocess_eval(img))
        assert smap.source_shape == (224, 224)
        assert smap.values.min() >= 0 and smap.values.max() == 1.0

    def test_not_a_module(self):
        with pytest.raises(NonDifferentiableModel):
            raw_input_gradient(lambda x: 0.5, np.zeros((16, 16, 3)))

    def test_restores_mode(self, tiny):
        tiny.train()
        raw_input_gradient(tiny, np.zeros((16, 16, 3)))
        assert tiny.training


class TestNormalize:
    @settings(max_examples=100)
    @given(st.lists(st.floats(0, 1e3), min_size=4, max_size=4))
    def test_idempotent(self, vals):
        once = normalize_map(np.array(vals).reshape(2, 2))
        np.testing.assert_allclose(normalize_map(once), once, atol=1e-12)

    def test_zero_stays_zero(self):
        assert not normalize_map(np.zeros((3, 3))).any()

    def test_range(self):
        v = normalize_map(np.array([[2.0, 4.0], [6.0, 10.0]]))
        assert v.min() == 0 and v.max() == 1 and v[0, 1] == 0.25

    def test_map_validation(self):
        with pytest.raises(ValueError):
            SaliencyMap(np.full((2, 2), 1.5))
        with pytest.raises(ValueError):
            SaliencyMap(np.zeros(4))


class TestOverlay:
    def setup_method(self):
        rng = np.random.default_rng(4)
        self.gray = rng.integers(0, 256, (20, 30)).astype(float)
        self.original = ImageBuffer(self.gray)
        self.smap = SaliencyMap(normalize_map(rng.random((20, 30))))

    def test_alpha_zero_is_grayscale_original(self):
        comp = overlay(self.smap, self.original, alpha=0.0)
        assert comp.shape == (20, 30, 3) and comp.dtype == np.uint8
        for c in range(3):
            assert np.array_equal(comp[..., c], self.gray.astype(np.uint8))

    def test_alpha_one_is_pure_heat(self):
        comp = overlay(self.smap, self.original, alpha=1.0)
        assert np.array_equal(comp, np.rint(colorize(self.smap.values)).astype(np.uint8))

    def test_zero_map(self):
        a = 0.3
        comp = overlay(SaliencyMap(np.zeros((20, 30))), self.original, alpha=a)
        floor = colorize(np.zeros(1))[0]
        expect = np.rint((1 - a) * self.gray[..., None] + a * floor).astype(np.uint8)
        assert np.array_equal(comp, expect)

    def test_resampled_to_original_size(self):
        comp = overlay(SaliencyMap(np.eye(8)), self.original, alpha=0.5)
        assert comp.shape == (20, 30, 3)

    def test_color_original_uses_luma(self):
        rgb = np.random.default_rng(5).integers(0, 256, (6, 6, 3)).astype(float)
        comp = overlay(SaliencyMap(np.zeros((6, 6))), ImageBuffer(rgb[..., ::-1].copy(), BGR), alpha=0.0)
        assert np.array_equal(comp[..., 0], np.rint(rgb @ LUMA).astype(np.uint8))

    @pytest.mark.parametrize("alpha", [0.1, 0.2, 0.4])
    def test_doubling_alpha_keeps_hottest_pixel(self, alpha):
        # heat contribution of the composite peaks at the map maximum for any alpha
        values = np.zeros((20, 30))
        values[7, 11] = 1.0
        values[3, 3] = 0.4
        smap = SaliencyMap(values)
        flat = np.full((20, 30), 100.0)
        hottest = []
        for a in (alpha, 2 * alpha):
            comp = overlay(smap, ImageBuffer(flat), alpha=a).astype(float)
            heat = ((comp - (1 - a) * 100.0) / a) @ LUMA
            hottest.append(np.unravel_index(np.argmax(heat), heat.shape))
        assert hottest[0] == hottest[1] == (7, 11)

    def test_alpha_out_of_range(self):
        with pytest.raises(ValueError):
            overlay(self.smap, self.original, alpha=1.5)


class TestWrite:
    def test_png_and_sidecar(self, tmp_path):
        comp = np.zeros((5, 7, 3), dtype=np.uint8)
        png, side = write_overlay(comp, tmp_path / "o" / "sal.png", alpha=0.4, checkpoint_sha256="ab")
        assert png.stat().st_size > 0
        meta = json.loads(side.read_text())
        assert meta == {"alpha": 0.4, "colormap": COLORMAP, "checkpoint_sha256": "ab"}

    def test_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        with pytest.raises(UnwritableDirectory):
            write_overlay(np.zeros((2, 2, 3), dtype=np.uint8), blocker / "sal.png", alpha=0.5)
