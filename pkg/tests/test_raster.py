import numpy as np
import pytest

from pansharp.raster import (
    NormalizationParams,
    RasterImage,
    crop_patches,
    denormalize_from_unit,
    export_png8,
    load_raster,
    normalize_to_unit,
    save_raster,
)


def rand_image(bands=4, h=8, w=6, seed=0, bit_depth=11, names=()):
    rng = np.random.default_rng(seed)
    data = rng.uniform(-1, 1, size=(bands, h, w)).astype(np.float32)
    return RasterImage(data, bit_depth=bit_depth, band_names=names)


class TestRasterImage:
    def test_properties(self):
        img = rand_image(3, 5, 7)
        assert (img.bands, img.height, img.width) == (3, 5, 7)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            RasterImage(np.zeros((4, 4)))

    def test_bit_depth_validation(self):
        with pytest.raises(ValueError):
            RasterImage(np.zeros((1, 2, 2)), bit_depth=0)
        with pytest.raises(ValueError):
            RasterImage(np.zeros((1, 2, 2)), bit_depth=17)

    def test_band_names_length_checked(self):
        with pytest.raises(ValueError):
            RasterImage(np.zeros((2, 2, 2)), band_names=("a",))

    def test_with_data_keeps_metadata(self):
        img = rand_image(names=("nir", "r", "g", "b"))
        other = img.with_data(np.zeros_like(img.data))
        assert other.bit_depth == img.bit_depth
        assert other.band_names == img.band_names


class TestNormalization:
    def test_scale_from_bit_depth(self):
        assert NormalizationParams.from_bit_depth(11).scale == 2047.0
        assert NormalizationParams.from_bit_depth(8).scale == 255.0

    def test_endpoints(self):
        p = NormalizationParams.from_bit_depth(11)
        assert p.forward(0.0) == -1.0
        assert p.forward(2047.0) == 1.0
        assert p.forward(2047.0 / 2) == pytest.approx(0.0)

    def test_round_trip(self):
        p = NormalizationParams(scale=100.0)
        x = np.linspace(0, 100, 11)
        np.testing.assert_allclose(p.inverse(p.forward(x)), x, atol=1e-12)

    def test_image_round_trip(self):
        dn = RasterImage(np.arange(2048, dtype=np.float32).reshape(1, 32, 64))
        unit = normalize_to_unit(dn)
        assert unit.data.min() == -1.0
        assert unit.data.max() == 1.0
        back = denormalize_from_unit(unit)
        np.testing.assert_allclose(back.data, dn.data, atol=1e-3)

    def test_positive_scale_required(self):
        with pytest.raises(ValueError):
            NormalizationParams(scale=0.0)


class TestSaveLoad:
    def test_f32_round_trip_bit_identical(self, tmp_path):
        img = rand_image(names=("nir", "r", "g", "b"))
        path = tmp_path / "a.raster"
        save_raster(img, path, dtype="f32")
        back = load_raster(path)
        np.testing.assert_array_equal(back.data, img.data)
        assert back.data.dtype == np.float32
        assert back.bit_depth == 11
        assert back.band_names == ("nir", "r", "g", "b")

    def test_f64_round_trip(self, tmp_path):
        img = RasterImage(np.random.default_rng(1).standard_normal((2, 4, 4)))
        path = tmp_path / "b.raster"
        save_raster(img, path, dtype="f64")
        back = load_raster(path)
        np.testing.assert_array_equal(back.data, img.data.astype(np.float64))

    def test_u16_clips_rounds_and_promotes(self, tmp_path):
        img = RasterImage(
            np.array([[[-5.0, 0.4, 0.6, 2046.25, 3000.0, 17.0]]]), bit_depth=11
        )
        path = tmp_path / "c.raster"
        save_raster(img, path, dtype="u16")
        back = load_raster(path)
        assert back.data.dtype == np.float32
        np.testing.assert_array_equal(back.data[0, 0], [0.0, 0.0, 1.0, 2046.0, 2047.0, 17.0])

    def test_save_bytes_deterministic(self, tmp_path):
        img = rand_image()
        p1, p2 = tmp_path / "x.raster", tmp_path / "y.raster"
        save_raster(img, p1)
        save_raster(img, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.raster"
        path.write_bytes(b"not a raster\nend\n")
        with pytest.raises(ValueError):
            load_raster(path)

    def test_missing_field(self, tmp_path):
        path = tmp_path / "short.raster"
        path.write_bytes(b"raster v1\nbands 1\nheight 2\nwidth 2\ndtype f32\nend\n" + b"\0" * 16)
        with pytest.raises(ValueError, match="bit_depth"):
            load_raster(path)

    def test_truncated_payload(self, tmp_path):
        img = rand_image(1, 4, 4)
        path = tmp_path / "trunc.raster"
        save_raster(img, path)
        blob = path.read_bytes()
        path.write_bytes(blob[:-8])
        with pytest.raises(ValueError, match="bytes"):
            load_raster(path)

    def test_unknown_dtype_rejected(self, tmp_path):
        img = rand_image()
        with pytest.raises(ValueError):
            save_raster(img, tmp_path / "z.raster", dtype="i8")


class TestCropPatches:
    def test_exact_tiling(self):
        img = rand_image(2, 8, 8)
        crops = crop_patches(img, 4)
        assert len(crops) == 4
        assert [(r, c) for r, c, _ in crops] == [(0, 0), (0, 4), (4, 0), (4, 4)]
        for r, c, crop in crops:
            np.testing.assert_array_equal(crop.data, img.data[:, r:r + 4, c:c + 4])

    def test_partial_windows_dropped(self):
        img = rand_image(1, 10, 7)
        crops = crop_patches(img, 4)
        # rows at 0,4 fit vertically (8<=10); col 4 leaves only 3 pixels
        assert [(r, c) for r, c, _ in crops] == [(0, 0), (4, 0)]

    def test_overlapping_stride(self):
        img = rand_image(1, 8, 8)
        crops = crop_patches(img, 4, stride=2)
        assert len(crops) == 9

    def test_crops_are_copies(self):
        img = rand_image(1, 4, 4)
        _, _, crop = crop_patches(img, 4)[0]
        crop.data[...] = 0.0
        assert not np.all(img.data == 0.0)

    def test_validation(self):
        img = rand_image(1, 4, 4)
        with pytest.raises(ValueError):
            crop_patches(img, 0)
        with pytest.raises(ValueError):
            crop_patches(img, 8)


class TestExportPng8:
    def test_linear_endpoints(self, tmp_path):
        from PIL import Image

        data = np.full((1, 2, 2), -1.0, dtype=np.float32)
        data[0, 1, 1] = 1.0
        data[0, 0, 1] = 0.0
        path = tmp_path / "g.png"
        export_png8(RasterImage(data), [0], path)
        px = np.asarray(Image.open(path))
        assert px.shape == (2, 2)
        assert px[0, 0] == 0
        assert px[1, 1] == 255
        assert px[0, 1] in (127, 128)

    def test_rgb_channel_order(self, tmp_path):
        from PIL import Image

        data = np.stack(
            [np.full((2, 2), -1.0), np.full((2, 2), 1.0), np.full((2, 2), -1.0), np.full((2, 2), 1.0)]
        ).astype(np.float32)
        path = tmp_path / "rgb.png"
        export_png8(RasterImage(data), [1, 0, 3], path)
        px = np.asarray(Image.open(path))
        assert px.shape == (2, 2, 3)
        assert tuple(px[0, 0]) == (255, 0, 255)

    def test_percentile_constant_band(self, tmp_path):
        path = tmp_path / "c.png"
        export_png8(RasterImage(np.zeros((1, 4, 4), dtype=np.float32)), [0], path, stretch="percentile")
        from PIL import Image

        px = np.asarray(Image.open(path))
        assert np.all(px == px[0, 0])

    def test_validation(self, tmp_path):
        img = rand_image()
        with pytest.raises(ValueError):
            export_png8(img, [0, 1], tmp_path / "x.png")
        with pytest.raises(ValueError):
            export_png8(img, [9], tmp_path / "x.png")
        with pytest.raises(ValueError):
            export_png8(img, [0], tmp_path / "x.png", stretch="sqrt")
