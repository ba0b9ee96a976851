"""Images, bicubic degradation, dataset preparation and manifests."""

import numpy as np
import pytest
from PIL import Image

from conftest import textured_image, write_png
from src.data import (
    ImageBuf,
    SRDataset,
    bicubic_downsample,
    bicubic_upsample,
    crop_to_multiple,
    load_image,
    load_manifest,
    prepare_dataset,
    resize_weights,
    save_image,
)
from src.errors import ConfigError, DataError


class TestImages:

    def test_png_roundtrip(self, tmp_path):
        img = ImageBuf(textured_image(0, 10, 7))
        loaded = load_image(save_image(img, tmp_path / "a.png"))
        np.testing.assert_array_equal(loaded.pixels, img.pixels)
        assert loaded.size == (10, 7)

    def test_grayscale_converted_to_rgb(self, tmp_path):
        Image.fromarray(np.full((4, 5), 90, dtype=np.uint8)).save(tmp_path / "g.png")
        img = load_image(tmp_path / "g.png")
        assert img.pixels.shape == (4, 5, 3)
        assert (img.pixels == 90).all()

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_image(tmp_path / "nope.png")

    def test_garbage_file(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"not a png")
        with pytest.raises(DataError):
            load_image(tmp_path / "bad.png")

    def test_imagebuf_rejects_wrong_layout(self):
        with pytest.raises(DataError):
            ImageBuf(np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(DataError):
            ImageBuf(np.zeros((4, 4, 3), dtype=np.float32))

    def test_to_chw(self):
        img = ImageBuf(textured_image(1, 4, 6))
        chw = img.to_chw()
        assert chw.shape == (3, 4, 6) and chw.dtype == np.float32
        assert chw[2, 3, 5] == img.pixels[3, 5, 2]


class TestBicubic:

    def test_rows_sum_to_one(self):
        for in_len, out_len in ((12, 6), (12, 4), (9, 3), (5, 10)):
            np.testing.assert_allclose(resize_weights(in_len, out_len).sum(axis=1), 1.0)

    @pytest.mark.parametrize("scale", [2, 3, 4])
    def test_constant_image_stays_constant(self, scale):
        img = ImageBuf(np.full((12, 12, 3), (10, 128, 250), dtype=np.uint8))
        out = bicubic_downsample(img, scale)
        assert out.size == (12 // scale, 12 // scale)
        assert (out.pixels == np.array([10, 128, 250], dtype=np.uint8)).all()

    def test_scale_one_is_identity(self):
        img = ImageBuf(textured_image(2, 8, 8))
        np.testing.assert_array_equal(bicubic_downsample(img, 1).pixels, img.pixels)

    def test_linear_ramp(self):
        width, scale = 64, 2
        ramp = np.tile((np.arange(width) * 2.0 + 40).reshape(1, width, 1), (8, 1, 3))
        out = bicubic_downsample(ImageBuf(ramp.astype(np.uint8)), scale).pixels[..., 0].astype(np.float64)
        # half-pixel centers: LR sample j sits at HR coordinate 2j + 0.5
        expected = (np.arange(width // scale) * scale + 0.5) * 2.0 + 40
        interior = slice(3, width // scale - 3)
        assert np.max(np.abs(out[:, interior] - expected[interior])) <= 1.0

    def test_not_divisible(self):
        with pytest.raises(DataError):
            bicubic_downsample(ImageBuf(np.zeros((5, 6, 3), dtype=np.uint8)), 2)

    def test_crop_to_multiple(self):
        img = crop_to_multiple(ImageBuf(np.zeros((13, 14, 3), dtype=np.uint8)), 3)
        assert img.size == (12, 12)

    def test_upsample_shape(self):
        img = ImageBuf(textured_image(3, 5, 7))
        assert bicubic_upsample(img, 3).size == (15, 21)

    def test_down_up_roundtrip_stays_close(self):
        hr = ImageBuf(textured_image(4, 32, 32))
        restored = bicubic_upsample(bicubic_downsample(hr, 2), 2).pixels.astype(np.float64)
        err = np.abs(restored - hr.pixels).mean()
        assert err < 20


class TestPrepare:

    def test_twelve_image_corpus(self, tmp_path):
        src = tmp_path / "hr"
        for i in range(12):
            write_png(src / f"{i:02d}.png", textured_image(i, 20 + 2 * i, 30))
        train, val = prepare_dataset(src, tmp_path / "out", 2, workers=2)
        assert len(train) + len(val) == 12
        assert len(val) == 1
        lr_files = sorted((tmp_path / "out" / "LR_x2").glob("*.png"))
        assert len(lr_files) == 12
        for lr_path in lr_files:
            hr = Image.open(tmp_path / "out" / "HR" / lr_path.name)
            lr = Image.open(lr_path)
            assert lr.size == (hr.size[0] // 2, hr.size[1] // 2)

    def test_gray_corpus_mean(self, tmp_path):
        src = tmp_path / "hr"
        for i in range(3):
            write_png(src / f"{i}.png", np.full((8, 8, 3), 128, dtype=np.uint8))
        train, _ = prepare_dataset(src, tmp_path / "out", 2, val_count=1, workers=1)
        assert train.rgb_mean == (128.0, 128.0, 128.0)

    def test_mean_uses_training_split_only(self, tmp_path):
        src = tmp_path / "hr"
        write_png(src / "0.png", np.full((8, 8, 3), 100, dtype=np.uint8))
        write_png(src / "1.png", np.full((8, 8, 3), 250, dtype=np.uint8))
        train, val = prepare_dataset(src, tmp_path / "out", 2, val_count=1, workers=1)
        assert train.rgb_mean == (100.0, 100.0, 100.0)
        assert val.rgb_mean == train.rgb_mean

    def test_empty_dir(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(DataError, match="no images found"):
            prepare_dataset(tmp_path / "empty", tmp_path / "out", 2)

    def test_unreadable_image_is_skipped_and_logged(self, hr_dir, tmp_path):
        (hr_dir / "9999.png").write_bytes(b"broken")
        train, val = prepare_dataset(hr_dir, tmp_path / "out", 2, val_count=1, workers=1)
        assert len(train) + len(val) == 6
        assert "9999.png" in (tmp_path / "out" / "prepare.log").read_text()

    def test_odd_sizes_are_cropped(self, tmp_path):
        src = tmp_path / "hr"
        write_png(src / "a.png", textured_image(0, 17, 23))
        write_png(src / "b.png", textured_image(1, 17, 23))
        prepare_dataset(src, tmp_path / "out", 3, val_count=1, workers=1)
        assert Image.open(tmp_path / "out" / "HR" / "a.png").size == (21, 15)
        assert Image.open(tmp_path / "out" / "LR_x3" / "a.png").size == (7, 5)

    def test_val_count_must_leave_training_images(self, hr_dir, tmp_path):
        with pytest.raises(ConfigError):
            prepare_dataset(hr_dir, tmp_path / "out", 2, val_count=6)


class TestManifest:

    def test_roundtrip(self, prepared):
        train, _ = prepared
        loaded = load_manifest(train.path)
        assert loaded.split == "train"
        assert loaded.scale == 2
        assert len(loaded) == len(train)
        np.testing.assert_allclose(loaded.rgb_mean, train.rgb_mean, atol=1e-4)

    def test_paths_are_relative(self, prepared):
        text = prepared[0].path.read_text()
        assert "HR/0000.png\tLR_x2/0000.png\t2" in text
        assert "# rgb_mean" in text

    def test_mismatched_lr_is_rejected(self, prepared):
        train, _ = prepared
        lr_path = train.path.parent / train.records[0].lr_path
        write_png(lr_path, np.zeros((5, 5, 3), dtype=np.uint8))
        with pytest.raises(DataError):
            load_manifest(train.path)

    def test_malformed_line(self, tmp_path):
        (tmp_path / "m.tsv").write_text("# scale 2\nHR/a.png only-two-fields\n")
        with pytest.raises(DataError):
            load_manifest(tmp_path / "m.tsv")

    def test_dataset_loads_pairs(self, train_set):
        assert len(train_set) == 4
        hr, lr = train_set[0]
        assert hr.size == (48, 48)
        assert lr.size == (24, 24)
        assert train_set.min_lr_size() == (24, 24)
        assert isinstance(SRDataset.from_path(train_set.manifest.path), SRDataset)
