import numpy as np
import numpy.testing as npt
import pytest
from PIL import Image
from scipy import ndimage

from retiram import ConfigurationError
from retiram.dataio import (
    AugmentSpec,
    ChannelStats,
    ManifestRecord,
    apply_affine,
    augment,
    find_image,
    foreground_crop,
    generate_scene,
    generate_synthetic,
    level_of_count,
    load_manifest,
    load_mask,
    preprocess,
    preprocess_display,
    read_stats,
    resample_indices,
    save_manifest,
    stats_of_images,
    write_stats,
)


class TestManifest:
    def test_parse_single_row(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("image,level\n10_left,0\n")
        assert load_manifest(p) == [ManifestRecord("10_left", 0)]

    def test_round_trip_preserves_order(self, tmp_path):
        records = [ManifestRecord(f"{i}_left", i % 5) for i in range(7)]
        p = tmp_path / "m.csv"
        save_manifest(records, p)
        assert load_manifest(p) == records

    def test_unknown_level_names_line(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("image,level\na_left,0\nb_right,5\n")
        with pytest.raises(ConfigurationError, match=":3"):
            load_manifest(p)

    def test_malformed_row_and_header(self, tmp_path):
        p = tmp_path / "m.csv"
        p.write_text("image,level\nonly_one_field\n")
        with pytest.raises(ConfigurationError, match=":2"):
            load_manifest(p)
        p.write_text("id,grade\nx,0\n")
        with pytest.raises(ConfigurationError, match="header"):
            load_manifest(p)

    def test_find_image_flat_and_nested(self, tmp_path):
        (tmp_path / "images").mkdir()
        Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "images" / "a_left.png")
        Image.fromarray(np.zeros((4, 4, 3), np.uint8)).save(tmp_path / "b_right.jpeg")
        assert find_image(tmp_path, "a_left").name == "a_left.png"
        assert find_image(tmp_path, "b_right").name == "b_right.jpeg"
        assert find_image(tmp_path, "missing") is None


def bbox_oracle(img, threshold=10):
    """Exhaustive scan for the lit bounding box."""
    top, bottom, left, right = None, None, None, None
    h, w = img.shape[:2]
    for i in range(h):
        for j in range(w):
            if img[i, j].max() > threshold:
                top = i if top is None else top
                bottom = i
                left = j if left is None or j < left else left
                right = j if right is None or j > right else right
    return top, bottom, left, right


class TestPreprocess:
    def test_crop_matches_scan_oracle(self):
        img = np.zeros((40, 50, 3), np.uint8)
        img[9:31, 14:36] = 120          # centered block inside black borders
        top, bottom, left, right = bbox_oracle(img)
        crop = foreground_crop(img)
        npt.assert_array_equal(crop, img[top:bottom + 1, left:right + 1])

    def test_crop_center_squares_wide_regions(self):
        img = np.zeros((20, 40, 3), np.uint8)
        img[5:15, 4:36] = 90
        crop = foreground_crop(img)
        assert crop.shape[0] == crop.shape[1] == 10

    def test_crop_idempotent(self):
        rng = np.random.default_rng(0)
        img = np.zeros((33, 37, 3), np.uint8)
        img[4:29, 6:31] = rng.integers(40, 200, (25, 25, 3))
        once = foreground_crop(img)
        npt.assert_array_equal(foreground_crop(once), once)

    def test_black_image_rejected(self):
        with pytest.raises(ConfigurationError, match="no foreground"):
            foreground_crop(np.zeros((8, 8, 3), np.uint8))

    def test_fully_lit_square_is_resize_plus_normalize_only(self):
        rng = np.random.default_rng(1)
        img = rng.integers(40, 220, (32, 32, 3)).astype(np.uint8)
        stats = ChannelStats((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
        out = preprocess(img, 32, stats)
        npt.assert_allclose(out, img.transpose(2, 0, 1) / 255.0, atol=1e-7)
        assert out.shape == (3, 32, 32) and out.dtype == np.float32

    def test_constant_gray_standardizes_to_constant(self):
        img = np.full((16, 16, 3), 77, np.uint8)
        out = preprocess(img, 16)
        assert np.unique(out).size == 1

    def test_display_variant_keeps_uint8(self):
        img = np.full((20, 20, 3), 50, np.uint8)
        disp = preprocess_display(img, 64)
        assert disp.shape == (64, 64, 3) and disp.dtype == np.uint8

    def test_stats_round_trip(self, tmp_path):
        stats = stats_of_images([np.full((4, 4, 3), 128, np.uint8)])
        p = tmp_path / "stats.txt"
        write_stats(stats, p)
        back = read_stats(p)
        npt.assert_allclose(back.mean, stats.mean, atol=1e-7)
        npt.assert_allclose(back.std, stats.std, atol=1e-7)


def two_class_records(n, minority_share):
    k = int(n * minority_share)
    return ([ManifestRecord(f"maj{i}", 0) for i in range(n - k)]
            + [ManifestRecord(f"min{i}", 1) for i in range(k)])


class TestResampling:
    def test_balanced_dataset_draws_uniformly(self):
        records = [ManifestRecord(f"r{i}", i % 5) for i in range(100)]
        for epoch in (0, 10, 49):
            idx = resample_indices(records, epoch, seed=3)
            levels = np.array([records[i].level for i in idx])
            share = np.bincount(levels, minlength=5) / len(idx)
            npt.assert_allclose(share, 0.2, atol=0.05)

    def test_ninety_ten_split_starts_balanced(self):
        records = two_class_records(10000, 0.1)
        idx = resample_indices(records, epoch=0, seed=11)
        minority = sum(records[i].level == 1 for i in idx) / len(idx)
        assert abs(minority - 0.5) < 0.05

    def test_ninety_ten_split_ends_raw(self):
        records = two_class_records(10000, 0.1)
        idx = resample_indices(records, epoch=49, seed=11, total_epochs=50)
        minority = sum(records[i].level == 1 for i in idx) / len(idx)
        assert abs(minority - 0.1) < 0.02

    def test_five_consecutive_epochs_cover_every_record(self):
        records = two_class_records(100, 0.1)
        for seed in range(10):
            for start in (0, 7, 20):
                seen = set()
                for epoch in range(start, start + 5):
                    seen.update(resample_indices(records, epoch, seed))
                assert seen == set(range(len(records)))

    def test_deterministic_per_epoch_and_seed(self):
        records = two_class_records(50, 0.2)
        a = resample_indices(records, 3, seed=7)
        b = resample_indices(records, 3, seed=7)
        assert a == b
        assert resample_indices(records, 4, seed=7) != a

    def test_empty_records_rejected(self):
        with pytest.raises(ConfigurationError):
            resample_indices([], 0, 0)


class TestAugment:
    def test_identity_spec_is_bitwise_identity(self):
        rng = np.random.default_rng(2)
        img = rng.standard_normal((3, 32, 32)).astype(np.float32)
        out = augment(img, AugmentSpec.identity(), seed=123)
        assert out.tobytes() == img.tobytes()

    def test_half_turn_twice_returns_original(self):
        rng = np.random.default_rng(3)
        img = rng.standard_normal((3, 24, 24)).astype(np.float32)
        twice = apply_affine(apply_affine(img, 0, 0, 180.0, 1.0), 0, 0, 180.0, 1.0)
        assert np.abs(twice - img).mean() < 1e-3

    def test_horizontal_flip_is_exact_column_reversal(self):
        rng = np.random.default_rng(4)
        img = rng.standard_normal((3, 8, 8)).astype(np.float32)
        spec = AugmentSpec(0.0, 0.0, 0.0, hflip=True, vflip=False,
                           color_scale_delta=0.0, color_shift=0.0)
        outcomes = {augment(img, spec, seed=s).tobytes() for s in range(12)}
        assert outcomes == {img.tobytes(), np.ascontiguousarray(img[:, :, ::-1]).tobytes()}

    def test_deterministic_in_seed(self):
        rng = np.random.default_rng(5)
        img = rng.standard_normal((3, 16, 16)).astype(np.float32)
        spec = AugmentSpec.default_for(16)
        assert augment(img, spec, 9).tobytes() == augment(img, spec, 9).tobytes()
        assert augment(img, spec, 9).tobytes() != augment(img, spec, 10).tobytes()

    def test_translation_moves_content(self):
        img = np.zeros((1, 21, 21), np.float32)
        img[0, 10, 10] = 1.0
        out = apply_affine(img, 3.0, 0.0, 0.0, 1.0)
        assert out[0, 10, 13] > 0.9 and out[0, 10, 10] < 0.1


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    records = generate_synthetic(60, 64, seed=8, out_dir=root)
    return root, records


class TestSynthetic:
    def test_level_zero_has_empty_mask(self, dataset):
        root, records = dataset
        for r in records:
            mask = load_mask(root, r.image_id)
            assert mask.any() == (r.level > 0)

    def test_level_bucket_function_monotone(self):
        levels = [level_of_count(c) for c in range(20)]
        assert levels == sorted(levels)
        assert levels[0] == 0 and levels[1] == 1 and levels[3] == 2
        assert levels[6] == 3 and levels[10] == 4 and levels[19] == 4

    def test_lesion_contrast_against_ring_median(self, dataset):
        # every lesion pixel must differ from the median of a surrounding
        # non-lesion ring by at least 30/255 in some channel
        root, records = dataset
        checked = 0
        for r in records:
            if r.level == 0:
                continue
            img = np.asarray(Image.open(find_image(root, r.image_id))).astype(np.int16)
            mask = load_mask(root, r.image_id)
            labels, n = ndimage.label(mask)
            for comp in range(1, n + 1):
                inside = labels == comp
                ring = ndimage.binary_dilation(inside, iterations=4) & ~mask
                ring_median = np.median(img[ring], axis=0)
                diff = np.abs(img[inside] - ring_median).max(axis=1)
                assert diff.min() >= 30, f"{r.image_id} component {comp}"
                checked += 1
        assert checked > 20

    def test_level_histogram_tracks_weights(self, tmp_path):
        records = generate_synthetic(400, 48, seed=3, out_dir=tmp_path / "h",
                                     level_weights=(0.4, 0.3, 0.1, 0.1, 0.1))
        hist = np.bincount([r.level for r in records], minlength=5) / len(records)
        npt.assert_allclose(hist, (0.4, 0.3, 0.1, 0.1, 0.1), atol=0.08)

    def test_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a"
        b = tmp_path / "b"
        ra = generate_synthetic(8, 48, seed=21, out_dir=a)
        rb = generate_synthetic(8, 48, seed=21, out_dir=b)
        assert ra == rb
        name = f"{ra[3].image_id}.png"
        assert (a / "images" / name).read_bytes() == (b / "images" / name).read_bytes()
        assert (a / "manifest.csv").read_bytes() == (b / "manifest.csv").read_bytes()
        assert (a / "stats.txt").read_bytes() == (b / "stats.txt").read_bytes()

    def test_minimum_count_enforced(self, tmp_path):
        with pytest.raises(ConfigurationError):
            generate_synthetic(4, 64, seed=0, out_dir=tmp_path / "x")

    def test_scene_truth_consistency(self):
        for level in range(5):
            _, truth = generate_scene(64, level, np.random.default_rng([1, level]))
            assert truth.level == level_of_count(truth.lesion_count)
            assert truth.lesion_mask.any() == (truth.level > 0)
