import numpy as np
import pytest
from shapely.geometry import LineString, Point

from scgan.core import ImagePatch
from scgan.evaluation import psnr
from scgan.synthesis import (GaussianNoiseSpec, RainStreakSpec, add_gaussian_noise,
                             add_rain_streaks, build_unpaired_corpus, crop_patches,
                             rasterize_segment, sample_streaks, smooth_images)


def gray(h, w, value=128.0):
    return ImagePatch(np.full((h, w), value))


def test_gaussian_noise_statistics():
    noisy, truth = add_gaussian_noise(gray(100, 100), GaussianNoiseSpec(25.0, seed=0))
    t = truth.values
    assert -1.0 <= t.mean() <= 1.0
    assert 24.0 <= t.std() <= 26.0
    assert noisy.values.min() >= 0 and noisy.values.max() <= 255


def test_sigma_must_be_positive():
    with pytest.raises(ValueError):
        GaussianNoiseSpec(0.0)
    with pytest.raises(ValueError):
        GaussianNoiseSpec(-1.0)


def test_gaussian_noisy_psnr_near_appendix_row():
    # 8-bit natural-range content: values across [0, 255] so some clipping happens
    src = smooth_images(20, 64, seed=5, low=0.0, high=255.0)
    vals = []
    for i, p in enumerate(src):
        q = ImagePatch(np.rint(p.values))
        noisy, _ = add_gaussian_noise(q, GaussianNoiseSpec(25.0, seed=i))
        vals.append(psnr(noisy, q))
    assert 20.2 <= np.mean(vals) <= 20.7


def test_gaussian_exact_identity_without_clipping():
    p = gray(40, 40, 128.0)
    noisy, truth = add_gaussian_noise(p, GaussianNoiseSpec(10.0, seed=3))
    assert 0 < noisy.values.min() and noisy.values.max() < 255
    np.testing.assert_array_equal(noisy.values - p.values, truth.values)


def test_gaussian_determinism():
    a = add_gaussian_noise(gray(16, 16), GaussianNoiseSpec(25.0, seed=11))[1].values
    b = add_gaussian_noise(gray(16, 16), GaussianNoiseSpec(25.0, seed=11))[1].values
    np.testing.assert_array_equal(a, b)


def test_rain_zero_streaks():
    p = gray(32, 32, 60.0)
    noisy, truth = add_rain_streaks(p, RainStreakSpec(count=0))
    assert not truth.values.any()
    np.testing.assert_array_equal(noisy.values, p.values)


def _shapely_oracle(shape, p0, p1, thickness, intensity):
    # independent geometry: exact point-to-segment distance from shapely
    line = LineString([(p0[1], p0[0]), (p1[1], p1[0])])
    h, w = shape
    out = np.zeros(shape)
    for y in range(h):
        for x in range(w):
            d = line.distance(Point(x, y))
            out[y, x] = intensity * min(max(thickness / 2 + 0.5 - d, 0.0), 1.0)
    return out


def test_horizontal_streak_matches_rasterization_oracle():
    # pixel-aligned: the segment covers exactly columns 11..20 on row 16
    layer = rasterize_segment((32, 32), (16, 11), (16, 20), 1.0, 50.0)
    expected = np.zeros((32, 32))
    expected[16, 11:21] = 50.0
    np.testing.assert_array_equal(layer, expected)

    spec = RainStreakSpec(count=1, length=(10, 10), angle=(0, 0), intensity=(50, 50),
                          thickness=1.0, seed=4)
    _, truth = add_rain_streaks(gray(32, 32, 0.0), spec)
    s = sample_streaks((32, 32), spec, np.random.default_rng(4))[0]
    oracle = _shapely_oracle((32, 32), s["p0"], s["p1"], 1.0, 50.0)
    np.testing.assert_allclose(truth.values[:, :, 0], oracle, atol=1e-9)
    np.testing.assert_array_equal(truth.values[:, :, 0] != 0, oracle != 0)
    assert truth.values.mean() > 0


def test_rain_oblique_streak_oracle():
    layer = rasterize_segment((24, 24), (3.3, 4.7), (19.1, 15.2), 2.0, 40.0)
    oracle = _shapely_oracle((24, 24), (3.3, 4.7), (19.1, 15.2), 2.0, 40.0)
    np.testing.assert_allclose(layer, oracle, atol=1e-9)


def test_rain_determinism_and_positivity():
    spec = RainStreakSpec(count=6, seed=21)
    p = ImagePatch(np.random.default_rng(0).uniform(0, 200, (32, 32, 3)))
    a = add_rain_streaks(p, spec)[1].values
    b = add_rain_streaks(p, spec)[1].values
    np.testing.assert_array_equal(a, b)
    assert (a >= 0).all() and a.mean() > 0


def test_rain_spec_validation():
    with pytest.raises(ValueError):
        RainStreakSpec(intensity=(0.0, 10.0))
    with pytest.raises(ValueError):
        RainStreakSpec(length=(10.0, 5.0))


def test_crop_patches():
    img = ImagePatch(np.random.default_rng(0).uniform(0, 255, (321, 481)))
    crops = crop_patches(img, 128, 4, seed=0)
    assert len(crops) == 4 and all(c.shape == (128, 128, 1) for c in crops)
    again = crop_patches(img, 128, 4, seed=0)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(crops, again))

    small = ImagePatch(np.random.default_rng(1).uniform(0, 255, (32, 32)))
    for c in crop_patches(small, 32, 3, seed=1):
        np.testing.assert_array_equal(c.values, small.values)
    with pytest.raises(ValueError):
        crop_patches(small, 64, 1, seed=0)


def test_build_unpaired_corpus_partition():
    sources = smooth_images(10, 16, seed=0)
    corpus = build_unpaired_corpus(sources, GaussianNoiseSpec(25.0), 0.5, seed=3)
    m = corpus.metadata
    assert len(m["noisy_sources"]) == 5 and len(m["clean_sources"]) == 5
    assert not set(m["noisy_sources"]) & set(m["clean_sources"])
    assert len(corpus.noisy_set) == 5 and len(corpus.clean_set) == 5
    # clean set is the untouched sources
    for idx, patch in zip(m["clean_sources"], corpus.clean_set):
        np.testing.assert_array_equal(patch.values, sources[idx].values)

    again = build_unpaired_corpus(sources, GaussianNoiseSpec(25.0), 0.5, seed=3)
    for a, b in zip(corpus.noisy_set, again.noisy_set):
        np.testing.assert_array_equal(a.values, b.values)


@pytest.mark.parametrize("ratio", [0.0, 1.0])
def test_build_unpaired_corpus_rejects_empty_side(ratio):
    with pytest.raises(ValueError):
        build_unpaired_corpus(smooth_images(10, 8, seed=0), GaussianNoiseSpec(25.0), ratio)


def test_build_unpaired_corpus_needs_two_sources():
    with pytest.raises(ValueError):
        build_unpaired_corpus(smooth_images(1, 8, seed=0), GaussianNoiseSpec(25.0), 0.5)


def test_corpus_crops_and_rain():
    sources = smooth_images(6, 48, seed=2)
    corpus = build_unpaired_corpus(sources, RainStreakSpec(count=3), 0.5, seed=1,
                                   patch_size=32, patches_per_source=2)
    assert len(corpus.noisy_set) == 6 and len(corpus.clean_set) == 6
    assert all(p.shape == (32, 32, 1) for p in corpus.noisy_set + corpus.clean_set)
    assert all((t.values >= 0).all() for t in corpus.noisy_truth)


def test_smooth_sources_stay_in_range():
    for p in smooth_images(20, 32, seed=9):
        assert p.values.min() >= 40.0 - 1e-9 and p.values.max() <= 215.0 + 1e-9
