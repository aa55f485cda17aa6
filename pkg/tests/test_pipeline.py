import numpy as np
import pytest
import torch

from scgan.core import ImagePatch, NoiseMap, Pair, PairedCorpus
from scgan.models import Generator, GeneratorConfig
from scgan.pipeline import (DenoiserConfig, ResidualDenoiser, bicubic_downsample,
                            construct_pairs, construct_sr_pairs, denoise, extract_noise,
                            load_denoiser, predict_noise, save_denoiser, train_denoiser)
from scgan.synthesis import GaussianNoiseSpec, add_gaussian_noise, smooth_images


def zero_generator():
    return Generator(GeneratorConfig(depth=3, mid_channels=4, zero_init_last=True))


def random_generator(seed=0):
    torch.manual_seed(seed)
    return Generator(GeneratorConfig(depth=3, mid_channels=4, init_std=0.3))


def noisy_patches(n, size=16, seed=0):
    return [add_gaussian_noise(p, GaussianNoiseSpec(25.0, seed=seed + i))[0]
            for i, p in enumerate(smooth_images(n, size, seed=seed))]


def test_extract_with_zero_generator():
    p = noisy_patches(1)[0]
    noise, est = extract_noise(zero_generator(), p)
    assert not noise.values.any()
    np.testing.assert_array_equal(est.values, p.values)


def test_extract_identity_for_any_generator():
    p = noisy_patches(1)[0]
    noise, est = extract_noise(random_generator(), p)
    np.testing.assert_array_equal(p.values - est.values, noise.values)


def test_extract_channel_mismatch():
    with pytest.raises(ValueError):
        extract_noise(zero_generator(), ImagePatch(np.zeros((16, 16, 3))))


def test_zero_generator_pairs_are_clean():
    clean = smooth_images(5, 16, seed=1)
    pairs = construct_pairs(zero_generator(), noisy_patches(10), clean, seed=0)
    assert len(pairs) == 5
    for pair, c in zip(pairs.pairs, clean):
        np.testing.assert_array_equal(pair.noisy.values, c.values)


def test_pair_identity_off_clip_and_determinism():
    G = random_generator(1)
    clean = smooth_images(20, 16, seed=2, low=0.0, high=255.0)
    noisy = noisy_patches(10)
    pairs = construct_pairs(G, noisy, clean, seed=4)
    pairs.check_identity()
    again = construct_pairs(G, noisy, clean, seed=4)
    assert pairs.metadata["noise_sources"] == again.metadata["noise_sources"]
    for a, b in zip(pairs.pairs, again.pairs):
        np.testing.assert_array_equal(a.noise.values, b.noise.values)
    assert all(0 <= p.noisy.values.min() and p.noisy.values.max() <= 255 for p in pairs.pairs)


def test_construct_pairs_rejects_empty():
    with pytest.raises(ValueError):
        construct_pairs(zero_generator(), [], smooth_images(2, 16, seed=0))


def test_larger_noise_map_is_cropped():
    clean = smooth_images(3, 12, seed=0)
    pairs = construct_pairs(random_generator(), noisy_patches(2, size=20), clean, seed=0)
    assert all(p.noise.values.shape == (12, 12, 1) for p in pairs.pairs)
    pairs.check_identity()


@pytest.mark.parametrize("r", [2, 3, 4])
def test_sr_pair_shapes(r):
    hr = smooth_images(3, 48, seed=3)
    pairs = construct_sr_pairs(zero_generator(), hr, noisy_patches(4, size=24), r, seed=0)
    for pair, h in zip(pairs.pairs, hr):
        assert pair.noisy.shape == (48 // r, 48 // r, 1)
        assert pair.clean.shape == (48, 48, 1)
        # zero generator: the noisy LR is the clean bicubic LR
        np.testing.assert_array_equal(pair.noisy.values, bicubic_downsample(h, r).values)
    pairs.check_identity()


def test_sr_rejects_bad_scale_and_dims():
    hr = smooth_images(1, 30, seed=0)
    with pytest.raises(ValueError):
        construct_sr_pairs(zero_generator(), hr, noisy_patches(1), 5)
    with pytest.raises(ValueError):
        construct_sr_pairs(zero_generator(), hr, noisy_patches(1), 4)


def test_bicubic_constant_invariance():
    lr = bicubic_downsample(ImagePatch(np.full((64, 64), 77.0)), 2)
    assert lr.shape == (32, 32, 1)
    np.testing.assert_allclose(lr.values, 77.0, atol=1e-9)


SMALL = DenoiserConfig(depth=3, channels=8, epochs=3, batch_size=4, patch_size=16)


def _pairs(identical=False, n=8):
    clean = smooth_images(n, 16, seed=0)
    out = []
    for i, c in enumerate(clean):
        if identical:
            out.append(Pair(c, c, NoiseMap(np.zeros(c.shape))))
        else:
            noisy, truth = add_gaussian_noise(c, GaussianNoiseSpec(25.0, seed=i))
            out.append(Pair(noisy, c, truth))
    return PairedCorpus(out)


def test_denoiser_determinism():
    a = train_denoiser(_pairs(), SMALL, seed=1)
    b = train_denoiser(_pairs(), SMALL, seed=1)
    assert a.final_loss == b.final_loss


def test_denoiser_on_identical_pairs_predicts_near_zero():
    res = train_denoiser(_pairs(identical=True), DenoiserConfig(depth=3, channels=8, epochs=10,
                                                                batch_size=4), seed=0)
    pred = predict_noise(res.model, smooth_images(1, 16, seed=7)[0])
    assert np.abs(pred.values).mean() < 1.0
    assert res.history[-1]["loss"] <= res.history[0]["loss"]


def test_denoiser_rejects_empty_and_bad_depth():
    with pytest.raises(ValueError):
        train_denoiser(PairedCorpus([]), SMALL)
    with pytest.raises(ValueError):
        DenoiserConfig(depth=2)


def test_zero_denoiser_and_clamp():
    model = ResidualDenoiser(depth=3, features=4)
    p = noisy_patches(1)[0]
    np.testing.assert_array_equal(denoise(model, p).values, p.values)
    torch.nn.init.constant_(model.body[-1].bias, -5.0)  # predicts strongly negative noise
    out = denoise(model, ImagePatch(np.full((8, 8), 250.0)))
    assert out.values.max() <= 255 and out.values.min() >= 0


def test_residual_identity_before_clip():
    torch.manual_seed(0)
    model = ResidualDenoiser(depth=3, features=4)
    torch.nn.init.normal_(model.body[-1].weight, 0, 0.1)
    p = ImagePatch(np.full((8, 8), 128.0))
    pred = predict_noise(model, p)
    out = denoise(model, p)
    inside = (out.values > 0) & (out.values < 255)
    np.testing.assert_allclose((out.values + pred.values)[inside], p.values[inside], atol=1e-9)


def test_denoiser_save_load(tmp_path):
    res = train_denoiser(_pairs(), SMALL, seed=0)
    save_denoiser(res, tmp_path / "d")
    model = load_denoiser(tmp_path / "d")
    p = noisy_patches(1)[0]
    np.testing.assert_array_equal(denoise(model, p).values, denoise(res, p).values)
    with pytest.raises(FileNotFoundError):
        load_denoiser(tmp_path / "none")
