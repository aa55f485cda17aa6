import pytest
import torch

from oracles import disc_size_oracle, generator_param_count
from scgan.models import (DiscriminatorConfig, GeneratorConfig, PAPER_GENERATOR, build_discriminator,
                          build_generator, count_parameters, discriminator_output_size,
                          forward_generator, load_checkpoint, save_checkpoint)


@pytest.mark.parametrize("depth", [3, 5, 7, 17])
def test_generator_preserves_shape(depth):
    G = build_generator(GeneratorConfig(depth=depth, mid_channels=8))
    x = torch.rand(2, 1, 32, 24)
    assert G(x).shape == x.shape


def test_paper_generator_on_64():
    G = build_generator(PAPER_GENERATOR)
    x = torch.rand(1, 1, 64, 64)
    assert forward_generator(G, x).shape == x.shape


def test_padding_must_equal_depth():
    with pytest.raises(ValueError):
        GeneratorConfig(depth=17, padding=16)


@pytest.mark.parametrize("n,expected", [(64, 9), (128, 25)])
def test_discriminator_sizes(n, expected):
    assert disc_size_oracle(n)[-1] == expected
    assert discriminator_output_size(n) == expected
    D = build_discriminator(DiscriminatorConfig(channels=(8, 8, 8, 1)))
    assert D(torch.rand(1, 1, n, n)).shape == (1, 1, expected, expected)


def test_discriminator_rejects_small_input():
    with pytest.raises(ValueError):
        discriminator_output_size(8)
    with pytest.raises(ValueError):
        build_discriminator()(torch.rand(1, 1, 8, 8))


def test_discriminator_shrinks_each_layer():
    sizes = disc_size_oracle(100)
    assert all(a > b for a, b in zip(sizes, sizes[1:]))


def test_paper_generator_parameter_count():
    assert generator_param_count(17, 1, 64) == 557057
    assert count_parameters(build_generator(PAPER_GENERATOR)) == 557057


def test_zero_last_layer_gives_zero_output():
    G = build_generator(GeneratorConfig(depth=5, mid_channels=8, zero_init_last=True))
    out = forward_generator(G, torch.rand(4, 1, 32, 32))
    assert out.shape == (4, 1, 32, 32)
    assert not out.any()


def test_inference_is_deterministic():
    torch.manual_seed(0)
    G = build_generator(GeneratorConfig(depth=5, mid_channels=8))
    x = torch.rand(3, 1, 16, 16)
    assert torch.equal(forward_generator(G, x), forward_generator(G, x))
    assert G.training


def test_channel_mismatch_and_tiny_input():
    G = build_generator(GeneratorConfig(depth=5, mid_channels=8))
    with pytest.raises(ValueError):
        G(torch.rand(1, 3, 16, 16))
    with pytest.raises(ValueError):
        G(torch.rand(1, 1, 5, 5))


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(1)
    G = build_generator(GeneratorConfig(depth=3, mid_channels=4))
    D = build_discriminator(DiscriminatorConfig(channels=(4, 4, 4, 1)))
    save_checkpoint(tmp_path / "ck", G, D, {"epoch": 3})
    ck = load_checkpoint(tmp_path / "ck")
    assert ck.manifest["epoch"] == 3
    x = torch.rand(2, 1, 29, 29)
    assert torch.equal(forward_generator(G, x), forward_generator(ck.generator, x))
    assert torch.equal(D(x), ck.discriminator(x))
    with pytest.raises(FileNotFoundError):
        load_checkpoint(tmp_path / "missing")
