import pytest
import torch

from healthy_translate.networks.models import (
    Critic,
    Generator,
    count_parameters,
    critic_forward,
    generator_forward,
    init_critic,
    init_generator,
)


def _params_equal(a: torch.nn.Module, b: torch.nn.Module) -> bool:
    return all(torch.equal(p, q) for p, q in zip(a.state_dict().values(), b.state_dict().values()))


def test_init_generator_deterministic():
    a = init_generator(1, seed=3, width_scale=0.125)
    b = init_generator(1, seed=3, width_scale=0.125)
    c = init_generator(1, seed=4, width_scale=0.125)
    assert _params_equal(a, b)
    assert not _params_equal(a, c)


def test_init_critic_deterministic():
    a = init_critic(1, 64, seed=3, width_scale=0.125)
    b = init_critic(1, 64, seed=3, width_scale=0.125)
    assert _params_equal(a, b)


def test_init_scheme():
    g = init_generator(3, seed=0)
    conv_weights = torch.cat(
        [m.weight.flatten() for m in g.modules() if isinstance(m, torch.nn.Conv2d)]
    )
    assert abs(conv_weights.std().item() - 0.02) < 1e-3
    assert abs(conv_weights.mean().item()) < 1e-3
    norm_scales = torch.cat(
        [m.weight.flatten() for m in g.modules() if isinstance(m, torch.nn.InstanceNorm2d)]
    )
    assert abs(norm_scales.mean().item() - 1.0) < 5e-3


def test_generator_uses_instance_norm():
    g = init_generator(1, seed=0, width_scale=0.125)
    norms = [m for m in g.modules() if isinstance(m, torch.nn.InstanceNorm2d)]
    # 3 encoder + 12 residual + 2 decoder
    assert len(norms) == 17
    assert not any(isinstance(m, torch.nn.BatchNorm2d) for m in g.modules())


def test_critic_has_no_normalization():
    c = init_critic(1, 64, seed=0)
    assert not any(
        isinstance(m, (torch.nn.InstanceNorm2d, torch.nn.BatchNorm2d)) for m in c.modules()
    )


def test_final_layer_emits_c_plus_one():
    assert Generator(1).decoder[-2].out_channels == 2
    assert Generator(3).decoder[-2].out_channels == 4


def test_generator_parameter_count_c3():
    # layer by layer: conv weights (no bias before instance norm) + 2 per normalized channel
    encoder = (
        (3 * 64 * 7 * 7 + 2 * 64) + (64 * 128 * 4 * 4 + 2 * 128) + (128 * 256 * 4 * 4 + 2 * 256)
    )
    residual = 6 * (2 * (256 * 256 * 3 * 3) + 2 * (2 * 256))
    decoder = (256 * 128 * 4 * 4 + 2 * 128) + (128 * 64 * 4 * 4 + 2 * 64) + (64 * 4 * 7 * 7 + 4)
    assert encoder + residual + decoder == 8_417_988
    assert count_parameters(Generator(3)) == 8_417_988


def test_critic_parameter_count_c3():
    widths = [3, 64, 128, 256, 512, 1024, 2048]
    hidden = sum(widths[i] * widths[i + 1] * 16 + widths[i + 1] for i in range(6))
    output = 2048 * 3 * 3
    assert hidden + output == 44_721_088
    assert count_parameters(Critic(3, 64)) == 44_721_088


def test_generator_shapes_256():
    g = init_generator(3, seed=0, width_scale=0.125)
    out = generator_forward(g, torch.rand(2, 3, 256, 256) * 2 - 1)
    assert out.intermediate.shape == (2, 3, 256, 256)
    assert out.mask.shape == (2, 1, 256, 256)


def test_generator_shapes_non_square():
    g = init_generator(1, seed=0, width_scale=0.125)
    out = generator_forward(g, torch.zeros(1, 1, 8, 12))
    assert out.intermediate.shape == (1, 1, 8, 12)


def test_generator_ranges():
    torch.manual_seed(0)
    g = init_generator(1, seed=1, width_scale=0.25)
    for _ in range(3):
        out = generator_forward(g, torch.randn(2, 1, 32, 32) * 3)
        assert out.intermediate.min() >= -1 and out.intermediate.max() <= 1
        assert out.mask.min() >= 0 and out.mask.max() <= 1


def test_generator_deterministic_in_inference():
    g = init_generator(1, seed=1, width_scale=0.25).eval()
    x = torch.rand(2, 1, 16, 16)
    with torch.no_grad():
        a = generator_forward(g, x)
        b = generator_forward(g, x)
    assert torch.equal(a.intermediate, b.intermediate)
    assert torch.equal(a.mask, b.mask)


@pytest.mark.parametrize(
    "shape,match",
    [
        ((1, 3, 16, 16), "configured for 1 channels"),
        ((1, 1, 18, 16), "divisible by 4"),
        ((1, 16, 16), "(N, C, H, W)"),
    ],
)
def test_generator_shape_errors(shape, match):
    g = init_generator(1, seed=0, width_scale=0.125)
    with pytest.raises(ValueError, match=match):
        generator_forward(g, torch.zeros(shape))


def test_invalid_channels():
    with pytest.raises(ValueError, match="channels"):
        init_generator(0, seed=0)
    with pytest.raises(ValueError, match="channels"):
        init_critic(0, 64, seed=0)


@pytest.mark.parametrize("image_size,out_size", [(64, 1), (128, 2), (256, 4)])
def test_critic_output_size(image_size, out_size):
    c = init_critic(3, image_size, seed=0, width_scale=0.125)
    scores = critic_forward(c, torch.zeros(4, 3, image_size, image_size))
    assert scores.shape == (4, 1, out_size, out_size)


def test_critic_indivisible_size():
    with pytest.raises(ValueError, match="multiple of 64"):
        init_critic(1, 100, seed=0)


def test_critic_shape_mismatch():
    c = init_critic(1, 64, seed=0, width_scale=0.125)
    with pytest.raises(ValueError, match="64x64"):
        critic_forward(c, torch.zeros(1, 1, 128, 128))
    with pytest.raises(ValueError, match="channels"):
        critic_forward(c, torch.zeros(1, 3, 64, 64))


def test_zero_output_layer_gives_zero_scores():
    c = init_critic(1, 128, seed=0, width_scale=0.125)
    with torch.no_grad():
        c.output.weight.zero_()
    scores = critic_forward(c, torch.randn(2, 1, 128, 128))
    assert torch.equal(scores, torch.zeros_like(scores))


def test_critic_finite():
    c = init_critic(1, 64, seed=0, width_scale=0.25)
    assert torch.isfinite(critic_forward(c, torch.rand(3, 1, 64, 64) * 2 - 1)).all()


def test_critic_receptive_field():
    # output j covers input rows 64j - 127 .. 64j + 190, so pixel (0, 0) reaches j in {0, 1}
    c = init_critic(1, 256, seed=0, width_scale=0.125)
    x = torch.rand(1, 1, 256, 256) * 0.5 + 0.25
    perturbed = x.clone()
    perturbed[0, 0, 0, 0] *= 2
    with torch.no_grad():
        before = critic_forward(c, x)[0, 0]
        after = critic_forward(c, perturbed)[0, 0]
    changed = before != after
    assert changed[:2, :2].any()
    assert not changed[2:, :].any()
    assert not changed[:, 2:].any()
