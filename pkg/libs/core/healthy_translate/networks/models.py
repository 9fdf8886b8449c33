"""
Generator and critic.

The generator is an encoder, six residual blocks and a decoder. Its last layer emits C+1 channels
through tanh: the first C are the intermediate healthy image, the last is remapped to [0, 1] as the
mask. The critic is a patch critic with six stride-2 convolutions and no normalization, so its score
map is (H/64, W/64).

`width_scale` multiplies every layer width without changing the topology, which gives tiny networks
for gradient checks.
"""

from dataclasses import dataclass

import torch
import torch.nn as nn

from healthy_translate.datamodel import SIZE_MULTIPLE

INIT_STD = 0.02
N_RESIDUAL_BLOCKS = 6
CRITIC_DEPTH = 6
LEAKY_SLOPE = 0.01


def scaled_width(width_scale: float, base: int = 64) -> int:
    width = round(base * width_scale)
    if width < 1:
        raise ValueError(f"width_scale {width_scale} leaves layers with no channels")
    return width


def _check_batch(x: torch.Tensor, channels: int, what: str) -> None:
    if x.ndim != 4:
        raise ValueError(f"{what} expects a (N, C, H, W) batch, got shape {tuple(x.shape)}")
    if x.shape[1] != channels:
        raise ValueError(
            f"{what} is configured for {channels} channels, got {x.shape[1]} in shape {tuple(x.shape)}"
        )


@dataclass
class GeneratorOutput:
    intermediate: torch.Tensor  # B_int, (N, C, H, W) in [-1, 1]
    mask: torch.Tensor  # M, (N, 1, H, W) in [0, 1]


class ResidualBlock(nn.Module):
    """Two 3x3 convolutions with instance norm, ReLU after the first only, identity skip."""

    def __init__(self, channels: int):
        super().__init__()
        self.main = nn.Sequential(
            nn.Conv2d(channels, channels, kernel_size=3, stride=1, padding=1, bias=False),
            nn.InstanceNorm2d(channels, affine=True),
            nn.ReLU(inplace=True),
            nn.Conv2d(channels, channels, kernel_size=3, stride=1, padding=1, bias=False),
            nn.InstanceNorm2d(channels, affine=True),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.main(x)


def _down(in_ch: int, out_ch: int, kernel: int, stride: int, padding: int) -> list[nn.Module]:
    return [
        nn.Conv2d(in_ch, out_ch, kernel_size=kernel, stride=stride, padding=padding, bias=False),
        nn.InstanceNorm2d(out_ch, affine=True),
        nn.ReLU(inplace=True),
    ]


def _up(in_ch: int, out_ch: int) -> list[nn.Module]:
    return [
        nn.ConvTranspose2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1, bias=False),
        nn.InstanceNorm2d(out_ch, affine=True),
        nn.ReLU(inplace=True),
    ]


class Generator(nn.Module):
    def __init__(self, channels: int, width_scale: float = 1.0):
        super().__init__()
        if channels < 1:
            raise ValueError(f"channels must be at least 1, got {channels}")
        self.channels = channels
        self.width_scale = width_scale
        w = scaled_width(width_scale)
        self.encoder = nn.Sequential(
            *_down(channels, w, 7, 1, 3),
            *_down(w, 2 * w, 4, 2, 1),
            *_down(2 * w, 4 * w, 4, 2, 1),
        )
        self.bottleneck = nn.Sequential(
            *[ResidualBlock(4 * w) for _ in range(N_RESIDUAL_BLOCKS)]
        )
        self.decoder = nn.Sequential(
            *_up(4 * w, 2 * w),
            *_up(2 * w, w),
            nn.Conv2d(w, channels + 1, kernel_size=7, stride=1, padding=3, bias=True),
            nn.Tanh(),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_batch(x, self.channels, "Generator")
        if x.shape[2] % 4 != 0 or x.shape[3] % 4 != 0:
            raise ValueError(
                f"Generator input height and width must be divisible by 4, got {tuple(x.shape[2:])}"
            )
        return self.decoder(self.bottleneck(self.encoder(x)))


class Critic(nn.Module):
    def __init__(self, channels: int, image_size: int, width_scale: float = 1.0):
        super().__init__()
        if channels < 1:
            raise ValueError(f"channels must be at least 1, got {channels}")
        if image_size <= 0 or image_size % SIZE_MULTIPLE != 0:
            raise ValueError(
                f"image_size must be a positive multiple of {SIZE_MULTIPLE}, got {image_size}"
            )
        self.channels = channels
        self.image_size = image_size
        self.width_scale = width_scale
        w = scaled_width(width_scale)
        layers: list[nn.Module] = []
        in_ch = channels
        for depth in range(CRITIC_DEPTH):
            out_ch = w * 2**depth
            layers += [
                nn.Conv2d(in_ch, out_ch, kernel_size=4, stride=2, padding=1, bias=True),
                nn.LeakyReLU(LEAKY_SLOPE),
            ]
            in_ch = out_ch
        self.main = nn.Sequential(*layers)
        self.output = nn.Conv2d(in_ch, 1, kernel_size=3, stride=1, padding=1, bias=False)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        _check_batch(x, self.channels, "Critic")
        if tuple(x.shape[2:]) != (self.image_size, self.image_size):
            raise ValueError(
                f"Critic is configured for {self.image_size}x{self.image_size} images, got {x.shape[3]}x{x.shape[2]}"
            )
        return self.output(self.main(x))


def init_weights(module: nn.Module, seed: int) -> None:
    """Conv weights ~ N(0, 0.02), norm scales ~ N(1, 0.02), biases 0. Deterministic from seed."""
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for m in module.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                noise = torch.randn(m.weight.shape, generator=generator, dtype=torch.float32)
                m.weight.copy_(noise * INIT_STD)
                if m.bias is not None:
                    m.bias.zero_()
            elif isinstance(m, nn.InstanceNorm2d) and m.affine:
                assert m.weight is not None and m.bias is not None
                noise = torch.randn(m.weight.shape, generator=generator, dtype=torch.float32)
                m.weight.copy_(1.0 + noise * INIT_STD)
                m.bias.zero_()


def init_generator(channels: int, seed: int, width_scale: float = 1.0) -> Generator:
    generator = Generator(channels, width_scale)
    init_weights(generator, seed)
    return generator


def init_critic(
    channels: int, image_size: int, seed: int, width_scale: float = 1.0
) -> Critic:
    critic = Critic(channels, image_size, width_scale)
    init_weights(critic, seed)
    return critic


def generator_forward(generator: Generator, x: torch.Tensor) -> GeneratorOutput:
    out = generator(x)
    c = generator.channels
    return GeneratorOutput(intermediate=out[:, :c], mask=(out[:, c:] + 1.0) / 2.0)


def critic_forward(critic: Critic, x: torch.Tensor) -> torch.Tensor:
    """Patch scores (N, 1, H/64, W/64), unbounded, no final activation."""
    return critic(x)


def count_parameters(module: nn.Module) -> int:
    return sum(p.numel() for p in module.parameters() if p.requires_grad)
