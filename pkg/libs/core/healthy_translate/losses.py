"""
Training objectives.

Critic: mean D(fake) - mean D(real) + lambda_gp * gradient penalty, where real images come from set B
and fakes are composed healthy outputs for set A. Generator: adversarial loss on composed outputs for
set A and set B, L1 identity on the intermediate image for set B, L1 reconstruction of set A through
the mask, and the focus loss on every mask produced. Critic score maps are reduced by their mean.
"""

from dataclasses import dataclass, fields
from typing import Callable, Dict, Optional

import torch

from healthy_translate.composition import compose_healthy, compose_reconstruction
from healthy_translate.datamodel import LossWeights
from healthy_translate.errors import NonFiniteLossError
from healthy_translate.networks.models import Generator, generator_forward

CriticFn = Callable[[torch.Tensor], torch.Tensor]


@dataclass
class LossBreakdown:
    """Loss terms of one iteration. Critic-side and generator-side fields are filled by
    `critic_loss` and `generator_loss` respectively."""

    wasserstein_d: Optional[torch.Tensor] = None
    gp: Optional[torch.Tensor] = None
    adv_d: Optional[torch.Tensor] = None  # wasserstein_d + lambda_gp * gp
    total_d: Optional[torch.Tensor] = None
    adv_g: Optional[torch.Tensor] = None
    identity: Optional[torch.Tensor] = None
    reconstruction: Optional[torch.Tensor] = None
    focus: Optional[torch.Tensor] = None
    total_g: Optional[torch.Tensor] = None

    def as_floats(self) -> Dict[str, Optional[float]]:
        return {
            f.name: None if getattr(self, f.name) is None else float(getattr(self, f.name))
            for f in fields(self)
        }

    def merge(self, other: "LossBreakdown") -> "LossBreakdown":
        merged = LossBreakdown()
        for f in fields(self):
            value = getattr(other, f.name)
            setattr(merged, f.name, value if value is not None else getattr(self, f.name))
        return merged


def _check_same_shape(x: torch.Tensor, y: torch.Tensor, what: str) -> None:
    if x.shape != y.shape:
        raise ValueError(f"{what}: shapes differ, {tuple(x.shape)} vs {tuple(y.shape)}")


def _check_finite(value: torch.Tensor, what: str) -> torch.Tensor:
    if not torch.isfinite(value).all():
        raise NonFiniteLossError(f"{what} is not finite ({value.detach().cpu().tolist()})")
    return value


def mean_score(critic: CriticFn, x: torch.Tensor) -> torch.Tensor:
    """Critic score averaged over patches and batch."""
    return critic(x).mean()


def gradient_penalty(
    critic: CriticFn,
    real_b: torch.Tensor,
    fake: torch.Tensor,
    rng: Optional[torch.Generator] = None,
) -> torch.Tensor:
    """Mean over the batch of (||grad D(x_hat)||_2 - 1)^2 at x_hat = u * real + (1 - u) * fake.

    u ~ U(0, 1) per sample. Each sample's gradient is that of its own patch-mean score; the norm is
    taken over all of the sample's pixels and channels.
    """
    _check_same_shape(real_b, fake, "gradient_penalty")
    n = real_b.shape[0]
    u = torch.rand(n, 1, 1, 1, generator=rng, dtype=real_b.dtype)
    u = u.to(real_b.device)
    x_hat = (u * real_b.detach() + (1 - u) * fake.detach()).requires_grad_(True)
    scores = critic(x_hat)
    per_sample = scores.reshape(n, -1).mean(dim=1)
    if per_sample.requires_grad:
        (grad,) = torch.autograd.grad(
            outputs=per_sample.sum(),
            inputs=x_hat,
            create_graph=True,
            allow_unused=True,
        )
    else:
        grad = None
    if grad is None:
        # critic does not depend on its input
        grad = torch.zeros_like(x_hat)
    _check_finite(grad, "Critic input gradient")
    norm = grad.reshape(n, -1).norm(2, dim=1)
    return ((norm - 1) ** 2).mean()


def critic_loss(
    critic: CriticFn,
    generator: Generator,
    batch_a: torch.Tensor,
    batch_b: torch.Tensor,
    w: LossWeights,
    rng: Optional[torch.Generator] = None,
) -> LossBreakdown:
    """Critic objective. Generator outputs are constants here: no gradient reaches the generator."""
    with torch.no_grad():
        out = generator_forward(generator, batch_a)
        fake = compose_healthy(batch_a, out.intermediate, out.mask)
    _check_same_shape(fake, batch_b, "critic_loss")
    wasserstein = mean_score(critic, fake) - mean_score(critic, batch_b)
    gp = gradient_penalty(critic, batch_b, fake, rng)
    adv_d = wasserstein + w.lambda_gp * gp
    _check_finite(adv_d, "Critic loss")
    return LossBreakdown(wasserstein_d=wasserstein, gp=gp, adv_d=adv_d, total_d=adv_d)


def generator_adversarial_loss(
    critic: CriticFn,
    fakes_from_a: torch.Tensor,
    fakes_from_b: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """-(mean D(fakes_from_a) + mean D(fakes_from_b)). Without set B fakes, only the A term."""
    loss = -mean_score(critic, fakes_from_a)
    if fakes_from_b is not None:
        if fakes_from_a.shape[1:] != fakes_from_b.shape[1:]:
            raise ValueError(
                "generator_adversarial_loss: shapes differ, "
                f"{tuple(fakes_from_a.shape)} vs {tuple(fakes_from_b.shape)}"
            )
        loss = loss - mean_score(critic, fakes_from_b)
    return loss


def identity_loss(intermediate_on_b: torch.Tensor, batch_b: torch.Tensor) -> torch.Tensor:
    _check_same_shape(intermediate_on_b, batch_b, "identity_loss")
    return (intermediate_on_b - batch_b).abs().mean()


def reconstruction_loss(batch_a: torch.Tensor, a_prime: torch.Tensor) -> torch.Tensor:
    _check_same_shape(batch_a, a_prime, "reconstruction_loss")
    return (batch_a - a_prime).abs().mean()


def focus_loss(m: torch.Tensor, w: LossWeights) -> torch.Tensor:
    """Per mask: lambda_fs * mean(M)^2 + lambda_fz * mean(1 / (|M - 0.5| + eps)), averaged over batch.

    The first term shrinks the mask, the second pushes its values to 0 or 1.
    """
    if m.ndim < 2:
        raise ValueError(f"focus_loss expects a (N, 1, H, W) mask batch, got {tuple(m.shape)}")
    with torch.no_grad():
        if m.numel() and (m.min() < 0 or m.max() > 1):
            raise ValueError(
                f"Mask values must be within [0, 1], got range [{m.min().item()}, {m.max().item()}]"
            )
    flat = m.reshape(m.shape[0], -1)
    size_term = flat.mean(dim=1) ** 2
    binary_term = (1.0 / ((flat - 0.5).abs() + w.epsilon_focus)).mean(dim=1)
    return (w.lambda_fs * size_term + w.lambda_fz * binary_term).mean()


def generator_total_loss(parts: LossBreakdown, w: LossWeights) -> torch.Tensor:
    if (
        parts.adv_g is None
        or parts.reconstruction is None
        or parts.identity is None
        or parts.focus is None
    ):
        raise ValueError("generator_total_loss needs adv_g, reconstruction, identity and focus")
    return (
        parts.adv_g
        + w.lambda_rec * parts.reconstruction
        + w.lambda_id * parts.identity
        + w.lambda_f * parts.focus
    )


def generator_loss(
    critic: CriticFn,
    generator: Generator,
    batch_a: torch.Tensor,
    batch_b: torch.Tensor,
    w: LossWeights,
    adv_on_healthy: bool = True,
) -> LossBreakdown:
    """Generator objective for one pair of batches."""
    out_a = generator_forward(generator, batch_a)
    out_b = generator_forward(generator, batch_b)
    fake_a = compose_healthy(batch_a, out_a.intermediate, out_a.mask)
    a_prime = compose_reconstruction(batch_a, out_a.intermediate, out_a.mask)
    fake_b = compose_healthy(batch_b, out_b.intermediate, out_b.mask)

    parts = LossBreakdown(
        adv_g=generator_adversarial_loss(
            critic, fake_a, fake_b if adv_on_healthy else None
        ),
        identity=identity_loss(out_b.intermediate, batch_b),
        reconstruction=reconstruction_loss(batch_a, a_prime),
        focus=focus_loss(torch.cat([out_a.mask, out_b.mask], dim=0), w),
    )
    parts.total_g = generator_total_loss(parts, w)
    _check_finite(parts.total_g, "Generator loss")
    return parts
