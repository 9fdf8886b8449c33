from healthy_translate.networks.models import (
    Critic,
    Generator,
    GeneratorOutput,
    count_parameters,
    critic_forward,
    generator_forward,
    init_critic,
    init_generator,
)

__all__ = [
    "Critic",
    "Generator",
    "GeneratorOutput",
    "count_parameters",
    "critic_forward",
    "generator_forward",
    "init_critic",
    "init_generator",
]
