from .layers import Linear, Module
from .models import (
    DiscriminatorConfig,
    EmbeddingGenerator,
    EmbeddingGeneratorConfig,
    ExpertConfig,
    ExpertRegressor,
    FrameDiscriminator,
    VideoGenerator,
    VideoGeneratorConfig,
    VQAutoencoder,
    VQConfig,
    discriminate,
    expert_predict,
    generate,
    twin_generate,
    vq_forward,
)
from .noise import sample_noise

__all__ = [
    "DiscriminatorConfig", "EmbeddingGenerator", "EmbeddingGeneratorConfig", "ExpertConfig",
    "ExpertRegressor", "FrameDiscriminator", "Linear", "Module", "VQAutoencoder", "VQConfig",
    "VideoGenerator", "VideoGeneratorConfig", "discriminate", "expert_predict", "generate",
    "sample_noise", "twin_generate", "vq_forward",
]
