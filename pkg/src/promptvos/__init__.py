"""Prompt-tuned frozen dual-encoder referring video object segmentation.

The backbone encoders are frozen; adaptation happens through learnable
prompt tokens (vision / temporal / historical / language), cross-modal
feature fusion, and a cube-frame sparse-attention reasoning stack.
Everything runs in float64 on CPU so that finite-difference gradient
checks and brute-force attention oracles are tight.
"""

from promptvos.config import ModelConfig, gradcheck_config, toy_config

__version__ = "0.1.0"

__all__ = ["ModelConfig", "toy_config", "gradcheck_config", "__version__"]
