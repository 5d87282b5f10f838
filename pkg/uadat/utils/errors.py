"""Exception types shared by the training and evaluation code."""

from typing import Optional

import torch


class ConfigError(ValueError):
    """Invalid configuration value. ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class NonFiniteError(RuntimeError):
    """A NaN or Inf showed up where the math requires finite values."""


def check_finite(value: torch.Tensor, what: str, detail: Optional[str] = None):
    if not bool(torch.isfinite(value).all()):
        message = f"non-finite {what}"
        if detail is not None:
            message += f" ({detail})"
        raise NonFiniteError(message)
