from dataclasses import fields
from dataclasses import dataclass
from typing import Dict

import torch

from uadat.utils.errors import ConfigError
from uadat.utils.errors import check_finite


@dataclass
class LossWeights:
    """beta weights the prediction KL, lambda1 the statistics alignment,
    lambda2 the gradient matching."""

    beta: float = 4.0
    lambda1: float = 1.0
    lambda2: float = 0.05

    def __post_init__(self):
        for name in ("beta", "lambda1", "lambda2"):
            value = getattr(self, name)
            if value < 0:
                raise ConfigError(name, f"must be >= 0: {value}")
            setattr(self, name, float(value))


@dataclass
class LossBreakdown:
    ce_clean: torch.Tensor
    kl_pred: torch.Tensor
    d2d_sa: torch.Tensor
    igm: torch.Tensor
    total: torch.Tensor

    def detached(self) -> Dict[str, float]:
        return {f.name: float(getattr(self, f.name).detach()) for f in fields(self)}


def total_loss(
    ce_clean: torch.Tensor,
    kl_pred: torch.Tensor,
    d2d_sa: torch.Tensor,
    igm: torch.Tensor,
    weights: LossWeights,
) -> LossBreakdown:
    """total = ce_clean + beta * kl_pred + lambda1 * d2d_sa + lambda2 * igm"""
    components = dict(ce_clean=ce_clean, kl_pred=kl_pred, d2d_sa=d2d_sa, igm=igm)
    for name, value in components.items():
        check_finite(value, "loss component", name)
    total = (
        ce_clean
        + weights.beta * kl_pred
        + weights.lambda1 * d2d_sa
        + weights.lambda2 * igm
    )
    return LossBreakdown(total=total, **components)
