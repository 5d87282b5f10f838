"""Uncertainty-aware re-styling of feature maps (AdaIN with noisy statistics)."""

from dataclasses import dataclass
from typing import Optional

import torch

from uadat.statistics.feature_stats import FeatureStats
from uadat.statistics.feature_stats import StatUncertainty
from uadat.utils.errors import NonFiniteError

AUM_MODES = ("uncertainty", "deterministic", "random", "none")


@dataclass
class AumNoise:
    """Standard normal draws, one scalar per channel per instance."""

    eps1: torch.Tensor
    eps2: torch.Tensor

    @classmethod
    def sample(
        cls,
        batch_size: int,
        feature_dim: int,
        generator: Optional[torch.Generator] = None,
        dtype: Optional[torch.dtype] = None,
        device=None,
    ) -> "AumNoise":
        shape = (batch_size, feature_dim)
        kwargs = dict(generator=generator, dtype=dtype, device=device)
        return cls(eps1=torch.randn(shape, **kwargs), eps2=torch.randn(shape, **kwargs))


def aum_augment(
    f: torch.Tensor,
    stats: FeatureStats,
    unc: StatUncertainty,
    noise: AumNoise,
    eps_div: float = 1e-6,
) -> torch.Tensor:
    """Re-style ``f`` with its own statistics perturbed by their uncertainty.

        out = (sigma + eps1 * std_sigma) * (f - mu) / (sigma + eps_div)
              + (mu + eps2 * std_mu)

    Channel vectors broadcast over H x W. The perturbed scale may be negative;
    it is used as drawn.

    Args:
        f: (B, D, H, W) feature batch.
        stats: statistics computed from ``f`` itself.
        unc: (D,) or (B, D) uncertainty.
        noise: (B, D) draws.
        eps_div: Guard added to sigma in the denominator only.
    """
    mu = stats.mu[..., None, None]
    sigma = stats.sigma[..., None, None]
    scale = (stats.sigma + noise.eps1 * unc.std_sigma)[..., None, None]
    shift = (stats.mu + noise.eps2 * unc.std_mu)[..., None, None]
    out = scale * (f - mu) / (sigma + eps_div) + shift

    finite = torch.isfinite(out)
    if not bool(finite.all()):
        channels = (~finite).flatten(2).any(-1).any(0).nonzero().flatten().tolist()
        raise NonFiniteError(f"non-finite AUM output in channels {channels}")
    return out
