"""Per-instance channel statistics of feature maps and their uncertainty."""

from dataclasses import dataclass
from typing import Sequence
from typing import Tuple

import torch
from typeguard import check_argument_types

from uadat.utils.errors import check_finite


@dataclass
class FeatureStats:
    """Channel statistics of a batch of feature maps.

    Attributes:
        mu: (B, D) channel means.
        sigma: (B, D) channel standard deviations, sqrt of the cov diagonal.
        cov: (B, D, D) inter-channel covariance over spatial positions.
    """

    mu: torch.Tensor
    sigma: torch.Tensor
    cov: torch.Tensor


@dataclass
class StatUncertainty:
    """Spread of channel means (std_mu) and stds (std_sigma) over a sample set.

    Shapes are (D,) for one training sample or (B, D) for a batch.
    """

    std_mu: torch.Tensor
    std_sigma: torch.Tensor

    @classmethod
    def zeros(cls, *shape: int, dtype=None, device=None) -> "StatUncertainty":
        z = torch.zeros(*shape, dtype=dtype, device=device)
        return cls(std_mu=z, std_sigma=z.clone())

    @classmethod
    def constant(cls, value: float, *shape: int, dtype=None, device=None):
        c = torch.full(shape, value, dtype=dtype, device=device)
        return cls(std_mu=c, std_sigma=c.clone())


def _safe_sqrt(var: torch.Tensor) -> torch.Tensor:
    # sqrt has an infinite slope at 0; constant channels get sigma = 0 with zero grad
    tiny = torch.finfo(var.dtype).tiny
    return torch.where(var > 0, var.clamp_min(tiny).sqrt(), torch.zeros_like(var))


def feature_stats(f: torch.Tensor) -> FeatureStats:
    """Channel mean, covariance and std of every instance in ``f``.

    Args:
        f: (B, D, H, W) feature batch with H * W >= 2.

    Returns:
        FeatureStats with population moments over the H * W positions.
        Differentiable w.r.t. ``f``.
    """
    assert check_argument_types()
    if f.dim() != 4:
        raise ValueError(f"feature batch must be (B, D, H, W): {tuple(f.shape)}")
    B, D, H, W = f.shape
    if H * W < 2:
        raise ValueError(f"need at least 2 spatial positions, got H*W={H * W}")
    check_finite(f, "features", f"shape={tuple(f.shape)}")

    flat = f.reshape(B, D, H * W)
    mu = flat.mean(dim=-1)
    centered = flat - mu.unsqueeze(-1)
    cov = centered @ centered.transpose(1, 2) / (H * W)
    # exact symmetry; a + b == b + a in IEEE arithmetic
    cov = 0.5 * (cov + cov.transpose(1, 2))
    sigma = _safe_sqrt(torch.diagonal(cov, dim1=-2, dim2=-1))
    return FeatureStats(mu=mu, sigma=sigma, cov=cov)


def stat_uncertainty(
    samples: Sequence[Tuple[torch.Tensor, torch.Tensor]]
) -> StatUncertainty:
    """Population std of the (mu, sigma) vectors of one training sample.

    Args:
        samples: (mu, sigma) pairs from the intermediate x historical grid.
    """
    if len(samples) == 0:
        raise ValueError("stat_uncertainty needs at least one (mu, sigma) pair")
    mus = torch.stack([m for m, _ in samples])
    sigmas = torch.stack([s for _, s in samples])

    def _pop_std(x):
        return (x - x.mean(dim=0)).pow(2).mean(dim=0).sqrt()

    return StatUncertainty(std_mu=_pop_std(mus), std_sigma=_pop_std(sigmas))


def masked_uncertainty(
    mu: torch.Tensor, sigma: torch.Tensor, mask: torch.Tensor
) -> StatUncertainty:
    """Batched :func:`stat_uncertainty` over a padded sample grid.

    Args:
        mu: (B, K, D) stacked channel means.
        sigma: (B, K, D) stacked channel stds.
        mask: (B, K) True where the entry exists.

    Rows with no valid entry get zero uncertainty.
    """
    m = mask.to(mu.dtype).unsqueeze(-1)
    count = m.sum(dim=1).clamp_min(1.0)

    def _pop_std(x):
        mean = (x * m).sum(dim=1) / count
        var = ((x - mean.unsqueeze(1)).pow(2) * m).sum(dim=1) / count
        return var.clamp_min(0.0).sqrt()

    return StatUncertainty(std_mu=_pop_std(mu), std_sigma=_pop_std(sigma))
