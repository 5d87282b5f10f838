"""Distribution-to-distribution alignment losses.

Prediction alignment compares the softmax outputs of uncertainty-augmented
benign and adversarial features; statistics alignment compares the
per-instance Gaussians N(mu, cov) of the two feature maps in closed form.
"""

from typing import Dict
from typing import Optional
from typing import Tuple

import torch
import torch.nn.functional as F
from typeguard import check_argument_types

from uadat.layers.dual_batch_norm import BranchTag
from uadat.losses.total import LossWeights
from uadat.statistics.feature_stats import FeatureStats
from uadat.utils.errors import NonFiniteError
from uadat.utils.errors import check_finite


def prediction_kl(ref_logits: torch.Tensor, logits: torch.Tensor) -> torch.Tensor:
    """Batch-mean KL(softmax(ref_logits) || softmax(logits))."""
    return F.kl_div(
        F.log_softmax(logits, dim=1),
        F.softmax(ref_logits, dim=1),
        reduction="batchmean",
    )


def d2d_pa_loss(
    model: torch.nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    f_adv_aug: torch.Tensor,
    f_ben_aug: torch.Tensor,
    weights: LossWeights,
    logits_clean: Optional[torch.Tensor] = None,
) -> Tuple[torch.Tensor, Dict[str, torch.Tensor]]:
    """Clean cross-entropy plus beta * KL(benign || adversarial) on augmented features.

    Args:
        model: Split classifier.
        x: Clean batch, used for the CE term unless ``logits_clean`` is given.
        y: Labels.
        f_adv_aug: Augmented adversarial features, run through AUXILIARY.
        f_ben_aug: Augmented benign features, run through PRIMARY.
        weights: Only ``beta`` is read here.
        logits_clean: PRIMARY logits of ``x`` if the caller already has them.

    Returns:
        (loss, {"ce_clean": ..., "kl_pred": ...})
    """
    assert check_argument_types()
    if logits_clean is None:
        logits_clean = model(x, BranchTag.PRIMARY)
    ce_clean = F.cross_entropy(logits_clean, y)
    logits_ben = model.forward_tail_head(f_ben_aug, BranchTag.PRIMARY)
    logits_adv = model.forward_tail_head(f_adv_aug, BranchTag.AUXILIARY)
    kl_pred = prediction_kl(logits_ben, logits_adv)

    check_finite(ce_clean, "loss component", "ce_clean")
    check_finite(kl_pred, "loss component", "kl_pred")
    return ce_clean + weights.beta * kl_pred, dict(ce_clean=ce_clean, kl_pred=kl_pred)


def default_ridge(cov: torch.Tensor) -> torch.Tensor:
    """max(1e-4, 1e-5 * tr(cov) / D) per instance, shape (B,)."""
    D = cov.size(-1)
    trace = torch.diagonal(cov, dim1=-2, dim2=-1).sum(-1)
    return torch.clamp(1e-5 * trace.detach() / D, min=1e-4)


def _cholesky(cov: torch.Tensor, what: str) -> torch.Tensor:
    L, info = torch.linalg.cholesky_ex(cov)
    if bool((info != 0).any()):
        bad = info.nonzero().flatten()[:5].tolist()
        raise NonFiniteError(
            f"cholesky of the {what} covariance failed for instances {bad} "
            f"after ridging; features have collapsed"
        )
    return L


def gaussian_kl(
    ref: FeatureStats, adv: FeatureStats, ridge: Optional[float] = None
) -> torch.Tensor:
    """KL(N(ref.mu, ref.cov) || N(adv.mu, adv.cov)) for every instance.

        0.5 * (tr(S_adv^-1 S_ref) - D + dmu^T S_adv^-1 dmu
               + ln det S_adv - ln det S_ref)

    Both covariances get ``ridge * I`` added before the Cholesky factorization.
    With ``ridge=None`` the ridge is :func:`default_ridge` of the adversarial
    covariance.

    Returns:
        (B,) tensor; average it to get the batch loss.
    """
    D = adv.cov.size(-1)
    if ridge is None:
        r = default_ridge(adv.cov)[:, None, None]
    else:
        r = adv.cov.new_full((adv.cov.size(0), 1, 1), float(ridge))
    eye = torch.eye(D, dtype=adv.cov.dtype, device=adv.cov.device)
    L_ref = _cholesky(ref.cov + r * eye, "benign")
    L_adv = _cholesky(adv.cov + r * eye, "adversarial")

    # tr(S_adv^-1 S_ref) = ||L_adv^-1 L_ref||_F^2
    A = torch.linalg.solve_triangular(L_adv, L_ref, upper=False)
    trace_term = A.pow(2).sum(dim=(-2, -1))
    diff = (adv.mu - ref.mu).unsqueeze(-1)
    z = torch.linalg.solve_triangular(L_adv, diff, upper=False)
    maha = z.pow(2).sum(dim=(-2, -1))
    logdet_adv = 2 * torch.log(torch.diagonal(L_adv, dim1=-2, dim2=-1)).sum(-1)
    logdet_ref = 2 * torch.log(torch.diagonal(L_ref, dim1=-2, dim2=-1)).sum(-1)

    kl = 0.5 * (trace_term - D + maha + logdet_adv - logdet_ref)
    check_finite(kl, "loss component", "d2d_sa")
    return kl
