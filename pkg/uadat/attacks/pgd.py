"""PGD adversaries under the L-inf threat model."""

import logging
from typing import Optional

import torch
import torch.nn.functional as F
from typeguard import check_argument_types

from uadat.attacks.attack_config import AdversaryRecord
from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.attack_config import project_linf
from uadat.layers.dual_batch_norm import BranchTag
from uadat.layers.dual_batch_norm import frozen_batch_stats
from uadat.utils.errors import NonFiniteError


def random_start(
    x: torch.Tensor, cfg: AttackConfig, generator: Optional[torch.Generator] = None
) -> torch.Tensor:
    if cfg.random_init == "normal":
        noise = torch.randn(
            x.shape, generator=generator, dtype=x.dtype, device=x.device
        )
        x0 = x + cfg.init_noise_scale * noise
    elif cfg.random_init == "uniform":
        noise = torch.empty_like(x).uniform_(
            -cfg.epsilon, cfg.epsilon, generator=generator
        )
        x0 = x + noise
    else:
        x0 = x.clone()
    return project_linf(x0, x, cfg.epsilon)


def _checked_grad(loss: torch.Tensor, x: torch.Tensor, what: str, step: int):
    (grad,) = torch.autograd.grad(loss, x, allow_unused=True)
    if grad is None:
        # outputs that ignore the input
        return torch.zeros_like(x)
    if not bool(torch.isfinite(grad).all()):
        raise NonFiniteError(f"non-finite {what} gradient at step {step}")
    return grad


def pgd_generate(
    model: torch.nn.Module,
    x: torch.Tensor,
    cfg: AttackConfig,
    generator: Optional[torch.Generator] = None,
) -> AdversaryRecord:
    """Maximize KL(p(x) || p(x_adv)) by sign-gradient ascent, keeping the iterates.

    The clean reference p(x) is computed once on the PRIMARY branch and held
    fixed; adversarial forwards use the AUXILIARY branch. Normalization
    running statistics are not updated and no parameter gradient is kept.

    Args:
        model: Callable as ``model(x, branch)`` returning logits.
        x: Clean batch in [0, 1].
        cfg: Threat model and schedule.
        generator: Optional source for the random start.

    Raises:
        NonFiniteError: The attack gradient is not finite; the message names
            the step.
    """
    assert check_argument_types()
    x = x.detach()
    with frozen_batch_stats(model), torch.enable_grad():
        with torch.no_grad():
            p_clean = F.softmax(model(x, BranchTag.PRIMARY), dim=1)

        x_adv = random_start(x, cfg, generator)
        intermediates, loss_trace = [], []
        for step in range(1, cfg.steps + 1):
            # fresh leaf; recorded iterates stay detached
            x_in = x_adv.clone().requires_grad_(True)
            log_q = F.log_softmax(model(x_in, BranchTag.AUXILIARY), dim=1)
            loss = F.kl_div(log_q, p_clean, reduction="sum")
            grad = _checked_grad(loss, x_in, "attack", step)
            loss_trace.append(loss.item() / x.size(0))

            x_adv = project_linf(x_adv + cfg.step_size * grad.sign(), x, cfg.epsilon)
            if step < cfg.steps:
                intermediates.append(x_adv)

    return AdversaryRecord(
        final=x_adv, intermediates=intermediates, loss_trace=loss_trace
    )


def single_step_generate(
    model: torch.nn.Module,
    x: torch.Tensor,
    cfg: AttackConfig,
    generator: Optional[torch.Generator] = None,
) -> AdversaryRecord:
    """One sign step from the random start; the record has no intermediates."""
    if cfg.steps != 1:
        raise ValueError(f"single-step generation needs steps == 1: {cfg.steps}")
    return pgd_generate(model, x, cfg, generator)


def pgd_ce(
    model: torch.nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    cfg: AttackConfig,
    generator: Optional[torch.Generator] = None,
    branch: BranchTag = BranchTag.PRIMARY,
) -> torch.Tensor:
    """Cross-entropy PGD with true labels, the standard evaluation attack.

    Uses the start configured in ``cfg.random_init`` (uniform for evaluation
    settings) and the given branch (PRIMARY for inference).
    """
    x = x.detach()
    with frozen_batch_stats(model), torch.enable_grad():
        x_adv = random_start(x, cfg, generator)
        for step in range(1, cfg.steps + 1):
            x_in = x_adv.clone().requires_grad_(True)
            loss = F.cross_entropy(model(x_in, branch), y, reduction="sum")
            grad = _checked_grad(loss, x_in, "evaluation attack", step)
            x_adv = project_linf(x_adv + cfg.step_size * grad.sign(), x, cfg.epsilon)
    logging.debug(f"pgd_ce: eps={cfg.epsilon:.4f} steps={cfg.steps}")
    return x_adv.detach()
