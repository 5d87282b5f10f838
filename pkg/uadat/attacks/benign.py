import torch
import torch.nn.functional as F
from typeguard import check_argument_types

from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.attack_config import project_linf
from uadat.layers.dual_batch_norm import BranchTag
from uadat.layers.dual_batch_norm import frozen_batch_stats
from uadat.utils.errors import NonFiniteError


def benign_refine(
    model: torch.nn.Module, x: torch.Tensor, y: torch.Tensor, cfg: AttackConfig
) -> torch.Tensor:
    """Move ``x`` against the cross-entropy gradient to get a lower-loss reference.

    x_ref <- Proj(x_ref - refine_step * sign(grad CE)), repeated refine_steps
    times, always projected into the epsilon-ball of the original ``x`` and
    into [0, 1]. Forwards use the PRIMARY branch with frozen statistics.
    """
    assert check_argument_types()
    x = x.detach()
    with frozen_batch_stats(model), torch.enable_grad():
        x_ref = x.clone()
        for step in range(1, cfg.refine_steps + 1):
            x_ref.requires_grad_(True)
            logits = model(x_ref, BranchTag.PRIMARY)
            if step == 1 and (int(y.min()) < 0 or int(y.max()) >= logits.size(1)):
                raise ValueError(f"labels must be in [0, {logits.size(1)})")
            loss = F.cross_entropy(logits, y, reduction="sum")
            (grad,) = torch.autograd.grad(loss, x_ref)
            if not bool(torch.isfinite(grad).all()):
                raise NonFiniteError(f"non-finite refinement gradient at step {step}")
            x_ref = project_linf(
                x_ref.detach() - cfg.refine_step * grad.sign(), x, cfg.epsilon
            )
    return x_ref
