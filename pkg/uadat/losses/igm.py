import torch
import torch.nn.functional as F
from typeguard import check_argument_types

from uadat.layers.dual_batch_norm import BranchTag
from uadat.layers.dual_batch_norm import frozen_batch_stats
from uadat.utils.errors import check_finite


def input_gradient(
    model: torch.nn.Module,
    x: torch.Tensor,
    y: torch.Tensor,
    branch: BranchTag,
    create_graph: bool = True,
) -> torch.Tensor:
    """Gradient of the summed cross-entropy w.r.t. a detached copy of ``x``.

    The sum keeps every row's gradient equal to its own per-instance gradient.
    """
    x = x.detach().requires_grad_(True)
    loss = F.cross_entropy(model(x, branch), y, reduction="sum")
    (grad,) = torch.autograd.grad(loss, x, create_graph=create_graph)
    return grad


def igm_loss(
    model: torch.nn.Module,
    x_ben: torch.Tensor,
    x_adv: torch.Tensor,
    y: torch.Tensor,
    ben_branch: BranchTag = BranchTag.PRIMARY,
    adv_branch: BranchTag = BranchTag.AUXILIARY,
) -> torch.Tensor:
    """Mean L2 distance between the input gradients at ``x_ben`` and ``x_adv``.

    Both inputs are constants; the loss stays differentiable w.r.t. the model
    parameters through a second-order graph. Running statistics are left
    untouched.
    """
    assert check_argument_types()
    with frozen_batch_stats(model), torch.enable_grad():
        g_ben = input_gradient(model, x_ben, y, ben_branch)
        g_adv = input_gradient(model, x_adv, y, adv_branch)
        loss = torch.linalg.vector_norm((g_ben - g_adv).flatten(1), dim=1).mean()
    check_finite(loss, "loss component", "igm")
    return loss
