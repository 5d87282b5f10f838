import pytest
import torch
import torch.nn.functional as F

from uadat.layers.dual_batch_norm import BranchTag
from uadat.losses.igm import igm_loss
from uadat.losses.igm import input_gradient


def test_input_gradient_is_per_instance(classifier, batch):
    x, y = batch
    classifier.eval()
    grad = input_gradient(classifier, x, y, BranchTag.PRIMARY, create_graph=False)
    x0 = x[:1].clone().requires_grad_(True)
    (single,) = torch.autograd.grad(F.cross_entropy(classifier(x0), y[:1]), x0)
    assert torch.allclose(grad[:1], single, atol=1e-6)
    assert not grad.requires_grad


def test_identical_inputs_on_one_branch_give_zero(classifier, batch):
    x, y = batch
    loss = igm_loss(classifier, x, x, y, adv_branch=BranchTag.PRIMARY)
    assert float(loss) == pytest.approx(0.0, abs=1e-7)


def test_igm_is_differentiable_in_the_parameters(classifier, batch):
    x, y = batch
    x_adv = (x + 0.03 * torch.randn_like(x)).clamp(0, 1)
    loss = igm_loss(classifier, x, x_adv, y)
    assert float(loss) > 0
    loss.backward()
    grads = [p.grad for p in classifier.parameters() if p.grad is not None]
    assert grads and all(torch.isfinite(g).all() for g in grads)
    assert classifier.head.weight.grad is not None


def test_igm_keeps_running_stats(classifier, batch):
    x, y = batch
    classifier.train()
    before = {k: v.clone() for k, v in classifier.state_dict().items()}
    igm_loss(classifier, x, x.flip(0), y)
    for k, v in classifier.state_dict().items():
        assert torch.equal(v, before[k]), k
