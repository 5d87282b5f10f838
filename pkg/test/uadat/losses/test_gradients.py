"""Analytic parameter gradients of the alignment losses against central differences."""

import pytest
import torch

from uadat.layers.dual_batch_norm import BranchTag
from uadat.layers.dual_batch_norm import frozen_batch_stats
from uadat.losses.d2d import d2d_pa_loss
from uadat.losses.d2d import gaussian_kl
from uadat.losses.igm import igm_loss
from uadat.losses.total import LossWeights
from uadat.statistics.feature_stats import feature_stats


@pytest.fixture
def toy(make_convnet):
    # 76 parameters in float64
    model = make_convnet(
        dtype=torch.float64,
        num_classes=2,
        in_channels=1,
        image_size=4,
        channels=(2, 2),
        strides=(1, 1),
        aum_depth=1,
    )
    g = torch.Generator().manual_seed(1)
    x = torch.rand(4, 1, 4, 4, generator=g, dtype=torch.float64)
    x_adv = (x + 0.05 * torch.randn(x.shape, generator=g, dtype=torch.float64)).clamp(
        0, 1
    )
    y = torch.tensor([0, 1, 1, 0])
    return model, x, x_adv, y


def _d2d_sa(model, x, x_adv, y):
    ref = feature_stats(model.forward_stem(x, BranchTag.PRIMARY))
    adv = feature_stats(model.forward_stem(x_adv, BranchTag.AUXILIARY))
    return gaussian_kl(ref, adv, ridge=1e-3).mean()


def _d2d_pa(model, x, x_adv, y):
    f_ben = model.forward_stem(x, BranchTag.PRIMARY)
    f_adv = model.forward_stem(x_adv, BranchTag.AUXILIARY)
    loss, _ = d2d_pa_loss(model, x, y, f_adv, f_ben, LossWeights())
    return loss


def _igm(model, x, x_adv, y):
    return igm_loss(model, x, x_adv, y)


@pytest.mark.parametrize("loss_fn", [_d2d_sa, _d2d_pa, _igm], ids=["sa", "pa", "igm"])
def test_gradient_matches_central_differences(toy, loss_fn):
    model, x, x_adv, y = toy
    params = list(model.parameters())
    assert sum(p.numel() for p in params) <= 100
    model.train()

    with frozen_batch_stats(model):
        grads = torch.autograd.grad(
            loss_fn(model, x, x_adv, y), params, allow_unused=True
        )
        analytic = torch.cat(
            [
                torch.zeros_like(p).flatten() if g is None else g.flatten()
                for p, g in zip(params, grads)
            ]
        )

        h = 1e-6
        numeric = []
        with torch.no_grad():
            for p in params:
                flat = p.view(-1)
                for i in range(flat.numel()):
                    orig = float(flat[i])
                    flat[i] = orig + h
                    with torch.enable_grad():
                        plus = float(loss_fn(model, x, x_adv, y))
                    flat[i] = orig - h
                    with torch.enable_grad():
                        minus = float(loss_fn(model, x, x_adv, y))
                    flat[i] = orig
                    numeric.append((plus - minus) / (2 * h))
    numeric = torch.tensor(numeric, dtype=torch.float64)

    err = float((analytic - numeric).norm())
    assert err <= 1e-4 * float(analytic.norm()) + 1e-8
