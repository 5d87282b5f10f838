import itertools

import pytest
import torch
import torch.nn.functional as F

from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.pgd import pgd_ce
from uadat.attacks.pgd import pgd_generate
from uadat.attacks.pgd import random_start
from uadat.attacks.pgd import single_step_generate
from uadat.layers.dual_batch_norm import BranchTag
from uadat.utils.errors import NonFiniteError


class LinearStub(torch.nn.Module):
    """Two-input linear classifier; ignores the branch."""

    def __init__(self, weight: torch.Tensor, bias: torch.Tensor):
        super().__init__()
        self.weight = torch.nn.Parameter(weight)
        self.bias = torch.nn.Parameter(bias)

    def forward(self, x, branch=BranchTag.PRIMARY):
        return x.flatten(1) @ self.weight.T + self.bias


class ConstantStub(torch.nn.Module):
    def __init__(self, num_classes: int = 3):
        super().__init__()
        self.bias = torch.nn.Parameter(torch.arange(num_classes, dtype=torch.float))

    def forward(self, x, branch=BranchTag.PRIMARY):
        return self.bias.expand(x.size(0), -1)


@pytest.mark.parametrize("seed", [0, 1])
def test_iterates_stay_in_ball_and_box(classifier, seed):
    cfg = AttackConfig()
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(500, 3, 8, 8, generator=g)
    x[:100] = 0.0
    x[100:200] = 1.0
    record = pgd_generate(classifier, x, cfg, generator=g)
    iterates = record.intermediates + [record.final]
    assert len(iterates) == cfg.steps
    for x_adv in iterates:
        assert float((x_adv - x).abs().max()) <= cfg.epsilon + 1e-6
        assert float(x_adv.min()) >= 0.0 and float(x_adv.max()) <= 1.0


def test_record_keeps_steps_minus_one_intermediates(classifier, batch):
    x, _ = batch
    record = pgd_generate(classifier, x, AttackConfig(steps=4))
    assert len(record.intermediates) == 3
    assert len(record.loss_trace) == 4
    assert not record.final.requires_grad
    assert all(not t.requires_grad for t in record.intermediates)
    assert all(t.grad_fn is None for t in record.intermediates)


def test_single_step_has_no_intermediates(classifier, batch):
    x, _ = batch
    record = single_step_generate(classifier, x, AttackConfig(steps=1))
    assert record.intermediates == []
    with pytest.raises(ValueError):
        single_step_generate(classifier, x, AttackConfig(steps=2))


def test_attack_leaves_running_stats_and_grads(classifier, batch):
    x, _ = batch
    classifier.train()
    before = {k: v.clone() for k, v in classifier.state_dict().items()}
    pgd_generate(classifier, x, AttackConfig(steps=3))
    for k, v in classifier.state_dict().items():
        assert torch.equal(v, before[k]), k
    assert all(p.grad is None for p in classifier.parameters())


def test_generator_makes_attack_reproducible(classifier, batch):
    x, _ = batch
    cfg = AttackConfig(steps=3, random_init="uniform")
    a = pgd_generate(classifier, x, cfg, torch.Generator().manual_seed(7)).final
    b = pgd_generate(classifier, x, cfg, torch.Generator().manual_seed(7)).final
    assert torch.equal(a, b)


def _kl(model, x, x_adv):
    with torch.no_grad():
        p = F.softmax(model(x), dim=1)
        log_q = F.log_softmax(model(x_adv), dim=1)
        return (p * (p.log() - log_q)).sum(1)


def test_pgd_reaches_the_best_corner_of_a_linear_model():
    torch.manual_seed(0)
    cfg = AttackConfig()
    eps = cfg.epsilon
    ratios = []
    for _ in range(100):
        weight = 0.25 * torch.randn(2, 2, dtype=torch.float64)
        model = LinearStub(weight, torch.randn(2, dtype=torch.float64))
        x = eps + (1 - 2 * eps) * torch.rand(1, 2, dtype=torch.float64)
        x_adv = pgd_generate(model, x, cfg).final
        corners = torch.tensor(
            list(itertools.product((-eps, eps), repeat=2)), dtype=torch.float64
        )
        best = max(float(_kl(model, x, x + c)) for c in corners)
        ratios.append(float(_kl(model, x, x_adv)) / best)
    assert min(ratios) >= 0.95


def test_constant_model_attack_stays_at_start():
    model = ConstantStub()
    x = torch.rand(4, 3, 8, 8)
    y = torch.zeros(4, dtype=torch.long)
    x_adv = pgd_ce(model, x, y, AttackConfig(random_init="none"))
    assert torch.equal(x_adv, x)


def test_ce_attack_stays_in_ball(classifier, batch):
    x, y = batch
    cfg = AttackConfig(random_init="uniform", steps=5)
    x_adv = pgd_ce(classifier, x, y, cfg, torch.Generator().manual_seed(0))
    assert float((x_adv - x).abs().max()) <= cfg.epsilon + 1e-6
    assert not x_adv.requires_grad


def test_non_finite_gradient_names_the_step():
    cfg = AttackConfig()
    weight = torch.randn(2, 2)
    weight[0, 0] = float("nan")
    model = LinearStub(weight, torch.zeros(2))
    with pytest.raises(NonFiniteError, match="step 1"):
        pgd_ce(model, torch.rand(3, 2), torch.zeros(3, dtype=torch.long), cfg)


@pytest.mark.parametrize("mode", ["normal", "uniform", "none"])
def test_random_start_is_projected(mode):
    x = torch.rand(10, 3, 4, 4)
    cfg = AttackConfig(random_init=mode, init_noise_scale=1.0)
    x0 = random_start(x, cfg)
    assert float((x0 - x).abs().max()) <= cfg.epsilon + 1e-6
    assert float(x0.min()) >= 0.0 and float(x0.max()) <= 1.0


def test_attack_strength_grows_with_steps(trained_primary, make_toy_dataset):
    x = make_toy_dataset(86, seed=3).images[:256]
    with torch.no_grad():
        p_clean = F.softmax(trained_primary(x), dim=1)
    objective = []
    for steps in (1, 5, 10):
        g = torch.Generator().manual_seed(0)
        x_adv = pgd_generate(trained_primary, x, AttackConfig(steps=steps), g).final
        with torch.no_grad():
            log_q = F.log_softmax(trained_primary(x_adv), dim=1)
        objective.append(float(F.kl_div(log_q, p_clean, reduction="batchmean")))
    assert objective[0] > 0
    assert objective[0] <= objective[1] <= objective[2], objective
