import copy

import pytest
import torch
import torch.nn.functional as F

from uadat.attacks.attack_config import AttackConfig
from uadat.layers.dual_batch_norm import BranchTag
from uadat.optimizers.sgd import SGD
from uadat.train.uad_at_model import UADATModel
from uadat.train.uad_at_model import UncertaintyConfig
from uadat.utils.errors import ConfigError

ATTACK = dict(steps=3)
UNCERTAINTY = dict(kappa_I=2, kappa_H=2)


@pytest.fixture
def data():
    g = torch.Generator().manual_seed(0)
    x = torch.rand(8, 3, 8, 8, generator=g)
    y = torch.randint(0, 3, (8,), generator=g)
    return dict(image=x, label=y, index=torch.arange(8))


def _model(classifier, **kwargs):
    conf = dict(attack_conf=ATTACK, uncertainty_conf=UNCERTAINTY)
    conf.update(kwargs)
    return UADATModel(classifier, num_samples=8, **conf)


def test_forward_returns_loss_and_history_payload(classifier, data):
    model = _model(classifier)
    retval = model(**data, epoch=1)
    assert set(retval["stats"]) == {"ce_clean", "kl_pred", "d2d_sa", "igm", "total"}
    assert retval["loss"].requires_grad
    mu, sigma = retval["history"]["adv"]
    assert mu.shape == sigma.shape == (8, 2, classifier.feature_dim)
    mu, _ = retval["history"]["benign"]
    assert mu.shape == (8, 1, classifier.feature_dim)


def test_history_feeds_the_next_epoch(classifier, data):
    model = _model(classifier)
    model.end_of_step(model(**data, epoch=1))
    adv, benign = model.history.query(3, 2)
    assert len(adv) == 2 and len(benign) == 1
    # the current epoch never reads its own entries
    assert model.history.query(3, 1) == ([], [])
    model.end_of_step(model(**data, epoch=2))
    adv, _ = model.history.query(3, 3)
    assert len(adv) == 4


def test_backward_reaches_both_branches(classifier, data):
    model = _model(classifier)
    model(**data, epoch=1)["loss"].backward()
    for m in classifier.modules():
        if hasattr(m, "aux_bn"):
            assert m.weight.grad is not None
            assert m.aux_bn.weight.grad is not None
            assert torch.isfinite(m.aux_bn.weight.grad).all()


@pytest.mark.parametrize("mode", ["uncertainty", "deterministic", "random", "none"])
def test_aum_modes(classifier, data, mode):
    model = _model(classifier, uncertainty_conf=dict(UNCERTAINTY, aum_mode=mode))
    model.end_of_step(model(**data, epoch=1))
    retval = model(**data, epoch=2)
    assert torch.isfinite(retval["loss"])


def test_kappa_i_beyond_intermediates_is_rejected(classifier):
    with pytest.raises(ConfigError) as e:
        _model(classifier, uncertainty_conf=dict(kappa_I=3))
    assert e.value.field == "uncertainty.kappa_I"


def test_single_step_records_the_final_adversary(classifier, data):
    model = _model(classifier, attack_conf=dict(steps=1), uncertainty_conf={})
    assert model.kappa_I == 1
    mu, _ = model(**data, epoch=1)["history"]["adv"]
    assert mu.shape == (8, 1, classifier.feature_dim)


def test_unknown_keys_are_config_errors(classifier):
    with pytest.raises(ConfigError) as e:
        _model(classifier, weights_conf=dict(gamma=1.0))
    assert e.value.field == "weights.gamma"
    with pytest.raises(ConfigError):
        UncertaintyConfig(aum_mode="gaussian")


def test_history_is_part_of_the_state_dict(classifier, make_convnet, data):
    model = _model(classifier)
    model.end_of_step(model(**data, epoch=1))
    restored = _model(make_convnet(seed=1))
    restored.load_state_dict(model.state_dict())
    expected, _ = model.history.query(5, 2)
    got, _ = restored.history.query(5, 2)
    assert len(got) == len(expected) == 2
    for (a, _), (b, _) in zip(expected, got):
        assert torch.equal(a, b)


def _reference_adversary(model, x, cfg):
    """TRADES inner maximization written out step by step."""
    with torch.no_grad():
        p_clean = F.softmax(model(x, BranchTag.PRIMARY), dim=1)
    x_adv = x + cfg.init_noise_scale * torch.randn(x.shape, dtype=x.dtype)
    x_adv = torch.min(torch.max(x_adv, x - cfg.epsilon), x + cfg.epsilon).clamp(0, 1)
    for _ in range(cfg.steps):
        x_adv = x_adv.detach().requires_grad_(True)
        log_q = F.log_softmax(model(x_adv, BranchTag.AUXILIARY), dim=1)
        loss = F.kl_div(log_q, p_clean, reduction="sum")
        (grad,) = torch.autograd.grad(loss, x_adv)
        x_adv = x_adv.detach() + cfg.step_size * grad.sign()
        x_adv = torch.min(torch.max(x_adv, x - cfg.epsilon), x + cfg.epsilon)
        x_adv = x_adv.clamp(0, 1)
    return x_adv


def test_degenerate_configuration_is_trades(make_convnet):
    """No refinement, no AUM, lambda1 = lambda2 = 0: step-by-step TRADES."""
    beta = 6.0
    classifier = make_convnet(dtype=torch.float64)
    reference = copy.deepcopy(classifier)
    model = _model(
        classifier,
        weights_conf=dict(beta=beta, lambda1=0.0, lambda2=0.0),
        use_refine=False,
        use_aum=False,
    )
    opt = SGD(model.parameters(), lr=0.05, weight_decay=0.0)
    ref_opt = SGD(reference.parameters(), lr=0.05, weight_decay=0.0)
    cfg = AttackConfig(**ATTACK)

    g = torch.Generator().manual_seed(0)
    for step in range(50):
        x = torch.rand(8, 3, 8, 8, generator=g, dtype=torch.float64)
        y = torch.randint(0, 3, (8,), generator=g)

        torch.manual_seed(step)
        loss = model(x, y, torch.arange(8), epoch=1)["loss"]
        opt.zero_grad()
        loss.backward()
        opt.step()

        torch.manual_seed(step)
        x_adv = _reference_adversary(reference, x, cfg)
        logits = reference(x, BranchTag.PRIMARY)
        log_q = F.log_softmax(reference(x_adv, BranchTag.AUXILIARY), dim=1)
        kl = F.kl_div(log_q, F.softmax(logits, dim=1), reduction="batchmean")
        ref_loss = F.cross_entropy(logits, y) + beta * kl
        ref_opt.zero_grad()
        ref_loss.backward()
        ref_opt.step()

        assert float(loss) == pytest.approx(float(ref_loss), abs=1e-6), step


def test_branches_diverge_during_training(classifier, data):
    model = _model(classifier)
    x = data["image"]
    classifier.eval()
    with torch.no_grad():
        primary = classifier.forward_stem(x, BranchTag.PRIMARY)
        assert torch.equal(primary, classifier.forward_stem(x, BranchTag.AUXILIARY))

    classifier.train()
    opt = SGD(model.parameters(), lr=0.1)
    for epoch in (1, 2, 3):
        retval = model(**data, epoch=epoch)
        opt.zero_grad()
        retval["loss"].backward()
        opt.step()
        model.end_of_step(retval)

    classifier.eval()
    with torch.no_grad():
        primary = classifier.forward_stem(x, BranchTag.PRIMARY)
        auxiliary = classifier.forward_stem(x, BranchTag.AUXILIARY)
    assert float((primary - auxiliary).abs().max()) > 0


def test_uncertainty_reads_only_earlier_epochs(classifier, data, monkeypatch):
    model = _model(classifier)
    history = model.history
    query_batch = history.query_batch
    reads = []

    def recording_query_batch(sample_ids, t, track):
        mu, sigma, mask = query_batch(sample_ids, t, track)
        slots = history._epochs[track][sample_ids.cpu()]
        epochs = slots.repeat_interleave(history.entries_per_epoch(track), dim=1)
        reads.append((t, epochs[mask].tolist()))
        return mu, sigma, mask

    monkeypatch.setattr(history, "query_batch", recording_query_batch)
    for epoch in (1, 2, 3, 4):
        model.end_of_step(model(**data, epoch=epoch))

    assert sorted({t for t, _ in reads}) == [1, 2, 3, 4]
    for t, epochs in reads:
        assert all(t - UNCERTAINTY["kappa_H"] <= e < t for e in epochs), (t, epochs)
        # everything written before t and still in the window is read
        assert len(epochs) > 0 or t == 1
