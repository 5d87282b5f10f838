import math

import pytest
import torch
import torch.nn.functional as F

from uadat.layers.dual_batch_norm import BranchTag
from uadat.losses.d2d import d2d_pa_loss
from uadat.losses.d2d import default_ridge
from uadat.losses.d2d import gaussian_kl
from uadat.losses.d2d import prediction_kl
from uadat.losses.total import LossWeights
from uadat.statistics.feature_stats import FeatureStats
from uadat.statistics.feature_stats import feature_stats
from uadat.utils.errors import NonFiniteError


def _stats(mu, cov):
    mu = torch.tensor([mu], dtype=torch.float64)
    cov = torch.tensor([cov], dtype=torch.float64)
    sigma = torch.diagonal(cov, dim1=-2, dim2=-1).clamp_min(0).sqrt()
    return FeatureStats(mu=mu, sigma=sigma, cov=cov)


def test_kl_of_identical_gaussians_is_zero():
    f = torch.randn(4, 3, 5, 5, dtype=torch.float64)
    stats = feature_stats(f)
    expected = torch.zeros(4, dtype=torch.float64)
    torch.testing.assert_close(gaussian_kl(stats, stats), expected, atol=1e-8, rtol=0)


def test_unit_shift_of_standard_gaussian():
    ref = _stats([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    adv = _stats([1.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    assert float(gaussian_kl(ref, adv, ridge=0.0)) == pytest.approx(0.5, abs=1e-10)


def test_diagonal_case_matches_univariate_sum():
    m1, s1 = [0.3, -1.0, 2.0], [0.5, 1.5, 1.0]
    m2, s2 = [0.0, 0.5, 2.5], [1.0, 0.7, 2.0]
    ref = _stats(m1, torch.diag(torch.tensor(s1, dtype=torch.float64) ** 2).tolist())
    adv = _stats(m2, torch.diag(torch.tensor(s2, dtype=torch.float64) ** 2).tolist())
    expected = sum(
        math.log(b / a) + (a * a + (p - q) ** 2) / (2 * b * b) - 0.5
        for p, a, q, b in zip(m1, s1, m2, s2)
    )
    assert float(gaussian_kl(ref, adv, ridge=0.0)) == pytest.approx(expected, rel=1e-9)


def test_kl_is_asymmetric_and_nonnegative():
    g = torch.Generator().manual_seed(0)
    a = feature_stats(torch.randn(8, 4, 5, 5, generator=g, dtype=torch.float64))
    b = feature_stats(2 * torch.randn(8, 4, 5, 5, generator=g, dtype=torch.float64))
    ab, ba = gaussian_kl(a, b), gaussian_kl(b, a)
    assert bool((ab >= 0).all()) and bool((ba >= 0).all())
    assert not torch.allclose(ab, ba)


def test_collapsed_covariance_raises():
    ref = _stats([0.0, 0.0], [[1.0, 0.0], [0.0, 1.0]])
    adv = _stats([0.0, 0.0], [[-1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(NonFiniteError, match="collapsed"):
        gaussian_kl(ref, adv, ridge=0.0)


def test_ridge_rescues_rank_deficient_covariance():
    # a single repeated position gives a rank-one covariance
    f = torch.randn(2, 3, 1, 2, dtype=torch.float64)
    stats = feature_stats(f)
    assert torch.isfinite(gaussian_kl(stats, stats)).all()


def test_default_ridge_floor_and_scale():
    small = torch.eye(4, dtype=torch.float64).expand(2, 4, 4)
    large = 1e3 * small
    expected = torch.full((2,), 1e-4, dtype=torch.float64)
    torch.testing.assert_close(default_ridge(small), expected)
    torch.testing.assert_close(default_ridge(large), 100 * expected)


def test_prediction_kl():
    logits = torch.randn(5, 4)
    assert float(prediction_kl(logits, logits)) == pytest.approx(0.0, abs=1e-6)
    other = torch.randn(5, 4)
    p = F.softmax(logits, 1)
    expected = (p * (F.log_softmax(logits, 1) - F.log_softmax(other, 1))).sum(1).mean()
    got = prediction_kl(logits, other)
    assert float(got) == pytest.approx(float(expected), rel=1e-5)


def test_d2d_pa_loss_combines_ce_and_kl(classifier, batch):
    x, y = batch
    classifier.eval()
    f_ben = classifier.forward_stem(x, BranchTag.PRIMARY)
    f_adv = classifier.forward_stem(x.flip(0), BranchTag.AUXILIARY)
    weights = LossWeights(beta=6.0)
    loss, parts = d2d_pa_loss(classifier, x, y, f_adv, f_ben, weights)
    assert float(parts["ce_clean"]) == pytest.approx(
        float(F.cross_entropy(classifier(x), y)), rel=1e-6
    )
    assert float(loss) == pytest.approx(
        float(parts["ce_clean"] + 6.0 * parts["kl_pred"]), rel=1e-6
    )
    assert loss.requires_grad
