import numpy as np
import pytest
import torch

from uadat.data.synthetic import make_synthetic
from uadat.evaluation.disruption import disruption_curve
from uadat.evaluation.disruption import perturb

RADII = [0.0, 2 / 255, 4 / 255, 6 / 255, 8 / 255]


@pytest.fixture
def dataset():
    return make_synthetic(4, 3, image_size=8, feature_dim=4, stem_stride=1)


def test_zero_radius_has_zero_increment(classifier, dataset):
    curve = disruption_curve(classifier, dataset, RADII, batch_size=5)
    assert curve.radii == pytest.approx(RADII)
    assert curve.variance_increment[0] == 0.0
    assert curve.grad_norm_increment[0] == 0.0
    assert all(np.isfinite(curve.variance)) and all(np.isfinite(curve.grad_norm))


def test_csv_has_a_row_per_radius(classifier, dataset, tmp_path):
    disruption_curve(classifier, dataset, RADII, output=tmp_path / "curve.csv")
    table = np.genfromtxt(tmp_path / "curve.csv", delimiter=",", names=True)
    assert len(table) == 5
    assert table.dtype.names[:3] == ("radius", "variance_increment", "grad_norm")
    np.testing.assert_allclose(table["radius"], RADII)


def test_loss_groups(classifier, dataset):
    radii = [-4 / 255, 4 / 255]
    curve = disruption_curve(classifier, dataset, radii, split_by_loss=True)
    assert set(curve.groups) == {"high_loss", "low_loss"}
    columns = curve.to_columns()
    assert "high_loss.variance_increment" in columns
    # halves of 12 samples average back to the whole
    for a, b, whole in zip(
        curve.groups["high_loss"].variance,
        curve.groups["low_loss"].variance,
        curve.variance,
    ):
        assert (a + b) / 2 == pytest.approx(whole, rel=1e-5)


def test_perturb_directions(classifier, batch):
    x, y = batch
    classifier.eval()
    r = 4 / 255
    assert torch.equal(perturb(classifier, x, y, 0.0), x)
    for radius in (r, -r):
        moved = perturb(classifier, x, y, radius)
        assert float((moved - x).abs().max()) <= r + 1e-6


def test_trained_model_trend(trained_convnet, make_toy_dataset):
    dataset = make_toy_dataset(20, seed=4)
    radii = [-4 / 255, 2 / 255, 4 / 255, 6 / 255, 8 / 255]
    curve = disruption_curve(trained_convnet, dataset, radii)
    variance = [curve.baseline_variance] + curve.variance[1:]
    grad_norm = [curve.baseline_grad_norm] + curve.grad_norm[1:]
    # radius 0 then 2, 4, 6, 8 / 255
    assert all(a <= b for a, b in zip(variance, variance[1:])), variance
    assert all(a <= b for a, b in zip(grad_norm, grad_norm[1:])), grad_norm
    # refinement lowers the loss and with it the gradient
    assert curve.grad_norm[0] <= curve.baseline_grad_norm
