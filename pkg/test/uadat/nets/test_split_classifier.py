import pytest
import torch

from uadat.layers.dual_batch_norm import BranchTag
from uadat.nets.split_convnet import SplitConvNet
from uadat.nets.split_resnet import SplitResNet18


@pytest.mark.parametrize("branch", [BranchTag.PRIMARY, BranchTag.AUXILIARY])
def test_stem_then_tail_equals_forward(classifier, batch, branch):
    x, _ = batch
    classifier.eval()
    f = classifier.forward_stem(x, branch)
    assert f.shape == (6, classifier.feature_dim, 8, 8)
    logits = classifier.forward_tail_head(f, branch)
    assert torch.allclose(logits, classifier(x, branch))


def test_predict_is_the_primary_forward(classifier, batch):
    x, _ = batch
    classifier.eval()
    assert torch.equal(classifier.predict(x), classifier(x, BranchTag.PRIMARY))


def test_default_convnet_geometry():
    net = SplitConvNet(num_classes=4, image_size=16)
    assert net.feature_dim == 32
    assert net.stem_stride == 2
    assert net.feature_size() == 8
    arch = net.architecture()
    assert arch["name"] == "convnet" and arch["num_classes"] == 4


def test_rank_deficient_cut_is_rejected():
    # 4px at stride 2 leaves 4 positions for 32 channels
    with pytest.raises(ValueError, match="rank deficient"):
        SplitConvNet(num_classes=4, image_size=4)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(num_classes=1),
        dict(aum_depth=0),
        dict(aum_depth=5),
        dict(channels=(8, 8), strides=(1,)),
    ],
)
def test_invalid_layouts(kwargs):
    with pytest.raises(ValueError):
        SplitConvNet(**kwargs)


def test_input_shape_is_checked(classifier):
    with pytest.raises(ValueError):
        classifier.forward_stem(torch.rand(2, 1, 8, 8))
    with pytest.raises(ValueError):
        classifier.forward_tail_head(torch.rand(2, 5, 8, 8))


def test_resnet18_forward():
    net = SplitResNet18(num_classes=10, image_size=32).eval()
    x = torch.rand(2, 3, 32, 32)
    assert net.feature_dim == 128 and net.feature_size() == 16
    with torch.no_grad():
        f = net.forward_stem(x, BranchTag.AUXILIARY)
        assert f.shape == (2, 128, 16, 16)
        assert net.forward_tail_head(f, BranchTag.AUXILIARY).shape == (2, 10)
    assert net.architecture()["name"] == "resnet18"
