import copy

import pytest
import torch
import torch.nn.functional as F

from uadat.data.synthetic import make_synthetic
from uadat.layers.dual_batch_norm import BranchTag
from uadat.nets.split_convnet import SplitConvNet


def tiny_convnet(dtype=torch.float32, seed=0, **kwargs) -> SplitConvNet:
    """8px, 3-class network with D=4 at the cut."""
    torch.manual_seed(seed)
    conf = dict(
        num_classes=3,
        in_channels=3,
        image_size=8,
        channels=(4, 8),
        strides=(1, 2),
        aum_depth=1,
    )
    conf.update(kwargs)
    return SplitConvNet(**conf).to(dtype)


def toy_dataset(n_per_class: int, seed: int):
    """Synthetic 3-class 8px images matching :func:`tiny_convnet`."""
    return make_synthetic(
        n_per_class, 3, image_size=8, seed=seed, feature_dim=4, stem_stride=1
    )


class PrimaryOnly(torch.nn.Module):
    """Routes every branch request to PRIMARY, for naturally trained weights."""

    def __init__(self, classifier: torch.nn.Module):
        super().__init__()
        self.classifier = classifier

    def forward(self, x, branch=BranchTag.PRIMARY):
        return self.classifier(x, BranchTag.PRIMARY)


@pytest.fixture
def classifier():
    return tiny_convnet()


@pytest.fixture
def batch():
    g = torch.Generator().manual_seed(0)
    x = torch.rand(6, 3, 8, 8, generator=g)
    y = torch.randint(0, 3, (6,), generator=g)
    return x, y


@pytest.fixture
def make_convnet():
    return tiny_convnet


@pytest.fixture(scope="session")
def trained_state():
    """Weights of a naturally trained tiny_convnet (PRIMARY branch)."""
    dataset = toy_dataset(64, seed=0)
    classifier = tiny_convnet()
    optimizer = torch.optim.SGD(classifier.parameters(), lr=0.05, momentum=0.9)
    g = torch.Generator().manual_seed(0)
    classifier.train()
    for _ in range(30):
        for idx in torch.randperm(len(dataset), generator=g).split(32):
            logits = classifier(dataset.images[idx], BranchTag.PRIMARY)
            loss = F.cross_entropy(logits, dataset.labels[idx])
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
    return copy.deepcopy(classifier.state_dict())


@pytest.fixture
def trained_convnet(trained_state):
    classifier = tiny_convnet()
    classifier.load_state_dict(trained_state)
    return classifier.eval()


@pytest.fixture
def trained_primary(trained_convnet):
    """The trained network attacked and measured through PRIMARY only."""
    return PrimaryOnly(trained_convnet)


@pytest.fixture
def make_toy_dataset():
    return toy_dataset
