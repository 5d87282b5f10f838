from typing import Any
from typing import Dict

import torch
from typeguard import check_argument_types

from uadat.layers.dual_batch_norm import DualBatchNorm2d
from uadat.nets.abs_split_classifier import AbsSplitClassifier
from uadat.torch_utils.initialize import initialize


class BasicBlock(torch.nn.Module):
    def __init__(self, in_planes: int, planes: int, stride: int = 1):
        super().__init__()
        self.conv1 = torch.nn.Conv2d(
            in_planes, planes, 3, stride=stride, padding=1, bias=False
        )
        self.bn1 = DualBatchNorm2d(planes)
        self.conv2 = torch.nn.Conv2d(planes, planes, 3, stride=1, padding=1, bias=False)
        self.bn2 = DualBatchNorm2d(planes)
        if stride != 1 or in_planes != planes:
            self.shortcut = torch.nn.Sequential(
                torch.nn.Conv2d(in_planes, planes, 1, stride=stride, bias=False),
                DualBatchNorm2d(planes),
            )
        else:
            self.shortcut = torch.nn.Identity()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        out = torch.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return torch.relu(out + self.shortcut(x))


class SplitResNet18(AbsSplitClassifier):
    """CIFAR-style ResNet-18 with dual normalization.

    blocks = [conv stem, stage1, stage2, stage3, stage4]. The default cut
    (aum_depth=3) sits after the second residual stage.
    """

    def __init__(
        self,
        num_classes: int = 10,
        in_channels: int = 3,
        image_size: int = 32,
        aum_depth: int = 3,
        init: str = "kaiming_normal",
    ):
        assert check_argument_types()
        channels = (64, 64, 128, 256, 512)
        strides = (1, 1, 2, 2, 2)
        super().__init__(
            num_classes, in_channels, image_size, channels, strides, aum_depth
        )
        stem = torch.nn.Sequential(
            torch.nn.Conv2d(in_channels, 64, 3, stride=1, padding=1, bias=False),
            DualBatchNorm2d(64),
            torch.nn.ReLU(),
        )
        stages = []
        in_planes = 64
        for planes, stride in zip(channels[1:], strides[1:]):
            stages.append(
                torch.nn.Sequential(
                    BasicBlock(in_planes, planes, stride), BasicBlock(planes, planes, 1)
                )
            )
            in_planes = planes
        self.blocks = torch.nn.ModuleList([stem] + stages)
        self.head = torch.nn.Linear(512, num_classes)
        initialize(self, init)
        self._check_layout()

    def architecture(self) -> Dict[str, Any]:
        return dict(
            name="resnet18",
            num_classes=self.num_classes,
            in_channels=self.in_channels,
            image_size=self.image_size,
            aum_depth=self.aum_depth,
        )
