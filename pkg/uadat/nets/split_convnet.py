from typing import Any
from typing import Dict
from typing import Sequence

import torch
from typeguard import check_argument_types

from uadat.layers.dual_batch_norm import DualBatchNorm2d
from uadat.nets.abs_split_classifier import AbsSplitClassifier
from uadat.torch_utils.initialize import initialize


class ConvBlock(torch.nn.Sequential):
    """conv3x3 -> DualBatchNorm2d -> ReLU"""

    def __init__(self, in_channels: int, out_channels: int, stride: int):
        super().__init__(
            torch.nn.Conv2d(
                in_channels, out_channels, 3, stride=stride, padding=1, bias=False
            ),
            DualBatchNorm2d(out_channels),
            torch.nn.ReLU(),
        )


class SplitConvNet(AbsSplitClassifier):
    """Plain stack of conv blocks, small enough to train on a CPU.

    The default layout (16/32/64/64 channels, cut after block 2) keeps
    H * W >= D at the cut for inputs of 12px and more.
    """

    def __init__(
        self,
        num_classes: int = 10,
        in_channels: int = 3,
        image_size: int = 32,
        channels: Sequence[int] = (16, 32, 64, 64),
        strides: Sequence[int] = (1, 2, 2, 2),
        aum_depth: int = 2,
        init: str = "kaiming_normal",
    ):
        assert check_argument_types()
        super().__init__(
            num_classes, in_channels, image_size, channels, strides, aum_depth
        )
        self.init = init
        ins = [in_channels] + list(channels[:-1])
        self.blocks = torch.nn.ModuleList(
            ConvBlock(i, o, s) for i, o, s in zip(ins, channels, strides)
        )
        self.head = torch.nn.Linear(channels[-1], num_classes)
        initialize(self, init)
        self._check_layout()

    def architecture(self) -> Dict[str, Any]:
        return dict(
            name="convnet",
            num_classes=self.num_classes,
            in_channels=self.in_channels,
            image_size=self.image_size,
            channels=list(self.channels),
            strides=list(self.strides),
            aum_depth=self.aum_depth,
        )
