from abc import ABC
from typing import Any
from typing import Dict
from typing import Sequence

import numpy as np
import torch
from typeguard import check_argument_types

from uadat.layers.dual_batch_norm import BranchTag
from uadat.layers.dual_batch_norm import use_branch
from uadat.utils.errors import check_finite


class AbsSplitClassifier(torch.nn.Module, ABC):
    """Image classifier that can be cut after any block.

    ``blocks[:aum_depth]`` form the stem, ``blocks[aum_depth:]`` plus global
    average pooling form the tail, and ``head`` maps the pooled embedding to
    logits. Every normalization layer is a DualBatchNorm2d, so each partial
    forward takes the branch whose statistics it should consume.

    Subclasses fill ``blocks`` and ``head`` and call :meth:`_check_layout`.
    """

    def __init__(
        self,
        num_classes: int,
        in_channels: int,
        image_size: int,
        channels: Sequence[int],
        strides: Sequence[int],
        aum_depth: int,
    ):
        assert check_argument_types()
        super().__init__()
        if len(channels) != len(strides):
            raise ValueError(f"channels/strides mismatch: {channels} vs {strides}")
        if not 1 <= aum_depth <= len(channels):
            raise ValueError(f"aum_depth must be in [1, {len(channels)}]: {aum_depth}")
        if num_classes < 2:
            raise ValueError(f"num_classes must be >= 2: {num_classes}")
        self.num_classes = num_classes
        self.in_channels = in_channels
        self.image_size = image_size
        self.channels = list(channels)
        self.strides = list(strides)
        self.aum_depth = aum_depth
        self.pool = torch.nn.AdaptiveAvgPool2d(1)

    @property
    def feature_dim(self) -> int:
        """Channel count D at the cut point."""
        return self.channels[self.aum_depth - 1]

    @property
    def stem_stride(self) -> int:
        return int(np.prod(self.strides[: self.aum_depth]))

    def feature_size(self) -> int:
        """Spatial side H (= W) of the stem output."""
        size = self.image_size
        for s in self.strides[: self.aum_depth]:
            size = (size - 1) // s + 1
        return size

    def _check_layout(self):
        assert len(self.blocks) == len(self.channels), (len(self.blocks), self.channels)
        hw = self.feature_size() ** 2
        if hw < self.feature_dim:
            raise ValueError(
                f"{self.image_size}px input gives {hw} positions at aum_depth="
                f"{self.aum_depth}, fewer than D={self.feature_dim}: the "
                f"per-instance covariance would be rank deficient"
            )

    def architecture(self) -> Dict[str, Any]:
        raise NotImplementedError

    def forward_stem(
        self, x: torch.Tensor, branch: BranchTag = BranchTag.PRIMARY
    ) -> torch.Tensor:
        """Run blocks up to ``aum_depth``: (B, C, H0, W0) -> (B, D, H, W)."""
        expected = (self.in_channels, self.image_size, self.image_size)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise ValueError(
                f"input must be (B, {expected[0]}, {expected[1]}, {expected[2]}): "
                f"{tuple(x.shape)}"
            )
        with use_branch(self, branch):
            for block in self.blocks[: self.aum_depth]:
                x = block(x)
        return x

    def forward_tail_head(
        self, f: torch.Tensor, branch: BranchTag = BranchTag.PRIMARY
    ) -> torch.Tensor:
        """Run the remaining blocks, pooling and the head: (B, D, H, W) -> (B, C)."""
        if f.dim() != 4 or f.size(1) != self.feature_dim:
            raise ValueError(
                f"features must be (B, {self.feature_dim}, H, W): {tuple(f.shape)}"
            )
        check_finite(f, "features entering the tail")
        with use_branch(self, branch):
            for block in self.blocks[self.aum_depth :]:
                f = block(f)
            return self.head(self.pool(f).flatten(1))

    def forward(
        self, x: torch.Tensor, branch: BranchTag = BranchTag.PRIMARY
    ) -> torch.Tensor:
        return self.forward_tail_head(self.forward_stem(x, branch), branch)

    def predict(self, x: torch.Tensor) -> torch.Tensor:
        """Inference logits; only PRIMARY statistics are involved."""
        return self.forward(x, BranchTag.PRIMARY)
