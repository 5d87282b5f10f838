"""Batch normalization with separate statistics for clean and adversarial inputs."""

from contextlib import contextmanager
import enum
from typing import Iterator

import torch
from torch import nn


class BranchTag(enum.Enum):
    """Which set of normalization statistics a forward pass consumes.

    PRIMARY handles clean and benignly refined inputs and is the only branch
    used at inference. AUXILIARY handles adversarial inputs during training.
    """

    PRIMARY = "primary"
    AUXILIARY = "auxiliary"


class DualBatchNorm2d(nn.BatchNorm2d):
    """BatchNorm2d with an auxiliary copy of statistics and affine parameters.

    The module itself holds the PRIMARY branch. ``aux_bn`` holds the
    AUXILIARY branch. Select the branch with :func:`use_branch` instead of
    threading the tag through every layer.

    Examples:
        >>> bn = DualBatchNorm2d(4)
        >>> with use_branch(bn, BranchTag.AUXILIARY):
        ...     y = bn(torch.randn(2, 4, 3, 3))

    """

    def __init__(
        self,
        num_features: int,
        eps: float = 1e-5,
        momentum: float = 0.1,
        affine: bool = True,
    ):
        super().__init__(num_features, eps=eps, momentum=momentum, affine=affine)
        self.aux_bn = nn.BatchNorm2d(
            num_features, eps=eps, momentum=momentum, affine=affine
        )
        self.branch = BranchTag.PRIMARY

    def forward(self, input: torch.Tensor) -> torch.Tensor:
        if self.branch is BranchTag.AUXILIARY:
            return self.aux_bn(input)
        return super().forward(input)


def _set_branch(model: nn.Module, branch: BranchTag):
    for m in model.modules():
        if isinstance(m, DualBatchNorm2d):
            m.branch = branch


@contextmanager
def use_branch(model: nn.Module, branch: BranchTag) -> Iterator[nn.Module]:
    """Route every DualBatchNorm2d inside ``model`` through ``branch``.

    PRIMARY is restored on exit so a stray forward never lands on the
    auxiliary statistics.
    """
    _set_branch(model, branch)
    try:
        yield model
    finally:
        _set_branch(model, BranchTag.PRIMARY)


@contextmanager
def frozen_batch_stats(model: nn.Module) -> Iterator[nn.Module]:
    """Keep running statistics of every batch norm layer untouched.

    In train mode the layers still normalize with batch statistics; only the
    running-average update is suppressed. Attack, refinement and
    gradient-matching forwards run inside this context.
    """
    saved = []
    for m in model.modules():
        if isinstance(m, nn.modules.batchnorm._BatchNorm):
            saved.append((m, m.track_running_stats))
            m.track_running_stats = False
    try:
        yield model
    finally:
        for m, flag in saved:
            m.track_running_stats = flag
