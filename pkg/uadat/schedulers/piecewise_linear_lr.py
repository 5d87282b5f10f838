import enum
from typing import Union

import torch
from torch.optim.lr_scheduler import _LRScheduler
from typeguard import check_argument_types

from uadat.schedulers.abs_scheduler import AbsBatchStepScheduler


class LRSchedule(enum.Enum):
    CYCLIC = "cyclic"
    LINEAR = "linear"


def lr_at(
    schedule: Union[LRSchedule, str], step: int, total_steps: int, lr_peak: float
) -> float:
    """Learning rate of ``step`` in a run of ``total_steps`` updates.

    CYCLIC is a single triangle: 0 at step 0, ``lr_peak`` at total_steps / 2,
    back to 0 at total_steps. LINEAR starts at ``lr_peak`` and decays to 0.

    Examples:
        >>> lr_at("cyclic", 50, 100, 0.1)
        0.1
        >>> lr_at("linear", 0, 100, 0.1)
        0.1

    """
    schedule = LRSchedule(schedule)
    if not 0 <= step < total_steps:
        raise ValueError(f"step must be in [0, {total_steps}): {step}")
    if schedule is LRSchedule.CYCLIC:
        half = total_steps / 2
        if step <= half:
            return lr_peak * step / half
        return lr_peak * (total_steps - step) / half
    return lr_peak * (total_steps - step) / total_steps


class PiecewiseLinearLR(_LRScheduler, AbsBatchStepScheduler):
    """Per-update cyclic or linear learning rate.

    The optimizer's lr is taken as the peak. Steps past the end keep the last
    value.

    Args:
        optimizer: Wrapped optimizer.
        schedule: "cyclic" or "linear".
        total_steps: Number of updates of the whole run.
    """

    def __init__(
        self,
        optimizer: torch.optim.Optimizer,
        schedule: str = "cyclic",
        total_steps: int = 1,
        last_epoch: int = -1,
    ):
        assert check_argument_types()
        if total_steps < 1:
            raise ValueError(f"total_steps must be >= 1: {total_steps}")
        self.schedule = LRSchedule(schedule)
        self.total_steps = total_steps

        # __init__() must be invoked before setting field
        # because step() is also invoked in __init__()
        super().__init__(optimizer, last_epoch)

    def __repr__(self):
        return (
            f"{self.__class__.__name__}(schedule={self.schedule.value}, "
            f"total_steps={self.total_steps})"
        )

    def get_lr(self):
        step = min(max(self.last_epoch, 0), self.total_steps - 1)
        return [
            lr_at(self.schedule, step, self.total_steps, lr) for lr in self.base_lrs
        ]
