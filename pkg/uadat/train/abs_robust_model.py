from abc import ABC
from abc import abstractmethod
from typing import Any
from typing import Dict

import torch

from uadat.nets.abs_split_classifier import AbsSplitClassifier


class AbsRobustModel(torch.nn.Module, ABC):
    """The common abstract class among training methods

    A "RobustModel" wraps a split classifier (delegate pattern) and defines
    the per-batch training objective. The only values exchanged with the
    training loop are returned in a dict:

        loss: scalar to back-propagate
        stats: Dict[str, float] registered to the reporter
        weight: batch size used for weighted averaging
        breakdown: LossBreakdown of the step

    and :meth:`end_of_step` is invoked after the parameter update, so a
    method can keep per-sample state (e.g. feature-statistics history).

    Example:
        >>> class YourRobustModel(AbsRobustModel):
        ...     def forward(self, image, label, index, epoch):
        ...         ...
        ...         return dict(loss=loss, stats=stats, weight=weight,
        ...                     breakdown=breakdown)
    """

    classifier: AbsSplitClassifier

    @abstractmethod
    def forward(
        self,
        image: torch.Tensor,
        label: torch.Tensor,
        index: torch.Tensor,
        epoch: int,
    ) -> Dict[str, Any]:
        raise NotImplementedError

    def end_of_step(self, retval: Dict[str, Any]) -> None:
        pass
