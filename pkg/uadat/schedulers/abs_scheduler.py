from abc import ABC
from abc import abstractmethod
from typing import Any
from typing import Dict
from typing import Optional

import torch.optim.lr_scheduler as L


class AbsScheduler(ABC):
    """Learning-rate schedule driven by the trainer.

    The subclass decides when the trainer calls ``step``: after every update
    (:class:`AbsBatchStepScheduler`) or after every epoch
    (:class:`AbsEpochStepScheduler`). The state is stored in checkpoints.
    """

    @abstractmethod
    def step(self, epoch: Optional[int] = None):
        pass

    @abstractmethod
    def state_dict(self) -> Dict[str, Any]:
        pass

    @abstractmethod
    def load_state_dict(self, state: Dict[str, Any]):
        pass


class AbsBatchStepScheduler(AbsScheduler):
    """Stepped once per parameter update, so schedules count updates."""


class AbsEpochStepScheduler(AbsScheduler):
    """Stepped once per epoch, after validation."""


# torch schedulers selectable by --scheduler
for s in [L.StepLR, L.MultiStepLR, L.CosineAnnealingLR]:
    AbsEpochStepScheduler.register(s)
