from abc import ABC
from abc import abstractmethod
from typing import Dict
from typing import Iterator
from typing import Optional

import torch


class AbsIterFactory(ABC):
    """Builds one epoch of mini-batches.

    A batch is a dict with ``image`` (B, C, H, W), ``label`` (B,) and
    ``index`` (B,), the stable sample id used to key per-sample history.
    """

    @abstractmethod
    def build_iter(
        self, epoch: int, shuffle: Optional[bool] = None
    ) -> Iterator[Dict[str, torch.Tensor]]:
        raise NotImplementedError

    @abstractmethod
    def num_batches(self) -> int:
        """Batches per epoch; the cyclic learning rate is laid out over these."""
        raise NotImplementedError
