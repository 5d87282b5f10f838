from typing import Any
from typing import Dict

import torch
import torch.nn.functional as F
from typeguard import check_argument_types

from uadat.layers.dual_batch_norm import BranchTag
from uadat.losses.total import LossWeights
from uadat.losses.total import total_loss
from uadat.nets.abs_split_classifier import AbsSplitClassifier
from uadat.train.abs_robust_model import AbsRobustModel


class NaturalModel(AbsRobustModel):
    """Cross-entropy on clean inputs only, the natural-training control.

    Only the PRIMARY branch is ever used.
    """

    def __init__(self, classifier: AbsSplitClassifier, num_samples: int = 0):
        assert check_argument_types()
        super().__init__()
        self.classifier = classifier
        self._weights = LossWeights(beta=0.0, lambda1=0.0, lambda2=0.0)

    def forward(
        self,
        image: torch.Tensor,
        label: torch.Tensor,
        index: torch.Tensor,
        epoch: int,
    ) -> Dict[str, Any]:
        ce = F.cross_entropy(self.classifier(image, BranchTag.PRIMARY), label)
        zero = ce.new_zeros(())
        breakdown = total_loss(ce, zero, zero, zero, self._weights)
        return dict(
            loss=breakdown.total,
            stats=breakdown.detached(),
            weight=torch.tensor(image.size(0)),
            breakdown=breakdown,
        )
