# Adopted from https://github.com/espnet/espnet

from typing import Dict
from typing import Iterable
from typing import List

import torch
from typeguard import check_argument_types


class SGD(torch.optim.SGD):
    """Thin inheritance of torch.optim.SGD with adversarial-training defaults.

    Nesterov momentum 0.9 and weight decay 5e-4; every argument except
    ``params`` has a default so the optimizer can be built from a config.
    """

    def __init__(
        self,
        params,
        lr: float = 0.1,
        momentum: float = 0.9,
        dampening: float = 0.0,
        weight_decay: float = 5e-4,
        nesterov: bool = True,
    ):
        assert check_argument_types()
        super().__init__(
            params,
            lr=lr,
            momentum=momentum,
            dampening=dampening,
            weight_decay=weight_decay,
            nesterov=nesterov,
        )


def decay_param_groups(model: torch.nn.Module) -> List[Dict[str, Iterable]]:
    """Split parameters so normalization affine parameters get no weight decay.

    The second group overrides ``weight_decay`` with 0; the first inherits
    the optimizer default.
    """
    norm_params = set()
    for m in model.modules():
        if isinstance(m, torch.nn.modules.batchnorm._BatchNorm):
            norm_params.update(id(p) for p in m.parameters(recurse=False))
    decay, no_decay = [], []
    for p in model.parameters():
        if p.requires_grad:
            (no_decay if id(p) in norm_params else decay).append(p)
    return [dict(params=decay), dict(params=no_decay, weight_decay=0.0)]
