"""Initialize modules of the split classifiers."""

import torch
from typeguard import check_argument_types


def initialize(model: torch.nn.Module, init: str):
    """Initialize convolution weights with the given method.

    Linear layers get N(0, 0.01^2) weights so an untrained classifier starts
    with near-uniform predictions. Normalization layers get unit scale and
    zero shift, so both branches of a DualBatchNorm2d start out identical.

    Args:
        model: Target.
        init: One of "kaiming_normal", "kaiming_uniform", "xavier_uniform",
            "xavier_normal" or "default" (keep the torch defaults).
    """
    assert check_argument_types()
    if init == "default":
        return

    for m in model.modules():
        if isinstance(m, torch.nn.Conv2d):
            if init == "kaiming_normal":
                torch.nn.init.kaiming_normal_(
                    m.weight, mode="fan_out", nonlinearity="relu"
                )
            elif init == "kaiming_uniform":
                torch.nn.init.kaiming_uniform_(m.weight, nonlinearity="relu")
            elif init == "xavier_uniform":
                torch.nn.init.xavier_uniform_(m.weight)
            elif init == "xavier_normal":
                torch.nn.init.xavier_normal_(m.weight)
            else:
                raise ValueError("Unknown initialization: " + init)
        elif isinstance(m, torch.nn.Linear):
            torch.nn.init.normal_(m.weight, std=0.01)
        elif isinstance(m, torch.nn.modules.batchnorm._BatchNorm) and m.affine:
            torch.nn.init.ones_(m.weight)
            torch.nn.init.zeros_(m.bias)
            continue
        else:
            continue
        if m.bias is not None:
            torch.nn.init.zeros_(m.bias)
