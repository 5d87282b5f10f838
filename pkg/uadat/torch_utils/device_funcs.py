import dataclasses

import numpy as np
import torch


def to_device(data, device=None, dtype=None, non_blocking=False):
    """Change the device of object recursively.

    Integer tensors (labels, sample indices) keep their dtype.
    """
    if isinstance(data, dict):
        return {k: to_device(v, device, dtype, non_blocking) for k, v in data.items()}
    if dataclasses.is_dataclass(data) and not isinstance(data, type):
        return type(data)(
            **{
                f.name: to_device(getattr(data, f.name), device, dtype, non_blocking)
                for f in dataclasses.fields(data)
            }
        )
    if isinstance(data, (list, tuple)):
        return type(data)(to_device(v, device, dtype, non_blocking) for v in data)
    if isinstance(data, np.ndarray):
        return to_device(torch.from_numpy(data), device, dtype, non_blocking)
    if isinstance(data, torch.Tensor):
        if dtype is not None and not data.is_floating_point():
            return data.to(device, non_blocking=non_blocking)
        return data.to(device, dtype, non_blocking=non_blocking)
    return data
