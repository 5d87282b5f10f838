import logging

import torch

from uadat.utils.errors import ConfigError


def check_double_backward(device: str = "cpu"):
    """Fail fast when the backend can't differentiate through an input gradient.

    The gradient-matching loss needs a second-order graph. Probing it once at
    start-up turns a mid-training crash into a configuration error.
    """
    try:
        x = torch.linspace(0.1, 0.9, 4, device=device, requires_grad=True)
        w = torch.ones(4, device=device, requires_grad=True)
        y = torch.tanh(x * w).pow(2).sum()
        (gx,) = torch.autograd.grad(y, x, create_graph=True)
        (gw,) = torch.autograd.grad(gx.pow(2).sum(), w)
    except RuntimeError as e:
        raise ConfigError(
            "weights.lambda2", f"double backward is unsupported on {device}: {e}"
        ) from e
    if gw is None or not bool(torch.isfinite(gw).all()):
        raise ConfigError("weights.lambda2", f"double backward is broken on {device}")
    logging.debug(f"double backward available on {device}")


def backend_summary() -> str:
    """One line describing the torch build and the determinism switches."""
    message = (
        f"pytorch.version={torch.__version__}, "
        f"cuda.available={torch.cuda.is_available()}, "
        f"deterministic_algorithms={torch.are_deterministic_algorithms_enabled()}"
    )
    if torch.backends.cudnn.enabled:
        message += (
            f", cudnn.version={torch.backends.cudnn.version()}, "
            f"cudnn.benchmark={torch.backends.cudnn.benchmark}, "
            f"cudnn.deterministic={torch.backends.cudnn.deterministic}"
        )
    return message
