import humanfriendly
import numpy as np
import torch


def get_human_readable_count(number: int) -> str:
    """Abbreviate an integer with K, M, B and T.

    Examples:
        >>> get_human_readable_count(123)
        '123.00  '
        >>> get_human_readable_count(2e6)
        '2.00 M'

    """
    assert number >= 0
    labels = [" ", "K", "M", "B", "T"]
    num_digits = int(np.floor(np.log10(number)) + 1 if number > 0 else 1)
    num_groups = min(int(np.ceil(num_digits / 3)), len(labels))
    number = number * (10 ** (-3 * (num_groups - 1)))
    return f"{number:.2f} {labels[num_groups - 1]}"


def model_summary(model: torch.nn.Module) -> str:
    tot_params = sum(p.numel() for p in model.parameters())
    num_params = sum(p.numel() for p in model.parameters() if p.requires_grad)
    num_buffers = sum(b.numel() for b in model.buffers())
    percent_trainable = "{:.1f}".format(num_params * 100.0 / max(tot_params, 1))
    num_bytes = humanfriendly.format_size(
        sum(p.numel() * p.element_size() for p in model.parameters())
    )

    message = "Model structure:\n"
    message += str(model)
    message += "\n\nModel summary:\n"
    message += f"    Class Name: {model.__class__.__name__}\n"
    message += (
        "    Total Number of model parameters: "
        f"{get_human_readable_count(tot_params)}\n"
    )
    message += (
        "    Number of trainable parameters: "
        f"{get_human_readable_count(num_params)} ({percent_trainable}%)\n"
    )
    message += (
        "    Number of buffer elements: "
        f"{get_human_readable_count(num_buffers)}\n"
    )
    message += f"    Size: {num_bytes}\n"
    if tot_params > 0:
        message += f"    Type: {next(iter(model.parameters())).dtype}"
    return message
