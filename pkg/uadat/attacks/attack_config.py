from dataclasses import dataclass
from dataclasses import field
from typing import List
from typing import Union

import torch

from uadat.utils.errors import ConfigError
from uadat.utils.types import pixel_value

RANDOM_INITS = ("normal", "uniform", "none")


@dataclass
class AttackConfig:
    """L-inf threat model and step schedule.

    Magnitudes are in pixel units ([0, 1] images) and accept "8/255" strings
    so yaml configs can be written the way the numbers are usually quoted.

    Attributes:
        epsilon: Radius of the L-inf ball.
        step_size: Ascent step of the attack.
        steps: Number of attack iterations.
        refine_step: Descent step of the benign refinement.
        refine_steps: Number of refinement iterations.
        init_noise_scale: Std of the Gaussian random start.
        random_init: "normal" (scaled Gaussian), "uniform" (in the ball) or "none".
        restarts: Independent random restarts, used by evaluation.
    """

    epsilon: Union[float, str] = 8 / 255
    step_size: Union[float, str] = 2 / 255
    steps: int = 10
    refine_step: Union[float, str] = 8 / 255
    refine_steps: int = 1
    init_noise_scale: float = 0.001
    random_init: str = "normal"
    restarts: int = 1

    def __post_init__(self):
        for name in ("epsilon", "step_size", "refine_step"):
            setattr(self, name, pixel_value(getattr(self, name)))
        if self.epsilon < 0:
            raise ConfigError("epsilon", f"must be >= 0: {self.epsilon}")
        if self.step_size <= 0:
            raise ConfigError("step_size", f"must be > 0: {self.step_size}")
        if self.steps < 1:
            raise ConfigError("steps", f"must be >= 1: {self.steps}")
        if self.refine_step < 0:
            raise ConfigError("refine_step", f"must be >= 0: {self.refine_step}")
        if self.refine_steps < 1:
            raise ConfigError("refine_steps", f"must be >= 1: {self.refine_steps}")
        if self.init_noise_scale < 0:
            raise ConfigError(
                "init_noise_scale", f"must be >= 0: {self.init_noise_scale}"
            )
        if self.random_init not in RANDOM_INITS:
            raise ConfigError("random_init", f"must be one of {RANDOM_INITS}")
        if self.restarts < 1:
            raise ConfigError("restarts", f"must be >= 1: {self.restarts}")


@dataclass
class AdversaryRecord:
    """Outcome of one PGD run.

    Attributes:
        final: The last iterate.
        intermediates: Iterates 1 .. n-1 in order (empty for a single step).
        loss_trace: Batch-mean attack objective at the point each step's
            gradient was taken, one value per step.
    """

    final: torch.Tensor
    intermediates: List[torch.Tensor] = field(default_factory=list)
    loss_trace: List[float] = field(default_factory=list)


def project_linf(x_adv: torch.Tensor, x: torch.Tensor, epsilon: float) -> torch.Tensor:
    """Project onto the epsilon-ball around ``x``, then clamp to [0, 1]."""
    x_adv = torch.min(torch.max(x_adv, x - epsilon), x + epsilon)
    return x_adv.clamp(0.0, 1.0)
