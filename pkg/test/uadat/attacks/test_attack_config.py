import pytest
import torch

from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.attack_config import project_linf
from uadat.utils.errors import ConfigError


def test_fractions_are_parsed():
    cfg = AttackConfig(epsilon="8/255", step_size="2/255", refine_step="0.5")
    assert cfg.epsilon == pytest.approx(8 / 255)
    assert cfg.step_size == pytest.approx(2 / 255)
    assert cfg.refine_step == 0.5


@pytest.mark.parametrize(
    "kwargs, field",
    [
        (dict(epsilon=-0.1), "epsilon"),
        (dict(step_size=0), "step_size"),
        (dict(steps=0), "steps"),
        (dict(refine_steps=0), "refine_steps"),
        (dict(random_init="gaussian"), "random_init"),
        (dict(restarts=0), "restarts"),
    ],
)
def test_invalid_values(kwargs, field):
    with pytest.raises(ConfigError) as e:
        AttackConfig(**kwargs)
    assert e.value.field == field


def test_project_linf_clips_to_ball_then_box():
    x = torch.tensor([0.0, 0.5, 1.0])
    x_adv = torch.tensor([-1.0, 0.9, 1.02])
    assert torch.allclose(project_linf(x_adv, x, 0.1), torch.tensor([0.0, 0.6, 1.0]))
