import pytest
import torch

from uadat.schedulers.piecewise_linear_lr import PiecewiseLinearLR
from uadat.schedulers.piecewise_linear_lr import lr_at


@pytest.mark.parametrize(
    "schedule, step, expected",
    [
        ("cyclic", 0, 0.0),
        ("cyclic", 25, 0.05),
        ("cyclic", 50, 0.1),
        ("cyclic", 75, 0.05),
        ("linear", 0, 0.1),
        ("linear", 50, 0.05),
        ("linear", 99, 0.001),
    ],
)
def test_lr_at(schedule, step, expected):
    assert lr_at(schedule, step, 100, 0.1) == pytest.approx(expected)


@pytest.mark.parametrize("step", [-1, 100])
def test_lr_at_out_of_range(step):
    with pytest.raises(ValueError):
        lr_at("cyclic", step, 100, 0.1)


def _optimizer(lr=0.2):
    return torch.optim.SGD([torch.nn.Parameter(torch.zeros(1))], lr=lr)


def test_scheduler_follows_the_triangle():
    optimizer = _optimizer()
    scheduler = PiecewiseLinearLR(optimizer, schedule="cyclic", total_steps=10)
    lrs = []
    for _ in range(12):
        lrs.append(optimizer.param_groups[0]["lr"])
        optimizer.step()
        scheduler.step()
    assert lrs[:11] == pytest.approx(
        [0.0, 0.04, 0.08, 0.12, 0.16, 0.2, 0.16, 0.12, 0.08, 0.04, 0.04]
    )
    # past the end the last value is kept
    assert lrs[11] == pytest.approx(0.04)


def test_state_dict_resumes_the_position():
    optimizer = _optimizer()
    scheduler = PiecewiseLinearLR(optimizer, total_steps=10)
    for _ in range(3):
        scheduler.step()
    restored = PiecewiseLinearLR(_optimizer(), total_steps=10)
    restored.load_state_dict(scheduler.state_dict())
    assert restored.last_epoch == 3
    assert restored.get_last_lr() == pytest.approx(scheduler.get_last_lr())


def test_invalid_arguments():
    with pytest.raises(ValueError):
        PiecewiseLinearLR(_optimizer(), total_steps=0)
    with pytest.raises(ValueError):
        PiecewiseLinearLR(_optimizer(), schedule="cosine", total_steps=10)
