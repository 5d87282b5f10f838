import json

import pytest
import torch

from uadat.data.synthetic import make_synthetic
from uadat.iterators.indexed_iter_factory import IndexedIterFactory
from uadat.optimizers.sgd import SGD
from uadat.optimizers.sgd import decay_param_groups
from uadat.schedulers.piecewise_linear_lr import PiecewiseLinearLR
from uadat.train.trainer import METRIC_KEYS
from uadat.train.trainer import Trainer
from uadat.train.trainer import TrainerOptions
from uadat.train.trainer import TrainState
from uadat.train.trainer import load_checkpoint
from uadat.train.trainer import train_step
from uadat.train.uad_at_model import UADATModel

ATTACK = dict(steps=3)
UNCERTAINTY = dict(kappa_I=2, kappa_H=2)


def _uadat(make_convnet, num_samples):
    return UADATModel(
        make_convnet(),
        num_samples=num_samples,
        attack_conf=ATTACK,
        uncertainty_conf=UNCERTAINTY,
    )


def _state(make_convnet, num_samples, total_steps):
    model = _uadat(make_convnet, num_samples)
    optimizer = SGD(decay_param_groups(model), lr=0.05)
    scheduler = PiecewiseLinearLR(optimizer, total_steps=total_steps)
    return TrainState(model, optimizer, scheduler)


def test_train_step_updates_and_records(make_convnet):
    state = _state(make_convnet, 8, 10)
    x = torch.rand(8, 3, 8, 8)
    batch = dict(image=x, label=torch.randint(0, 3, (8,)), index=torch.arange(8))
    breakdown = train_step(state, batch)
    assert state.step == 1
    assert torch.isfinite(breakdown.total)
    assert len(state.model.history.query(0, 2)[0]) == 2
    # the first cyclic lr is 0, the second is not
    assert state.optimizer.param_groups[0]["lr"] > 0


def test_state_round_trip_continues_identically(make_convnet, tmp_path):
    """5 steps, save, restore into fresh objects, 10 more == 15 uninterrupted."""
    g = torch.Generator().manual_seed(0)
    batches = [
        dict(
            image=torch.rand(8, 3, 8, 8, generator=g),
            label=torch.randint(0, 3, (8,), generator=g),
            index=torch.arange(8 * i, 8 * i + 8),
        )
        for i in range(15)
    ]

    torch.manual_seed(123)
    state = _state(make_convnet, 120, 15)
    totals = []
    for i, batch in enumerate(batches):
        if i == 5:
            torch.save(state.state_dict(), tmp_path / "state.pth")
        totals.append(float(train_step(state, batch).total))

    restored = _state(make_convnet, 120, 15)
    restored.load_state_dict(torch.load(tmp_path / "state.pth", weights_only=False))
    assert restored.step == 5
    resumed = [float(train_step(restored, batch).total) for batch in batches[5:]]
    assert resumed == totals[5:]


def _options(output_dir, max_epoch, resume=False):
    return TrainerOptions(
        ngpu=0,
        resume=resume,
        grad_clip=10.0,
        log_interval=None,
        use_tensorboard=False,
        output_dir=output_dir,
        max_epoch=max_epoch,
        seed=0,
        eval_attack_conf=dict(steps=2, random_init="uniform"),
    )


def _run(make_convnet, output_dir, max_epoch, resume=False):
    common = dict(classes=3, image_size=8, feature_dim=4, stem_stride=1)
    train = make_synthetic(4, seed=0, **common)
    valid = make_synthetic(2, seed=1, split="valid", **common)
    train_iter = IndexedIterFactory(train, batch_size=4, seed=0, shuffle=True)
    valid_iter = IndexedIterFactory(valid, batch_size=4)
    state = _state(make_convnet, len(train), 3 * train_iter.num_batches())
    return Trainer.run(
        state.model,
        state.optimizer,
        state.scheduler,
        train_iter,
        valid_iter,
        _options(output_dir, max_epoch, resume),
    )


def _records(path):
    with open(path, encoding="utf-8") as f:
        records = [json.loads(line) for line in f]
    for r in records:
        r.pop("wall_ms")
    return records


def test_run_writes_checkpoints_and_metrics(make_convnet, tmp_path):
    reporter = _run(make_convnet, tmp_path, 2)
    assert (tmp_path / "ckpt_epoch2.bin").exists()
    assert not (tmp_path / "ckpt_epoch1.bin").exists()
    assert (tmp_path / "ckpt_best.bin").exists()
    assert Trainer.latest_checkpoint(tmp_path) == tmp_path / "ckpt_epoch2.bin"

    records = _records(tmp_path / "metrics.jsonl")
    assert len(records) == 2 * 3
    assert [r["step"] for r in records] == list(range(1, 7))
    assert all(set(METRIC_KEYS) <= set(r) for r in records)
    assert reporter.has("valid", "robust_acc", 2)

    states = load_checkpoint(tmp_path / "ckpt_epoch2.bin")
    assert states["method"] == "UADATModel"
    assert states["architecture"]["name"] == "convnet"
    assert states["train_state"]["epoch"] == 2


def test_same_seed_same_metrics(make_convnet, tmp_path):
    _run(make_convnet, tmp_path / "a", 1)
    _run(make_convnet, tmp_path / "b", 1)
    assert _records(tmp_path / "a" / "metrics.jsonl") == _records(
        tmp_path / "b" / "metrics.jsonl"
    )


def test_resumed_run_matches_uninterrupted(make_convnet, tmp_path):
    _run(make_convnet, tmp_path / "full", 2)
    _run(make_convnet, tmp_path / "resumed", 1)
    _run(make_convnet, tmp_path / "resumed", 2, resume=True)
    assert _records(tmp_path / "full" / "metrics.jsonl") == _records(
        tmp_path / "resumed" / "metrics.jsonl"
    )


def test_checkpoint_version_is_checked(tmp_path):
    torch.save({"version": 0}, tmp_path / "old.bin")
    with pytest.raises(ValueError):
        load_checkpoint(tmp_path / "old.bin")
