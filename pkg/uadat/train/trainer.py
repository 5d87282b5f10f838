import argparse
import dataclasses
from dataclasses import is_dataclass
import json
import logging
import math
from pathlib import Path
import re
import shutil
import time
from typing import Any
from typing import Dict
from typing import Iterable
from typing import Optional
from typing import Union

import humanfriendly
import torch
from torch.utils.tensorboard import SummaryWriter
from typeguard import check_argument_types

from uadat import __version__
from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.pgd import pgd_ce
from uadat.iterators.abs_iter_factory import AbsIterFactory
from uadat.losses.total import LossBreakdown
from uadat.schedulers.abs_scheduler import AbsBatchStepScheduler
from uadat.schedulers.abs_scheduler import AbsEpochStepScheduler
from uadat.schedulers.abs_scheduler import AbsScheduler
from uadat.torch_utils.device_funcs import to_device
from uadat.torch_utils.set_all_random_seed import get_all_random_state
from uadat.torch_utils.set_all_random_seed import set_all_random_seed
from uadat.torch_utils.set_all_random_seed import set_all_random_state
from uadat.train.abs_robust_model import AbsRobustModel
from uadat.train.reporter import Reporter
from uadat.train.reporter import SubReporter
from uadat.utils.build_dataclass import build_dataclass
from uadat.utils.build_dataclass import dataclass_from_conf
from uadat.utils.errors import NonFiniteError

CHECKPOINT_VERSION = 1
METRIC_KEYS = ("ce_clean", "kl_pred", "d2d_sa", "igm", "total")


def load_checkpoint(path: Union[str, Path], map_location="cpu") -> Dict[str, Any]:
    """torch.load of a full training checkpoint (it holds generator states)."""
    states = torch.load(path, map_location=map_location, weights_only=False)
    if states.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version: {states.get('version')}")
    return states


@dataclasses.dataclass
class TrainerOptions:
    ngpu: int
    resume: bool
    grad_clip: float
    log_interval: Optional[int]
    use_tensorboard: bool
    output_dir: Union[Path, str]
    max_epoch: int
    seed: int
    eval_attack_conf: dict


@dataclasses.dataclass
class TrainState:
    """Everything a step mutates; round-trips through :meth:`state_dict`.

    ``epoch`` is the epoch being trained (from 1) and ``step`` counts
    updates over the whole run.
    """

    model: AbsRobustModel
    optimizer: torch.optim.Optimizer
    scheduler: Optional[AbsScheduler] = None
    epoch: int = 1
    step: int = 0
    grad_clip: float = -1.0

    def state_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.state_dict(),
            "optimizer": self.optimizer.state_dict(),
            "scheduler": (
                None if self.scheduler is None else self.scheduler.state_dict()
            ),
            "epoch": self.epoch,
            "step": self.step,
            "random_state": get_all_random_state(),
        }

    def load_state_dict(self, state: Dict[str, Any]):
        self.model.load_state_dict(state["model"])
        self.optimizer.load_state_dict(state["optimizer"])
        if self.scheduler is not None and state["scheduler"] is not None:
            self.scheduler.load_state_dict(state["scheduler"])
        self.epoch = state["epoch"]
        self.step = state["step"]
        set_all_random_state(state["random_state"])


def train_step(state: TrainState, batch: Dict[str, torch.Tensor]) -> LossBreakdown:
    """One update: objective, backward, clipped step, scheduler, history push.

    A non-finite gradient norm skips the parameter update (the step is still
    counted and the history still records the visit).
    """
    model, optimizer = state.model, state.optimizer
    model.train()
    retval = model(**batch, epoch=state.epoch)

    optimizer.zero_grad()
    retval["loss"].backward()
    max_norm = state.grad_clip if state.grad_clip > 0 else math.inf
    grad_norm = torch.nn.utils.clip_grad_norm_(model.parameters(), max_norm)
    if not torch.isfinite(grad_norm):
        logging.warning(f"The grad norm is {grad_norm}. Skipping updating the model.")
    else:
        optimizer.step()
    if isinstance(state.scheduler, AbsBatchStepScheduler):
        state.scheduler.step()
    model.end_of_step(retval)
    state.step += 1
    return retval["breakdown"]


class Trainer:
    """Epoch loop around :func:`train_step`.

    Each epoch trains, validates clean and PGD accuracy, logs the summary,
    then writes ``ckpt_epoch{t}.bin`` (replacing the previous one) and
    ``ckpt_best.bin`` when the validation robust accuracy improves. Every
    update appends one record to ``metrics.jsonl``.
    """

    def __init__(self):
        raise RuntimeError("This class can't be instantiated.")

    @classmethod
    def build_options(cls, args: argparse.Namespace) -> TrainerOptions:
        assert check_argument_types()
        return build_dataclass(TrainerOptions, args)

    @staticmethod
    def latest_checkpoint(output_dir: Path) -> Optional[Path]:
        found = []
        for p in Path(output_dir).glob("ckpt_epoch*.bin"):
            m = re.fullmatch(r"ckpt_epoch(\d+)\.bin", p.name)
            if m is not None:
                found.append((int(m.group(1)), p))
        return max(found)[1] if found else None

    @staticmethod
    def resume(checkpoint: Path, state: TrainState, reporter: Reporter):
        states = load_checkpoint(checkpoint)
        state.load_state_dict(states["train_state"])
        reporter.load_state_dict(states["reporter"])
        logging.info(f"The training was resumed using {checkpoint}")

    @classmethod
    def save_checkpoint(
        cls, path: Path, state: TrainState, reporter: Reporter
    ) -> Path:
        torch.save(
            {
                "version": CHECKPOINT_VERSION,
                "uadat_version": __version__,
                "architecture": state.model.classifier.architecture(),
                "method": type(state.model).__name__,
                "train_state": state.state_dict(),
                "reporter": reporter.state_dict(),
            },
            path,
        )
        return path

    @classmethod
    def run(
        cls,
        model: AbsRobustModel,
        optimizer: torch.optim.Optimizer,
        scheduler: Optional[AbsScheduler],
        train_iter_factory: AbsIterFactory,
        valid_iter_factory: Optional[AbsIterFactory],
        trainer_options,
    ) -> Reporter:
        """Perform training. This method performs the main process of training."""
        assert check_argument_types()
        assert is_dataclass(trainer_options), type(trainer_options)
        options = trainer_options
        output_dir = Path(options.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        eval_attack = dataclass_from_conf(
            AttackConfig, options.eval_attack_conf, "eval_attack"
        )

        reporter = Reporter()
        state = TrainState(model, optimizer, scheduler, grad_clip=options.grad_clip)
        last_good = None
        if options.resume and cls.latest_checkpoint(output_dir) is not None:
            last_good = cls.latest_checkpoint(output_dir)
            cls.resume(last_good, state, reporter)
            # the stored epoch was completed
            state.epoch += 1
        start_epoch = state.epoch
        metrics_path = output_dir / "metrics.jsonl"
        _truncate_metrics(metrics_path, start_epoch)
        if start_epoch > options.max_epoch:
            logging.warning(
                f"The training has already reached at max_epoch: {start_epoch}"
            )

        summary_writer = (
            SummaryWriter(str(output_dir / "tensorboard"))
            if options.use_tensorboard
            else None
        )

        start_time = time.perf_counter()
        for iepoch in range(start_epoch, options.max_epoch + 1):
            if iepoch != start_epoch:
                logging.info(
                    "{}/{}epoch started. Estimated time to finish: {}".format(
                        iepoch,
                        options.max_epoch,
                        humanfriendly.format_timespan(
                            (time.perf_counter() - start_time)
                            / (iepoch - start_epoch)
                            * (options.max_epoch - iepoch + 1)
                        ),
                    )
                )
            else:
                logging.info(f"{iepoch}/{options.max_epoch}epoch started")
            set_all_random_seed(options.seed + iepoch)
            state.epoch = iepoch
            reporter.set_epoch(iepoch)

            # 1. Train and validation for one-epoch
            try:
                with reporter.observe("train") as sub_reporter:
                    cls.train_one_epoch(
                        state=state,
                        iterator=train_iter_factory.build_iter(iepoch),
                        reporter=sub_reporter,
                        metrics_path=metrics_path,
                        summary_writer=summary_writer,
                        options=options,
                    )
            except NonFiniteError as e:
                raise NonFiniteError(
                    f"{e}; last good checkpoint: {last_good or 'none'}"
                ) from e
            if valid_iter_factory is not None:
                with reporter.observe("valid") as sub_reporter:
                    cls.validate_one_epoch(
                        model=model,
                        iterator=valid_iter_factory.build_iter(iepoch, shuffle=False),
                        reporter=sub_reporter,
                        attack=eval_attack,
                        options=options,
                    )

            # 2. LR Scheduler step
            if isinstance(scheduler, AbsEpochStepScheduler):
                scheduler.step()

            # 3. Report the results
            logging.info(reporter.log_message())
            reporter.matplotlib_plot(output_dir / "images")
            if summary_writer is not None:
                reporter.tensorboard_add_scalar(summary_writer)

            # 4. Save the checkpoint and drop the previous one
            p = cls.save_checkpoint(
                output_dir / f"ckpt_epoch{iepoch}.bin", state, reporter
            )
            if last_good is not None and last_good != p and last_good.exists():
                last_good.unlink()
            last_good = p

            # 5. Keep a copy of the best model
            if reporter.has("valid", "robust_acc"):
                if reporter.get_best_epoch("valid", "robust_acc", "max") == iepoch:
                    shutil.copyfile(p, output_dir / "ckpt_best.bin")
                    best = reporter.get_value("valid", "robust_acc")
                    logging.info(f"The best model has been updated: {best:.4f}")
                else:
                    logging.info("There are no improvements in this epoch")
        else:
            logging.info(f"The training was finished at {options.max_epoch} epochs ")

        if summary_writer is not None:
            summary_writer.close()
        return reporter

    @classmethod
    def train_one_epoch(
        cls,
        state: TrainState,
        iterator: Iterable[Dict[str, torch.Tensor]],
        reporter: SubReporter,
        metrics_path: Path,
        summary_writer: Optional[SummaryWriter],
        options: TrainerOptions,
    ) -> None:
        log_interval = options.log_interval
        if log_interval is None:
            try:
                log_interval = max(len(iterator) // 20, 10)
            except TypeError:
                log_interval = 100
        device = "cuda" if options.ngpu > 0 else "cpu"

        with open(metrics_path, "a", encoding="utf-8") as fout:
            for iiter, batch in enumerate(
                reporter.measure_iter_time(iterator, "iter_time"), 1
            ):
                assert isinstance(batch, dict), type(batch)
                batch = to_device(batch, device)
                lr = state.optimizer.param_groups[0]["lr"]

                start = time.perf_counter()
                breakdown = train_step(state, batch)
                wall_ms = 1000.0 * (time.perf_counter() - start)

                values = breakdown.detached()
                reporter.register(values, batch["image"].size(0))
                reporter.register(dict(lr=lr, step_time=wall_ms / 1000.0))
                record = dict(step=state.step, epoch=state.epoch, lr=lr)
                record.update((k, values[k]) for k in METRIC_KEYS)
                record["wall_ms"] = wall_ms
                fout.write(json.dumps(record) + "\n")

                reporter.next()
                if iiter % log_interval == 0:
                    logging.info(reporter.log_message(-log_interval))
                    if summary_writer is not None:
                        reporter.tensorboard_add_scalar(summary_writer, -log_interval)

    @classmethod
    def validate_one_epoch(
        cls,
        model: AbsRobustModel,
        iterator: Iterable[Dict[str, torch.Tensor]],
        reporter: SubReporter,
        attack: AttackConfig,
        options: TrainerOptions,
    ) -> None:
        """Clean and PGD accuracy of the PRIMARY (inference) path."""
        classifier = model.classifier
        classifier.eval()
        device = "cuda" if options.ngpu > 0 else "cpu"
        generator = torch.Generator(device=device).manual_seed(options.seed)
        for batch in iterator:
            batch = to_device(batch, device)
            x, y = batch["image"], batch["label"]
            with torch.no_grad():
                clean = classifier.predict(x).argmax(1) == y
            x_adv = pgd_ce(classifier, x, y, attack, generator)
            with torch.no_grad():
                robust = classifier.predict(x_adv).argmax(1) == y
            reporter.register(
                dict(
                    clean_acc=clean.float().mean(),
                    robust_acc=robust.float().mean(),
                ),
                x.size(0),
            )
            reporter.next()


def _truncate_metrics(path: Path, start_epoch: int):
    """Drop records of epochs >= start_epoch left by an interrupted run."""
    if not path.exists():
        return
    with open(path, encoding="utf-8") as f:
        lines = [ln for ln in f if ln.strip()]
    kept = [ln for ln in lines if json.loads(ln)["epoch"] < start_epoch]
    if len(kept) != len(lines):
        logging.info(f"Dropping {len(lines) - len(kept)} records from {path}")
    with open(path, "w", encoding="utf-8") as f:
        f.writelines(kept)
