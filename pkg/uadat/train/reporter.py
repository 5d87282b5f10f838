"""Per-step and per-epoch statistics of training and validation."""

from collections import defaultdict
from contextlib import contextmanager
import datetime
import logging
from pathlib import Path
import time
from typing import Dict
from typing import Iterable
from typing import Iterator
from typing import List
from typing import Optional
from typing import Tuple
from typing import Union
import warnings

import humanfriendly
import numpy as np
import torch
from torch.utils.tensorboard import SummaryWriter
from typeguard import check_argument_types

Num = Union[float, int, torch.Tensor, np.ndarray]

_reserved = {"time", "total_count"}


def _as_float(v: Optional[Num], what: str) -> float:
    if v is None:
        return float("nan")
    if isinstance(v, (torch.Tensor, np.ndarray)):
        if np.prod(v.shape) != 1:
            raise ValueError(f"{what} must be a scalar: shape={tuple(v.shape)}")
        v = v.item()
    return float(v)


def aggregate(values: np.ndarray, weights: Optional[np.ndarray]) -> float:
    """Mean of ``values``, weighted when ``weights`` is given.

    Non-finite entries (nan fillers of steps that skipped a key) are ignored.
    """
    ok = np.isfinite(values)
    if not ok.any():
        warnings.warn("No valid stats found")
        return float("nan")
    if weights is None:
        return float(values[ok].mean())
    w = weights[ok]
    if w.sum() == 0:
        warnings.warn("weight is zero")
        return float("nan")
    return float(np.dot(w, values[ok]) / w.sum())


def _format(key: str, v) -> str:
    if isinstance(v, datetime.timedelta):
        return f"{key}={humanfriendly.format_timespan(v)}"
    if not isinstance(v, float):
        return f"{key}={v}"
    if abs(v) > 1.0e3 or abs(v) < 1.0e-3:
        return f"{key}={v:.3e}"
    return f"{key}={v:.3f}"


class SubReporter:
    """Values of one phase ("train" or "valid") in one epoch, one row per step.

    Every key keeps a list aligned with the step index; a step that skips a
    key gets nan there. The weight of a key is fixed by its first report.
    """

    def __init__(self, key: str, epoch: int, total_count: int):
        assert check_argument_types()
        self.key = key
        self.epoch = epoch
        self.start_time = time.perf_counter()
        self.total_count = total_count
        self.count = 0
        self._values: Dict[str, List[float]] = defaultdict(list)
        self._weights: Dict[str, Optional[List[float]]] = {}
        self._step_keys = set()
        self._finished = False

    def register(self, stats: Dict[str, Optional[Num]], weight: Num = None) -> None:
        assert check_argument_types()
        if self._finished:
            raise RuntimeError("Already finished")
        if not self._step_keys:
            self.total_count += 1
            self.count += 1
        w = None if weight is None else _as_float(weight, "weight")

        for key2, v in stats.items():
            if key2 in _reserved:
                raise RuntimeError(f"{key2} is reserved.")
            if key2 in self._step_keys:
                raise RuntimeError(f"{key2} is registered twice.")
            values = self._values[key2]
            weights = self._weights.setdefault(key2, None if w is None else [])
            missing = self.count - 1 - len(values)
            values.extend([np.nan] * missing + [_as_float(v, key2)])
            if weights is not None:
                weights.extend([0.0] * missing + [0.0 if w is None else w])
            self._step_keys.add(key2)

    def next(self):
        """Close the current step."""
        for key2, values in self._values.items():
            if key2 not in self._step_keys:
                values.append(np.nan)
                if self._weights[key2] is not None:
                    self._weights[key2].append(0.0)
        self._step_keys = set()

    def aggregated(self, start: int = None) -> Dict[str, float]:
        start = 0 if start is None else start
        if start < 0:
            start = max(self.count + start, 0)
        retval = {}
        for key2, values in self._values.items():
            weights = self._weights[key2]
            retval[key2] = aggregate(
                np.asarray(values[start:], dtype=float),
                None if weights is None else np.asarray(weights[start:], dtype=float),
            )
        return retval

    def log_message(self, start: int = None) -> str:
        if self._finished:
            raise RuntimeError("Already finished")
        start = 0 if start is None else start
        if start < 0:
            start = max(self.count + start, 0)
        if self.count == 0 or start == self.count:
            return ""
        body = ", ".join(_format(k, v) for k, v in self.aggregated(start).items())
        return f"{self.epoch}epoch:{self.key}:{start + 1}-{self.count}batch: {body}"

    def tensorboard_add_scalar(self, summary_writer: SummaryWriter, start: int = None):
        for key2, v in self.aggregated(start).items():
            summary_writer.add_scalar(f"{self.key}/{key2}", v, self.total_count)

    def measure_iter_time(self, iterable: Iterable, name: str) -> Iterator:
        """Yield from ``iterable``, registering the wait for every item."""
        iterator = iter(iterable)
        while True:
            start = time.perf_counter()
            try:
                retval = next(iterator)
            except StopIteration:
                break
            self.register({name: time.perf_counter() - start})
            yield retval


class Reporter:
    """Epoch-level summary of every phase, with best-epoch queries.

    Examples:

        >>> reporter = Reporter()
        >>> with reporter.observe('train') as sub_reporter:
        ...     for batch in iterator:
        ...         sub_reporter.register(dict(total=0.2))
        ...         sub_reporter.next()

    """

    def __init__(self, epoch: int = 0):
        assert check_argument_types()
        if epoch < 0:
            raise ValueError(f"epoch must be 0 or more: {epoch}")
        self.epoch = epoch
        # e.g. self.stats[epoch]['valid']['robust_acc']
        self.stats: Dict[int, Dict[str, Dict[str, object]]] = {}

    def set_epoch(self, epoch: int) -> None:
        if epoch < 0:
            raise ValueError(f"epoch must be 0 or more: {epoch}")
        self.epoch = epoch

    @contextmanager
    def observe(self, key: str) -> Iterator[SubReporter]:
        previous = self.stats.get(self.epoch - 1, {}).get(key)
        total_count = 0 if previous is None else previous["total_count"]
        sub_reporter = SubReporter(key, self.epoch, total_count)
        yield sub_reporter

        stats: Dict[str, object] = dict(sub_reporter.aggregated())
        stats["time"] = datetime.timedelta(
            seconds=time.perf_counter() - sub_reporter.start_time
        )
        stats["total_count"] = sub_reporter.total_count
        self.stats.setdefault(self.epoch, {})[key] = stats
        sub_reporter._finished = True

    def has(self, key: str, key2: str, epoch: int = None) -> bool:
        epoch = self.epoch if epoch is None else epoch
        return key2 in self.stats.get(epoch, {}).get(key, {})

    def get_value(self, key: str, key2: str, epoch: int = None) -> float:
        epoch = self.epoch if epoch is None else epoch
        if not self.has(key, key2, epoch):
            raise KeyError(f"{key}.{key2} is not found in epoch {epoch}")
        return self.stats[epoch][key][key2]

    def get_best_epoch(self, key: str, key2: str, mode: str) -> int:
        """Best epoch of ``key.key2``; ties keep the earlier epoch."""
        if mode not in ("min", "max"):
            raise ValueError(f"mode must min or max: {mode}")
        values: List[Tuple[int, float]] = [
            (e, d[key][key2]) for e, d in self.stats.items() if key2 in d.get(key, {})
        ]
        if not values:
            raise KeyError(f"{key}.{key2} is not found")
        sign = 1 if mode == "min" else -1
        return min(values, key=lambda x: (sign * x[1], x[0]))[0]

    def log_message(self, epoch: int = None) -> str:
        epoch = self.epoch if epoch is None else epoch
        message = f"{epoch}epoch results: "
        for key, d in self.stats.get(epoch, {}).items():
            message += f"\n[{key}] " + ", ".join(_format(k, v) for k, v in d.items())
        return message

    def _metrics(self, epoch: int) -> Dict[str, Dict[str, float]]:
        return {
            key: {k: v for k, v in d.items() if k not in _reserved}
            for key, d in self.stats.get(epoch, {}).items()
        }

    def matplotlib_plot(self, output_dir: Union[str, Path]):
        """Plot every metric against the epoch, one image per metric."""
        import matplotlib

        matplotlib.use("agg")
        import matplotlib.pyplot as plt
        import matplotlib.ticker as ticker

        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        current = self._metrics(self.epoch)
        keys2 = sorted(set().union(*current.values()))
        epochs = np.array(sorted(self.stats))
        for key2 in keys2:
            fig, ax = plt.subplots()
            for key in current:
                y = [self.stats[e].get(key, {}).get(key2, np.nan) for e in epochs]
                ax.plot(epochs, y, label=key, marker="x")
            ax.legend()
            ax.set_title(f"epoch vs {key2}")
            ax.xaxis.set_major_locator(ticker.MaxNLocator(integer=True))
            ax.set_xlabel("epoch")
            ax.set_ylabel(key2)
            ax.grid()
            fig.savefig(output_dir / f"{key2}.png")
            plt.close(fig)

    def tensorboard_add_scalar(self, summary_writer: SummaryWriter, epoch: int = None):
        epoch = self.epoch if epoch is None else epoch
        for key1, d in self._metrics(epoch).items():
            for key2, v in d.items():
                summary_writer.add_scalar(f"{key1}_{key2}_epoch", v, epoch)
        logging.debug(f"tensorboard scalars written for epoch {epoch}")

    def state_dict(self):
        return {"stats": self.stats, "epoch": self.epoch}

    def load_state_dict(self, state_dict: dict):
        self.epoch = state_dict["epoch"]
        self.stats = state_dict["stats"]
