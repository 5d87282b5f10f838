"""Clean and PGD robust accuracy with binomial confidence intervals."""

from dataclasses import asdict
from dataclasses import dataclass
from dataclasses import field
import logging
from typing import Dict
from typing import List
from typing import Tuple

import numpy as np
from scipy.stats import binomtest
import torch
from torch.utils.data import DataLoader
from typeguard import check_argument_types

from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.pgd import pgd_ce
from uadat.data.indexed_dataset import IndexedDataset
from uadat.fileio.report_writer import ReportWriter
from uadat.layers.dual_batch_norm import BranchTag


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> Tuple[float, float]:
    if n == 0:
        return float("nan"), float("nan")
    ci = binomtest(k, n).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)


@dataclass
class AccuracyEstimate:
    correct: int
    total: int
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, correct: int, total: int) -> "AccuracyEstimate":
        return cls(correct, total, *wilson_interval(correct, total))

    @property
    def value(self) -> float:
        return self.correct / self.total if self.total else float("nan")


@dataclass
class RobustReport:
    """Exact counts over the evaluated split.

    ``per_class`` maps a class to (clean correct, robust correct, total).
    """

    attack: AttackConfig
    clean: AccuracyEstimate
    robust: AccuracyEstimate
    per_class: Dict[int, Tuple[int, int, int]] = field(default_factory=dict)

    @property
    def clean_acc(self) -> float:
        return self.clean.value

    @property
    def robust_acc(self) -> float:
        return self.robust.value

    def to_records(self) -> List[Tuple]:
        """(name, value, ci_low, ci_high) rows; settings rows carry only a value."""
        records = [
            (f"attack.{k}", v)
            for k, v in asdict(self.attack).items()
            if k in ("epsilon", "step_size", "steps", "restarts", "random_init")
        ]
        records.append(("num_samples", self.clean.total))
        for name, est in (("clean_acc", self.clean), ("robust_acc", self.robust)):
            records.append((name, est.value, est.ci_low, est.ci_high))
        for c, (n_clean, n_robust, n) in sorted(self.per_class.items()):
            n = max(n, 1)
            records.append((f"class{c}.clean_acc", n_clean / n))
            records.append((f"class{c}.robust_acc", n_robust / n))
        return records

    def write(self, writer: ReportWriter, name: str = "robust.txt"):
        sub = writer[name]
        for key, *values in self.to_records():
            sub[key] = values if len(values) > 1 else values[0]


def _device_of(model: torch.nn.Module) -> torch.device:
    p = next(model.parameters(), None)
    return torch.device("cpu") if p is None else p.device


def evaluate(
    model: torch.nn.Module,
    dataset: IndexedDataset,
    attack: AttackConfig,
    batch_size: int = 256,
    seed: int = 0,
) -> RobustReport:
    """Clean accuracy and worst-case-over-restarts PGD accuracy.

    The attack maximizes the cross-entropy of the true label on the PRIMARY
    branch in eval mode. Restart r draws its random start from a generator
    seeded with ``seed + r``, so the first k restarts of a run are the same
    whatever the total number of restarts.

    Args:
        model: Callable as ``model(x, branch)`` returning logits.
        dataset: Split to evaluate, in order.
        attack: Threat model; ``attack.restarts`` independent runs.
        batch_size: Evaluation batch size.
        seed: Base seed of the restarts.
    """
    assert check_argument_types()
    model.eval()
    device = _device_of(model)
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    N = len(dataset)
    labels = dataset.labels.numpy()

    clean = np.zeros(N, dtype=bool)
    with torch.no_grad():
        offset = 0
        for batch in loader:
            x, y = batch["image"].to(device), batch["label"].to(device)
            pred = model(x, BranchTag.PRIMARY).argmax(1)
            clean[offset : offset + len(y)] = (pred == y).cpu().numpy()
            offset += len(y)

    robust = np.ones(N, dtype=bool)
    for r in range(attack.restarts):
        generator = torch.Generator(device=device).manual_seed(seed + r)
        offset = 0
        for batch in loader:
            x, y = batch["image"].to(device), batch["label"].to(device)
            x_adv = pgd_ce(model, x, y, attack, generator)
            with torch.no_grad():
                pred = model(x_adv, BranchTag.PRIMARY).argmax(1)
            robust[offset : offset + len(y)] &= (pred == y).cpu().numpy()
            offset += len(y)
        logging.info(
            f"restart {r + 1}/{attack.restarts}: robust_acc={robust.mean():.4f}"
        )

    C = dataset.num_classes
    per_class = {
        c: (
            int(clean[labels == c].sum()),
            int(robust[labels == c].sum()),
            int((labels == c).sum()),
        )
        for c in range(C)
    }
    return RobustReport(
        attack=attack,
        clean=AccuracyEstimate.from_counts(int(clean.sum()), N),
        robust=AccuracyEstimate.from_counts(int(robust.sum()), N),
        per_class=per_class,
    )
