"""Growth of feature variance and input-gradient norm with the perturbation radius.

Positive radii push samples along the cross-entropy ascent direction (PGD),
negative radii along the descent direction (benign refinement), radius 0 is
the clean input.
"""

from dataclasses import dataclass
from dataclasses import field
import logging
from pathlib import Path
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Union

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader
from typeguard import check_argument_types

from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.benign import benign_refine
from uadat.attacks.pgd import pgd_ce
from uadat.data.indexed_dataset import IndexedDataset
from uadat.fileio.report_writer import write_columns
from uadat.layers.dual_batch_norm import BranchTag
from uadat.losses.igm import input_gradient
from uadat.nets.abs_split_classifier import AbsSplitClassifier
from uadat.statistics.feature_stats import feature_stats


@dataclass
class DisruptionCurve:
    """Per-radius means over the evaluated samples.

    ``groups`` optionally holds the same curves for the "high_loss" and
    "low_loss" halves of the samples ranked by their clean cross-entropy.
    """

    radii: List[float]
    variance: List[float]
    grad_norm: List[float]
    baseline_variance: float
    baseline_grad_norm: float
    groups: Dict[str, "DisruptionCurve"] = field(default_factory=dict)

    @property
    def variance_increment(self) -> List[float]:
        return [v - self.baseline_variance for v in self.variance]

    @property
    def grad_norm_increment(self) -> List[float]:
        return [g - self.baseline_grad_norm for g in self.grad_norm]

    def to_columns(self) -> Dict[str, List[float]]:
        columns = dict(
            radius=self.radii,
            variance_increment=self.variance_increment,
            grad_norm=self.grad_norm,
            variance=self.variance,
            grad_norm_increment=self.grad_norm_increment,
        )
        for name, group in self.groups.items():
            columns[f"{name}.variance_increment"] = group.variance_increment
            columns[f"{name}.grad_norm"] = group.grad_norm
        return columns

    def write(self, path: Union[str, Path]) -> Path:
        return write_columns(path, self.to_columns())


def perturb(
    model: AbsSplitClassifier, x: torch.Tensor, y: torch.Tensor, radius: float
) -> torch.Tensor:
    """Move ``x`` by ``radius`` in L-inf: ascent for > 0, descent for < 0."""
    if radius > 0:
        cfg = AttackConfig(
            epsilon=radius, step_size=radius / 4, steps=10, random_init="none"
        )
        return pgd_ce(model, x, y, cfg)
    if radius < 0:
        r = -radius
        cfg = AttackConfig(epsilon=r, refine_step=r, refine_steps=1)
        return benign_refine(model, x, y, cfg)
    return x


def _measure(model: AbsSplitClassifier, x: torch.Tensor, y: torch.Tensor):
    """Per-sample mean channel variance at the cut point and ||grad_x CE||_2."""
    with torch.no_grad():
        sigma = feature_stats(model.forward_stem(x, BranchTag.PRIMARY)).sigma
    grad = input_gradient(model, x, y, BranchTag.PRIMARY, create_graph=False)
    return sigma.pow(2).mean(1), torch.linalg.vector_norm(grad.flatten(1), dim=1)


def _curve(radii, variance, grad, rows) -> DisruptionCurve:
    # position 0 holds the clean measurements
    return DisruptionCurve(
        radii=list(radii[1:]),
        variance=[float(v[rows].mean()) for v in variance[1:]],
        grad_norm=[float(g[rows].mean()) for g in grad[1:]],
        baseline_variance=float(variance[0][rows].mean()),
        baseline_grad_norm=float(grad[0][rows].mean()),
    )


def disruption_curve(
    model: AbsSplitClassifier,
    dataset: IndexedDataset,
    radii: Sequence[float],
    batch_size: int = 256,
    split_by_loss: bool = False,
    output: Optional[Union[str, Path]] = None,
) -> DisruptionCurve:
    """Mean feature variance and gradient norm of perturbed samples per radius.

    Args:
        model: Trained split classifier, evaluated in eval mode.
        dataset: Samples to perturb.
        radii: Signed L-inf radii in pixel units.
        batch_size: Batch size of the perturbation runs.
        split_by_loss: Also report the high- and low-loss halves.
        output: Optional path of the CSV to write.
    """
    assert check_argument_types()
    model.eval()
    device = next(model.parameters()).device
    all_radii = [0.0] + [float(r) for r in radii]
    variance = [[] for _ in all_radii]
    grad = [[] for _ in all_radii]
    losses = []
    for batch in DataLoader(dataset, batch_size=batch_size, shuffle=False):
        x, y = batch["image"].to(device), batch["label"].to(device)
        with torch.no_grad():
            losses.append(F.cross_entropy(model.predict(x), y, reduction="none").cpu())
        for i, r in enumerate(all_radii):
            v, g = _measure(model, perturb(model, x, y, r), y)
            variance[i].append(v.cpu())
            grad[i].append(g.cpu())

    variance = [torch.cat(v).numpy() for v in variance]
    grad = [torch.cat(g).numpy() for g in grad]
    curve = _curve(all_radii, variance, grad, np.arange(len(dataset)))

    if split_by_loss:
        order = np.argsort(-torch.cat(losses).numpy(), kind="stable")
        half = len(order) // 2
        for name, rows in (("high_loss", order[:half]), ("low_loss", order[half:])):
            curve.groups[name] = _curve(all_radii, variance, grad, rows)

    for r, dv, dg in zip(curve.radii, curve.variance_increment, curve.grad_norm):
        logging.info(
            f"radius={r * 255:+.1f}/255: variance +{dv:.4g}, grad_norm {dg:.4g}"
        )
    if output is not None:
        curve.write(output)
    return curve
