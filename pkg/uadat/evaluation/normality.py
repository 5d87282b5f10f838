"""Shapiro-Wilk check of the feature cloud spanned by many adversaries of one input."""

import dataclasses
import logging
from pathlib import Path
from typing import Dict
from typing import List
from typing import Optional
from typing import Union

import numpy as np
from scipy import stats
import torch
from typeguard import check_argument_types

from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.pgd import pgd_generate
from uadat.data.indexed_dataset import IndexedDataset
from uadat.fileio.report_writer import write_columns
from uadat.layers.dual_batch_norm import BranchTag
from uadat.nets.abs_split_classifier import AbsSplitClassifier
from uadat.statistics.feature_stats import feature_stats

MIN_ADVERSARIES = 20


@dataclasses.dataclass
class NormalityResult:
    """Per-channel p-values of one adversary cloud.

    Attributes:
        p_values: Shapiro-Wilk p-value of every tested channel.
        alpha: Significance level.
        num_degenerate: Constant channels, excluded from the test.
    """

    p_values: np.ndarray
    alpha: float
    num_degenerate: int = 0

    @property
    def num_tested(self) -> int:
        return len(self.p_values)

    @property
    def pass_fraction(self) -> float:
        if self.num_tested == 0:
            return float("nan")
        return float(np.mean(self.p_values > self.alpha))

    @property
    def mean_p(self) -> float:
        if self.num_tested == 0:
            return float("nan")
        return float(np.mean(self.p_values))

    @property
    def example_pass(self) -> bool:
        """Whole example counted as Gaussian: every channel passes at alpha / D."""
        if self.num_tested == 0:
            return False
        return bool(np.all(self.p_values > self.alpha / self.num_tested))


def shapiro_pass_fraction(
    samples: np.ndarray, alpha: float = 0.05, atol: float = 1e-12
) -> NormalityResult:
    """Run Shapiro-Wilk on every column of ``samples`` (N, D).

    Columns whose range does not exceed ``atol`` are counted as degenerate.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError(f"samples must be (N, D): {samples.shape}")
    if samples.shape[0] < 3:
        raise ValueError(f"Shapiro-Wilk needs at least 3 samples: {samples.shape[0]}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1): {alpha}")
    degenerate = np.ptp(samples, axis=0) <= atol
    p_values = np.array(
        [stats.shapiro(samples[:, d]).pvalue for d in np.flatnonzero(~degenerate)],
        dtype=np.float64,
    )
    return NormalityResult(p_values, alpha, int(degenerate.sum()))


@torch.no_grad()
def _channel_means(model, x_adv: torch.Tensor, branch: BranchTag) -> torch.Tensor:
    return feature_stats(model.forward_stem(x_adv, branch)).mu


def adversary_means(
    model: AbsSplitClassifier,
    x: torch.Tensor,
    num_adversaries: int = 500,
    attack: Optional[AttackConfig] = None,
    batch_size: int = 100,
    seed: int = 0,
    branch: BranchTag = BranchTag.AUXILIARY,
) -> torch.Tensor:
    """Channel-mean vectors (num_adversaries, D) of adversaries of one input.

    Every adversary starts from an independent uniform point of the
    epsilon-ball, so the cloud covers the ball instead of one basin.
    """
    assert check_argument_types()
    if x.dim() == 4:
        if x.size(0) != 1:
            raise ValueError(f"a single input is required: {tuple(x.shape)}")
        x = x[0]
    attack = dataclasses.replace(attack or AttackConfig(), random_init="uniform")
    generator = torch.Generator(device=x.device)
    generator.manual_seed(seed)

    means = []
    remaining = num_adversaries
    while remaining > 0:
        n = min(batch_size, remaining)
        xs = x.unsqueeze(0).expand(n, *x.shape).contiguous()
        record = pgd_generate(model, xs, attack, generator)
        means.append(_channel_means(model, record.final, branch).cpu())
        remaining -= n
    return torch.cat(means)


def normality_check(
    model: AbsSplitClassifier,
    x: torch.Tensor,
    num_adversaries: int = 500,
    alpha: float = 0.05,
    attack: Optional[AttackConfig] = None,
    batch_size: int = 100,
    seed: int = 0,
    branch: BranchTag = BranchTag.AUXILIARY,
) -> NormalityResult:
    """Test whether the adversarial feature means of ``x`` look Gaussian.

    Args:
        model: Trained split classifier; put in eval mode.
        x: One clean input, (C, H, W) or (1, C, H, W).
        num_adversaries: Size of the adversary cloud (>= 20).
        alpha: Per-channel significance level.
        attack: Threat model; the random start is always uniform.
        batch_size: Adversaries generated per PGD run.
        seed: Seed of the random starts.
        branch: Normalization branch of the feature extraction.
    """
    assert check_argument_types()
    if num_adversaries < MIN_ADVERSARIES:
        raise ValueError(
            f"num_adversaries must be >= {MIN_ADVERSARIES}: {num_adversaries}"
        )
    model.eval()
    means = adversary_means(
        model, x, num_adversaries, attack, batch_size, seed, branch
    )
    result = shapiro_pass_fraction(means.double().numpy(), alpha)
    if result.num_degenerate > 0:
        logging.warning(
            f"{result.num_degenerate} constant channels excluded from the test"
        )
    return result


def normality_survey(
    model: AbsSplitClassifier,
    dataset: IndexedDataset,
    num_images: int = 20,
    num_adversaries: int = 500,
    alpha: float = 0.05,
    attack: Optional[AttackConfig] = None,
    batch_size: int = 100,
    seed: int = 0,
    output: Optional[Union[str, Path]] = None,
) -> List[NormalityResult]:
    """:func:`normality_check` on the first ``num_images`` samples of ``dataset``.

    Both counts are logged: the fraction of channels passing at ``alpha`` and
    the fraction of examples whose channels all pass after Bonferroni
    correction.
    """
    assert check_argument_types()
    device = next(model.parameters()).device
    num_images = min(num_images, len(dataset))
    results = []
    for i in range(num_images):
        x = dataset[i]["image"].to(device)
        results.append(
            normality_check(
                model, x, num_adversaries, alpha, attack, batch_size, seed + i
            )
        )

    columns: Dict[str, List] = dict(
        index=[int(dataset[i]["index"]) for i in range(num_images)],
        pass_fraction=[r.pass_fraction for r in results],
        mean_p=[r.mean_p for r in results],
        example_pass=[int(r.example_pass) for r in results],
        num_degenerate=[r.num_degenerate for r in results],
    )
    if results:
        p_all = np.concatenate([r.p_values for r in results])
        logging.info(
            f"normality over {num_images} inputs: "
            f"channels passing={np.mean(p_all > alpha):.3f}, "
            f"examples passing={np.mean(columns['example_pass']):.3f}, "
            f"mean p={np.mean(p_all):.4f}"
        )
    if output is not None:
        write_columns(output, columns)
    return results
