"""Uncertainty-aware distributional adversarial training objective."""

from dataclasses import dataclass
import logging
from typing import Any
from typing import Dict
from typing import Optional
from typing import Tuple

import torch
from typeguard import check_argument_types

from uadat.attacks.attack_config import AttackConfig
from uadat.attacks.benign import benign_refine
from uadat.attacks.pgd import pgd_generate
from uadat.attacks.pgd import single_step_generate
from uadat.layers.aum import AUM_MODES
from uadat.layers.aum import AumNoise
from uadat.layers.aum import aum_augment
from uadat.layers.dual_batch_norm import BranchTag
from uadat.layers.dual_batch_norm import frozen_batch_stats
from uadat.losses.d2d import d2d_pa_loss
from uadat.losses.d2d import gaussian_kl
from uadat.losses.igm import igm_loss
from uadat.losses.total import LossWeights
from uadat.losses.total import total_loss
from uadat.nets.abs_split_classifier import AbsSplitClassifier
from uadat.statistics.feature_stats import FeatureStats
from uadat.statistics.feature_stats import StatUncertainty
from uadat.statistics.feature_stats import feature_stats
from uadat.statistics.feature_stats import masked_uncertainty
from uadat.statistics.history_store import HistoryStore
from uadat.statistics.history_store import HistoryTrack
from uadat.train.abs_robust_model import AbsRobustModel
from uadat.utils.build_dataclass import dataclass_from_conf
from uadat.utils.errors import ConfigError


@dataclass
class UncertaintyConfig:
    """How adversarial feature statistics are modeled.

    Attributes:
        kappa_I: Intermediate adversaries kept per epoch (the last ones).
        kappa_H: Epochs of history pooled into the uncertainty.
        aum_mode: "uncertainty", "deterministic" (zero uncertainty),
            "random" (constant ``random_scale`` instead of the estimate)
            or "none" (no augmentation).
        random_scale: Std used by the "random" mode.
        eps_div: Guard of the AUM division.
    """

    kappa_I: int = 5
    kappa_H: int = 3
    aum_mode: str = "uncertainty"
    random_scale: float = 0.1
    eps_div: float = 1e-6

    def __post_init__(self):
        if self.kappa_I < 1:
            raise ConfigError("kappa_I", f"must be >= 1: {self.kappa_I}")
        if self.kappa_H < 1:
            raise ConfigError("kappa_H", f"must be >= 1: {self.kappa_H}")
        if self.aum_mode not in AUM_MODES:
            raise ConfigError("aum_mode", f"must be one of {AUM_MODES}")
        if self.random_scale < 0:
            raise ConfigError("random_scale", f"must be >= 0: {self.random_scale}")
        if self.eps_div <= 0:
            raise ConfigError("eps_div", f"must be > 0: {self.eps_div}")


class UADATModel(AbsRobustModel):
    """Adversaries and refined references as feature-level Gaussians.

    One call of :meth:`forward` runs the whole per-batch objective:
    adversary generation (with intermediates), benign refinement, feature
    statistics at ``aum_depth``, uncertainty from the history, AUM on both
    features, prediction and statistics alignment, gradient matching and
    their weighted sum. The statistics to record are returned alongside and
    written to the history by :meth:`end_of_step`.

    With ``use_aum=False``, ``use_refine=False`` and lambda1 = lambda2 = 0
    the objective is TRADES.

    Args:
        classifier: Split classifier with dual normalization.
        num_samples: Number of training samples (stable ids 0 .. N-1).
        attack_conf: AttackConfig fields.
        weights_conf: LossWeights fields.
        uncertainty_conf: UncertaintyConfig fields.
        use_refine: Use the benignly refined sample as reference (else x).
        use_aum: Augment features (else aum_mode is treated as "none").
    """

    def __init__(
        self,
        classifier: AbsSplitClassifier,
        num_samples: int,
        attack_conf: Optional[Dict[str, Any]] = None,
        weights_conf: Optional[Dict[str, Any]] = None,
        uncertainty_conf: Optional[Dict[str, Any]] = None,
        use_refine: bool = True,
        use_aum: bool = True,
    ):
        assert check_argument_types()
        super().__init__()
        self.classifier = classifier
        self.attack = dataclass_from_conf(AttackConfig, attack_conf or {}, "attack")
        self.weights = dataclass_from_conf(LossWeights, weights_conf or {}, "weights")
        self.uncertainty = dataclass_from_conf(
            UncertaintyConfig, uncertainty_conf or {}, "uncertainty"
        )
        self.use_refine = use_refine
        self.aum_mode = self.uncertainty.aum_mode if use_aum else "none"

        steps = self.attack.steps
        if steps > 1 and self.uncertainty.kappa_I > steps - 1:
            raise ConfigError(
                "uncertainty.kappa_I",
                f"{self.uncertainty.kappa_I} exceeds the {steps - 1} intermediate "
                f"adversaries of a {steps}-step attack",
            )
        # single-step: the final adversary is the only per-epoch entry
        self.kappa_I = self.uncertainty.kappa_I if steps > 1 else 1
        self.history = HistoryStore(
            num_samples, classifier.feature_dim, self.kappa_I, self.uncertainty.kappa_H
        )
        logging.info(
            f"UADATModel: aum_mode={self.aum_mode}, refine={use_refine}, "
            f"kappa_I={self.kappa_I}, kappa_H={self.uncertainty.kappa_H}, "
            f"weights={self.weights}"
        )

    def get_extra_state(self) -> Dict[str, Any]:
        return self.history.state_dict()

    def set_extra_state(self, state: Dict[str, Any]):
        self.history.load_state_dict(state)

    def _uncertainty(
        self, index: torch.Tensor, epoch: int, track: HistoryTrack, like: torch.Tensor
    ) -> StatUncertainty:
        B, D = like.shape
        kwargs = dict(dtype=like.dtype, device=like.device)
        if self.aum_mode == "deterministic":
            return StatUncertainty.zeros(B, D, **kwargs)
        if self.aum_mode == "random":
            scale = self.uncertainty.random_scale
            return StatUncertainty.constant(scale, B, D, **kwargs)
        mu, sigma, mask = self.history.query_batch(index, epoch, track)
        unc = masked_uncertainty(mu, sigma, mask)
        return StatUncertainty(
            std_mu=unc.std_mu.to(like.device, like.dtype),
            std_sigma=unc.std_sigma.to(like.device, like.dtype),
        )

    def _augment(
        self,
        f: torch.Tensor,
        stats: FeatureStats,
        index: torch.Tensor,
        epoch: int,
        track: HistoryTrack,
    ) -> torch.Tensor:
        if self.aum_mode == "none":
            return f
        unc = self._uncertainty(index, epoch, track, stats.mu)
        noise = AumNoise.sample(*stats.mu.shape, dtype=f.dtype, device=f.device)
        return aum_augment(f, stats, unc, noise, self.uncertainty.eps_div)

    @torch.no_grad()
    def _history_payload(self, record, stats_ben: FeatureStats) -> Dict[str, Tuple]:
        if self.attack.steps == 1:
            kept = [record.final]
        else:
            kept = record.intermediates[-self.kappa_I :]
        with frozen_batch_stats(self.classifier):
            adv = [
                feature_stats(self.classifier.forward_stem(x, BranchTag.AUXILIARY))
                for x in kept
            ]
        return dict(
            adv=(
                torch.stack([s.mu for s in adv], dim=1),
                torch.stack([s.sigma for s in adv], dim=1),
            ),
            benign=(
                stats_ben.mu.detach().unsqueeze(1),
                stats_ben.sigma.detach().unsqueeze(1),
            ),
        )

    def forward(
        self,
        image: torch.Tensor,
        label: torch.Tensor,
        index: torch.Tensor,
        epoch: int,
    ) -> Dict[str, Any]:
        x, y = image, label
        model = self.classifier

        # 1. adversary (AUXILIARY) and benign reference (PRIMARY), both detached
        if self.attack.steps == 1:
            record = single_step_generate(model, x, self.attack)
        else:
            record = pgd_generate(model, x, self.attack)
        x_adv = record.final
        x_ben = benign_refine(model, x, y, self.attack) if self.use_refine else x

        # 2. clean, refined, adversarial forwards in this fixed order
        logits_clean = model(x, BranchTag.PRIMARY)
        f_ben = model.forward_stem(x_ben, BranchTag.PRIMARY)
        f_adv = model.forward_stem(x_adv, BranchTag.AUXILIARY)
        stats_ben = feature_stats(f_ben)
        stats_adv = feature_stats(f_adv)

        # 3. uncertainty from epochs < current, then AUM
        f_ben_aug = self._augment(f_ben, stats_ben, index, epoch, HistoryTrack.BENIGN)
        f_adv_aug = self._augment(f_adv, stats_adv, index, epoch, HistoryTrack.ADV)

        # 4. losses
        _, parts = d2d_pa_loss(
            model, x, y, f_adv_aug, f_ben_aug, self.weights, logits_clean=logits_clean
        )
        zero = logits_clean.new_zeros(())
        d2d_sa, igm = zero, zero
        if self.weights.lambda1 > 0:
            d2d_sa = gaussian_kl(stats_ben, stats_adv).mean()
        if self.weights.lambda2 > 0:
            igm = igm_loss(model, x_ben, x_adv, y)
        breakdown = total_loss(
            parts["ce_clean"], parts["kl_pred"], d2d_sa, igm, self.weights
        )

        history = self._history_payload(record, stats_ben)
        history.update(index=index.detach(), epoch=epoch)
        return dict(
            loss=breakdown.total,
            stats=breakdown.detached(),
            weight=torch.tensor(x.size(0)),
            breakdown=breakdown,
            history=history,
        )

    def end_of_step(self, retval: Dict[str, Any]) -> None:
        h = retval["history"]
        self.history.push_batch(h["index"], h["epoch"], HistoryTrack.ADV, *h["adv"])
        self.history.push_batch(
            h["index"], h["epoch"], HistoryTrack.BENIGN, *h["benign"]
        )
