"""Per-sample ring buffer of feature statistics from recent epochs."""

import enum
import logging
from typing import Dict
from typing import List
from typing import Sequence
from typing import Tuple

import humanfriendly
import torch
from typeguard import check_argument_types

FORMAT_VERSION = 1

StatsList = List[Tuple[torch.Tensor, torch.Tensor]]


class HistoryTrack(enum.Enum):
    ADV = "adv"
    BENIGN = "benign"


class HistoryStore:
    """(mu, sigma) summaries of each training sample over the last ``kappa_H`` epochs.

    Every epoch owns the slot ``epoch % kappa_H``, so writing epoch t evicts
    epoch t - kappa_H (the oldest). The adversarial track keeps ``kappa_I``
    entries per epoch, the benign track one. Only 2 * D floats are stored
    per entry; no images and no covariance matrices.

    Args:
        num_samples: Upper bound (exclusive) of the stable sample ids.
        feature_dim: Channel count D at the augmentation depth.
        kappa_I: Retained intermediate adversaries per epoch.
        kappa_H: Retained epochs.
    """

    def __init__(self, num_samples: int, feature_dim: int, kappa_I: int, kappa_H: int):
        assert check_argument_types()
        if num_samples < 1 or feature_dim < 1:
            raise ValueError(f"empty store: num_samples={num_samples}, D={feature_dim}")
        if kappa_I < 1 or kappa_H < 1:
            raise ValueError(f"kappa_I and kappa_H must be >= 1: {kappa_I}, {kappa_H}")
        self.num_samples = num_samples
        self.feature_dim = feature_dim
        self.kappa_I = kappa_I
        self.kappa_H = kappa_H

        self._data = {
            track: torch.zeros(
                num_samples, kappa_H, self.entries_per_epoch(track), 2, feature_dim
            )
            for track in HistoryTrack
        }
        # -1 marks an empty slot
        self._epochs = {
            track: torch.full((num_samples, kappa_H), -1, dtype=torch.long)
            for track in HistoryTrack
        }
        logging.info(
            f"HistoryStore: {num_samples} samples, "
            f"{self.floats_per_sample()} floats per sample "
            f"({humanfriendly.format_size(self.nbytes())})"
        )

    def entries_per_epoch(self, track: HistoryTrack) -> int:
        return self.kappa_I if track is HistoryTrack.ADV else 1

    def floats_per_sample(self) -> int:
        return self.kappa_H * (self.kappa_I + 1) * 2 * self.feature_dim

    def nbytes(self) -> int:
        return sum(t.numel() * t.element_size() for t in self._data.values())

    def push(
        self,
        sample_id: int,
        epoch: int,
        track: HistoryTrack,
        stats: Sequence[Tuple[torch.Tensor, torch.Tensor]],
    ) -> None:
        """Record the (mu, sigma) list of one sample for ``epoch``."""
        if len(stats) == 0:
            raise ValueError("push needs at least one (mu, sigma) pair")
        mu = torch.stack([m for m, _ in stats]).unsqueeze(0)
        sigma = torch.stack([s for _, s in stats]).unsqueeze(0)
        self.push_batch(torch.tensor([sample_id]), epoch, track, mu, sigma)

    def push_batch(
        self,
        sample_ids: torch.Tensor,
        epoch: int,
        track: HistoryTrack,
        mu: torch.Tensor,
        sigma: torch.Tensor,
    ) -> None:
        """Record (B, K, D) statistics of a batch of samples for ``epoch``.

        Raises:
            RuntimeError: (sample, epoch, track) was already recorded, or an
                equal-or-newer epoch already occupies the slot. Both mean the
                training loop visited a sample twice.
        """
        K = self.entries_per_epoch(track)
        ids = sample_ids.detach().to("cpu", torch.long).reshape(-1)
        B = ids.numel()
        if epoch < 0:
            raise ValueError(f"epoch must be >= 0: {epoch}")
        if mu.shape != (B, K, self.feature_dim) or sigma.shape != mu.shape:
            raise ValueError(
                f"{track.value} track expects ({B}, {K}, {self.feature_dim}) "
                f"statistics, got mu={tuple(mu.shape)} sigma={tuple(sigma.shape)}"
            )
        if B == 0:
            return
        if int(ids.min()) < 0 or int(ids.max()) >= self.num_samples:
            raise ValueError(f"sample ids out of range [0, {self.num_samples})")
        if torch.unique(ids).numel() != B:
            raise RuntimeError(f"duplicate sample ids in one {track.value} push")

        slot = epoch % self.kappa_H
        stored = self._epochs[track][ids, slot]
        clash = stored >= epoch
        if bool(clash.any()):
            bad = ids[clash][:5].tolist()
            raise RuntimeError(
                f"{track.value} history for samples {bad} already holds epoch "
                f"{int(stored[clash].max())} when pushing epoch {epoch}"
            )

        packed = torch.stack([mu, sigma], dim=2).detach().to("cpu", torch.float32)
        self._data[track][ids, slot] = packed
        self._epochs[track][ids, slot] = epoch

    def _window(self, epochs: torch.Tensor, t: int) -> torch.Tensor:
        return (epochs >= 0) & (epochs >= t - self.kappa_H) & (epochs <= t - 1)

    def query(self, sample_id: int, t: int) -> Tuple[StatsList, StatsList]:
        """(mu, sigma) pairs of ``sample_id`` from epochs t - kappa_H .. t - 1.

        Returns:
            (adv_samples, benign_samples), each ordered by epoch. A sample that
            was never pushed, or an id outside [0, num_samples), gives two
            empty lists.
        """
        if not 0 <= sample_id < self.num_samples:
            return [], []
        result = []
        for track in (HistoryTrack.ADV, HistoryTrack.BENIGN):
            epochs = self._epochs[track][sample_id]
            valid = self._window(epochs, t).tolist()
            slots = sorted(
                (s for s in range(self.kappa_H) if valid[s]),
                key=lambda s: int(epochs[s]),
            )
            entries = []
            for s in slots:
                block = self._data[track][sample_id, s]
                entries.extend((b[0].clone(), b[1].clone()) for b in block)
            result.append(entries)
        return result[0], result[1]

    def query_batch(
        self, sample_ids: torch.Tensor, t: int, track: HistoryTrack
    ) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Padded grid of one track for a batch.

        Returns:
            mu (B, kappa_H * K, D), sigma (B, kappa_H * K, D) and a bool mask
            (B, kappa_H * K) marking entries from epochs t - kappa_H .. t - 1.
            Rows of ids outside [0, num_samples) are zero and fully masked.
        """
        ids = sample_ids.detach().to("cpu", torch.long).reshape(-1)
        K = self.entries_per_epoch(track)
        B = ids.numel()
        known = (ids >= 0) & (ids < self.num_samples)
        rows = ids.clamp(0, self.num_samples - 1)
        data = self._data[track][rows] * known.view(B, 1, 1, 1, 1)
        data = data.reshape(B, self.kappa_H * K, 2, self.feature_dim)
        valid = self._window(self._epochs[track][rows], t) & known.unsqueeze(-1)
        mask = valid.unsqueeze(-1).expand(B, self.kappa_H, K)
        mask = mask.reshape(B, self.kappa_H * K)
        return data[:, :, 0], data[:, :, 1], mask

    def state_dict(self) -> Dict[str, object]:
        return {
            "version": FORMAT_VERSION,
            "num_samples": self.num_samples,
            "feature_dim": self.feature_dim,
            "kappa_I": self.kappa_I,
            "kappa_H": self.kappa_H,
            "data": {t.value: v.clone() for t, v in self._data.items()},
            "epochs": {t.value: v.clone() for t, v in self._epochs.items()},
        }

    def load_state_dict(self, state: Dict[str, object]) -> None:
        if state.get("version") != FORMAT_VERSION:
            raise ValueError(
                f"unsupported history format version: {state.get('version')}"
            )
        for key in ("num_samples", "feature_dim", "kappa_I", "kappa_H"):
            if state[key] != getattr(self, key):
                raise ValueError(
                    f"history {key} mismatch: stored {state[key]}, "
                    f"configured {getattr(self, key)}"
                )
        for track in HistoryTrack:
            self._data[track].copy_(state["data"][track.value])
            self._epochs[track].copy_(state["epochs"][track.value])
