"""Image classification sets whose samples carry a stable integer id."""

import logging
from pathlib import Path
from typing import Dict
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import numpy as np
import torch
from typeguard import check_argument_types

FORMAT_VERSION = 1
SPLITS = ("train", "valid", "test")


class IndexedDataset(torch.utils.data.Dataset):
    """Images in [0, 1], labels in [0, C) and stable ids.

    Items are dicts ``{"image", "label", "index"}``; the default DataLoader
    collation stacks them into the batch consumed by the training methods.
    ``index`` never changes for a sample, whatever order batches visit it
    in, so it keys the per-sample feature-statistics history. Random
    pad-and-crop plus horizontal flip (``augment=True``) is applied per item
    after that.

    Args:
        images: (N, C, H, W) float tensor.
        labels: (N,) integer tensor.
        num_classes: C; inferred from the labels if omitted.
        indices: (N,) stable ids; 0 .. N-1 if omitted.
        split: One of "train", "valid", "test".
        augment: Apply pad-crop-flip in ``__getitem__``.
        pad: Padding of the random crop.
        name: Free-form dataset name, kept in the container.
    """

    def __init__(
        self,
        images: torch.Tensor,
        labels: torch.Tensor,
        num_classes: Optional[int] = None,
        indices: Optional[torch.Tensor] = None,
        split: str = "train",
        augment: bool = False,
        pad: int = 4,
        name: str = "dataset",
    ):
        assert check_argument_types()
        if images.dim() != 4:
            raise ValueError(f"images must be (N, C, H, W): {tuple(images.shape)}")
        if labels.shape != (images.size(0),):
            raise ValueError(
                f"labels must be ({images.size(0)},): {tuple(labels.shape)}"
            )
        if split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}: {split}")
        if images.numel() > 0 and (images.min() < 0 or images.max() > 1):
            raise ValueError("pixel values must be in [0, 1]")
        self.images = images.float()
        self.labels = labels.long()
        self.num_classes = (
            int(self.labels.max()) + 1 if num_classes is None else num_classes
        )
        if len(self.labels) > 0 and int(self.labels.max()) >= self.num_classes:
            raise ValueError(f"labels must be in [0, {self.num_classes})")
        if indices is None:
            indices = torch.arange(images.size(0))
        if torch.unique(indices).numel() != images.size(0):
            raise ValueError("sample indices must be unique")
        self.indices = indices.long()
        self.split = split
        self.augment = augment
        self.pad = pad
        self.name = name

    def __len__(self) -> int:
        return self.images.size(0)

    @property
    def image_shape(self) -> Tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def __getitem__(self, i: int) -> Dict[str, torch.Tensor]:
        image = self.images[i]
        if self.augment:
            image = pad_crop_flip(image, self.pad)
        return dict(image=image, label=self.labels[i], index=self.indices[i])

    def subset(
        self,
        positions: Sequence[int],
        split: Optional[str] = None,
        reindex: bool = False,
    ) -> "IndexedDataset":
        """Samples at ``positions``; with ``reindex`` ids become 0 .. n-1."""
        positions = torch.as_tensor(positions, dtype=torch.long)
        return IndexedDataset(
            self.images[positions],
            self.labels[positions],
            num_classes=self.num_classes,
            indices=None if reindex else self.indices[positions],
            split=self.split if split is None else split,
            augment=self.augment,
            pad=self.pad,
            name=self.name,
        )

    def split_off(
        self, fraction: float, seed: int = 0, split: str = "valid"
    ) -> Tuple["IndexedDataset", "IndexedDataset"]:
        """Disjoint (rest, held_out) with ``fraction`` of the samples held out.

        Both parts are reindexed from 0 so the rest can key a history store.
        """
        if not 0 < fraction < 1:
            raise ValueError(f"fraction must be in (0, 1): {fraction}")
        perm = np.random.RandomState(seed).permutation(len(self))
        n_out = max(1, int(round(fraction * len(self))))
        held_out = self.subset(np.sort(perm[:n_out]), split=split, reindex=True)
        rest = self.subset(np.sort(perm[n_out:]), reindex=True)
        held_out.augment = False
        return rest, held_out

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels.numpy(), minlength=self.num_classes)


def pad_crop_flip(image: torch.Tensor, pad: int) -> torch.Tensor:
    """Random crop from a zero-padded image, then a random horizontal flip."""
    C, H, W = image.shape
    padded = torch.nn.functional.pad(image, (pad, pad, pad, pad))
    top, left = torch.randint(0, 2 * pad + 1, (2,)).tolist()
    out = padded[:, top : top + H, left : left + W]
    if bool(torch.rand(()) < 0.5):
        out = out.flip(-1)
    return out


def save_dataset(dataset: IndexedDataset, path: Union[str, Path]):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(
        {
            "version": FORMAT_VERSION,
            "name": dataset.name,
            "split": dataset.split,
            "num_classes": dataset.num_classes,
            "images": dataset.images,
            "labels": dataset.labels,
            "indices": dataset.indices,
        },
        path,
    )
    logging.info(f"Saved {len(dataset)} samples of {dataset.name} to {path}")


def load_dataset(path: Union[str, Path], augment: bool = False) -> IndexedDataset:
    state = torch.load(path, map_location="cpu")
    if state.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version: {state.get('version')}")
    return IndexedDataset(
        state["images"],
        state["labels"],
        num_classes=state["num_classes"],
        indices=state["indices"],
        split=state["split"],
        augment=augment,
        name=state["name"],
    )
