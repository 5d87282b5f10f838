"""CIFAR-10/100 from the canonical python-pickle archives (no downloading)."""

import hashlib
import logging
from pathlib import Path
import pickle
import tarfile
from typing import Dict
from typing import List
from typing import Tuple
from typing import Union

import numpy as np
import torch
from typeguard import check_argument_types

from uadat.data.indexed_dataset import IndexedDataset

# name -> (archive, md5, extracted dir, {split: [(member, md5), ...]}, label key, C)
ARCHIVES: Dict[str, Tuple] = {
    "cifar10": (
        "cifar-10-python.tar.gz",
        "c58f30108f718f92721af3b95e74349a",
        "cifar-10-batches-py",
        {
            "train": [
                ("data_batch_1", "c99cafc152244af753f735de768cd75f"),
                ("data_batch_2", "d4bba439e000b95fd0a9bffe97cbabec"),
                ("data_batch_3", "54ebc095f3ab1f0389bbae665268c751"),
                ("data_batch_4", "634d18415352ddfa80567beed471001a"),
                ("data_batch_5", "482c414d41f54cd18b22e5b47cb7c3cb"),
            ],
            "test": [("test_batch", "40351d587109b95175f43aff81a1287e")],
        },
        b"labels",
        10,
    ),
    "cifar100": (
        "cifar-100-python.tar.gz",
        "eb9058c3a382ffc7106e4002c42a8d85",
        "cifar-100-python",
        {
            "train": [("train", "16019d7e3df5f24257cddd939b257f8d")],
            "test": [("test", "f0ef6b0ae62326f3e7ffdfab6717acfc")],
        },
        b"fine_labels",
        100,
    ),
}


def md5sum(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    h = hashlib.md5()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(chunk_size), b""):
            h.update(chunk)
    return h.hexdigest()


def _verify(path: Path, expected: str):
    actual = md5sum(path)
    if actual != expected:
        raise OSError(
            f"checksum mismatch for {path}: md5 {actual}, expected {expected}"
        )


def _locate(name: str, root: Path) -> Path:
    archive, archive_md5, dirname, _, _, _ = ARCHIVES[name]
    extracted = root / dirname
    if extracted.is_dir():
        return extracted
    if (root / archive).is_file():
        _verify(root / archive, archive_md5)
        logging.info(f"Extracting {root / archive}")
        with tarfile.open(root / archive, "r:gz") as tar:
            tar.extractall(root)
        return extracted
    raise FileNotFoundError(
        f"{name} not found under {root}: expected {root / archive} or the extracted "
        f"directory {extracted}/ (no download is attempted)"
    )


def _read_batches(directory: Path, members: List[Tuple[str, str]], label_key: bytes):
    images, labels = [], []
    for member, checksum in members:
        path = directory / member
        if not path.is_file():
            raise FileNotFoundError(f"missing archive member: {path}")
        _verify(path, checksum)
        with open(path, "rb") as f:
            entry = pickle.load(f, encoding="bytes")
        images.append(np.asarray(entry[b"data"], dtype=np.uint8))
        labels.extend(entry[label_key])
    return np.concatenate(images), np.asarray(labels, dtype=np.int64)


def load_standard(
    name: str, root: Union[str, Path], split: str = "train", augment: bool = False
) -> IndexedDataset:
    """Decode a CIFAR split; ids follow archive order.

    Args:
        name: "cifar10" or "cifar100".
        root: Directory holding the ``.tar.gz`` archive or its extracted dir.
        split: "train" or "test".
        augment: Enable pad-crop-flip (training split).

    Raises:
        FileNotFoundError: The archive is missing; the message gives the
            expected layout.
        OSError: A checksum does not match.
    """
    assert check_argument_types()
    if name not in ARCHIVES:
        raise ValueError(f"unknown dataset {name}, expected one of {list(ARCHIVES)}")
    if split not in ("train", "test"):
        raise ValueError(f"split must be train or test: {split}")
    _, _, _, members, label_key, num_classes = ARCHIVES[name]
    directory = _locate(name, Path(root))
    data, labels = _read_batches(directory, members[split], label_key)

    images = torch.from_numpy(data.reshape(-1, 3, 32, 32)).float().div_(255.0)
    logging.info(f"Loaded {name}/{split}: {len(labels)} images")
    return IndexedDataset(
        images,
        torch.from_numpy(labels),
        num_classes=num_classes,
        split=split,
        augment=augment,
        name=name,
    )
