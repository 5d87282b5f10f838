from typing import List

import numpy as np
from torch.utils.data import DataLoader
from typeguard import check_argument_types

from uadat.data.indexed_dataset import IndexedDataset
from uadat.iterators.abs_iter_factory import AbsIterFactory


class IndexedIterFactory(AbsIterFactory):
    """Build the DataLoader of each epoch.

    The permutation of an epoch depends only on ``epoch + seed``, so a run
    resumed from the middle visits samples in the same order. Shuffling
    changes the visiting order only; sample ids stay attached to samples.
    """

    def __init__(
        self,
        dataset: IndexedDataset,
        batch_size: int,
        seed: int = 0,
        shuffle: bool = False,
        drop_last: bool = False,
        num_workers: int = 0,
        pin_memory: bool = False,
    ):
        assert check_argument_types()
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1: {batch_size}")
        self.dataset = dataset
        self.batch_size = batch_size
        self.seed = seed
        self.shuffle = shuffle
        self.drop_last = drop_last
        self.num_workers = num_workers
        self.pin_memory = pin_memory

    def num_batches(self) -> int:
        if self.drop_last:
            return len(self.dataset) // self.batch_size
        return -(-len(self.dataset) // self.batch_size)

    def batches(self, epoch: int, shuffle: bool = None) -> List[List[int]]:
        if shuffle is None:
            shuffle = self.shuffle
        order = np.arange(len(self.dataset))
        if shuffle:
            order = np.random.RandomState(epoch + self.seed).permutation(order)
        return [
            order[i : i + self.batch_size].tolist()
            for i in range(0, self.num_batches() * self.batch_size, self.batch_size)
        ]

    def build_iter(self, epoch: int, shuffle: bool = None) -> DataLoader:
        return DataLoader(
            dataset=self.dataset,
            batch_sampler=self.batches(epoch, shuffle),
            num_workers=self.num_workers,
            pin_memory=self.pin_memory,
        )
