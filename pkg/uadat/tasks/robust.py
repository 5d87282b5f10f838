import argparse
import logging
from pathlib import Path
from typing import Dict
from typing import Optional
from typing import Tuple

from typeguard import check_argument_types

from uadat.attacks.attack_config import AttackConfig
from uadat.data.cifar import ARCHIVES
from uadat.data.cifar import load_standard
from uadat.data.indexed_dataset import IndexedDataset
from uadat.data.indexed_dataset import load_dataset
from uadat.data.synthetic import make_synthetic
from uadat.losses.total import LossWeights
from uadat.nets.abs_split_classifier import AbsSplitClassifier
from uadat.nets.split_convnet import SplitConvNet
from uadat.nets.split_resnet import SplitResNet18
from uadat.tasks.abs_task import AbsTask
from uadat.train.abs_robust_model import AbsRobustModel
from uadat.train.baselines import NaturalModel
from uadat.train.class_choices import ClassChoices
from uadat.train.trainer import Trainer
from uadat.train.uad_at_model import UADATModel
from uadat.train.uad_at_model import UncertaintyConfig
from uadat.utils.build_dataclass import dataclass_from_conf
from uadat.utils.errors import ConfigError
from uadat.utils.get_default_kwargs import get_default_kwargs
from uadat.utils.nested_dict_action import NestedDictAction

model_choices = ClassChoices(
    "model",
    classes=dict(convnet=SplitConvNet, resnet18=SplitResNet18),
    type_check=AbsSplitClassifier,
    default="convnet",
    injected=("num_classes", "in_channels", "image_size"),
)
method_choices = ClassChoices(
    "method",
    classes=dict(uad_at=UADATModel, natural=NaturalModel),
    type_check=AbsRobustModel,
    default="uad_at",
    injected=(
        "classifier",
        "num_samples",
        "attack_conf",
        "weights_conf",
        "uncertainty_conf",
    ),
)

DATASETS = ("synthetic", "cifar10", "cifar100", "file")
synthetic_defaults = dict(
    classes=4,
    n_per_class=500,
    valid_per_class=100,
    test_per_class=250,
    image_size=16,
    in_channels=3,
    noise=0.08,
    seed=0,
)
standard_defaults = dict(root="downloads", valid_fraction=0.02, augment=True)
file_defaults = dict(train=None, valid=None, test=None)


def _dataset_conf(name: str, conf: Dict) -> Dict:
    defaults = dict(
        synthetic=synthetic_defaults,
        cifar10=standard_defaults,
        cifar100=standard_defaults,
        file=file_defaults,
    )[name]
    unknown = set(conf) - set(defaults)
    if unknown:
        raise ConfigError(
            f"dataset_conf.{sorted(unknown)[0]}",
            f"unknown key for {name}, expected {sorted(defaults)}",
        )
    return {**defaults, **conf}


class RobustTask(AbsTask):
    """Adversarially robust image classification."""

    # Add variable objects configurations
    class_choices_list = [
        # --model and --model_conf
        model_choices,
        # --method and --method_conf
        method_choices,
    ]

    trainer = Trainer

    @classmethod
    def add_task_arguments(cls, parser: argparse.ArgumentParser):
        assert check_argument_types()
        group = parser.add_argument_group(description="Task related")
        group.add_argument(
            "--dataset",
            type=lambda x: x.lower(),
            default="synthetic",
            choices=DATASETS,
            help="The dataset type",
        )
        group.add_argument(
            "--dataset_conf",
            action=NestedDictAction,
            default=dict(),
            help="The keyword arguments for dataset. synthetic: "
            f"{synthetic_defaults}; cifar10/cifar100: {standard_defaults}; "
            f"file: {file_defaults} (paths written by save_dataset)",
        )
        group.add_argument(
            "--attack_conf",
            action=NestedDictAction,
            default=get_default_kwargs(AttackConfig),
            help="The threat model and step schedule of training adversaries",
        )
        group.add_argument(
            "--weights_conf",
            action=NestedDictAction,
            default=get_default_kwargs(LossWeights),
            help="beta, lambda1 and lambda2 of the total objective",
        )
        group.add_argument(
            "--uncertainty_conf",
            action=NestedDictAction,
            default=get_default_kwargs(UncertaintyConfig),
            help="kappa_I, kappa_H and the augmentation mode",
        )
        group.add_argument(
            "--eval_attack_conf",
            action=NestedDictAction,
            default=dict(step_size=2 / 255, steps=20, random_init="uniform"),
            help="The attack of validation and evaluation (CE objective)",
        )

        for class_choices in cls.class_choices_list:
            # Append --<name> and --<name>_conf.
            # e.g. --model and --model_conf
            class_choices.add_arguments(group)

    @classmethod
    def build_datasets(
        cls, args: argparse.Namespace
    ) -> Tuple[IndexedDataset, Optional[IndexedDataset], Optional[IndexedDataset]]:
        assert check_argument_types()
        if args.dataset not in DATASETS:
            raise ConfigError("dataset", f"must be one of {DATASETS}: {args.dataset}")
        conf = _dataset_conf(args.dataset, args.dataset_conf)

        if args.dataset == "synthetic":
            feature_dim, stem_stride = cls.cut_geometry(
                args, conf["classes"], conf["in_channels"], conf["image_size"]
            )
            common = dict(
                classes=conf["classes"],
                image_size=conf["image_size"],
                in_channels=conf["in_channels"],
                noise=conf["noise"],
                feature_dim=feature_dim,
                stem_stride=stem_stride,
            )
            train = make_synthetic(conf["n_per_class"], seed=conf["seed"], **common)
            valid = make_synthetic(
                conf["valid_per_class"], seed=conf["seed"] + 1, split="valid", **common
            )
            test = make_synthetic(
                conf["test_per_class"], seed=conf["seed"] + 2, split="test", **common
            )
        elif args.dataset in ARCHIVES:
            full = load_standard(args.dataset, conf["root"], "train", conf["augment"])
            if conf["valid_fraction"] > 0:
                train, valid = full.split_off(conf["valid_fraction"], seed=args.seed)
            else:
                train, valid = full, None
            test = load_standard(args.dataset, conf["root"], "test")
        else:
            if conf["train"] is None:
                raise ConfigError("dataset_conf.train", "a dataset file is required")
            train = load_dataset(conf["train"])
            valid, test = (
                None if conf[k] is None else load_dataset(conf[k])
                for k in ("valid", "test")
            )

        logging.info(
            f"{args.dataset}: train={len(train)}, "
            f"valid={0 if valid is None else len(valid)}, "
            f"test={0 if test is None else len(test)}"
        )
        logging.info(f"train class counts: {train.class_counts().tolist()}")
        return train, valid, test

    @classmethod
    def _classifier(
        cls,
        args: argparse.Namespace,
        num_classes: int,
        in_channels: int,
        image_size: int,
    ) -> AbsSplitClassifier:
        try:
            return model_choices.build(
                args.model,
                args.model_conf,
                num_classes=num_classes,
                in_channels=in_channels,
                image_size=image_size,
            )
        except ValueError as e:
            raise ConfigError("model_conf", str(e)) from e

    @classmethod
    def cut_geometry(
        cls,
        args: argparse.Namespace,
        num_classes: int,
        in_channels: int,
        image_size: int,
    ) -> Tuple[int, int]:
        """(D, stem stride) at the cut point of the configured classifier."""
        classifier = cls._classifier(args, num_classes, in_channels, image_size)
        return classifier.feature_dim, classifier.stem_stride

    @classmethod
    def build_classifier(
        cls, args: argparse.Namespace, dataset: IndexedDataset
    ) -> AbsSplitClassifier:
        in_channels, height, width = dataset.image_shape
        if height != width:
            raise ConfigError("dataset", f"square images required: {height}x{width}")
        return cls._classifier(args, dataset.num_classes, in_channels, height)

    @classmethod
    def build_model(
        cls, args: argparse.Namespace, dataset: IndexedDataset
    ) -> AbsRobustModel:
        assert check_argument_types()
        # eval_attack_conf is read by the trainer only
        dataclass_from_conf(AttackConfig, args.eval_attack_conf, "eval_attack")
        classifier = cls.build_classifier(args, dataset)
        if args.method == "natural":
            return method_choices.build(
                args.method,
                args.method_conf,
                classifier=classifier,
                num_samples=len(dataset),
            )
        return method_choices.build(
            args.method,
            args.method_conf,
            classifier=classifier,
            num_samples=len(dataset),
            attack_conf=args.attack_conf,
            weights_conf=args.weights_conf,
            uncertainty_conf=args.uncertainty_conf,
        )

    @classmethod
    def run_dir_config(cls, checkpoint: Path) -> Path:
        """config.yaml next to a checkpoint of a run directory."""
        return Path(checkpoint).parent / "config.yaml"
