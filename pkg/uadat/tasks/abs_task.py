# Adopted from ESPNet: https://github.com/espnet/espnet

from abc import ABC
from abc import abstractmethod
import argparse
import logging
import os
from pathlib import Path
import sys
from typing import Any
from typing import Dict
from typing import List
from typing import Optional
from typing import Sequence
from typing import Tuple
from typing import Union

import torch
import torch.optim
from typeguard import check_argument_types
from typeguard import check_return_type
import yaml

from uadat import __version__
from uadat.data.indexed_dataset import IndexedDataset
from uadat.iterators.indexed_iter_factory import IndexedIterFactory
from uadat.optimizers.sgd import SGD
from uadat.optimizers.sgd import decay_param_groups
from uadat.schedulers.piecewise_linear_lr import PiecewiseLinearLR
from uadat.torch_utils.capabilities import backend_summary
from uadat.torch_utils.capabilities import check_double_backward
from uadat.torch_utils.model_summary import model_summary
from uadat.torch_utils.set_all_random_seed import set_all_random_seed
from uadat.train.abs_robust_model import AbsRobustModel
from uadat.train.class_choices import ClassChoices
from uadat.train.trainer import Trainer
from uadat.train.trainer import load_checkpoint
from uadat.utils import config_argparse
from uadat.utils.cli_utils import get_commandline_args
from uadat.utils.errors import ConfigError
from uadat.utils.errors import NonFiniteError
from uadat.utils.get_default_kwargs import get_default_kwargs
from uadat.utils.nested_dict_action import NestedDictAction
from uadat.utils.types import int_or_none
from uadat.utils.types import str2bool
from uadat.utils.types import str_or_none
from uadat.utils.yaml_no_alias_safe_dump import yaml_no_alias_safe_dump

# Exit status of the command line tools
EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4

optim_classes = dict(
    sgd=SGD,
    adam=torch.optim.Adam,
    adamw=torch.optim.AdamW,
)
scheduler_classes = dict(
    piecewise_linear=PiecewiseLinearLR,
    steplr=torch.optim.lr_scheduler.StepLR,
    multisteplr=torch.optim.lr_scheduler.MultiStepLR,
    cosineannealinglr=torch.optim.lr_scheduler.CosineAnnealingLR,
)


def configure_logging(log_level: Union[int, str]):
    # NOTE(kamo): Don't use logging before invoking logging.basicConfig()
    logging.basicConfig(
        level=log_level,
        format=f"[{os.uname()[1].split('.')[0]}]"
        f" %(asctime)s (%(module)s:%(lineno)d) %(levelname)s: %(message)s",
    )


def exit_status(e: BaseException) -> int:
    """Map an exception escaping a command to its exit status."""
    if isinstance(e, ValueError):
        # ConfigError included
        return EXIT_CONFIG
    if isinstance(e, OSError):
        return EXIT_IO
    if isinstance(e, NonFiniteError):
        return EXIT_NUMERICAL
    raise e


def run_command(func, *args, **kwargs) -> int:
    """Invoke a command body and turn the known failure modes into exit codes."""
    try:
        func(*args, **kwargs)
    except (ValueError, OSError, NonFiniteError) as e:
        status = exit_status(e)
        logging.error(f"{type(e).__name__}: {e}")
        return status
    return EXIT_OK


class AbsTask(ABC):
    # Use @staticmethod, or @classmethod,
    # instead of instance method to avoid God classes

    trainer = Trainer
    class_choices_list: List[ClassChoices] = []

    def __init__(self):
        raise RuntimeError("This class can't be instantiated.")

    @classmethod
    @abstractmethod
    def add_task_arguments(cls, parser: argparse.ArgumentParser):
        pass

    @classmethod
    @abstractmethod
    def build_datasets(
        cls, args: argparse.Namespace
    ) -> Tuple[IndexedDataset, Optional[IndexedDataset], Optional[IndexedDataset]]:
        """Return the (train, valid, test) sets; valid and test may be None."""
        raise NotImplementedError

    @classmethod
    @abstractmethod
    def build_model(
        cls, args: argparse.Namespace, dataset: IndexedDataset
    ) -> AbsRobustModel:
        """Build the training method around a classifier shaped after ``dataset``."""
        raise NotImplementedError

    @classmethod
    def get_parser(cls) -> config_argparse.ArgumentParser:
        assert check_argument_types()

        class ArgumentDefaultsRawTextHelpFormatter(
            argparse.RawTextHelpFormatter,
            argparse.ArgumentDefaultsHelpFormatter,
        ):
            pass

        parser = config_argparse.ArgumentParser(
            description="base parser",
            formatter_class=ArgumentDefaultsRawTextHelpFormatter,
        )

        # NOTE(kamo): Use '_' instead of '-' to avoid confusion.
        #  I think '-' looks really confusing if it's written in yaml.

        # NOTE(kamo): add_arguments(..., required=True) can't be used
        #  to provide --print_config mode. Instead of it, do as
        parser.set_defaults(required=["output_dir"])

        group = parser.add_argument_group("Common configuration")

        group.add_argument(
            "--print_config",
            action="store_true",
            help="Print the config file and exit",
        )
        group.add_argument(
            "--log_level",
            type=lambda x: x.upper(),
            default="INFO",
            choices=("ERROR", "WARNING", "INFO", "DEBUG", "NOTSET"),
            help="The verbose level of logging",
        )
        group.add_argument(
            "--dry_run",
            type=str2bool,
            default=False,
            help="Build everything and write config.yaml without training",
        )
        group.add_argument("--output_dir", type=str_or_none, default=None)
        group.add_argument(
            "--ngpu",
            type=int,
            default=0,
            help="The number of gpus. 0 indicates CPU mode",
        )
        group.add_argument("--seed", type=int, default=0, help="Random seed")
        group.add_argument(
            "--uadat_version",
            type=str,
            default=__version__,
            help="Version of the package that wrote the configuration",
        )
        group.add_argument(
            "--num_workers",
            type=int,
            default=0,
            help="The number of workers used for DataLoader",
        )
        group.add_argument(
            "--train_dtype",
            default="float32",
            choices=["float32", "float64"],
            help="Data type for training.",
        )

        group = parser.add_argument_group("cudnn mode related")
        group.add_argument(
            "--cudnn_benchmark",
            type=str2bool,
            default=False,
            help="Enable cudnn-benchmark mode",
        )
        group.add_argument(
            "--cudnn_deterministic",
            type=str2bool,
            default=True,
            help="Enable cudnn-deterministic mode",
        )

        group = parser.add_argument_group("Trainer related")
        group.add_argument(
            "--max_epoch",
            type=int,
            default=20,
            help="The maximum number epoch to train",
        )
        group.add_argument(
            "--grad_clip",
            type=float,
            default=-1.0,
            help="Gradient norm threshold to clip. Non-positive disables clipping",
        )
        group.add_argument(
            "--resume",
            type=str2bool,
            default=False,
            help="Enable resuming if checkpoint is existing",
        )
        group.add_argument(
            "--log_interval",
            type=int_or_none,
            default=None,
            help="Show the logs every the number iterations in each epochs at the "
            "training phase. If None is given, it is decided according the number "
            "of training samples automatically .",
        )
        group.add_argument(
            "--use_tensorboard",
            type=str2bool,
            default=False,
            help="Enable tensorboard logging",
        )
        group.add_argument(
            "--detect_anomaly",
            type=str2bool,
            default=False,
            help="Set torch.autograd.set_detect_anomaly",
        )

        group = parser.add_argument_group("BatchSampler related")
        group.add_argument(
            "--batch_size",
            type=int,
            default=128,
            help="The mini-batch size used for training",
        )
        group.add_argument(
            "--valid_batch_size",
            type=int_or_none,
            default=None,
            help="If not given, the value of --batch_size is used",
        )

        group = parser.add_argument_group("Optimizer related")
        group.add_argument(
            "--optim",
            type=lambda x: x.lower(),
            default="sgd",
            choices=list(optim_classes),
            help="The optimizer type",
        )
        group.add_argument(
            "--optim_conf",
            action=NestedDictAction,
            default=dict(),
            help="The keyword arguments for optimizer",
        )
        group.add_argument(
            "--scheduler",
            type=lambda x: str_or_none(x.lower()),
            default="piecewise_linear",
            choices=list(scheduler_classes) + [None],
            help="The lr scheduler type",
        )
        group.add_argument(
            "--scheduler_conf",
            action=NestedDictAction,
            default=dict(),
            help="The keyword arguments for lr scheduler. total_steps of "
            "piecewise_linear is derived from max_epoch when not given",
        )

        cls.add_task_arguments(parser)

        assert check_return_type(parser)
        return parser

    @classmethod
    def build_optimizer(
        cls, args: argparse.Namespace, model: torch.nn.Module
    ) -> torch.optim.Optimizer:
        optim_class = optim_classes.get(args.optim)
        if optim_class is None:
            raise ConfigError("optim", f"must be one of {list(optim_classes)}")
        try:
            return optim_class(decay_param_groups(model), **args.optim_conf)
        except TypeError as e:
            raise ConfigError("optim_conf", str(e)) from e

    @classmethod
    def build_scheduler(
        cls,
        args: argparse.Namespace,
        optimizer: torch.optim.Optimizer,
        num_batches: int,
    ):
        if args.scheduler is None:
            return None
        scheduler_class = scheduler_classes.get(args.scheduler)
        if scheduler_class is None:
            raise ConfigError("scheduler", f"must be one of {list(scheduler_classes)}")
        conf = dict(args.scheduler_conf)
        if scheduler_class is PiecewiseLinearLR:
            conf.setdefault("total_steps", args.max_epoch * num_batches)
            args.scheduler_conf = conf
        try:
            return scheduler_class(optimizer, **conf)
        except TypeError as e:
            raise ConfigError("scheduler_conf", str(e)) from e

    @classmethod
    def exclude_opts(cls) -> Tuple[str, ...]:
        """The options not to be shown by --print_config"""
        return "required", "print_config", "config", "override", "ngpu"

    @classmethod
    def get_default_config(cls) -> Dict[str, Any]:
        """Return the configuration as dict.

        This method is used by print_config()
        """
        # This method is used only for --print_config
        assert check_argument_types()
        parser = cls.get_parser()
        args, _ = parser.parse_known_args()
        config = vars(args)
        # Excludes the options not to be shown
        for k in cls.exclude_opts():
            config.pop(k, None)

        for name, classes in (
            ("optim", optim_classes),
            ("scheduler", scheduler_classes),
        ):
            if config[name] is None:
                continue
            conf = get_default_kwargs(classes[config[name]])
            # Overwrite the default by the arguments,
            conf.update(config[f"{name}_conf"])
            # and set it again
            config[f"{name}_conf"] = conf

        for class_choices in cls.class_choices_list:
            if getattr(args, class_choices.name) is not None:
                class_obj = class_choices.get_class(getattr(args, class_choices.name))
                conf = get_default_kwargs(class_obj)
                for key in class_choices.injected:
                    conf.pop(key, None)
                name = class_choices.name
                conf.update(config[f"{name}_conf"])
                config[f"{name}_conf"] = conf
        return config

    @classmethod
    def check_required_command_args(cls, args: argparse.Namespace):
        assert check_argument_types()
        for k in vars(args):
            if "-" in k:
                raise RuntimeError(f'Use "_" instead of "-": parser.get_parser("{k}")')

        required = ", ".join(
            f"--{a}" for a in args.required if getattr(args, a) is None
        )

        if len(required) != 0:
            parser = cls.get_parser()
            parser.print_help(file=sys.stderr)
            p = Path(sys.argv[0]).name
            print(file=sys.stderr)
            print(
                f"{p}: error: the following arguments are required: " f"{required}",
                file=sys.stderr,
            )
            sys.exit(EXIT_CONFIG)

    @classmethod
    def print_config(cls, file=sys.stdout) -> None:
        assert check_argument_types()
        # Shows the config: e.g. python uadat_train.py --print_config
        config = cls.get_default_config()
        file.write(yaml_no_alias_safe_dump(config, indent=4, sort_keys=False))

    @classmethod
    def main(cls, args: argparse.Namespace = None, cmd: Sequence[str] = None):
        """Parse, run training and exit with the status of the run."""
        assert check_argument_types()
        print(get_commandline_args(), file=sys.stderr)
        if args is None:
            parser = cls.get_parser()
            args = parser.parse_args(cmd)
        if args.print_config:
            cls.print_config()
            sys.exit(EXIT_OK)
        cls.check_required_command_args(args)

        configure_logging(args.log_level)
        sys.exit(run_command(cls.main_worker, args))

    @classmethod
    def main_worker(cls, args: argparse.Namespace):
        assert check_argument_types()
        args.uadat_version = __version__

        # 0. Capability probe for the second-order losses
        device = "cuda" if args.ngpu > 0 else "cpu"
        check_double_backward(device)

        # 1. Set random-seed
        set_all_random_seed(args.seed)
        torch.backends.cudnn.benchmark = args.cudnn_benchmark
        torch.backends.cudnn.deterministic = args.cudnn_deterministic
        if args.detect_anomaly:
            logging.info("Invoking torch.autograd.set_detect_anomaly(True)")
            torch.autograd.set_detect_anomaly(args.detect_anomaly)

        # 2. Build data and model
        train_set, valid_set, _ = cls.build_datasets(args)
        model = cls.build_model(args, train_set)
        if not isinstance(model, AbsRobustModel):
            raise RuntimeError(
                f"model must inherit {AbsRobustModel.__name__}, but got {type(model)}"
            )
        model = model.to(dtype=getattr(torch, args.train_dtype), device=device)

        # 3. Build iterator factories
        train_iter_factory = cls.build_iter_factory(args, train_set, train=True)
        valid_iter_factory = (
            None
            if valid_set is None
            else cls.build_iter_factory(args, valid_set, train=False)
        )

        # 4. Build optimizer and scheduler
        optimizer = cls.build_optimizer(args, model)
        scheduler = cls.build_scheduler(
            args, optimizer, train_iter_factory.num_batches()
        )

        logging.info(backend_summary())
        logging.info(model_summary(model))
        logging.info(f"Optimizer:\n{optimizer}")
        logging.info(f"Scheduler: {scheduler}")

        # 5. Dump "args" to config.yaml
        # NOTE(kamo): "args" should be saved after object-buildings are done
        #  because they are allowed to modify "args".
        output_dir = Path(args.output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        with (output_dir / "config.yaml").open("w", encoding="utf-8") as f:
            logging.info(f'Saving the configuration in {output_dir / "config.yaml"}')
            config = {
                k: v
                for k, v in vars(args).items()
                if k not in ("required", "print_config", "config", "override")
            }
            yaml_no_alias_safe_dump(config, f, indent=4, sort_keys=False)

        if args.dry_run:
            return

        # 6. Start training
        trainer_options = cls.trainer.build_options(args)
        cls.trainer.run(
            model=model,
            optimizer=optimizer,
            scheduler=scheduler,
            train_iter_factory=train_iter_factory,
            valid_iter_factory=valid_iter_factory,
            trainer_options=trainer_options,
        )

    @classmethod
    def build_iter_factory(
        cls, args: argparse.Namespace, dataset: IndexedDataset, train: bool
    ) -> IndexedIterFactory:
        assert check_argument_types()
        if train:
            batch_size = args.batch_size
        else:
            batch_size = args.valid_batch_size or args.batch_size
        return IndexedIterFactory(
            dataset=dataset,
            batch_size=batch_size,
            seed=args.seed,
            shuffle=train,
            num_workers=args.num_workers,
            pin_memory=args.ngpu > 0,
        )

    # ~~~~~~~~~ The methods below are mainly used for evaluation ~~~~~~~~~
    @classmethod
    def build_model_from_file(
        cls,
        config_file: Union[Path, str],
        model_file: Union[Path, str],
        device: str = "cpu",
    ) -> Tuple[AbsRobustModel, argparse.Namespace, Dict[str, IndexedDataset]]:
        """Rebuild a trained method from its config.yaml and a checkpoint.

        Args:
            config_file: The yaml file saved when training.
            model_file: A ``ckpt_*.bin`` written by the trainer.
            device: Where to place the model.

        Raises:
            FileNotFoundError: A file is missing.
            ConfigError: The checkpoint was trained with another architecture.
        """
        assert check_argument_types()
        config_file, model_file = Path(config_file), Path(model_file)
        if not model_file.is_file():
            raise FileNotFoundError(f"No such checkpoint: {model_file}")

        with config_file.open("r", encoding="utf-8") as f:
            args = yaml.safe_load(f)
        args = argparse.Namespace(**args)
        train_set, valid_set, test_set = cls.build_datasets(args)
        model = cls.build_model(args, train_set)

        states = load_checkpoint(model_file)
        expected = model.classifier.architecture()
        found = states["architecture"]
        if found != expected:
            raise ConfigError(
                "model", f"checkpoint architecture {found} does not match {expected}"
            )
        logging.info(f"Load model state dict from: {model_file}")
        model.load_state_dict(states["train_state"]["model"])
        model.to(device)
        datasets = dict(train=train_set, valid=valid_set, test=test_set)
        return model, args, datasets
