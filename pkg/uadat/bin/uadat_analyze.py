#!/usr/bin/env python3
import argparse
import logging
from pathlib import Path
import sys
from typing import Any
from typing import Dict
from typing import Optional
from typing import Sequence

from typeguard import check_argument_types

from uadat.attacks.attack_config import AttackConfig
from uadat.evaluation.disruption import disruption_curve
from uadat.evaluation.normality import normality_survey
from uadat.tasks.abs_task import configure_logging
from uadat.tasks.abs_task import run_command
from uadat.tasks.robust import RobustTask
from uadat.torch_utils.set_all_random_seed import set_all_random_seed
from uadat.utils import config_argparse
from uadat.utils.build_dataclass import dataclass_from_conf
from uadat.utils.cli_utils import get_commandline_args
from uadat.utils.errors import ConfigError
from uadat.utils.nested_dict_action import NestedDictAction
from uadat.utils.types import pixel_value
from uadat.utils.types import str2bool
from uadat.utils.types import str_or_none

ANALYSES = ("disruption", "normality")


def analyze(
    analysis: str,
    output_dir: str,
    checkpoint: str,
    train_config: Optional[str],
    split: str,
    batch_size: int,
    ngpu: int,
    seed: int,
    radii: Sequence[float],
    split_by_loss: bool,
    num_samples: Optional[int],
    num_images: int,
    num_adversaries: int,
    alpha: float,
    attack_conf: Dict[str, Any],
):
    """Run one diagnostic analysis and write its CSV under ``output_dir``."""
    assert check_argument_types()
    if analysis not in ANALYSES:
        raise ConfigError("analysis", f"must be one of {ANALYSES}: {analysis}")
    device = "cuda" if ngpu > 0 else "cpu"
    set_all_random_seed(seed)

    if train_config is None:
        train_config = RobustTask.run_dir_config(Path(checkpoint))
    model, train_args, datasets = RobustTask.build_model_from_file(
        train_config, checkpoint, device
    )
    dataset = datasets.get(split)
    if dataset is None:
        raise ConfigError("split", f"the run has no {split} split")
    if num_samples is not None and num_samples < len(dataset):
        dataset = dataset.subset(list(range(num_samples)))
    classifier = model.classifier
    output_dir = Path(output_dir)

    if analysis == "disruption":
        disruption_curve(
            classifier,
            dataset,
            radii,
            batch_size=batch_size,
            split_by_loss=split_by_loss,
            output=output_dir / "disruption.csv",
        )
    else:
        conf = dict(train_args.attack_conf)
        conf.update(attack_conf)
        attack = dataclass_from_conf(AttackConfig, conf, "attack")
        normality_survey(
            classifier,
            dataset,
            num_images=num_images,
            num_adversaries=num_adversaries,
            alpha=alpha,
            attack=attack,
            batch_size=batch_size,
            seed=seed,
            output=output_dir / "normality.csv",
        )
    logging.info(f"Wrote {analysis} results to {output_dir}")


def get_parser():
    """Get argument parser."""
    parser = config_argparse.ArgumentParser(
        description="Feature-variance and normality diagnostics",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument(
        "--log_level",
        type=lambda x: x.upper(),
        default="INFO",
        choices=("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG", "NOTSET"),
        help="The verbose level of logging",
    )
    parser.add_argument(
        "--analysis",
        type=str,
        required=True,
        help=f"One of {ANALYSES}",
    )
    parser.add_argument(
        "--output_dir",
        type=str,
        required=True,
        help="The path of output directory",
    )
    parser.add_argument(
        "--ngpu",
        type=int,
        default=0,
        help="The number of gpus. 0 indicates CPU mode",
    )
    parser.add_argument("--seed", type=int, default=0, help="Random seed")
    parser.add_argument(
        "--batch_size",
        type=int,
        default=100,
        help="Samples (disruption) or adversaries (normality) per PGD run",
    )

    group = parser.add_argument_group("The model configuration related")
    group.add_argument("--checkpoint", type=str, required=True)
    group.add_argument(
        "--train_config",
        type=str_or_none,
        default=None,
        help="Training config.yaml; defaults to the one next to the checkpoint",
    )
    group.add_argument(
        "--split",
        type=str,
        default="test",
        choices=["train", "valid", "test"],
    )
    group.add_argument(
        "--num_samples",
        type=int,
        default=None,
        help="Use only the first N samples of the split",
    )

    group = parser.add_argument_group("Disruption related")
    group.add_argument(
        "--radii",
        type=pixel_value,
        nargs="+",
        default=[-8 / 255, 2 / 255, 4 / 255, 6 / 255, 8 / 255],
        help="Signed L-inf radii; negative values refine instead of attack",
    )
    group.add_argument(
        "--split_by_loss",
        type=str2bool,
        default=True,
        help="Also report the high- and low-loss halves",
    )

    group = parser.add_argument_group("Normality related")
    group.add_argument("--num_images", type=int, default=20)
    group.add_argument("--num_adversaries", type=int, default=500)
    group.add_argument("--alpha", type=float, default=0.05)
    group.add_argument(
        "--attack_conf",
        action=NestedDictAction,
        default=dict(),
        help="AttackConfig fields overriding the run's attack_conf",
    )
    return parser


def main(cmd=None):
    """Diagnostics of a trained model

    Example:
        % python uadat_analyze.py --analysis disruption \\
            --checkpoint exp/a/ckpt_best.bin --output_dir exp/a/analysis
    """
    print(get_commandline_args(), file=sys.stderr)
    parser = get_parser()
    args = parser.parse_args(cmd)
    kwargs = vars(args)
    kwargs.pop("config", None)
    kwargs.pop("override", None)
    configure_logging(kwargs.pop("log_level"))
    sys.exit(run_command(analyze, **kwargs))


if __name__ == "__main__":
    main()
