#!/usr/bin/env python3
import argparse
import logging
from pathlib import Path
import sys
from typing import Any
from typing import Dict
from typing import Optional
from typing import Union

from typeguard import check_argument_types

from uadat.attacks.attack_config import AttackConfig
from uadat.evaluation.robust_eval import evaluate
from uadat.fileio.report_writer import ReportWriter
from uadat.tasks.abs_task import configure_logging
from uadat.tasks.abs_task import run_command
from uadat.tasks.robust import RobustTask
from uadat.torch_utils.set_all_random_seed import set_all_random_seed
from uadat.utils import config_argparse
from uadat.utils.build_dataclass import dataclass_from_conf
from uadat.utils.cli_utils import get_commandline_args
from uadat.utils.errors import ConfigError
from uadat.utils.nested_dict_action import NestedDictAction
from uadat.utils.types import int_or_none
from uadat.utils.types import str_or_none


def robust_eval(
    output_dir: str,
    checkpoint: str,
    train_config: Optional[str],
    split: str,
    batch_size: int,
    ngpu: int,
    seed: int,
    attack_conf: Dict[str, Any],
    attack_steps: Optional[int] = None,
    attack_restarts: Optional[int] = None,
    attack_epsilon: Optional[Union[float, str]] = None,
):
    """Evaluate a checkpoint and write ``<output_dir>/robust.txt``.

    The attack starts from the run's eval_attack_conf; ``attack_conf`` and
    the ``attack_*`` shortcuts are applied on top.
    """
    assert check_argument_types()
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

    conf = dict(train_args.eval_attack_conf)
    conf.update(attack_conf)
    for key, value in (
        ("steps", attack_steps),
        ("restarts", attack_restarts),
        ("epsilon", attack_epsilon),
    ):
        if value is not None:
            conf[key] = value
    attack = dataclass_from_conf(AttackConfig, conf, "attack")
    logging.info(f"Attack: {attack}")

    report = evaluate(model.classifier, dataset, attack, batch_size, seed)
    with ReportWriter(output_dir) as writer:
        report.write(writer)
    logging.info(
        f"clean_acc={report.clean_acc:.4f}, robust_acc={report.robust_acc:.4f} "
        f"({split}, {len(dataset)} samples)"
    )
    return report


def get_parser():
    """Get argument parser."""
    parser = config_argparse.ArgumentParser(
        description="Robust accuracy of a trained model",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )

    # Note(kamo): Use "_" instead of "-" as separator.
    # "-" is confusing if written in yaml.
    parser.add_argument(
        "--log_level",
        type=lambda x: x.upper(),
        default="INFO",
        choices=("CRITICAL", "ERROR", "WARNING", "INFO", "DEBUG", "NOTSET"),
        help="The verbose level of logging",
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
        default=256,
        help="The batch size for evaluation",
    )

    group = parser.add_argument_group("The model configuration related")
    group.add_argument(
        "--checkpoint",
        type=str,
        required=True,
        help="A ckpt_*.bin file written by the trainer",
    )
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
        help="The split to evaluate",
    )

    group = parser.add_argument_group("Attack related")
    group.add_argument(
        "--attack_conf",
        action=NestedDictAction,
        default=dict(),
        help="AttackConfig fields overriding the run's eval_attack_conf",
    )
    group.add_argument(
        "--attack.steps",
        dest="attack_steps",
        type=int_or_none,
        default=None,
        help="Shortcut of --attack_conf steps=N",
    )
    group.add_argument(
        "--attack.restarts",
        dest="attack_restarts",
        type=int_or_none,
        default=None,
        help="Shortcut of --attack_conf restarts=N",
    )
    group.add_argument(
        "--attack.epsilon",
        dest="attack_epsilon",
        type=str_or_none,
        default=None,
        help="Shortcut of --attack_conf epsilon=E (accepts 8/255)",
    )
    return parser


def main(cmd=None):
    """Robust accuracy under PGD

    Example:
        % python uadat_eval.py --checkpoint exp/a/ckpt_best.bin \\
            --output_dir exp/a/eval --attack.steps 50 --attack.restarts 10
    """
    print(get_commandline_args(), file=sys.stderr)
    parser = get_parser()
    args = parser.parse_args(cmd)
    kwargs = vars(args)
    kwargs.pop("config", None)
    kwargs.pop("override", None)
    configure_logging(kwargs.pop("log_level"))
    sys.exit(run_command(robust_eval, **kwargs))


if __name__ == "__main__":
    main()
