#!/usr/bin/env python3
from uadat.tasks.robust import RobustTask


def get_parser():
    parser = RobustTask.get_parser()
    return parser


def main(cmd=None):
    """Adversarial training

    Example:
        % python uadat_train.py --print_config --method uad_at
        % python uadat_train.py --config conf/train_uadat.yaml --output_dir exp/a
        % python uadat_train.py --config conf/train_uadat.yaml \\
            --override weights.beta=6.0 --output_dir exp/b
    """
    RobustTask.main(cmd=cmd)


if __name__ == "__main__":
    main()
