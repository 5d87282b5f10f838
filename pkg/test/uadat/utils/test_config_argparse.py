import pytest
import yaml

from uadat.utils.config_argparse import ArgumentParser
from uadat.utils.nested_dict_action import NestedDictAction


def _parser():
    parser = ArgumentParser()
    parser.add_argument("--max_epoch", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--weights_conf", action=NestedDictAction, default={})
    return parser


def test_precedence(tmp_path):
    config = tmp_path / "c.yaml"
    config.write_text(
        yaml.safe_dump(dict(max_epoch=20, seed=3, weights_conf=dict(beta=1.0)))
    )
    args = _parser().parse_args(
        ["--config", str(config), "--seed", "4", "--override", "weights.beta=2.0"]
    )
    assert args.max_epoch == 20
    assert args.seed == 4
    assert args.weights_conf == dict(beta=2.0)


def test_override_beats_command_line():
    args = _parser().parse_args(["--max_epoch", "5", "--override", "max_epoch=7"])
    assert args.max_epoch == 7


def test_nested_override_creates_levels():
    args = _parser().parse_args(["--override", "weights.a.b=1"])
    assert args.weights_conf == dict(a=dict(b=1))


@pytest.mark.parametrize("content", ["bogus: 1\n", "- 1\n- 2\n"])
def test_bad_config_file(tmp_path, content):
    config = tmp_path / "c.yaml"
    config.write_text(content)
    with pytest.raises(SystemExit):
        _parser().parse_args(["--config", str(config)])


def test_missing_config_file(tmp_path):
    with pytest.raises(SystemExit):
        _parser().parse_args(["--config", str(tmp_path / "none.yaml")])
