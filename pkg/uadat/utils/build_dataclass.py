import argparse
import dataclasses
from typing import Any
from typing import Mapping

from typeguard import check_type

from uadat.utils.errors import ConfigError


def build_dataclass(dataclass, args: argparse.Namespace):
    """Helper function to build dataclass from 'args'."""
    kwargs = {}
    for field in dataclasses.fields(dataclass):
        if not hasattr(args, field.name):
            raise ValueError(
                f"args doesn't have {field.name}. You need to set it to ArgumentsParser"
            )
        check_type(field.name, getattr(args, field.name), field.type)
        kwargs[field.name] = getattr(args, field.name)
    return dataclass(**kwargs)


def dataclass_from_conf(dataclass, conf: Mapping[str, Any], section: str):
    """Build a config dataclass from a "<section>_conf" dict.

    Unknown keys and values rejected by the dataclass itself are reported as
    ConfigError naming "section.key".
    """
    names = {f.name for f in dataclasses.fields(dataclass)}
    for key in conf:
        if key not in names:
            raise ConfigError(
                f"{section}.{key}", f"unknown key, expected {sorted(names)}"
            )
    try:
        return dataclass(**conf)
    except ConfigError as e:
        raise ConfigError(f"{section}.{e.field}", str(e).split(": ", 1)[-1]) from e
    except (TypeError, ValueError) as e:
        raise ConfigError(section, str(e)) from e
