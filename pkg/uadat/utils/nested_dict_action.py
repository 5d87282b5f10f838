import argparse
import copy
from typing import Any
from typing import Dict

import yaml


def set_nested(target: Dict[str, Any], dotted_key: str, value: Any) -> Dict[str, Any]:
    """Assign ``value`` at ``a.b.c`` inside ``target``, creating levels as needed.

    Examples:
        >>> set_nested({"a": 1}, "b.c", 2)
        {'a': 1, 'b': {'c': 2}}

    """
    keys = dotted_key.split(".")
    d = target
    for k in keys[:-1]:
        if not isinstance(d.get(k), dict):
            d[k] = {}
        d = d[k]
    d[keys[-1]] = value
    return target


def parse_yaml_value(value: str) -> Any:
    if value.strip() == "":
        return value
    return yaml.safe_load(value)


class NestedDictAction(argparse.Action):
    """Action class to update a dict option from the command line.

    Examples:
        >>> parser = argparse.ArgumentParser()
        >>> _ = parser.add_argument('--conf', action=NestedDictAction,
        ...                         default={'a': 4})
        >>> parser.parse_args(['--conf', 'a=3', '--conf', 'c=4'])
        Namespace(conf={'a': 3, 'c': 4})
        >>> parser.parse_args(['--conf', 'c.d=4'])
        Namespace(conf={'a': 4, 'c': {'d': 4}})
        >>> parser.parse_args(['--conf', '{d: 5, e: 9}'])
        Namespace(conf={'a': 4, 'd': 5, 'e': 9})

    """

    _syntax = """Syntax:
  {op} <key>=<yaml-string>
  {op} <key>.<key2>=<yaml-string>
  {op} <yaml-dict>
e.g.
  {op} epsilon=8/255
  {op} steps=20
  {op} {{beta: 6.0, lambda1: 0.5}}
"""

    def __init__(self, option_strings, dest, default=None, help=None, **kwargs):
        super().__init__(
            option_strings=option_strings,
            dest=dest,
            default=copy.deepcopy(default),
            help=help,
            **kwargs,
        )

    def __call__(self, parser, namespace, values, option_string=None):
        current = copy.deepcopy(getattr(namespace, self.dest, None))
        if not isinstance(current, dict):
            current = {}

        if "=" in values:
            key, value = values.split("=", maxsplit=1)
            set_nested(current, key.strip(), parse_yaml_value(value))
        else:
            value = yaml.safe_load(values)
            if not isinstance(value, dict):
                syntax = self._syntax.format(op=option_string)
                raise argparse.ArgumentError(
                    self, f"must be interpreted as dict: but got {values}\n{syntax}"
                )
            current.update(value)
        setattr(namespace, self.dest, current)
