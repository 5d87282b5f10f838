import argparse
from pathlib import Path

import yaml

from uadat.utils.nested_dict_action import parse_yaml_value
from uadat.utils.nested_dict_action import set_nested


class ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser reading defaults from a yaml file.

    - "--config" gives a yaml file whose keys are argparse destinations.
    - "--override section.key=value" (repeatable) is applied last.
      "section" selects the "<section>_conf" dict option when it exists,
      otherwise a plain key names a top-level option.

    Precedence: parser defaults < config file < command line < overrides.
    """

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.add_argument("--config", help="Give config file in yaml format")
        self.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="SECTION.KEY=VALUE",
            help="Override a configuration value, e.g. weights.beta=6.0",
        )

    def parse_known_args(self, args=None, namespace=None):
        _args, _ = super().parse_known_args(args, namespace)
        if _args.config is not None:
            if not Path(_args.config).exists():
                self.error(f"No such file: {_args.config}")

            with open(_args.config, "r", encoding="utf-8") as f:
                d = yaml.safe_load(f)
            if not isinstance(d, dict):
                self.error(f"Config file has non dict value: {_args.config}")

            dests = {action.dest for action in self._actions}
            for key in d:
                if key not in dests:
                    self.error(f"unrecognized arguments: {key} (from {_args.config})")
            # "--config" inside a config file is ignored
            d.pop("config", None)
            self.set_defaults(**d)

        parsed, unknown = super().parse_known_args(args, namespace)
        for item in parsed.override:
            self._apply_override(parsed, item)
        return parsed, unknown

    def _apply_override(self, namespace: argparse.Namespace, item: str):
        if "=" not in item:
            self.error(f"--override expects SECTION.KEY=VALUE: {item}")
        key, value = item.split("=", maxsplit=1)
        key = key.strip()
        value = parse_yaml_value(value)
        section, _, rest = key.partition(".")

        if rest and isinstance(getattr(namespace, f"{section}_conf", None), dict):
            conf = dict(getattr(namespace, f"{section}_conf"))
            setattr(namespace, f"{section}_conf", set_nested(conf, rest, value))
        elif not rest and hasattr(namespace, key):
            setattr(namespace, key, value)
        else:
            self.error(f"--override: unknown configuration field {key}")
