from typing import Any
from typing import Mapping
from typing import Sequence
from typing import Tuple

from typeguard import check_argument_types

from uadat.utils.errors import ConfigError
from uadat.utils.nested_dict_action import NestedDictAction


class ClassChoices:
    """A ``--<name>`` choice of component class plus its ``--<name>_conf`` kwargs.

    ``injected`` lists constructor arguments the task fills in itself (e.g. the
    classifier wrapped by a training method); they are left out of the
    printed configuration and rejected when given in ``<name>_conf``.

    Example:

    >>> choices = ClassChoices(
    ...     "model", dict(convnet=SplitConvNet), default="convnet",
    ...     injected=("num_classes",),
    ... )
    >>> parser = argparse.ArgumentParser()
    >>> choices.add_arguments(parser)
    >>> args = parser.parse_args(["--model_conf", "aum_depth=1"])
    >>> choices.build(args.model, args.model_conf, num_classes=10)

    """

    def __init__(
        self,
        name: str,
        classes: Mapping[str, type],
        default: str,
        type_check: type = None,
        injected: Sequence[str] = (),
    ):
        assert check_argument_types()
        self.name = name
        self.classes = {k.lower(): v for k, v in classes.items()}
        if default.lower() not in self.classes:
            raise ValueError(f"default {default} is not one of {self.choices()}")
        if type_check is not None:
            for v in self.classes.values():
                if not issubclass(v, type_check):
                    raise ValueError(f"must be {type_check.__name__}, but got {v}")
        self.default = default.lower()
        self.injected = tuple(injected)

    def choices(self) -> Tuple[str, ...]:
        return tuple(self.classes)

    def get_class(self, name: str) -> type:
        assert check_argument_types()
        try:
            return self.classes[name.lower()]
        except KeyError:
            raise ConfigError(
                self.name, f"must be one of {self.choices()}: {name}"
            ) from None

    def build(self, name: str, conf: Mapping, **injected) -> Any:
        """Instantiate ``name`` with ``conf`` plus the injected arguments."""
        class_obj = self.get_class(name)
        clash = set(conf) & set(injected)
        if clash:
            raise ConfigError(f"{self.name}_conf", f"{sorted(clash)} can't be set")
        try:
            return class_obj(**conf, **injected)
        except TypeError as e:
            raise ConfigError(f"{self.name}_conf", str(e)) from e

    def add_arguments(self, parser):
        parser.add_argument(
            f"--{self.name}",
            type=str.lower,
            default=self.default,
            choices=self.choices(),
            help=f"The {self.name} type",
        )
        parser.add_argument(
            f"--{self.name}_conf",
            action=NestedDictAction,
            default=dict(),
            help=f"The keyword arguments for {self.name}",
        )
