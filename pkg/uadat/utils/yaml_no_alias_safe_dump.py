from pathlib import PurePath

import yaml


class NoAliasSafeDumper(yaml.SafeDumper):
    # anchors and aliases make resolved configs hard to diff
    def ignore_aliases(self, data):
        return True


# config.yaml must load back with yaml.safe_load
NoAliasSafeDumper.add_representer(
    tuple, lambda dumper, data: dumper.represent_list(list(data))
)
NoAliasSafeDumper.add_multi_representer(
    PurePath, lambda dumper, data: dumper.represent_str(str(data))
)


def yaml_no_alias_safe_dump(data, stream=None, **kwargs):
    """Safe-dump in yaml with no anchor/alias; tuples become lists, paths strings."""
    return yaml.dump(
        data, stream, allow_unicode=True, Dumper=NoAliasSafeDumper, **kwargs
    )
