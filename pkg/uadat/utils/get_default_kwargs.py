import dataclasses
import inspect


class Invalid:
    """Marker object for not serializable-object"""


def yaml_serializable(value):
    # isinstance(x, tuple) includes namedtuple, so type is used here
    if type(value) is tuple or isinstance(value, set):
        return yaml_serializable(list(value))
    if isinstance(value, dict):
        if not all(isinstance(k, str) for k in value):
            return Invalid
        retval = {}
        for k, v in value.items():
            v2 = yaml_serializable(v)
            if v2 not in (Invalid, inspect.Parameter.empty):
                retval[k] = v2
        return retval
    if isinstance(value, list):
        retval = [yaml_serializable(v) for v in value]
        return Invalid if any(v is Invalid for v in retval) else retval
    if value in (inspect.Parameter.empty, None):
        return value
    if isinstance(value, (float, int, bool, str)):
        return value
    return Invalid


def get_default_kwargs(func):
    """Get the default values of the input function or dataclass.

    Examples:
        >>> def func(a, b=3):  pass
        >>> get_default_kwargs(func)
        {'b': 3}

    """
    if dataclasses.is_dataclass(func):
        data = {
            f.name: f.default
            if f.default is not dataclasses.MISSING
            else inspect.Parameter.empty
            for f in dataclasses.fields(func)
        }
    else:
        params = inspect.signature(func).parameters
        data = {p.name: p.default for p in params.values()}
    return yaml_serializable(data)
