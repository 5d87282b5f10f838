from typing import Optional

_NONE_WORDS = ("none", "null", "nil")
_TRUE_WORDS = ("y", "yes", "t", "true", "on", "1")
_FALSE_WORDS = ("n", "no", "f", "false", "off", "0")


def str2bool(value: str) -> bool:
    """Parse a yes/no style string.

    Examples:
        >>> str2bool("true")
        True
        >>> str2bool("0")
        False

    """
    v = value.strip().lower()
    if v in _TRUE_WORDS:
        return True
    if v in _FALSE_WORDS:
        return False
    raise ValueError(f"invalid truth value: {value}")


def int_or_none(value: str) -> Optional[int]:
    """int_or_none.

    Examples:
        >>> import argparse
        >>> parser = argparse.ArgumentParser()
        >>> _ = parser.add_argument('--foo', type=int_or_none)
        >>> parser.parse_args(['--foo', '456'])
        Namespace(foo=456)
        >>> parser.parse_args(['--foo', 'none'])
        Namespace(foo=None)

    """
    if value.strip().lower() in _NONE_WORDS:
        return None
    return int(value)


def str_or_none(value: str) -> Optional[str]:
    if value.strip().lower() in _NONE_WORDS:
        return None
    return value


def pixel_value(value: str) -> float:
    """Parse a pixel-scale magnitude, accepting "8/255" style fractions.

    Examples:
        >>> pixel_value("8/255") == 8 / 255
        True
        >>> pixel_value("0.5")
        0.5

    """
    value = str(value).strip()
    if "/" in value:
        num, den = value.split("/", maxsplit=1)
        return float(num) / float(den)
    return float(value)
