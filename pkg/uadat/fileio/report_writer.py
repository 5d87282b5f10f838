from pathlib import Path
from typing import Dict
from typing import Sequence
from typing import Union
import warnings

import numpy as np
from typeguard import check_argument_types


class ReportWriter:
    """Writer of a report directory holding ``name value [value ...]`` files.

    Examples:
        >>> with ReportWriter("exp/eval") as writer:
        ...     # exp/eval/robust.txt is created here
        ...     sub = writer["robust.txt"]
        ...     sub["clean_acc"] = (0.91, 0.89, 0.93)
        ...     sub["attack.steps"] = 20
    """

    def __init__(self, p: Union[Path, str]):
        assert check_argument_types()
        self.path = Path(p)
        self.children: Dict[str, "ReportWriter"] = {}
        self.fd = None
        self.keys = set()

    def __enter__(self):
        return self

    def __getitem__(self, key: str) -> "ReportWriter":
        if self.fd is not None:
            raise RuntimeError("This writer points out a file")
        if key not in self.children:
            self.children[key] = ReportWriter(self.path / key)
        return self.children[key]

    def __setitem__(self, key: str, value):
        if self.children:
            raise RuntimeError("This writer points out a directory")
        if key in self.keys:
            warnings.warn(f"Duplicated: {key}")
        if self.fd is None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self.fd = self.path.open("w", encoding="utf-8")

        if isinstance(value, (tuple, list)):
            value = " ".join(_fmt(v) for v in value)
        self.keys.add(key)
        self.fd.write(f"{key} {_fmt(value)}\n")
        self.fd.flush()

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.close()

    def close(self):
        for child in self.children.values():
            child.close()
        if self.fd is not None:
            self.fd.close()
            self.fd = None


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.6g}"
    return str(v)


def read_report(path: Union[Path, str]) -> Dict[str, Sequence[str]]:
    """Parse a file written through :class:`ReportWriter`."""
    retval = {}
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            fields = line.split()
            if fields:
                retval[fields[0]] = fields[1:]
    return retval


def write_columns(
    path: Union[Path, str], columns: Dict[str, Sequence[float]]
) -> Path:
    """Comma-separated table with a header row, one column per entry."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    table = np.column_stack([np.asarray(columns[n], dtype=float) for n in names])
    np.savetxt(path, table, delimiter=",", header=",".join(names), comments="")
    return path
