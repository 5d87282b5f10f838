import shlex
import sys


def get_commandline_args() -> str:
    """Return the current command line, quoted so it can be pasted into a shell."""
    return " ".join(shlex.quote(a) for a in [sys.executable] + sys.argv)
