"""``python -m pier``; applies PIER_NUM_THREADS before numpy loads."""

import os
import sys

_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _cap_threads() -> None:
    n = os.environ.get("PIER_NUM_THREADS")
    if n:
        for var in _THREAD_VARS:
            os.environ.setdefault(var, n)


def main(argv=None) -> int:
    _cap_threads()
    from .cli import main as cli_main

    return cli_main(argv)


if __name__ == "__main__":
    sys.exit(main())
