"""Runtime knobs read from the environment.

SPA_BACKEND selects the kernel implementation (see spa._kernels).
SPA_THREADS caps worker parallelism for per-sample benchmark work;
0 or unset means auto (one worker per CPU, capped at 8).
"""

import os

from ._kernels import ACTIVE_BACKEND

__all__ = ["ACTIVE_BACKEND", "worker_count"]

_MAX_AUTO_WORKERS = 8


def worker_count() -> int:
    raw = os.environ.get("SPA_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"SPA_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValueError(f"SPA_THREADS must be >= 0, got {n}")
    if n == 0:
        return min(os.cpu_count() or 1, _MAX_AUTO_WORKERS)
    return n
