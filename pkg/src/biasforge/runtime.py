"""Process-level runtime knobs."""

from __future__ import annotations

import os

THREADS_ENV_VAR = "BIASFORGE_THREADS"


def worker_count() -> int:
    """Worker-thread cap: BIASFORGE_THREADS if set, else up to 4 cores.

    Results never depend on this value; it only bounds parallelism.
    """
    raw = os.environ.get(THREADS_ENV_VAR)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(4, os.cpu_count() or 1))
