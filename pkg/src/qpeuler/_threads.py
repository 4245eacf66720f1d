"""Worker count for data-parallel kernels, capped by the QPE_THREADS variable."""

import os


def worker_count() -> int:
    raw = os.environ.get("QPE_THREADS", "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        return 1
    return max(1, n)
