"""Process-wide runtime knobs."""

from __future__ import annotations

import os

import cv2
import numba


def apply_thread_limit() -> int:
    """Honor the EVS_THREADS environment variable (0 or unset = auto).

    Returns the effective thread count.
    """
    raw = os.environ.get("EVS_THREADS", "0")
    try:
        requested = int(raw)
    except ValueError:
        requested = 0
    available = numba.config.NUMBA_NUM_THREADS
    threads = available if requested <= 0 else min(requested, available)
    numba.set_num_threads(threads)
    cv2.setNumThreads(threads)
    return threads
