"""Numba kernel for guided mean-field filtering of probability volumes.

Dense truncated evaluation: every pixel exchanges messages with all
neighbors inside a (2R+1)^2 window, R = ceil(3 * theta_alpha). Cost is
O(h * w * (2R+1)^2 * n_d) per iteration; affordable at test scale, and the
per-pixel message loop parallelizes over rows with deterministic results
(each output ray is reduced by exactly one thread in a fixed order).
"""

from __future__ import annotations

import math

import numba
import numpy as np


@numba.njit(parallel=True, fastmath=True, cache=True)
def mean_field_filter(unary, guide255, theta_alpha, theta_beta, mu, iterations):
    h, w, n_d = unary.shape
    radius = int(math.ceil(3.0 * theta_alpha))
    inv2a = 1.0 / (2.0 * theta_alpha * theta_alpha)
    inv2b = 1.0 / (2.0 * theta_beta * theta_beta)

    size = 2 * radius + 1
    spatial = np.empty((size, size), dtype=np.float32)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            spatial[dy + radius, dx + radius] = (dy * dy + dx * dx) * inv2a

    q = unary.copy()
    for _ in range(iterations):
        q_next = np.empty_like(q)
        for py in numba.prange(h):
            msg = np.empty(n_d, dtype=np.float32)
            for px in range(w):
                g0 = guide255[py, px, 0]
                g1 = guide255[py, px, 1]
                g2 = guide255[py, px, 2]
                wsum = 0.0
                for d in range(n_d):
                    msg[d] = 0.0
                y_lo = max(py - radius, 0)
                y_hi = min(py + radius, h - 1)
                x_lo = max(px - radius, 0)
                x_hi = min(px + radius, w - 1)
                for qy in range(y_lo, y_hi + 1):
                    for qx in range(x_lo, x_hi + 1):
                        if qy == py and qx == px:
                            continue
                        c0 = g0 - guide255[qy, qx, 0]
                        c1 = g1 - guide255[qy, qx, 1]
                        c2 = g2 - guide255[qy, qx, 2]
                        energy = spatial[qy - py + radius, qx - px + radius] \
                            + (c0 * c0 + c1 * c1 + c2 * c2) * inv2b
                        if energy > 30.0:  # weight < 1e-13, numerically zero
                            continue
                        wgt = np.float32(math.exp(-energy))
                        wsum += wgt
                        for d in range(n_d):
                            msg[d] += wgt * q[qy, qx, d]
                inv_w = 1.0 / wsum if wsum > 0.0 else 0.0
                total = 0.0
                for d in range(n_d):
                    val = unary[py, px, d] + mu * msg[d] * inv_w
                    q_next[py, px, d] = val
                    total += val
                inv_t = 1.0 / total if total > 0.0 else 0.0
                for d in range(n_d):
                    q_next[py, px, d] *= inv_t
        q = q_next
    return q
