"""Compiled inner loops of the CPA engine.

Every output cell is owned by exactly one call and its sum over traces runs
in trace order, one multiply and one add per trace. No fused multiply-add or
reassociation is allowed here: the engine's bit-for-bit reproducibility
across chunk sizes and worker counts depends on it.
"""

import math

import numpy as np
from numba import njit

CELL_BLOCK = 16  # one subkey, all 16 byte positions
SAMPLE_BLOCK = 8

DEGENERATE_REL = 1e-12
DEGENERATE_ABS = 1e-30


@njit(nogil=True, cache=True)
def accumulate_products(w_panel, h_panel, out, block_lo, block_hi):
    """Add sum_i h * w for one trace block into ``out``.

    w_panel: (sample_blocks, t, SAMPLE_BLOCK) float64
    h_panel: (cell_blocks, t, CELL_BLOCK) float64
    out:     (cell_blocks * CELL_BLOCK, sample_blocks * SAMPLE_BLOCK) float64
    """
    t = w_panel.shape[1]
    acc = np.empty((CELL_BLOCK, SAMPLE_BLOCK))
    for cb in range(block_lo, block_hi):
        row0 = cb * CELL_BLOCK
        for jb in range(w_panel.shape[0]):
            col0 = jb * SAMPLE_BLOCK
            for a in range(CELL_BLOCK):
                for s in range(SAMPLE_BLOCK):
                    acc[a, s] = out[row0 + a, col0 + s]
            for i in range(t):
                for a in range(CELL_BLOCK):
                    hv = h_panel[cb, i, a]
                    for s in range(SAMPLE_BLOCK):
                        acc[a, s] += hv * w_panel[jb, i, s]
            for a in range(CELL_BLOCK):
                for s in range(SAMPLE_BLOCK):
                    out[row0 + a, col0 + s] = acc[a, s]


@njit(nogil=True, cache=True)
def accumulate_moments(w, sum_w, sum_w2):
    """Running per-sample sums of W and W^2 over the rows of ``w`` (t, width)."""
    for i in range(w.shape[0]):
        for j in range(w.shape[1]):
            v = np.float64(w[i, j])
            sum_w[j] += v
            sum_w2[j] += v * v


@njit(nogil=True, cache=True)
def correlation(n, swh, sw, sw2, sh, sh2):
    """One-pass Pearson estimate from factored sums; 0 for degenerate columns."""
    var_w = n * sw2 - sw * sw
    var_h = n * sh2 - sh * sh
    if var_h <= 0.0:
        return 0.0
    if var_w <= DEGENERATE_REL * n * sw2 or var_w <= DEGENERATE_ABS:
        return 0.0
    r = (n * swh - sw * sh) / (math.sqrt(var_w) * math.sqrt(var_h))
    if r > 1.0:
        return 1.0
    if r < -1.0:
        return -1.0
    return r


@njit(nogil=True, cache=True)
def fold_max_correlation(n, sum_wh, sum_w, sum_w2, sum_h, sum_h2, start, best, best_at, cell_lo, cell_hi):
    """Fold max |rho| over a sample chunk into ``best`` / ``best_at`` per cell.

    sum_wh: (cells, width); sum_h, sum_h2, best, best_at: (cells,).
    Ties keep the lowest sample index.
    """
    width = sum_w.shape[0]
    for c in range(cell_lo, cell_hi):
        sh = sum_h[c]
        sh2 = sum_h2[c]
        for j in range(width):
            r = abs(correlation(n, sum_wh[c, j], sum_w[j], sum_w2[j], sh, sh2))
            at = start + j
            if r > best[c] or (r == best[c] and at < best_at[c]):
                best[c] = r
                best_at[c] = at
